#include "fsn/solvers.hpp"

#include <chrono>
#include <cmath>

namespace fsn {

std::string to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::san: return "san";
    case SolverKind::sana: return "sana";
    case SolverKind::san_id: return "san_id";
    case SolverKind::snm: return "snm";
    case SolverKind::sag: return "sag";
    case SolverKind::svrg: return "svrg";
  }
  return "unknown";
}

SolverKind parse_solver_kind(std::string_view name) {
  if (name == "san") return SolverKind::san;
  if (name == "sana") return SolverKind::sana;
  if (name == "san_id" || name == "san-id") return SolverKind::san_id;
  if (name == "snm") return SolverKind::snm;
  if (name == "sag") return SolverKind::sag;
  if (name == "svrg") return SolverKind::svrg;
  throw ConfigError("unknown solver '" + std::string(name) + "'");
}

bool is_newton_family(SolverKind kind) {
  return kind == SolverKind::san || kind == SolverKind::sana || kind == SolverKind::san_id;
}

std::string to_string(StopStatus status) {
  switch (status) {
    case StopStatus::grad_tol: return "grad_tol";
    case StopStatus::max_passes: return "max_passes";
    case StopStatus::numerical_failure: return "numerical_failure";
  }
  return "unknown";
}

double SolverConfig::probability(Index n) const {
  return p ? *p : 1.0 / static_cast<double>(n + 1);
}

std::size_t SolverConfig::inner_length(Index n) const {
  return svrg_inner ? *svrg_inner : static_cast<std::size_t>(n);
}

void SolverConfig::validate(const Problem& problem) const {
  if (!(gamma > 0.0) || !std::isfinite(gamma))
    throw ConfigError("step size must be positive, got " + std::to_string(gamma));
  if (is_newton_family(kind) && gamma > 1.0 && !allow_overrelaxation)
    throw ConfigError(to_string(kind) + " step size must lie in (0, 1], got " +
                      std::to_string(gamma));
  if (kind == SolverKind::san || kind == SolverKind::san_id) {
    const double prob = probability(problem.n());
    if (!(prob > 0.0 && prob < 1.0))
      throw ConfigError("averaging probability must lie in (0, 1), got " +
                        std::to_string(prob));
  }
  if (kind == SolverKind::svrg && inner_length(problem.n()) == 0)
    throw ConfigError("svrg inner loop length must be positive");
  if (kind == SolverKind::san_id && problem.d() > dense_cap)
    throw ConfigError("san_id needs d <= " + std::to_string(dense_cap) + ", got d = " +
                      std::to_string(problem.d()));
  if (ridge_fast_path && problem.reg().kind != RegKind::l2)
    throw ConfigError("the ridge fast path requires an L2 regularizer");
}

// ---------------------------------------------------------------------------

namespace {

/// Adds sign * (H_i(alpha_i), H_i(alpha_i) alpha_i - grad f_i(alpha_i)) to the
/// SNM sums using cached loss data for row i.
void snm_accumulate(SnmCache& cache, const Problem& problem, Index i,
                    const Eigen::Ref<const Vector>& alpha, double d1, double d2, double margin,
                    double sign) {
  const auto& reg = problem.reg();
  const auto row = problem.row(i);
  if (reg.kind != RegKind::l2) {
    const Vector h = reg_hess_diag(reg, alpha);
    cache.hess_sum.diagonal() += sign * h;
    cache.vec_sum += sign * (h.cwiseProduct(alpha) - reg_grad(reg, alpha));
  }
  // The L2 terms lambda I and lambda alpha - lambda alpha are constant or cancel.
  for (std::size_t a = 0; a < row.nnz(); ++a)
    for (std::size_t b = 0; b < row.nnz(); ++b)
      cache.hess_sum(row.index[a], row.index[b]) += sign * d2 * row.value[a] * row.value[b];
  for (std::size_t a = 0; a < row.nnz(); ++a)
    cache.vec_sum(row.index[a]) += sign * (d2 * margin - d1) * row.value[a];
}

void snm_refresh_inverse(SnmCache& cache) {
  Eigen::LLT<Matrix> llt(cache.hess_sum);
  if (llt.info() != Eigen::Success)
    throw NumericalError("snm: Hessian sum is not positive definite");
  cache.hess_sum_inv = llt.solve(Matrix::Identity(cache.hess_sum.rows(), cache.hess_sum.cols()));
}

/// B <- (B^{-1} + coef * a a^T)^{-1}; false if the update is ill-posed.
bool sherman_morrison_update(Matrix& inv, const SparseRowView<double>& a, double coef) {
  if (coef == 0.0 || a.nnz() == 0) return true;
  Vector ba = Vector::Zero(inv.rows());
  for (std::size_t k = 0; k < a.nnz(); ++k) ba += a.value[k] * inv.col(a.index[k]);
  const double denom = 1.0 + coef * a.dot(ba);
  if (!(denom > 1e-12)) return false;
  inv.noalias() -= (coef / denom) * ba * ba.transpose();
  return true;
}

void check_alpha_sum(const SolverState& state) {
  const Vector sum = state.alphas.rowwise().sum();
  const double scale = std::max(1.0, state.alphas.cwiseAbs().maxCoeff());
  if (sum.cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw NumericalError("sana: auxiliary gradients no longer sum to zero");
}

}  // namespace

SolverState init_state(const Problem& problem, const SolverConfig& cfg) {
  cfg.validate(problem);
  const Index n = problem.n();
  const Index d = problem.d();
  SolverState state;
  state.rng.reseed(cfg.seed);
  state.w = Vector::Zero(d);
  switch (cfg.kind) {
    case SolverKind::san:
    case SolverKind::san_id:
      state.alphas = Matrix::Zero(d, n);
      state.alpha_bar = Vector::Zero(d);
      break;
    case SolverKind::sana:
      state.alphas = Matrix::Zero(d, n);
      break;
    case SolverKind::sag:
      state.alphas = Matrix::Zero(d, n);
      state.grad_sum = Vector::Zero(d);
      break;
    case SolverKind::svrg:
      state.snapshot = Vector::Zero(d);
      state.snapshot_grad = Vector::Zero(d);
      break;
    case SolverKind::snm:
      state.alphas = Matrix::Zero(d, n);
      snm_rebuild(state, problem);
      break;
  }
  return state;
}

void snm_rebuild(SolverState& state, const Problem& problem) {
  const Index n = problem.n();
  const Index d = problem.d();
  auto& cache = state.snm;
  cache.hess_sum = Matrix::Zero(d, d);
  if (problem.reg().kind == RegKind::l2)
    cache.hess_sum.diagonal().setConstant(static_cast<double>(n) * problem.reg().lambda);
  cache.vec_sum = Vector::Zero(d);
  cache.phi_d1.resize(n);
  cache.phi_d2.resize(n);
  cache.margin.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto alpha = state.alphas.col(i);
    const double r = problem.margin(i, alpha);
    const auto phi = loss_eval(problem.loss(), r, problem.labels()(i));
    cache.phi_d1(i) = phi.d1;
    cache.phi_d2(i) = phi.d2;
    cache.margin(i) = r;
    snm_accumulate(cache, problem, i, alpha, phi.d1, phi.d2, r, 1.0);
  }
  state.setup_accesses += static_cast<std::uint64_t>(n);
  if (problem.reg().kind == RegKind::l2) snm_refresh_inverse(cache);
}

Vector relaxed_newton_direction(const Problem& problem, Index j, const Vector& w,
                                const Eigen::Ref<const Vector>& alpha_j, double mu) {
  check_row_index(problem, j);
  const auto m = shifted_hessian_fi(problem, j, w, mu);
  Vector g = reg_grad(problem.reg(), w) - alpha_j;
  problem.row(j).axpy_into(problem.loss_at(j, w).d1, g);
  return -solve_diag_rank1(m, g);
}

Vector ridge_newton_direction(const Problem& problem, Index j, const Vector& w,
                              const Eigen::Ref<const Vector>& alpha_j) {
  if (problem.reg().kind != RegKind::l2)
    throw ConfigError("ridge direction requires an L2 regularizer");
  check_row_index(problem, j);
  const double lambda = problem.reg().lambda;
  const auto row = problem.row(j);
  const double r = row.dot(w);
  const auto phi = loss_eval(problem.loss(), r, problem.labels()(j));
  const double a_sq = row.squared_norm();
  const double a_alpha = row.dot(alpha_j);

  const double inv = 1.0 / (1.0 + lambda);
  const double coef =
      -phi.d2 * inv * (a_alpha - phi.d1 * a_sq - lambda * r) / (1.0 + lambda + phi.d2 * a_sq);
  Vector d = inv * (alpha_j - lambda * w);
  row.axpy_into(coef - inv * phi.d1, d);
  return d;
}

namespace {

void san_averaging(SolverState& state, double gamma) {
  state.alphas.colwise() -= gamma * state.alpha_bar;
  state.alpha_bar *= (1.0 - gamma);
  state.last = {EventKind::averaging, -1};
}

template <typename Direction>
void san_family_step(SolverState& state, const Problem& problem, const SolverConfig& cfg,
                     Direction&& direction) {
  const Index n = problem.n();
  const double gamma = cfg.gamma;
  ++state.steps;
  const auto j = draw_average_or_row(state.rng, cfg.probability(n), static_cast<std::size_t>(n));
  if (!j) {
    san_averaging(state, gamma);
    return;
  }
  const auto jj = static_cast<Index>(*j);
  const Vector d = direction(jj);
  ++state.accesses;
  state.w += gamma * d;
  state.alphas.col(jj) -= gamma * d;
  state.alpha_bar -= (gamma / static_cast<double>(n)) * d;
  state.last = {EventKind::row, jj};
}

}  // namespace

void san_step(SolverState& state, const Problem& problem, const SolverConfig& cfg) {
  if (cfg.ridge_fast_path) {
    san_ridge_step(state, problem, cfg);
    return;
  }
  san_family_step(state, problem, cfg, [&](Index j) {
    return relaxed_newton_direction(problem, j, state.w, state.alphas.col(j), 1.0);
  });
}

void san_ridge_step(SolverState& state, const Problem& problem, const SolverConfig& cfg) {
  if (problem.reg().kind != RegKind::l2)
    throw ConfigError("san_ridge_step requires an L2 regularizer");
  san_family_step(state, problem, cfg, [&](Index j) {
    return ridge_newton_direction(problem, j, state.w, state.alphas.col(j));
  });
}

void sana_step(SolverState& state, const Problem& problem, const SolverConfig& cfg) {
  check_alpha_sum(state);
  const Index n = problem.n();
  const double gamma = cfg.gamma;
  const double mu = static_cast<double>(n - 1) / static_cast<double>(n);
  ++state.steps;
  const auto j = static_cast<Index>(uniform_index(state.rng, static_cast<std::size_t>(n)));
  const Vector d = relaxed_newton_direction(problem, j, state.w, state.alphas.col(j), mu);
  ++state.accesses;
  state.w += gamma * d;
  // alpha_i += (gamma / n) d for i != j and alpha_j -= gamma mu d.
  state.alphas.colwise() += (gamma / static_cast<double>(n)) * d;
  state.alphas.col(j) -= gamma * d;
  state.last = {EventKind::row, j};
}

void san_id_step(SolverState& state, const Problem& problem, const SolverConfig& cfg) {
  if (problem.d() > cfg.dense_cap)
    throw ConfigError("san_id: dimension exceeds the dense cap");
  const Index n = problem.n();
  const double gamma = cfg.gamma;
  ++state.steps;
  const auto j = draw_average_or_row(state.rng, cfg.probability(n), static_cast<std::size_t>(n));
  if (!j) {
    san_averaging(state, gamma);
    return;
  }
  const auto jj = static_cast<Index>(*j);
  const Matrix h = hessian_fi(problem, jj, state.w);
  const Vector residual = state.alphas.col(jj) - grad_fi(problem, jj, state.w);
  ++state.accesses;
  Matrix system = h * h;
  system.diagonal().array() += 1.0;
  Eigen::LLT<Matrix> llt(system);
  if (llt.info() != Eigen::Success)
    throw NumericalError("san_id: I + H^2 is not positive definite");
  const Vector delta = -llt.solve(residual);
  state.alphas.col(jj) += gamma * delta;
  state.alpha_bar += (gamma / static_cast<double>(n)) * delta;
  state.w -= gamma * (h * delta);
  state.last = {EventKind::row, jj};
}

void snm_step(SolverState& state, const Problem& problem, const SolverConfig& /*cfg*/) {
  auto& cache = state.snm;
  const Index n = problem.n();
  const bool l2 = problem.reg().kind == RegKind::l2;
  ++state.steps;

  if (l2) {
    state.w.noalias() = cache.hess_sum_inv * cache.vec_sum;
  } else {
    Eigen::LLT<Matrix> llt(cache.hess_sum);
    if (llt.info() != Eigen::Success)
      throw NumericalError("snm: Hessian sum is not positive definite");
    state.w = llt.solve(cache.vec_sum);
  }
  if (!state.w.allFinite()) throw NumericalError("snm: non-finite iterate");

  const auto j = static_cast<Index>(uniform_index(state.rng, static_cast<std::size_t>(n)));
  const double old_d1 = cache.phi_d1(j), old_d2 = cache.phi_d2(j), old_r = cache.margin(j);
  snm_accumulate(cache, problem, j, state.alphas.col(j), old_d1, old_d2, old_r, -1.0);

  const double r = problem.margin(j, state.w);
  const auto phi = loss_eval(problem.loss(), r, problem.labels()(j));
  ++state.accesses;
  snm_accumulate(cache, problem, j, state.w, phi.d1, phi.d2, r, 1.0);
  state.alphas.col(j) = state.w;
  cache.phi_d1(j) = phi.d1;
  cache.phi_d2(j) = phi.d2;
  cache.margin(j) = r;

  if (l2) {
    const auto row = problem.row(j);
    if (!sherman_morrison_update(cache.hess_sum_inv, row, -old_d2) ||
        !sherman_morrison_update(cache.hess_sum_inv, row, phi.d2))
      snm_refresh_inverse(cache);
  }
  state.last = {EventKind::row, j};
}

void sag_step(SolverState& state, const Problem& problem, const SolverConfig& cfg) {
  const Index n = problem.n();
  ++state.steps;
  const auto j = static_cast<Index>(uniform_index(state.rng, static_cast<std::size_t>(n)));
  const Vector g = grad_fi(problem, j, state.w);
  ++state.accesses;
  state.grad_sum += g - state.alphas.col(j);
  state.alphas.col(j) = g;
  state.w -= (cfg.gamma / static_cast<double>(n)) * state.grad_sum;
  state.last = {EventKind::row, j};
}

void svrg_step(SolverState& state, const Problem& problem, const SolverConfig& cfg) {
  const Index n = problem.n();
  ++state.steps;
  if (!state.snapshot_valid || state.inner_step >= cfg.inner_length(n)) {
    state.snapshot = state.w;
    state.snapshot_grad = full_objective_and_grad(problem, state.snapshot).grad;
    state.accesses += static_cast<std::uint64_t>(n);
    state.inner_step = 0;
    state.snapshot_valid = true;
  }
  const auto j = static_cast<Index>(uniform_index(state.rng, static_cast<std::size_t>(n)));
  const Vector v = grad_fi(problem, j, state.w) - grad_fi(problem, j, state.snapshot) +
                   state.snapshot_grad;
  state.accesses += 2;
  state.w -= cfg.gamma * v;
  ++state.inner_step;
  state.last = {EventKind::row, j};
}

void step(SolverState& state, const Problem& problem, const SolverConfig& cfg) {
  switch (cfg.kind) {
    case SolverKind::san: san_step(state, problem, cfg); return;
    case SolverKind::sana: sana_step(state, problem, cfg); return;
    case SolverKind::san_id: san_id_step(state, problem, cfg); return;
    case SolverKind::snm: snm_step(state, problem, cfg); return;
    case SolverKind::sag: sag_step(state, problem, cfg); return;
    case SolverKind::svrg: svrg_step(state, problem, cfg); return;
  }
}

// ---------------------------------------------------------------------------

Trace run(const Problem& problem, const SolverConfig& cfg, const StopRule& stop,
          const RunOptions& options) {
  if (!(options.checkpoint_every > 0.0))
    throw ConfigError("checkpoint interval must be positive");
  if (!(stop.grad_tol > 0.0) || stop.max_passes < 0.0)
    throw ConfigError("invalid stop rule");

  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const Index n = problem.n();

  Trace trace;
  trace.solver = cfg.kind;
  trace.seed = cfg.seed;

  SolverState state = init_state(problem, cfg);

  // Returns true when the run must stop.
  auto checkpoint = [&]() {
    const auto eval = full_objective_and_grad(problem, state.w);
    const double gnorm = eval.grad.norm();
    const double pass = state.passes(n);
    const double wall = std::chrono::duration<double>(clock::now() - start).count();
    trace.records.push_back({pass, gnorm, eval.value, wall});
    if (options.count_checkpoints) state.accesses += static_cast<std::uint64_t>(n);
    if (!std::isfinite(gnorm) || !std::isfinite(eval.value)) {
      trace.status = StopStatus::numerical_failure;
      trace.message = "non-finite objective or gradient";
      return true;
    }
    if (gnorm <= stop.grad_tol) {
      trace.status = StopStatus::grad_tol;
      return true;
    }
    if (pass >= stop.max_passes) {
      trace.status = StopStatus::max_passes;
      return true;
    }
    return false;
  };

  try {
    if (!checkpoint()) {
      double next = options.checkpoint_every;
      for (;;) {
        step(state, problem, cfg);
        const double pass = state.passes(n);
        if (pass >= next || pass >= stop.max_passes) {
          while (next <= pass) next += options.checkpoint_every;
          if (checkpoint()) break;
        }
      }
    }
  } catch (const NumericalError& e) {
    trace.status = StopStatus::numerical_failure;
    trace.message = e.what();
  }
  trace.w = state.w;
  return trace;
}

}  // namespace fsn
