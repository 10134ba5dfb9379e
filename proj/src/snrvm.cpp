#include "fsn/snrvm.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace fsn {

NonlinearSystem build_function_splitting(const Problem& problem, Index dense_cap) {
  const Index n = problem.n();
  const Index d = problem.d();
  const Index dim = (n + 1) * d;
  if (dim > dense_cap)
    throw ConfigError("function-splitting system has dimension " + std::to_string(dim) +
                      ", above the dense cap " + std::to_string(dense_cap));
  auto shared = std::make_shared<const Problem>(problem);

  NonlinearSystem sys;
  sys.dim_in = dim;
  sys.dim_out = dim;
  sys.residual = [shared, n, d, dim](const Vector& x) {
    Vector f(dim);
    const Vector w = x.head(d);
    f.head(d).setZero();
    for (Index i = 0; i < n; ++i) {
      const auto alpha = x.segment((i + 1) * d, d);
      f.head(d) += alpha;
      f.segment((i + 1) * d, d) = grad_fi(*shared, i, w) - alpha;
    }
    f.head(d) /= static_cast<double>(n);
    return f;
  };
  sys.jacobian_t = [shared, n, d, dim](const Vector& x) {
    Matrix g = Matrix::Zero(dim, dim);
    const Vector w = x.head(d);
    const Matrix eye_n = Matrix::Identity(d, d) / static_cast<double>(n);
    for (Index i = 0; i < n; ++i) {
      const Index off = (i + 1) * d;
      g.block(0, off, d, d) = hessian_fi(*shared, i, w);
      g.block(off, 0, d, d) = eye_n;
      g.block(off, off, d, d) = -Matrix::Identity(d, d);
    }
    return g;
  };
  return sys;
}

NonlinearSystem make_linear_system(Matrix a, Vector b) {
  if (a.rows() != b.size()) throw ConfigError("linear system: dimension mismatch");
  NonlinearSystem sys;
  sys.dim_in = a.cols();
  sys.dim_out = a.rows();
  sys.linear = true;
  sys.a = std::move(a);
  sys.b = std::move(b);
  sys.residual = [a = sys.a, b = sys.b](const Vector& x) -> Vector { return a * x - b; };
  sys.jacobian_t = [at = Matrix(sys.a.transpose())](const Vector&) { return at; };
  return sys;
}

Vector stack_iterate(const Vector& w, const Matrix& alphas) {
  if (alphas.rows() != w.size()) throw ConfigError("stack_iterate: dimension mismatch");
  Vector x(w.size() * (alphas.cols() + 1));
  x.head(w.size()) = w;
  x.tail(alphas.size()) = Eigen::Map<const Vector>(alphas.data(), alphas.size());
  return x;
}

std::pair<Vector, Matrix> unstack_iterate(const Vector& x, Index d) {
  if (d < 1 || x.size() % d != 0 || x.size() < d)
    throw ConfigError("unstack_iterate: dimension mismatch");
  const Index n = x.size() / d - 1;
  Matrix alphas = Eigen::Map<const Matrix>(x.data() + d, d, n);
  return {x.head(d), std::move(alphas)};
}

// ---------------------------------------------------------------------------

SketchDistribution SketchDistribution::san(const Problem& problem, double p,
                                           bool identity_metric) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("san sketch: p must lie in (0, 1)");
  SketchDistribution dist;
  dist.kind_ = Kind::san;
  dist.problem_ = std::make_shared<const Problem>(problem);
  dist.dim_ = (problem.n() + 1) * problem.d();
  dist.p_ = p;
  dist.identity_metric_ = identity_metric;
  return dist;
}

SketchDistribution SketchDistribution::sana(const Problem& problem) {
  SketchDistribution dist;
  dist.kind_ = Kind::sana;
  dist.problem_ = std::make_shared<const Problem>(problem);
  dist.dim_ = (problem.n() + 1) * problem.d();
  return dist;
}

SketchDistribution SketchDistribution::full(Index dim) {
  if (dim < 1) throw ConfigError("full sketch: dimension must be positive");
  SketchDistribution dist;
  dist.kind_ = Kind::full;
  dist.dim_ = dim;
  dist.metric_ = Matrix::Identity(dim, dim);
  return dist;
}

SketchDistribution SketchDistribution::coordinate(const Matrix& a) {
  if (a.rows() != a.cols() || a.rows() < 1)
    throw ConfigError("coordinate sketch: expected a nonempty square matrix");
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success || !a.isApprox(a.transpose()))
    throw ConfigError("coordinate sketch: matrix is not symmetric positive definite");
  SketchDistribution dist;
  dist.kind_ = Kind::coordinate;
  dist.dim_ = a.rows();
  dist.metric_ = a;
  const double trace = a.trace();
  double acc = 0.0;
  for (Index i = 0; i < a.rows(); ++i) {
    acc += a(i, i) / trace;
    dist.cumulative_.push_back(acc);
  }
  dist.cumulative_.back() = 1.0;
  return dist;
}

const Matrix& SketchDistribution::metric() const {
  if (!constant_metric()) throw ConfigError("sketch distribution has an x-dependent metric");
  return metric_;
}

Matrix SketchDistribution::block(Index b) const {
  const Index d = problem_->d();
  Matrix s = Matrix::Zero(dim_, d);
  s.block(b * d, 0, d, d).setIdentity();
  return s;
}

Matrix SketchDistribution::hessian_metric(const Vector& x, Index j) const {
  const Index d = problem_->d();
  Matrix w = Matrix::Identity(dim_, dim_);
  if (!identity_metric_) w.topLeftCorner(d, d) = hessian_fi(*problem_, j, Vector(x.head(d)));
  return w;
}

std::vector<SketchOutcome> SketchDistribution::enumerate(const Vector& x) const {
  if (x.size() != dim_) throw ConfigError("sketch distribution: dimension mismatch");
  std::vector<SketchOutcome> out;
  switch (kind_) {
    case Kind::san: {
      const Index n = problem_->n();
      out.push_back({p_, block(0), Matrix::Identity(dim_, dim_)});
      for (Index j = 0; j < n; ++j)
        out.push_back({(1.0 - p_) / static_cast<double>(n), block(j + 1), hessian_metric(x, j)});
      break;
    }
    case Kind::sana: {
      const Index n = problem_->n();
      const Index d = problem_->d();
      for (Index j = 0; j < n; ++j) {
        Matrix s(dim_, 2 * d);
        s << block(0), block(j + 1);
        out.push_back({1.0 / static_cast<double>(n), std::move(s), hessian_metric(x, j)});
      }
      break;
    }
    case Kind::full:
      out.push_back({1.0, Matrix::Identity(dim_, dim_), metric_});
      break;
    case Kind::coordinate: {
      const double trace = metric_.trace();
      for (Index i = 0; i < dim_; ++i)
        out.push_back({metric_(i, i) / trace, Matrix::Identity(dim_, dim_).col(i), metric_});
      break;
    }
  }
  return out;
}

SketchSample SketchDistribution::sample(const Vector& x, Rng& rng) const {
  if (x.size() != dim_) throw ConfigError("sketch distribution: dimension mismatch");
  switch (kind_) {
    case Kind::san: {
      const Index n = problem_->n();
      const auto j = draw_average_or_row(rng, p_, static_cast<std::size_t>(n));
      if (!j) return {block(0), Matrix::Identity(dim_, dim_), std::nullopt};
      const auto jj = static_cast<Index>(*j);
      return {block(jj + 1), hessian_metric(x, jj), jj};
    }
    case Kind::sana: {
      const Index n = problem_->n();
      const Index d = problem_->d();
      const auto j = static_cast<Index>(uniform_index(rng, static_cast<std::size_t>(n)));
      Matrix s(dim_, 2 * d);
      s << block(0), block(j + 1);
      return {std::move(s), hessian_metric(x, j), j};
    }
    case Kind::full:
      return {Matrix::Identity(dim_, dim_), metric_, std::nullopt};
    case Kind::coordinate: {
      const double u = uniform01(rng);
      Index i = 0;
      while (i + 1 < dim_ && u >= cumulative_[i]) ++i;
      return {Matrix::Identity(dim_, dim_).col(i), metric_, i};
    }
  }
  throw ConfigError("sketch distribution: unknown kind");
}

// ---------------------------------------------------------------------------

Vector snrvm_step(const NonlinearSystem& sys, const Vector& x, const Matrix& s, const Matrix& w,
                  double gamma) {
  const Matrix jac = sys.jacobian_t(x).transpose();
  const Vector f = sys.residual(x);
  return x + gamma * weighted_sketch_project(jac, s, w, Vector(-f));
}

double surrogate_fhat(const NonlinearSystem& sys, const Vector& x_eval, const Vector& x_anchor,
                      const Matrix& w) {
  Eigen::LLT<Matrix> llt(w);
  if (llt.info() != Eigen::Success)
    throw NumericalError("surrogate_fhat: metric is not positive definite");
  const Matrix g = sys.jacobian_t(x_anchor);  // grad F = J^T
  const Matrix metric = g.transpose() * llt.solve(g);
  const Vector f = sys.residual(x_eval);
  return 0.5 * f.dot(pseudo_inverse(metric) * f);
}

double rho_at(const NonlinearSystem& sys, const SketchDistribution& dist, const Vector& x) {
  const auto outcomes = dist.enumerate(x);
  const Matrix g = sys.jacobian_t(x);
  const Index m = g.cols();
  Matrix h = Matrix::Zero(m, m);
  for (const auto& o : outcomes) {
    Eigen::LLT<Matrix> llt(o.w);
    if (llt.info() != Eigen::Success)
      throw NumericalError("rho_at: sketch metric is not positive definite");
    const Matrix gs = g * o.s;
    const Matrix gram = gs.transpose() * llt.solve(gs);
    h += o.probability * (o.s * pseudo_inverse(gram) * o.s.transpose());
  }
  const Matrix ghg = g * h * g.transpose();
  double rho = std::numeric_limits<double>::infinity();
  for (const auto& o : outcomes) {
    const Matrix root = spd_inverse_sqrt(o.w);
    rho = std::min(rho, min_pos_eig(root * ghg * root));
  }
  return rho;
}

ContractionResult contraction_experiment(const NonlinearSystem& sys,
                                         const SketchDistribution& dist, const Vector& x0,
                                         int steps, int trials, std::uint64_t seed,
                                         double gamma, double fit_floor) {
  if (!sys.linear) throw ConfigError("contraction experiment needs a linear system");
  if (!dist.constant_metric())
    throw ConfigError("contraction experiment needs a constant metric");
  if (steps < 1 || trials < 1) throw ConfigError("contraction experiment: steps, trials >= 1");
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw ConfigError("contraction experiment: gamma must lie in [0, 1]");

  const Matrix& w = dist.metric();
  const Vector x_star = least_norm_solve(sys.a, sys.b);
  auto error = [&](const Vector& x) {
    const Vector e = x - x_star;
    return e.dot(w * e);
  };
  if (!(error(x0) > 0.0)) throw ConfigError("contraction experiment: x0 is already the solution");

  ContractionResult out;
  out.mean_error.assign(steps + 1, 0.0);
  out.mean_fhat.assign(steps + 1, 0.0);
  for (int t = 0; t < trials; ++t) {
    Rng rng = derived_rng(seed, static_cast<std::uint64_t>(t));
    Vector x = x0;
    for (int k = 0;; ++k) {
      out.mean_error[k] += error(x);
      out.mean_fhat[k] += surrogate_fhat(sys, x, x, w);
      if (k == steps) break;
      const auto draw = dist.sample(x, rng);
      x = snrvm_step(sys, x, draw.s, draw.w, gamma);
    }
  }
  for (int k = 0; k <= steps; ++k) {
    out.mean_error[k] /= trials;
    out.mean_fhat[k] /= trials;
  }

  // Least-squares slope of log mean_error against k over the fit window.
  std::vector<double> ks, logs;
  const double floor = fit_floor * out.mean_error[0];
  for (int k = 0; k <= steps && out.mean_error[k] > 0.0 && out.mean_error[k] >= floor; ++k) {
    ks.push_back(k);
    logs.push_back(std::log(out.mean_error[k]));
  }
  out.fit_steps = static_cast<int>(ks.size()) - 1;
  if (ks.size() >= 2) {
    const double kbar = std::accumulate(ks.begin(), ks.end(), 0.0) / ks.size();
    const double lbar = std::accumulate(logs.begin(), logs.end(), 0.0) / logs.size();
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      num += (ks[i] - kbar) * (logs[i] - lbar);
      den += (ks[i] - kbar) * (ks[i] - kbar);
    }
    out.empirical_rate = std::exp(num / den);
  } else {
    // Fell through the floor in one step.
    out.empirical_rate = out.mean_error[1] / out.mean_error[0];
  }
  auto max_ratio = [steps](const std::vector<double>& v) {
    double worst = 0.0;
    for (int k = 0; k < steps; ++k)
      if (v[k] > 0.0) worst = std::max(worst, v[k + 1] / v[k]);
    return worst;
  };
  out.max_step_ratio = max_ratio(out.mean_error);
  out.max_fhat_ratio = max_ratio(out.mean_fhat);

  out.rho = rho_at(sys, dist, x0);
  out.bound = 1.0 - gamma * out.rho;
  return out;
}

}  // namespace fsn
