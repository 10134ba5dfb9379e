#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fsn/model.hpp"
#include "fsn/random.hpp"

namespace fsn {

using Problem = GlmProblem<double>;
using Vector = VectorX<double>;
using Matrix = MatrixX<double>;

enum class SolverKind { san, sana, san_id, snm, sag, svrg };

std::string to_string(SolverKind kind);
SolverKind parse_solver_kind(std::string_view name);

/// san, sana and san_id: the step size is a relaxation in (0, 1].
bool is_newton_family(SolverKind kind);

struct SolverConfig {
  SolverKind kind = SolverKind::san;
  double gamma = 1.0;
  std::optional<double> p;                  // averaging probability, default 1/(n+1)
  std::optional<std::size_t> svrg_inner;    // default n
  std::uint64_t seed = 0;
  Index dense_cap = 256;                    // san_id dense solve limit on d
  bool allow_overrelaxation = false;        // permits gamma > 1 for grid sweeps
  bool ridge_fast_path = false;             // san: closed-form L2 direction

  double probability(Index n) const;
  std::size_t inner_length(Index n) const;
  void validate(const Problem& problem) const;
};

struct StopRule {
  double grad_tol = 1e-6;
  double max_passes = 50.0;
};

enum class EventKind { none, averaging, row, refresh };

struct StepEvent {
  EventKind kind = EventKind::none;
  Index row = -1;
};

/// Incremental sums for the variable-splitting Newton method.
struct SnmCache {
  Matrix hess_sum;      // sum_i H_i(alpha_i)
  Matrix hess_sum_inv;  // maintained by Sherman-Morrison for L2
  Vector vec_sum;       // sum_i [H_i(alpha_i) alpha_i - grad f_i(alpha_i)]
  Vector phi_d1, phi_d2, margin;  // loss data at alpha_i
};

/// Iterate plus whatever per-method memory the chosen solver keeps. The
/// columns of `alphas` hold alpha_i (SAN family), the copies alpha_i (SNM)
/// or the stored gradients (SAG).
struct SolverState {
  Vector w;
  Matrix alphas;     // d x n
  Vector alpha_bar;  // san, san_id: mean of the alphas
  Vector grad_sum;   // sag

  Vector snapshot;       // svrg
  Vector snapshot_grad;  // svrg: full gradient at the snapshot
  std::size_t inner_step = 0;
  bool snapshot_valid = false;

  SnmCache snm;

  std::uint64_t accesses = 0;        // data-row evaluations charged to passes
  std::uint64_t setup_accesses = 0;  // SNM initialization, not charged
  std::uint64_t steps = 0;
  Rng rng;
  StepEvent last;

  double passes(Index n) const {
    return static_cast<double>(accesses) / static_cast<double>(n);
  }
};

/// Zero iterate and zero auxiliary variables; SNM sums are built at the zero
/// copies.
SolverState init_state(const Problem& problem, const SolverConfig& cfg);

/// Recomputes the SNM sums from the current copies in `state.alphas`.
void snm_rebuild(SolverState& state, const Problem& problem);

/// -(mu I + H_j(w))^{-1} (grad f_j(w) - alpha_j), in O(d + nnz(a_j)).
Vector relaxed_newton_direction(const Problem& problem, Index j, const Vector& w,
                                const Eigen::Ref<const Vector>& alpha_j, double mu);

/// Same direction for L2 with mu = 1, from a handful of dot products.
Vector ridge_newton_direction(const Problem& problem, Index j, const Vector& w,
                              const Eigen::Ref<const Vector>& alpha_j);

void san_step(SolverState& state, const Problem& problem, const SolverConfig& cfg);
void san_ridge_step(SolverState& state, const Problem& problem, const SolverConfig& cfg);
void sana_step(SolverState& state, const Problem& problem, const SolverConfig& cfg);
void san_id_step(SolverState& state, const Problem& problem, const SolverConfig& cfg);
void snm_step(SolverState& state, const Problem& problem, const SolverConfig& cfg);
void sag_step(SolverState& state, const Problem& problem, const SolverConfig& cfg);
void svrg_step(SolverState& state, const Problem& problem, const SolverConfig& cfg);

/// Dispatches on cfg.kind.
void step(SolverState& state, const Problem& problem, const SolverConfig& cfg);

enum class StopStatus { grad_tol, max_passes, numerical_failure };

std::string to_string(StopStatus status);

struct TraceRecord {
  double pass;
  double grad_norm;
  double fval;
  double wall_s;
};

struct Trace {
  SolverKind solver = SolverKind::san;
  std::uint64_t seed = 0;
  std::vector<TraceRecord> records;
  StopStatus status = StopStatus::max_passes;
  Vector w;
  std::string message;  // set on numerical failure
};

struct RunOptions {
  double checkpoint_every = 1.0;
  bool count_checkpoints = false;  // charge each full-gradient check one pass
};

/// Steps the configured solver from zero until ||grad f|| <= grad_tol or
/// max_passes, evaluating the full gradient every `checkpoint_every` passes.
Trace run(const Problem& problem, const SolverConfig& cfg, const StopRule& stop,
          const RunOptions& options = {});

}  // namespace fsn
