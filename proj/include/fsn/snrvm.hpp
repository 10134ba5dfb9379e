#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "fsn/solvers.hpp"

namespace fsn {

/// Square system F: R^p -> R^m with its Jacobian-transpose grad F (p x m).
struct NonlinearSystem {
  Index dim_in = 0;
  Index dim_out = 0;
  std::function<Vector(const Vector&)> residual;
  std::function<Matrix(const Vector&)> jacobian_t;

  // Set when F(x) = a x - b.
  bool linear = false;
  Matrix a;
  Vector b;
};

/// x = [w; alpha_1; ...; alpha_n] and
/// F(x) = [(1/n) sum alpha_i; grad f_1(w) - alpha_1; ...; grad f_n(w) - alpha_n].
NonlinearSystem build_function_splitting(const Problem& problem, Index dense_cap = 1024);

NonlinearSystem make_linear_system(Matrix a, Vector b);

/// Packs w and the d x n column block of alphas into one (n+1)d vector.
Vector stack_iterate(const Vector& w, const Matrix& alphas);

/// Inverse of stack_iterate for dimension d.
std::pair<Vector, Matrix> unstack_iterate(const Vector& x, Index d);

struct SketchOutcome {
  double probability = 0.0;
  Matrix s;
  Matrix w;
};

struct SketchSample {
  Matrix s;
  Matrix w;
  std::optional<Index> index;  // sampled row or coordinate; empty for averaging/full
};

/// Finite distribution over (S, W) pairs, possibly depending on x.
class SketchDistribution {
 public:
  enum class Kind { san, sana, full, coordinate };

  /// Average block with probability p, else row block j+1 uniformly. The
  /// metric is blockdiag(grad^2 f_j(w), I) or, with identity_metric, I.
  static SketchDistribution san(const Problem& problem, double p, bool identity_metric = false);
  /// [average block, row block j+1] with j uniform.
  static SketchDistribution sana(const Problem& problem);
  static SketchDistribution full(Index dim);
  /// e_i with probability a_ii / tr(a) and metric a.
  static SketchDistribution coordinate(const Matrix& a);

  Kind kind() const { return kind_; }
  Index dim() const { return dim_; }
  bool constant_metric() const { return kind_ == Kind::full || kind_ == Kind::coordinate; }
  /// Only for constant-metric distributions.
  const Matrix& metric() const;

  std::vector<SketchOutcome> enumerate(const Vector& x) const;

  /// Consumes the RNG exactly as the matching solver step does.
  SketchSample sample(const Vector& x, Rng& rng) const;

 private:
  Kind kind_ = Kind::full;
  Index dim_ = 0;
  double p_ = 0.0;
  bool identity_metric_ = false;
  std::shared_ptr<const Problem> problem_;
  Matrix metric_;
  std::vector<double> cumulative_;  // coordinate
  Matrix hessian_metric(const Vector& x, Index j) const;
  Matrix block(Index b) const;
};

/// x + gamma * argmin ||dx||_W s.t. S^T grad F(x)^T dx = -S^T F(x).
Vector snrvm_step(const NonlinearSystem& sys, const Vector& x, const Matrix& s, const Matrix& w,
                  double gamma);

/// (1/2) F(x_eval)^T (J W^{-1} J^T)^+ F(x_eval) with J = grad F(x_anchor)^T.
double surrogate_fhat(const NonlinearSystem& sys, const Vector& x_eval, const Vector& x_anchor,
                      const Matrix& w);

/// min over outcomes of lambda_min^+(W_i^{-1/2} grad F H grad F^T W_i^{-1/2}) with
/// H = E[S (S^T grad F^T W^{-1} grad F S)^+ S^T].
double rho_at(const NonlinearSystem& sys, const SketchDistribution& dist, const Vector& x);

struct ContractionResult {
  std::vector<double> mean_error;  // E ||x^k - x*||_W^2, k = 0..steps
  std::vector<double> mean_fhat;   // E fhat_k(x^k)
  double empirical_rate = 1.0;     // geometric fit of mean_error over the fit window
  int fit_steps = 0;               // window: mean_error[k] >= fit_floor * mean_error[0]
  double max_step_ratio = 1.0;     // max_k mean_error[k+1] / mean_error[k]
  double max_fhat_ratio = 1.0;     // max_k mean_fhat[k+1] / mean_fhat[k]
  double rho = 0.0;
  double bound = 1.0;              // 1 - gamma rho
};

/// Monte-Carlo chains of snrvm_step on a linear system with a constant-metric
/// distribution. The rate fit stops once the mean error falls below
/// fit_floor times its start, where few chains still carry the average.
ContractionResult contraction_experiment(const NonlinearSystem& sys,
                                         const SketchDistribution& dist, const Vector& x0,
                                         int steps, int trials, std::uint64_t seed,
                                         double gamma = 1.0, double fit_floor = 1e-2);

}  // namespace fsn
