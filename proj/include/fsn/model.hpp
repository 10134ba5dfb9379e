#pragma once

#include <type_traits>
#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cmath>
#include <string>
#include <utility>

#include "fsn/errors.hpp"
#include "fsn/linalg.hpp"

namespace fsn {

template <typename Scalar>
using SparseRows = Eigen::SparseMatrix<Scalar, Eigen::RowMajor, int>;

// ---------------------------------------------------------------------------
// Scalar losses phi(t; y)

enum class LossKind { logistic, squared };

struct Loss {
  LossKind kind = LossKind::logistic;

  static constexpr Loss logistic() { return {LossKind::logistic}; }
  static constexpr Loss squared() { return {LossKind::squared}; }
};

std::string to_string(LossKind kind);

template <typename Scalar>
struct LossDerivatives {
  Scalar value;
  Scalar d1;
  Scalar d2;
};

namespace detail {

/// log(1 + e^z) without overflow.
template <typename Scalar>
Scalar softplus(Scalar z) {
  using std::exp;
  using std::log1p;
  return z > Scalar(0) ? z + log1p(exp(-z)) : log1p(exp(z));
}

/// 1 / (1 + e^{-z}) without overflow.
template <typename Scalar>
Scalar sigmoid(Scalar z) {
  using std::exp;
  if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-z));
  const Scalar e = exp(z);
  return e / (Scalar(1) + e);
}

}  // namespace detail

/// phi(t), phi'(t), phi''(t). Logistic: log(1 + e^{-yt}); squared:
/// (t - y)^2 / 2.
template <typename Scalar>
LossDerivatives<Scalar> loss_eval(Loss loss, Scalar t, Scalar y) {
  switch (loss.kind) {
    case LossKind::logistic: {
      const Scalar z = -y * t;
      const Scalar s = detail::sigmoid(z);  // probability of the wrong side
      return {detail::softplus(z), -y * s, s * detail::sigmoid(-z)};
    }
    case LossKind::squared: {
      const Scalar r = t - y;
      return {Scalar(0.5) * r * r, r, Scalar(1)};
    }
  }
  throw ConfigError("loss_eval: unknown loss kind");
}

// ---------------------------------------------------------------------------
// Separable regularizers lambda * sum_j R_j(w_j)

enum class RegKind { l2, pseudo_huber };

std::string to_string(RegKind kind);

template <typename Scalar>
struct Regularizer {
  RegKind kind = RegKind::l2;
  Scalar lambda{0};
  Scalar delta{1};  // pseudo-Huber only

  static Regularizer l2(Scalar lambda) { return {RegKind::l2, lambda, Scalar(1)}; }
  static Regularizer pseudo_huber(Scalar lambda, Scalar delta) {
    return {RegKind::pseudo_huber, lambda, delta};
  }

  void validate() const {
    if (!(lambda >= Scalar(0)))
      throw ConfigError("regularizer weight must be nonnegative");
    if (kind == RegKind::pseudo_huber && !(delta > Scalar(0)))
      throw ConfigError("pseudo-Huber delta must be positive");
  }

  // Unweighted per-coordinate R_j, R_j', R_j''.
  Scalar coord_value(Scalar t) const {
    if (kind == RegKind::l2) return Scalar(0.5) * t * t;
    const Scalar u = t / delta;
    // delta^2 (sqrt(1 + u^2) - 1) written without cancellation near 0.
    return delta * delta * u * u / (std::sqrt(Scalar(1) + u * u) + Scalar(1));
  }
  Scalar coord_d1(Scalar t) const {
    if (kind == RegKind::l2) return t;
    const Scalar u = t / delta;
    return t / std::sqrt(Scalar(1) + u * u);
  }
  Scalar coord_d2(Scalar t) const {
    if (kind == RegKind::l2) return Scalar(1);
    const Scalar u = t / delta;
    const Scalar q = Scalar(1) + u * u;
    return Scalar(1) / (q * std::sqrt(q));
  }
};

template <typename Scalar>
struct RegularizerEval {
  Scalar value;
  VectorX<Scalar> grad;
  VectorX<Scalar> hess_diag;
};

template <typename Scalar, typename Derived>
VectorX<Scalar> reg_grad(const Regularizer<Scalar>& reg,
                         const Eigen::MatrixBase<Derived>& w) {
  if (reg.kind == RegKind::l2) return reg.lambda * w;
  return w.unaryExpr([&](Scalar t) { return reg.lambda * reg.coord_d1(t); });
}

template <typename Scalar, typename Derived>
VectorX<Scalar> reg_hess_diag(const Regularizer<Scalar>& reg,
                              const Eigen::MatrixBase<Derived>& w) {
  if (reg.kind == RegKind::l2) return VectorX<Scalar>::Constant(w.size(), reg.lambda);
  return w.unaryExpr([&](Scalar t) { return reg.lambda * reg.coord_d2(t); });
}

template <typename Scalar, typename Derived>
Scalar reg_value(const Regularizer<Scalar>& reg, const Eigen::MatrixBase<Derived>& w) {
  if (reg.kind == RegKind::l2) return Scalar(0.5) * reg.lambda * w.squaredNorm();
  Scalar s(0);
  for (Index j = 0; j < w.size(); ++j) s += reg.coord_value(w(j));
  return reg.lambda * s;
}

template <typename Scalar, typename Derived>
RegularizerEval<Scalar> reg_eval(const Regularizer<Scalar>& reg,
                                 const Eigen::MatrixBase<Derived>& w) {
  return {reg_value(reg, w), reg_grad(reg, w), reg_hess_diag(reg, w)};
}

// ---------------------------------------------------------------------------
// Regularized GLM: f_i(w) = phi_i(<a_i, w>) + lambda R(w)

template <typename Scalar>
class GlmProblem {
 public:
  GlmProblem(SparseRows<Scalar> rows, VectorX<Scalar> labels, Loss loss,
             Regularizer<Scalar> reg)
      : rows_(std::move(rows)), labels_(std::move(labels)), loss_(loss), reg_(reg) {
    rows_.makeCompressed();
    if (rows_.rows() < 1 || rows_.cols() < 1)
      throw ConfigError("GlmProblem: need n >= 1 and d >= 1");
    if (labels_.size() != rows_.rows())
      throw ConfigError("GlmProblem: label count does not match row count");
    if (loss_.kind == LossKind::logistic)
      for (Index i = 0; i < labels_.size(); ++i)
        if (labels_(i) != Scalar(1) && labels_(i) != Scalar(-1))
          throw ConfigError("GlmProblem: logistic labels must be -1 or +1");
    reg_.validate();
  }

  Index n() const { return rows_.rows(); }
  Index d() const { return rows_.cols(); }
  const SparseRows<Scalar>& rows() const { return rows_; }
  const VectorX<Scalar>& labels() const { return labels_; }
  Loss loss() const { return loss_; }
  const Regularizer<Scalar>& reg() const { return reg_; }

  SparseRowView<Scalar> row(Index i) const {
    const int begin = rows_.outerIndexPtr()[i];
    const int end = rows_.outerIndexPtr()[i + 1];
    return {std::span<const int>(rows_.innerIndexPtr() + begin, end - begin),
            std::span<const Scalar>(rows_.valuePtr() + begin, end - begin)};
  }

  template <typename Derived>
  Scalar margin(Index i, const Eigen::MatrixBase<Derived>& w) const {
    return row(i).dot(w);
  }

  /// phi_i and its derivatives at the margin <a_i, w>.
  template <typename Derived>
  LossDerivatives<Scalar> loss_at(Index i, const Eigen::MatrixBase<Derived>& w) const {
    return loss_eval(loss_, margin(i, w), labels_(i));
  }

  GlmProblem with_regularizer(const Regularizer<Scalar>& reg) const {
    return GlmProblem(rows_, labels_, loss_, reg);
  }

 private:
  SparseRows<Scalar> rows_;
  VectorX<Scalar> labels_;
  Loss loss_;
  Regularizer<Scalar> reg_;
};

/// Builds a problem from dense rows (one data point per row of `a`).
template <typename Derived, typename Scalar = typename Derived::Scalar>
GlmProblem<Scalar> make_problem(const Eigen::MatrixBase<Derived>& a,
                                std::type_identity_t<VectorX<Scalar>> labels, Loss loss,
                                std::type_identity_t<Regularizer<Scalar>> reg) {
  SparseRows<Scalar> rows = a.sparseView(Scalar(0), Scalar(0));
  return GlmProblem<Scalar>(std::move(rows), std::move(labels), loss, reg);
}

template <typename Scalar>
void check_row_index(const GlmProblem<Scalar>& problem, Index i) {
  if (i < 0 || i >= problem.n())
    throw std::out_of_range("row index " + std::to_string(i) + " out of range [0, " +
                            std::to_string(problem.n()) + ")");
}

/// grad f_i(w) = grad R(w) + phi_i'(<a_i, w>) a_i
template <typename Scalar, typename Derived>
VectorX<Scalar> grad_fi(const GlmProblem<Scalar>& problem, Index i,
                        const Eigen::MatrixBase<Derived>& w) {
  check_row_index(problem, i);
  VectorX<Scalar> g = reg_grad(problem.reg(), w);
  problem.row(i).axpy_into(problem.loss_at(i, w).d1, g);
  return g;
}

/// Dense d x d Hessian of f_i. Only for small-dimension oracles.
template <typename Scalar, typename Derived>
MatrixX<Scalar> hessian_fi(const GlmProblem<Scalar>& problem, Index i,
                           const Eigen::MatrixBase<Derived>& w) {
  check_row_index(problem, i);
  const VectorX<Scalar> a = problem.row(i).to_dense(problem.d());
  MatrixX<Scalar> h = problem.loss_at(i, w).d2 * (a * a.transpose());
  h.diagonal() += reg_hess_diag(problem.reg(), w);
  return h;
}

/// The Hessian of f_i + mu I in diagonal-plus-rank-one form.
template <typename Scalar, typename Derived>
DiagRank1<Scalar> shifted_hessian_fi(const GlmProblem<Scalar>& problem, Index i,
                                     const Eigen::MatrixBase<Derived>& w, Scalar mu) {
  DiagRank1<Scalar> m;
  m.diag = reg_hess_diag(problem.reg(), w).array() + mu;
  m.scale = problem.loss_at(i, w).d2;
  m.u = problem.row(i);
  return m;
}

template <typename Scalar>
struct ObjectiveEval {
  Scalar value;
  VectorX<Scalar> grad;
};

/// f(w) = (1/n) sum_i f_i(w) and its gradient.
template <typename Scalar, typename Derived>
ObjectiveEval<Scalar> full_objective_and_grad(const GlmProblem<Scalar>& problem,
                                              const Eigen::MatrixBase<Derived>& w) {
  const Index n = problem.n();
  VectorX<Scalar> loss_grad = VectorX<Scalar>::Zero(problem.d());
  Scalar loss_sum(0);
  for (Index i = 0; i < n; ++i) {
    const auto phi = problem.loss_at(i, w);
    loss_sum += phi.value;
    problem.row(i).axpy_into(phi.d1, loss_grad);
  }
  const Scalar inv_n = Scalar(1) / Scalar(n);
  return {loss_sum * inv_n + reg_value(problem.reg(), w),
          loss_grad * inv_n + reg_grad(problem.reg(), w)};
}

/// Dense Hessian of f. Only for small-dimension oracles.
template <typename Scalar, typename Derived>
MatrixX<Scalar> full_hessian(const GlmProblem<Scalar>& problem,
                             const Eigen::MatrixBase<Derived>& w) {
  const Index d = problem.d();
  MatrixX<Scalar> h = MatrixX<Scalar>::Zero(d, d);
  for (Index i = 0; i < problem.n(); ++i) {
    const VectorX<Scalar> a = problem.row(i).to_dense(d);
    h.noalias() += problem.loss_at(i, w).d2 * (a * a.transpose());
  }
  h /= Scalar(problem.n());
  h.diagonal() += reg_hess_diag(problem.reg(), w);
  return h;
}

/// max_i L_i with L_i = ||a_i||^2 / 4 + lambda (logistic) or
/// ||a_i||^2 + lambda (squared). Both regularizers have R'' <= 1.
template <typename Scalar>
Scalar lmax(const GlmProblem<Scalar>& problem) {
  Scalar curvature;
  switch (problem.loss().kind) {
    case LossKind::logistic: curvature = Scalar(0.25); break;
    case LossKind::squared: curvature = Scalar(1); break;
    default: throw ConfigError("lmax: unsupported loss kind");
  }
  Scalar best(0);
  for (Index i = 0; i < problem.n(); ++i)
    best = std::max(best, curvature * problem.row(i).squared_norm());
  return best + problem.reg().lambda;
}

}  // namespace fsn
