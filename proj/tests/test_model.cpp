#include <gtest/gtest.h>

#include <cmath>

#include "fsn/model.hpp"
#include "support/oracles.hpp"

using namespace fsn;
using oracle::Mat;
using oracle::Vec;

TEST(LossEval, LogisticAtZero) {
  const auto pos = loss_eval(Loss::logistic(), 0.0, 1.0);
  EXPECT_NEAR(pos.value, 0.6931472, 1e-7);
  EXPECT_DOUBLE_EQ(pos.d1, -0.5);
  EXPECT_DOUBLE_EQ(pos.d2, 0.25);
  const auto neg = loss_eval(Loss::logistic(), 0.0, -1.0);
  EXPECT_NEAR(neg.value, 0.6931472, 1e-7);
  EXPECT_DOUBLE_EQ(neg.d1, 0.5);
  EXPECT_DOUBLE_EQ(neg.d2, 0.25);
}

TEST(LossEval, LogisticSaturated) {
  const auto r = loss_eval(Loss::logistic(), 100.0, 1.0);
  EXPECT_LT(r.value, 1e-40);
  EXPECT_LE(std::abs(r.d1), 1e-40);
  EXPECT_LE(r.d2, 1e-40);
  EXPECT_GT(r.d2, 0.0);
}

TEST(LossEval, LogisticFiniteOverWideRange) {
  for (double t = -1000.0; t <= 1000.0; t += 0.5) {
    for (double y : {-1.0, 1.0}) {
      const auto r = loss_eval(Loss::logistic(), t, y);
      ASSERT_TRUE(std::isfinite(r.value) && std::isfinite(r.d1) && std::isfinite(r.d2)) << t;
      ASSERT_GE(r.d2, 0.0);
    }
  }
  // Large loss side stays linear rather than overflowing.
  EXPECT_NEAR(loss_eval(Loss::logistic(), -1000.0, 1.0).value, 1000.0, 1e-9);
}

TEST(LossEval, SquaredLoss) {
  const auto r = loss_eval(Loss::squared(), 3.0, 1.0);
  EXPECT_DOUBLE_EQ(r.value, 2.0);
  EXPECT_DOUBLE_EQ(r.d1, 2.0);
  EXPECT_DOUBLE_EQ(r.d2, 1.0);
}

TEST(LossEval, FiniteDifferences) {
  oracle::TestRng rng(11);
  for (auto loss : {Loss::logistic(), Loss::squared()}) {
    for (int k = 0; k < 1000; ++k) {
      const double t = rng.uniform(-8.0, 8.0);
      const double y = rng.uniform(0, 1) < 0.5 ? -1.0 : 1.0;
      const auto r = loss_eval(loss, t, y);
      const double h = 1e-5;
      const double fd1 = oracle::central_diff(
          [&](double s) { return loss_eval(loss, s, y).value; }, t, h);
      const double fd2 = oracle::central_diff(
          [&](double s) { return loss_eval(loss, s, y).d1; }, t, h);
      EXPECT_LE(std::abs(fd1 - r.d1), 1e-6 * std::max(1.0, std::abs(r.d1))) << t;
      EXPECT_LE(std::abs(fd2 - r.d2), 1e-5 * std::max(1.0, std::abs(r.d2))) << t;
    }
  }
}

TEST(RegEval, L2) {
  Vec w(2);
  w << 3, 4;
  const auto r = reg_eval(Regularizer<double>::l2(1.0), w);
  EXPECT_DOUBLE_EQ(r.value, 12.5);
  EXPECT_EQ(r.grad, w);
  EXPECT_EQ(r.hess_diag, Vec::Ones(2));
}

TEST(RegEval, PseudoHuberKnownValues) {
  const auto reg = Regularizer<double>::pseudo_huber(1.0, 1.0);
  const auto at0 = reg_eval(reg, Vec::Zero(1));
  EXPECT_DOUBLE_EQ(at0.value, 0.0);
  EXPECT_DOUBLE_EQ(at0.grad(0), 0.0);
  EXPECT_DOUBLE_EQ(at0.hess_diag(0), 1.0);
  const auto at1 = reg_eval(reg, Vec::Ones(1));
  EXPECT_NEAR(at1.value, 0.4142136, 1e-7);
  EXPECT_NEAR(at1.grad(0), 0.7071068, 1e-7);
  EXPECT_NEAR(at1.hess_diag(0), 0.3535534, 1e-7);
}

TEST(RegEval, FiniteDifferencesAndPositivity) {
  oracle::TestRng rng(12);
  for (int k = 0; k < 1000; ++k) {
    const double lambda = rng.uniform(0.01, 3.0);
    const double delta = rng.uniform(0.1, 5.0);
    const double t = rng.uniform(-10.0, 10.0);
    for (auto reg : {Regularizer<double>::l2(lambda), Regularizer<double>::pseudo_huber(lambda, delta)}) {
      const Vec w = Vec::Constant(1, t);
      const auto r = reg_eval(reg, w);
      const double h = 1e-5;
      const double fd1 = oracle::central_diff(
          [&](double s) { return reg_value(reg, Vec::Constant(1, s)); }, t, h);
      const double fd2 = oracle::central_diff(
          [&](double s) { return reg_grad(reg, Vec::Constant(1, s))(0); }, t, h);
      EXPECT_LE(std::abs(fd1 - r.grad(0)), 1e-6 * std::max(1.0, std::abs(r.grad(0))));
      EXPECT_LE(std::abs(fd2 - r.hess_diag(0)), 1e-5 * std::max(1.0, r.hess_diag(0)));
      EXPECT_GT(r.hess_diag(0), 0.0);
    }
  }
}

TEST(RegEval, PseudoHuberNoCancellationNearZero) {
  const auto reg = Regularizer<double>::pseudo_huber(1.0, 1.0);
  // delta^2 (sqrt(1+u^2)-1) ~ t^2/2 for tiny t.
  EXPECT_NEAR(reg.coord_value(1e-9), 0.5e-18, 1e-30);
}

TEST(GradFi, SquaredLossChainRule) {
  Mat a(1, 2);
  a << 1, 0;
  const auto p = make_problem(a, Vec::Zero(1), Loss::squared(), Regularizer<double>::l2(0.0));
  Vec w(2);
  w << 2, 5;
  EXPECT_EQ(grad_fi(p, 0, w), (Vec(2) << 2, 0).finished());
}

TEST(GradFi, ZeroRowGivesRegularizerGradient) {
  Mat a = Mat::Zero(1, 2);
  const auto p = make_problem(a, Vec::Ones(1), Loss::logistic(), Regularizer<double>::l2(1.0));
  EXPECT_EQ(grad_fi(p, 0, Vec::Ones(2)), Vec::Ones(2));
}

TEST(GradFi, PseudoHuberAtOrigin) {
  Mat a = Mat::Ones(1, 1);
  const auto p = make_problem(a, Vec::Ones(1), Loss::logistic(),
                              Regularizer<double>::pseudo_huber(1.0, 1.0));
  EXPECT_DOUBLE_EQ(grad_fi(p, 0, Vec::Zero(1))(0), -0.5);
}

TEST(GradFi, OutOfRange) {
  Mat a = Mat::Ones(2, 1);
  const auto p = make_problem(a, Vec::Ones(2), Loss::logistic(), Regularizer<double>::l2(1.0));
  EXPECT_THROW(grad_fi(p, 2, Vec::Zero(1)), std::out_of_range);
  EXPECT_THROW(grad_fi(p, -1, Vec::Zero(1)), std::out_of_range);
}

TEST(GradFi, MatchesOracleAndFiniteDifferences) {
  oracle::TestRng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const auto reg = trial % 2 ? Regularizer<double>::l2(0.3)
                               : Regularizer<double>::pseudo_huber(0.3, 0.7);
    const auto p = oracle::random_problem(rng, 5, 4, trial % 3 ? Loss::logistic() : Loss::squared(),
                                          reg, 0.7);
    const Vec w = rng.normal_vec(4);
    for (Index i = 0; i < p.n(); ++i) {
      EXPECT_LE((grad_fi(p, i, w) - oracle::grad_i(p, i, w)).norm(), 1e-12);
      EXPECT_LE((hessian_fi(p, i, w) - oracle::hess_i(p, i, w)).norm(), 1e-12);
      const Mat fd = oracle::fd_jacobian([&](const Vec& x) { return grad_fi(p, i, x); }, w, 1e-5);
      EXPECT_LE((fd - hessian_fi(p, i, w)).cwiseAbs().maxCoeff(), 1e-6);
    }
  }
}

TEST(FullObjective, SingleTermEqualsComponent) {
  oracle::TestRng rng(14);
  const auto p = oracle::random_problem(rng, 1, 3, Loss::logistic(), Regularizer<double>::l2(0.5));
  const Vec w = rng.normal_vec(3);
  const auto eval = full_objective_and_grad(p, w);
  EXPECT_NEAR(eval.value, p.loss_at(0, w).value + reg_value(p.reg(), w), 1e-15);
  EXPECT_LE((eval.grad - grad_fi(p, 0, w)).norm(), 1e-15);
}

TEST(FullObjective, MeanOfQuadratics) {
  // f_i(w) = (w - c_i)^2 / 2 with c = (1, 3) is stationary at 2.
  Mat a = Mat::Ones(2, 1);
  const Vec c = (Vec(2) << 1, 3).finished();
  const auto p = make_problem(a, c, Loss::squared(), Regularizer<double>::l2(0.0));
  EXPECT_DOUBLE_EQ(full_objective_and_grad(p, Vec::Constant(1, 2.0)).grad(0), 0.0);
}

TEST(FullObjective, GradientVanishesAtNewtonMinimizer) {
  oracle::TestRng rng(15);
  const auto p = oracle::random_problem(rng, 6, 2, Loss::logistic(), Regularizer<double>::l2(0.1));
  const Vec w_star = oracle::newton_minimizer(p);
  EXPECT_LE(full_objective_and_grad(p, w_star).grad.norm(), 1e-10);
}

TEST(FullObjective, GradientIsMeanOfComponents) {
  oracle::TestRng rng(16);
  const auto p = oracle::random_problem(rng, 9, 5, Loss::logistic(),
                                        Regularizer<double>::pseudo_huber(0.2, 1.5), 0.5);
  const Vec w = rng.normal_vec(5);
  Vec sum = Vec::Zero(5);
  for (Index i = 0; i < p.n(); ++i) sum += grad_fi(p, i, w);
  sum /= static_cast<double>(p.n());
  const Vec g = full_objective_and_grad(p, w).grad;
  EXPECT_LE((g - sum).norm(), 1e-12 * std::max(1.0, g.norm()));
}

TEST(Lmax, ClosedForms) {
  Mat one = Mat::Ones(1, 4);
  EXPECT_NEAR(lmax(make_problem(one, Vec::Ones(1), Loss::logistic(), Regularizer<double>::l2(0.1))),
              1.1, 1e-15);
  Mat two(2, 2);
  two << 1, 0, 0, 2;
  EXPECT_DOUBLE_EQ(
      lmax(make_problem(two, Vec::Ones(2), Loss::logistic(), Regularizer<double>::l2(0.0))), 1.0);
  EXPECT_DOUBLE_EQ(
      lmax(make_problem(two, Vec::Ones(2), Loss::squared(), Regularizer<double>::l2(0.5))), 4.5);
}

TEST(GlmProblem, RejectsBadInput) {
  Mat a = Mat::Ones(2, 2);
  EXPECT_THROW(make_problem(a, Vec::Ones(3), Loss::logistic(), Regularizer<double>::l2(1.0)),
               ConfigError);
  EXPECT_THROW(make_problem(a, Vec::Constant(2, 0.5), Loss::logistic(), Regularizer<double>::l2(1.0)),
               ConfigError);
  EXPECT_THROW(make_problem(a, Vec::Ones(2), Loss::logistic(), Regularizer<double>::l2(-1.0)),
               ConfigError);
  EXPECT_THROW(make_problem(a, Vec::Ones(2), Loss::logistic(),
                            Regularizer<double>::pseudo_huber(1.0, 0.0)),
               ConfigError);
}

TEST(GlmProblem, FloatScalarInstantiates) {
  Eigen::MatrixXf a(1, 2);
  a << 1, 2;
  const auto p = make_problem(a, Eigen::VectorXf::Ones(1), Loss::logistic(),
                              Regularizer<float>::l2(0.5f));
  const Eigen::VectorXf g = grad_fi(p, 0, Eigen::VectorXf::Zero(2));
  EXPECT_NEAR(g(1), -1.0f, 1e-6f);
}
