#include <gtest/gtest.h>

#include "fsn/snrvm.hpp"
#include "support/oracles.hpp"

using namespace fsn;
using oracle::Mat;
using oracle::Vec;

namespace {

Problem half_square(Index n) {
  return make_problem(Mat::Ones(n, 1), Vec::Zero(n), Loss::squared(), Regularizer<double>::l2(0.0));
}

Mat diag(std::initializer_list<double> values) {
  Vec v(static_cast<Index>(values.size()));
  Index i = 0;
  for (double x : values) v(i++) = x;
  return v.asDiagonal();
}

// Steps a solver and the engine side by side from the same seed; returns the
// worst per-coordinate relative gap over the run.
double replay_gap(const Problem& p, const SolverConfig& cfg, const SketchDistribution& dist,
                  int steps, double* worst_sum = nullptr) {
  const auto sys = build_function_splitting(p);
  auto state = init_state(p, cfg);
  Rng engine_rng(cfg.seed);
  Vec x = stack_iterate(state.w, state.alphas);
  double gap = 0.0;
  for (int k = 0; k < steps; ++k) {
    step(state, p, cfg);
    const auto draw = dist.sample(x, engine_rng);
    x = snrvm_step(sys, x, draw.s, draw.w, cfg.gamma);
    gap = std::max(gap, oracle::max_rel_coord(stack_iterate(state.w, state.alphas), x));
    if (worst_sum) {
      const auto [w, alphas] = unstack_iterate(x, p.d());
      *worst_sum = std::max(*worst_sum, alphas.rowwise().sum().norm());
    }
  }
  EXPECT_EQ(state.rng, engine_rng);
  return gap;
}

}  // namespace

TEST(FunctionSplitting, ZeroAtSolution) {
  oracle::TestRng rng(51);
  const auto p = oracle::random_problem(rng, 4, 3, Loss::logistic(), Regularizer<double>::l2(0.1));
  const auto sys = build_function_splitting(p);
  const Vec w = oracle::newton_minimizer(p);
  Mat alphas(3, 4);
  for (Index i = 0; i < 4; ++i) alphas.col(i) = oracle::grad_i(p, i, w);
  EXPECT_LE(sys.residual(stack_iterate(w, alphas)).norm(), 1e-13);
}

TEST(FunctionSplitting, OnePointAssembly) {
  const auto sys = build_function_splitting(half_square(1));
  const Vec x = (Vec(2) << 2, 1).finished();
  EXPECT_EQ(sys.residual(x), (Vec(2) << 1, 1).finished());
  Mat expect(2, 2);
  expect << 0, 1, 1, -1;
  EXPECT_EQ(sys.jacobian_t(x), expect);
}

TEST(FunctionSplitting, JacobianMatchesFiniteDifferences) {
  oracle::TestRng rng(52);
  for (int trial = 0; trial < 10; ++trial) {
    const auto reg = trial % 2 ? Regularizer<double>::l2(0.2)
                               : Regularizer<double>::pseudo_huber(0.2, 0.6);
    const auto p = oracle::random_problem(rng, 3, 3, Loss::logistic(), reg);
    const auto sys = build_function_splitting(p);
    const Vec x = rng.normal_vec(12);
    const Mat fd = oracle::fd_jacobian(sys.residual, x, 1e-5);
    // jacobian_t holds the transpose.
    EXPECT_LE((fd - sys.jacobian_t(x).transpose()).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(FunctionSplitting, DenseCapEnforced) {
  EXPECT_THROW(build_function_splitting(half_square(4), 4), ConfigError);
}

TEST(IterateStacking, RoundTrip) {
  oracle::TestRng rng(53);
  const Vec w = rng.normal_vec(3);
  const Mat alphas = rng.normal_mat(3, 4);
  const Vec x = stack_iterate(w, alphas);
  EXPECT_EQ(x.segment(3 + 3 * 2, 3), alphas.col(2));
  const auto [w2, a2] = unstack_iterate(x, 3);
  EXPECT_EQ(w2, w);
  EXPECT_EQ(a2, alphas);
}

TEST(SnrvmStep, FullSketchSolvesLinearSystem) {
  const auto sys = make_linear_system(diag({1, 2}), (Vec(2) << 1, 2).finished());
  const Vec x = snrvm_step(sys, Vec::Zero(2), Mat::Identity(2, 2), Mat::Identity(2, 2), 1.0);
  EXPECT_LE((x - Vec::Ones(2)).norm(), 1e-15);
}

TEST(SnrvmStep, ZeroSketchIsNoOp) {
  const auto sys = make_linear_system(diag({1, 2}), (Vec(2) << 1, 2).finished());
  const Vec x0 = (Vec(2) << 0.3, -4).finished();
  EXPECT_EQ(snrvm_step(sys, x0, Mat::Zero(2, 1), Mat::Identity(2, 2), 1.0), x0);
}

TEST(SnrvmStep, SatisfiesSketchedNewtonSystemAndStaysInSubspace) {
  oracle::TestRng rng(54);
  const auto p = oracle::random_problem(rng, 3, 2, Loss::logistic(), Regularizer<double>::l2(0.3));
  const auto sys = build_function_splitting(p);
  const auto dist = SketchDistribution::san(p, 0.3);
  Rng draw_rng(3);
  Vec x = rng.normal_vec(8);
  for (int k = 0; k < 30; ++k) {
    const auto draw = dist.sample(x, draw_rng);
    const Vec next = snrvm_step(sys, x, draw.s, draw.w, 1.0);
    const Mat jac = sys.jacobian_t(x).transpose();
    const Vec lhs = draw.s.transpose() * jac * (next - x);
    const Vec rhs = -draw.s.transpose() * sys.residual(x);
    EXPECT_LE((lhs - rhs).norm(), 1e-10 * std::max(1.0, rhs.norm()));

    // next - x in range(W^{-1} grad F S).
    const Mat basis = draw.w.llt().solve(sys.jacobian_t(x) * draw.s);
    const Vec coef = basis.completeOrthogonalDecomposition().solve(next - x);
    EXPECT_LE((basis * coef - (next - x)).norm(), 1e-9 * std::max(1.0, (next - x).norm()));
    x = next;
  }
}

TEST(Surrogate, KnownValues) {
  const auto ident = make_linear_system(Mat::Identity(2, 2), Vec::Zero(2));
  const Vec x = (Vec(2) << 3, 4).finished();
  EXPECT_NEAR(surrogate_fhat(ident, x, x, Mat::Identity(2, 2)), 12.5, 1e-13);

  const auto scaled = make_linear_system(diag({1, 2}), Vec::Zero(2));
  EXPECT_NEAR(surrogate_fhat(scaled, Vec::Ones(2), Vec::Ones(2), diag({4, 1})), 2.5, 1e-13);

  const auto shifted = make_linear_system(diag({1, 2}), (Vec(2) << 1, 2).finished());
  EXPECT_NEAR(surrogate_fhat(shifted, Vec::Ones(2), Vec::Zero(2), diag({4, 1})), 0.0, 1e-15);
}

TEST(Surrogate, EqualsWeightedDistanceOnLinearSystems) {
  oracle::TestRng rng(55);
  for (int k = 0; k < 20; ++k) {
    const Mat a = rng.normal_mat(4, 4) + 4.0 * Mat::Identity(4, 4);
    const Vec x_star = rng.normal_vec(4);
    const auto sys = make_linear_system(a, a * x_star);
    const Mat b = rng.normal_mat(4, 4);
    const Mat w = b * b.transpose() + Mat::Identity(4, 4);
    const Vec x = rng.normal_vec(4);
    const Vec e = x - x_star;
    EXPECT_NEAR(surrogate_fhat(sys, x, rng.normal_vec(4), w), 0.5 * e.dot(w * e),
                1e-9 * std::max(1.0, e.dot(w * e)));
  }
}

TEST(Rho, CoordinateSketchOnDiagonal) {
  const Mat a = diag({1, 2});
  const auto sys = make_linear_system(a, Vec::Zero(2));
  EXPECT_NEAR(rho_at(sys, SketchDistribution::coordinate(a), Vec::Zero(2)), 1.0 / 3.0, 1e-14);
}

TEST(Rho, FullSketchIsOne) {
  oracle::TestRng rng(56);
  const Mat a = rng.normal_mat(3, 3) + 3.0 * Mat::Identity(3, 3);
  const auto sys = make_linear_system(a, Vec::Zero(3));
  EXPECT_NEAR(rho_at(sys, SketchDistribution::full(3), Vec::Zero(3)), 1.0, 1e-12);
}

TEST(Rho, CoordinateSketchIsMinEigOverTrace) {
  oracle::TestRng rng(57);
  const Mat b = rng.normal_mat(5, 5);
  const Mat a = b * b.transpose() + 0.3 * Mat::Identity(5, 5);
  const auto sys = make_linear_system(a, Vec::Zero(5));
  Eigen::SelfAdjointEigenSolver<Mat> eig(a);
  EXPECT_NEAR(rho_at(sys, SketchDistribution::coordinate(a), Vec::Zero(5)),
              eig.eigenvalues()(0) / a.trace(), 1e-10);
}

TEST(Rho, SanDistributionMatchesBruteForceEnumeration) {
  oracle::TestRng rng(58);
  const auto p = oracle::random_problem(rng, 2, 2, Loss::logistic(), Regularizer<double>::l2(0.2));
  const auto sys = build_function_splitting(p);
  const double prob = 1.0 / 3.0;
  const Vec x0 = Vec::Zero(6);
  const double rho = rho_at(sys, SketchDistribution::san(p, prob), x0);
  EXPECT_GT(rho, 0.0);
  EXPECT_LE(rho, 1.0 + 1e-12);

  // Independent assembly: explicit block selectors, dense inverses, and a
  // general eigen solver.
  Mat g = Mat::Zero(6, 6);
  const Vec w = x0.head(2);
  for (Index i = 0; i < 2; ++i) {
    g.block(0, 2 + 2 * i, 2, 2) = oracle::hess_i(p, i, w);
    g.block(2 + 2 * i, 0, 2, 2) = 0.5 * Mat::Identity(2, 2);
    g.block(2 + 2 * i, 2 + 2 * i, 2, 2) = -Mat::Identity(2, 2);
  }
  std::vector<std::pair<double, std::pair<Mat, Mat>>> outcomes;
  for (Index b = 0; b < 3; ++b) {
    Mat s = Mat::Zero(6, 2);
    s.block(2 * b, 0, 2, 2).setIdentity();
    Mat wm = Mat::Identity(6, 6);
    if (b > 0) wm.topLeftCorner(2, 2) = oracle::hess_i(p, b - 1, w);
    outcomes.push_back({b == 0 ? prob : (1 - prob) / 2, {s, wm}});
  }
  Mat h = Mat::Zero(6, 6);
  for (const auto& [pr, sw] : outcomes) {
    const Mat& s = sw.first;
    const Mat winv = sw.second.inverse();
    h += pr * s * (s.transpose() * g.transpose() * winv * g * s).inverse() * s.transpose();
  }
  double expect = std::numeric_limits<double>::infinity();
  for (const auto& [pr, sw] : outcomes) {
    Eigen::SelfAdjointEigenSolver<Mat> es(sw.second);
    const Mat root = es.operatorInverseSqrt();
    Eigen::EigenSolver<Mat> ev(root * g * h * g.transpose() * root);
    for (Index i = 0; i < 6; ++i) {
      const double lam = ev.eigenvalues()(i).real();
      if (lam > 1e-9) expect = std::min(expect, lam);
    }
  }
  EXPECT_NEAR(rho, expect, 1e-9);
}

TEST(SketchDistribution, ProperAndCovering) {
  oracle::TestRng rng(59);
  const auto p = oracle::random_problem(rng, 3, 2, Loss::logistic(), Regularizer<double>::l2(0.1));
  const Vec x = rng.normal_vec(8);
  const Mat b = rng.normal_mat(4, 4);
  const Mat spd = b * b.transpose() + Mat::Identity(4, 4);
  const std::vector<SketchDistribution> dists{
      SketchDistribution::san(p, 0.25), SketchDistribution::san(p, 0.25, true),
      SketchDistribution::sana(p), SketchDistribution::full(4), SketchDistribution::coordinate(spd)};
  for (const auto& dist : dists) {
    const Vec at = dist.dim() == 8 ? x : Vec(Vec::Zero(4));
    const auto outcomes = dist.enumerate(at);
    double total = 0.0;
    Mat second = Mat::Zero(dist.dim(), dist.dim());
    for (const auto& o : outcomes) {
      EXPECT_GT(o.probability, 0.0);
      total += o.probability;
      second += o.probability * o.s * o.s.transpose();
      EXPECT_EQ(o.w.llt().info(), Eigen::Success);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Mat>(second).eigenvalues()(0), 0.0);
  }
}

TEST(SketchDistribution, CoordinateSamplingFrequencies) {
  const Mat a = diag({1, 2, 5});
  const auto dist = SketchDistribution::coordinate(a);
  Rng rng(4);
  std::array<int, 3> counts{};
  const int draws = 80000;
  for (int k = 0; k < draws; ++k) ++counts[*dist.sample(Vec::Zero(3), rng).index];
  EXPECT_NEAR(counts[0] / double(draws), 0.125, 0.01);
  EXPECT_NEAR(counts[1] / double(draws), 0.25, 0.01);
  EXPECT_NEAR(counts[2] / double(draws), 0.625, 0.01);
}

TEST(SketchDistribution, RejectsNonSpd) {
  EXPECT_THROW(SketchDistribution::coordinate(diag({1, -1})), ConfigError);
  EXPECT_THROW(SketchDistribution::san(half_square(2), 1.0), ConfigError);
}

TEST(OracleEquivalence, SanTwoPointToy) {
  const auto p = make_problem((Mat(2, 2) << 1, -0.5, 0.3, 2).finished(),
                              (Vec(2) << 1, -1).finished(), Loss::logistic(),
                              Regularizer<double>::l2(0.5));
  SolverConfig cfg;
  cfg.kind = SolverKind::san;
  cfg.seed = 12;
  EXPECT_LE(replay_gap(p, cfg, SketchDistribution::san(p, cfg.probability(2)), 100), 1e-10);
}

TEST(OracleEquivalence, SanRandomProblems) {
  oracle::TestRng rng(60);
  for (int trial = 0; trial < 5; ++trial) {
    const Index n = rng.integer(2, 6), d = rng.integer(1, 4);
    const auto reg = trial % 2 ? Regularizer<double>::l2(0.1)
                               : Regularizer<double>::pseudo_huber(0.1, 0.8);
    const auto p = oracle::random_problem(rng, n, d, Loss::logistic(), reg, 0.8);
    SolverConfig cfg;
    cfg.kind = SolverKind::san;
    cfg.seed = 100 + trial;
    cfg.gamma = trial == 0 ? 0.6 : 1.0;
    cfg.p = 0.3;
    EXPECT_LE(replay_gap(p, cfg, SketchDistribution::san(p, 0.3), 150), 1e-8) << trial;
  }
}

TEST(OracleEquivalence, SanaRandomProblems) {
  oracle::TestRng rng(61);
  for (int trial = 0; trial < 5; ++trial) {
    const Index n = rng.integer(2, 6), d = rng.integer(1, 4);
    const auto p = oracle::random_problem(rng, n, d, Loss::logistic(), Regularizer<double>::l2(0.1), 0.8);
    SolverConfig cfg;
    cfg.kind = SolverKind::sana;
    cfg.seed = 200 + trial;
    cfg.gamma = trial == 0 ? 0.7 : 1.0;
    double worst_sum = 0.0;
    EXPECT_LE(replay_gap(p, cfg, SketchDistribution::sana(p), 150, &worst_sum), 1e-8) << trial;
    EXPECT_LE(worst_sum, 1e-10);
  }
}

TEST(OracleEquivalence, SanIdWithIdentityMetric) {
  oracle::TestRng rng(62);
  for (int trial = 0; trial < 5; ++trial) {
    const auto p = oracle::random_problem(rng, 3, 3, Loss::logistic(), Regularizer<double>::l2(0.2));
    SolverConfig cfg;
    cfg.kind = SolverKind::san_id;
    cfg.seed = 300 + trial;
    cfg.p = 0.25;
    cfg.gamma = trial == 0 ? 0.5 : 1.0;
    EXPECT_LE(replay_gap(p, cfg, SketchDistribution::san(p, 0.25, true), 100), 1e-8) << trial;
  }
}

TEST(Contraction, CoordinateDescentOnDiagonal) {
  const Mat a = diag({1, 2});
  const auto sys = make_linear_system(a, a * Vec::Ones(2));
  const auto r = contraction_experiment(sys, SketchDistribution::coordinate(a), Vec::Zero(2), 20,
                                        2000, 7);
  EXPECT_NEAR(r.rho, 1.0 / 3.0, 1e-14);
  EXPECT_LE(r.empirical_rate, 2.0 / 3.0 + 0.05);
  EXPECT_LE(r.max_fhat_ratio, 1.02);
  for (std::size_t k = 0; k < r.mean_error.size(); ++k)
    EXPECT_NEAR(r.mean_fhat[k], 0.5 * r.mean_error[k], 1e-12 * std::max(1.0, r.mean_error[k]));
}

TEST(Contraction, IdentityDecaysAtOneMinusInverseDimension) {
  const Index dim = 4;
  const auto sys = make_linear_system(Mat::Identity(dim, dim), Vec::Ones(dim));
  const auto r = contraction_experiment(sys, SketchDistribution::coordinate(Mat::Identity(dim, dim)),
                                        Vec::Zero(dim), 12, 4000, 8);
  EXPECT_NEAR(r.rho, 0.25, 1e-14);
  EXPECT_NEAR(r.empirical_rate, 0.75, 0.03);
}

TEST(Contraction, ZeroStepFreezes) {
  const Mat a = diag({1, 2});
  const auto sys = make_linear_system(a, a * Vec::Ones(2));
  const auto r = contraction_experiment(sys, SketchDistribution::coordinate(a), Vec::Zero(2), 10,
                                        50, 9, 0.0);
  EXPECT_DOUBLE_EQ(r.empirical_rate, 1.0);
  EXPECT_DOUBLE_EQ(r.max_step_ratio, 1.0);
}

TEST(Contraction, RejectsVariableMetricAndNonlinearSystems) {
  const auto p = half_square(2);
  const auto nonlinear = build_function_splitting(p);
  const auto linear = make_linear_system(Mat::Identity(3, 3), Vec::Ones(3));
  EXPECT_THROW(contraction_experiment(nonlinear, SketchDistribution::full(3), Vec::Zero(3), 5, 5, 0),
               ConfigError);
  EXPECT_THROW(contraction_experiment(linear, SketchDistribution::san(p, 0.5), Vec::Zero(3), 5, 5, 0),
               ConfigError);
}
