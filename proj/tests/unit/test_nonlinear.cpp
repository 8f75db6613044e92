#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "deflact/errors.hpp"
#include "deflact/nonlinear.hpp"
#include "deflact/problems.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace deflact;
using fixtures::vec;

namespace {

SolveConfig run_for(std::size_t iters) {
  SolveConfig cfg;
  cfg.max_iters = iters;
  cfg.stop_at_discrepancy = false;
  return cfg;
}

NonlinearMap cube_map() {
  return NonlinearMap(
      1, 1, [](const Vector& x) { return Vector(x.array().cube()); },
      [](const Vector& x, const Vector& v) { return Vector(3.0 * x.array().square() * v.array()); },
      [](const Vector& x, const Vector& w) { return Vector(3.0 * x.array().square() * w.array()); }, "cube");
}

void expect_same_trace(const SolveResult& a, const SolveResult& b, double tol) {
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t k = 0; k < a.trace.size(); ++k) {
    const double scale = std::max(1.0, b.trace[k].residual_norm);
    EXPECT_LE(std::abs(a.trace[k].residual_norm - b.trace[k].residual_norm), tol * scale) << "row " << k;
    // a step length is a ratio of residual-sized quantities, so rounding in
    // the residual is amplified by r_0 / r_k
    const double amplification = b.trace[0].residual_norm / std::max(b.trace[k].residual_norm, 1e-300);
    EXPECT_LE(std::abs(a.trace[k].alpha - b.trace[k].alpha), tol * std::max(1.0, b.trace[k].alpha) * std::max(1.0, amplification))
        << "row " << k;
  }
  EXPECT_LE((a.x - b.x).norm(), tol * std::max(1.0, b.x.norm()));
}

// ||(F(x + h v) - F(x)) / h - F'(x) v|| for decreasing h; must shrink linearly.
void expect_fd_consistent(const NonlinearMap& f, const Vector& x, const Vector& v) {
  const Vector d = f.derivative(x, v);
  double prev = 0.0;
  for (double h : {1e-2, 1e-3, 1e-4}) {
    const double err = ((f.apply(x + h * v) - f.apply(x)) / h - d).norm();
    if (prev > 1e-9) EXPECT_LE(err, prev * 0.2);
    EXPECT_LE(err, 10.0 * h * std::max(1.0, v.squaredNorm()) * std::max(1.0, x.norm()));
    prev = err;
  }
}

}  // namespace

TEST(NonlinearMapBasics, DimensionsAndLinearize) {
  const NonlinearMap f = wrap_linear(fixtures::diag2());
  EXPECT_EQ(f.apply(vec({1, 1})), vec({2, 1}));
  EXPECT_EQ(f.linearize(vec({5, 5})).apply(vec({1, 1})), vec({2, 1}));
  EXPECT_THROW(f.apply(vec({1})), DimensionError);
  EXPECT_THROW(f.derivative_adjoint(vec({1, 1}), vec({1})), DimensionError);
}

TEST(NonlinearMapBasics, ToyDerivativeAndAdjoint) {
  const TestProblem p = make_nonlinear_toy(6, 0.05, 0.0, 3);
  ASSERT_TRUE(p.nl_op.has_value());
  std::mt19937_64 rng(4);
  for (int probe = 0; probe < 20; ++probe) {
    const Vector x = oracle::random_vector(6, rng);
    const Vector v = oracle::random_vector(6, rng);
    const Vector w = oracle::random_vector(6, rng);
    expect_fd_consistent(*p.nl_op, x, v);
    EXPECT_NEAR(p.nl_op->derivative(x, v).dot(w), v.dot(p.nl_op->derivative_adjoint(x, w)),
                1e-10 * v.norm() * w.norm() * 10);
  }
  expect_fd_consistent(*p.nl_op, p.x_true, Vector::Ones(6));
}

TEST(GradientDescent, LinearSpecializationMatchesSteepestDescent) {
  const SolveResult nl = nl_gradient_descent(wrap_linear(fixtures::diag2()), vec({2, 1}), Vector::Zero(2),
                                             StepRule::steepest(), run_for(20));
  const SolveResult lin = steepest_descent(fixtures::diag2(), vec({2, 1}), Vector::Zero(2), run_for(20));
  expect_same_trace(nl, lin, 1e-12);
}

TEST(GradientDescent, FixedStepMatchesLandweber) {
  const LinearMap op = dense_operator(fixtures::random_dense(5, 5, 5));
  std::mt19937_64 rng(6);
  const Vector y = oracle::random_vector(5, rng);
  SolveConfig cfg = run_for(40);
  cfg.beta = 0.5 / std::pow(norm_estimate(op), 2);
  const SolveResult nl = nl_gradient_descent(wrap_linear(op), y, Vector::Zero(5), StepRule::fixed(cfg.beta), cfg);
  const SolveResult lin = landweber(op, y, Vector::Zero(5), cfg);
  expect_same_trace(nl, lin, 1e-10);
}

TEST(GradientDescent, ScalarCubeConvergesToTwo) {
  SolveConfig cfg;
  cfg.max_iters = 200;
  cfg.delta = 1e-12;
  const SolveResult res = nl_gradient_descent(cube_map(), vec({8}), vec({1.5}), StepRule::steepest(), cfg);
  EXPECT_NEAR(res.x[0], 2.0, 1e-6);
}

TEST(GradientDescent, FixedPointStopsImmediately) {
  SolveConfig cfg;
  cfg.delta = 1e-8;
  const SolveResult res = nl_gradient_descent(cube_map(), vec({8}), vec({2}), StepRule::steepest(), cfg);
  EXPECT_EQ(res.trace.size(), 1u);
  EXPECT_EQ(res.stop_reason, StopReason::discrepancy);
}

TEST(GradientDescent, RejectsNonPositiveFixedStep) {
  EXPECT_THROW(nl_gradient_descent(cube_map(), vec({8}), vec({1}), StepRule::fixed(0.0), run_for(3)), ConfigError);
}

TEST(GradientDescent, DivergenceReportsLastFiniteIterate) {
  try {
    nl_gradient_descent(cube_map(), vec({8}), vec({3}), StepRule::fixed(1.0), run_for(100));
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_TRUE(e.last_finite().allFinite());
  }
}

TEST(GradientDescent, ToyConvergesAtZeroNoise) {
  const TestProblem p = make_nonlinear_toy(8, 1e-2, 0.0, 7);
  SolveConfig cfg = run_for(2000);
  const SolveResult res = nl_gradient_descent(*p.nl_op, p.y_delta, Vector::Zero(8), StepRule::steepest(), cfg);
  EXPECT_LE((res.x - p.x_true).norm(), 1e-4);
}

TEST(AugmentedNl, LinearSpecializationMatchesAugmentedLandweber) {
  for (std::uint64_t seed = 10; seed < 14; ++seed) {
    const LinearMap op = dense_operator(fixtures::random_dense(6, 6, seed));
    const KTuple u_raw = fixtures::random_tuple(6, 2, seed + 1);
    const RecycleSpace rs = qr_against(op, u_raw);
    std::mt19937_64 rng(seed);
    const Vector y = oracle::random_vector(6, rng);
    SolveConfig cfg = run_for(60);
    cfg.beta = 0.5 / std::pow(norm_estimate(deflate(op, q_projector(rs))), 2);
    const SolveResult lin = augmented_landweber(op, rs, y, Vector::Zero(6), cfg);
    const SolveResult nl = nl_augmented_landweber(wrap_linear(op), u_raw, y, Vector::Zero(6), cfg.beta, cfg);
    expect_same_trace(nl, lin, 1e-10);
    EXPECT_EQ(nl.trace.back().qr_rank, 2);
  }
}

TEST(AugmentedNl, ExactSpanSolvesAtInitialCorrection) {
  const Matrix a = fixtures::random_dense(4, 4, 20);
  std::mt19937_64 rng(21);
  const Vector x_true = oracle::random_vector(4, rng);
  SolveConfig cfg;
  cfg.delta = 1e-12;
  const SolveResult res = nl_augmented_landweber(wrap_linear(dense_operator(a)), KTuple(Matrix(x_true)),
                                                 a * x_true, Vector::Zero(4), 0.01, cfg);
  EXPECT_EQ(res.trace.size(), 1u);
  EXPECT_LE(res.trace[0].residual_norm, 1e-12 * (a * x_true).norm() * 10);
}

TEST(AugmentedNl, ReachesDiscrepancySoonerThanGradientDescent) {
  const TestProblem p = make_nonlinear_toy(4, 0.01, 1e-3, 22);
  SolveConfig cfg;
  cfg.delta = p.delta;
  cfg.tau = 1.5;
  cfg.max_iters = 20000;
  const double alpha = 0.5 / std::pow(norm_estimate(p.op), 2);
  const SolveResult gd = nl_gradient_descent(*p.nl_op, p.y_delta, Vector::Zero(4), StepRule::fixed(alpha), cfg);
  // recycle the two slowest right singular directions of F'(0)
  Matrix t(4, 4);
  for (Eigen::Index j = 0; j < 4; ++j) t.col(j) = p.op.apply(Vector::Unit(4, j));
  const oracle::EigenPairs eig = oracle::jacobi_eigen(t.transpose() * t);
  const KTuple slow(Matrix(eig.vectors.rightCols(2)));
  const SolveResult aug = nl_augmented_landweber(*p.nl_op, slow, p.y_delta, Vector::Zero(4), alpha, cfg);
  ASSERT_EQ(gd.stop_reason, StopReason::discrepancy);
  ASSERT_EQ(aug.stop_reason, StopReason::discrepancy);
  EXPECT_LT(aug.trace.back().iter, gd.trace.back().iter);
}

TEST(AugmentedNl, RankLossNamesIteration) {
  // F'(x) = diag(x), so the column e2 is annihilated wherever x_2 = 0
  const NonlinearMap f(
      2, 2, [](const Vector& x) { return Vector(0.5 * x.array().square()); },
      [](const Vector& x, const Vector& v) { return Vector(x.array() * v.array()); },
      [](const Vector& x, const Vector& w) { return Vector(x.array() * w.array()); });
  try {
    nl_augmented_landweber(f, KTuple(Matrix::Identity(2, 2)), vec({1, 1}), vec({1, 0}), 0.1, run_for(5));
    FAIL() << "expected RankDeficiencyError";
  } catch (const RankDeficiencyError& e) {
    EXPECT_NE(std::string(e.what()).find("iteration 0"), std::string::npos);
    EXPECT_EQ(e.column(), 1u);
  }
}

TEST(AugmentedNl, PerIterationSpaceInvariants) {
  const TestProblem p = make_nonlinear_toy(6, 0.05, 0.0, 30);
  const KTuple u_raw = fixtures::random_tuple(6, 2, 31);
  SolveConfig cfg = run_for(15);
  std::vector<Vector> iterates;
  cfg.observer = [&](const IterateView& v) { iterates.push_back(v.x); };
  nl_augmented_landweber(*p.nl_op, u_raw, p.y_delta, Vector::Zero(6), 0.2, cfg);
  ASSERT_FALSE(iterates.empty());
  for (const Vector& x : iterates) {
    const LinearMap d = p.nl_op->linearize(x);
    const RecycleSpace rs = qr_against(d, u_raw);
    EXPECT_LE((gram(rs.c(), rs.c()) - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE(consistency_error(rs, d), 1e-8);
    std::mt19937_64 rng(32);
    const Vector v = oracle::random_vector(6, rng), w = oracle::random_vector(6, rng);
    EXPECT_NEAR(d.apply(v).dot(w), v.dot(d.apply_adjoint(w)), 1e-10 * v.norm() * w.norm() * 10);
  }
}

TEST(AugmentedNl, OptionsToggleBehaviour) {
  const TestProblem p = make_nonlinear_toy(5, 0.1, 0.0, 40);
  const KTuple u_raw = fixtures::random_tuple(5, 2, 41);
  const SolveConfig cfg = run_for(10);
  const SolveResult a = nl_augmented_landweber(*p.nl_op, u_raw, p.y_delta, Vector::Zero(5), 0.2, cfg);
  const SolveResult b = nl_augmented_landweber(*p.nl_op, u_raw, p.y_delta, Vector::Zero(5), 0.2, cfg,
                                               NlAugmentedOptions{false, true});
  const SolveResult c = nl_augmented_landweber(*p.nl_op, u_raw, p.y_delta, Vector::Zero(5), 0.2, cfg,
                                               NlAugmentedOptions{true, false});
  EXPECT_NE(a.x, b.x);
  EXPECT_NE(a.x, c.x);
  EXPECT_EQ(a.trace.size(), c.trace.size());
}

TEST(ProjectedNl, ZeroProjectorIsIdentity) {
  const TestProblem p = make_nonlinear_toy(4, 0.1, 0.0, 50);
  const NonlinearMap g = projected_nl_operator(*p.nl_op, [](const Vector& w) { return Vector(Vector::Zero(w.size())); });
  std::mt19937_64 rng(51);
  const Vector x = oracle::random_vector(4, rng), v = oracle::random_vector(4, rng);
  EXPECT_EQ(g.apply(x), p.nl_op->apply(x));
  EXPECT_EQ(g.derivative(x, v), p.nl_op->derivative(x, v));
  EXPECT_EQ(g.derivative_adjoint(x, v), p.nl_op->derivative_adjoint(x, v));
}

TEST(ProjectedNl, ChainRuleAndLinearEquivalence) {
  const TestProblem p = make_nonlinear_toy(5, 0.1, 0.0, 52);
  const RecycleSpace rs = qr_against(p.op, fixtures::random_tuple(5, 2, 53));
  const NonlinearMap g = projected_nl_operator(*p.nl_op, q_projector(rs));
  std::mt19937_64 rng(54);
  const Vector x = oracle::random_vector(5, rng), v = oracle::random_vector(5, rng);
  expect_fd_consistent(g, x, v);

  const LinearMap op = dense_operator(fixtures::random_dense(5, 5, 55));
  const RecycleSpace rl = qr_against(op, fixtures::random_tuple(5, 2, 56));
  const NonlinearMap gl = projected_nl_operator(wrap_linear(op), q_projector(rl));
  const LinearMap b = deflate(op, q_projector(rl));
  EXPECT_LE((gl.apply(x) - b.apply(x)).norm(), 1e-14 * b.apply(x).norm() + 1e-15);
  EXPECT_LE((gl.derivative_adjoint(x, v) - b.apply_adjoint(v)).norm(), 1e-14 * v.norm() * 10);
}
