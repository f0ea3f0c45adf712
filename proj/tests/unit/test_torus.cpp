#include "kamrev2/errors.hpp"
#include "kamrev2/torus.hpp"

#include "support/problems.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace kamrev2;
using namespace kamrev2::torus;
using kamrev2::testing::Gen;
using kamrev2::testing::make_problem;
using kamrev2::testing::mode_index;
using kamrev2::testing::Problem;
using series::Basis;
using series::FourierTaylorField;
using series::VarLayout;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::InvalidArgument;
}

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

FourierTaylorField angle_field(int n_angles) {
  return FourierTaylorField(1, n_angles, VarLayout{1, 0, 1});
}

// Monodromy of z' = (Lambda + eps cos(Omega t) E) z over one forcing period by classical RK4.
Matrix monodromy(const Matrix& Lambda, const Matrix& E, double eps, double Omega, int steps) {
  const double T = 2.0 * M_PI / Omega, h = T / steps;
  auto A = [&](double t) { return Matrix(Lambda + eps * std::cos(Omega * t) * E); };
  Matrix Z = Matrix::Identity(Lambda.rows(), Lambda.cols());
  for (int i = 0; i < steps; ++i) {
    const double t = i * h;
    const Matrix k1 = A(t) * Z;
    const Matrix k2 = A(t + h / 2) * (Z + h / 2 * k1);
    const Matrix k3 = A(t + h / 2) * (Z + h / 2 * k2);
    const Matrix k4 = A(t + h) * (Z + h * k3);
    Z += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return Z;
}

}  // namespace

TEST(ModeBox, CountAndCanonicalForm) {
  const auto modes = mode_box(2, 3);
  EXPECT_EQ(modes.size(), static_cast<std::size_t>((7 * 7 - 1) / 2 + 1));
  EXPECT_EQ(modes[0], (std::vector<int>{0, 0}));
  for (std::size_t i = 1; i < modes.size(); ++i) {
    const auto& k = modes[i];
    const int first = k[0] != 0 ? k[0] : k[1];
    EXPECT_GT(first, 0);
  }
}

TEST(FourierItem, TrigOverloadsAgreeAndDifferentiate) {
  Gen gen(40);
  const auto modes = mode_box(2, 2);
  FourierItem item;
  item.rows = 2;
  item.cols = 1;
  item.cos = gen.matrix(static_cast<int>(modes.size()), 2);
  item.sin = gen.matrix(static_cast<int>(modes.size()), 2);
  const Vector theta = gen.vector(2, 0, 6);
  EXPECT_LT((item.value(modes, theta) - item.value(mode_trig(modes, theta))).cwiseAbs().maxCoeff(), 1e-14);
  for (int j = 0; j < 2; ++j) {
    const double h = 1e-6;
    Vector tp = theta, tm = theta;
    tp(j) += h;
    tm(j) -= h;
    const Matrix fd = (item.value(modes, tp) - item.value(modes, tm)) / (2 * h);
    EXPECT_LT((item.derivative(modes, theta, j) - fd).cwiseAbs().maxCoeff(), 1e-7);
  }
  EXPECT_EQ(item.mean()(0, 0), item.cos(0, 0));
}

TEST(CohomologicalSolve, CosineForcing) {
  auto rhs = angle_field(1);
  rhs.add({1}, Basis::Cos, {0, 0, 0}, Vector::Constant(1, 1.0));
  const auto phi = cohomological_solve(rhs, vec({1.0}), dioph::DiophParams{1.0, 0.1, 1});
  ASSERT_EQ(phi.terms().size(), 1u);
  EXPECT_EQ(phi.terms()[0].basis, Basis::Sin);
  EXPECT_NEAR(phi.terms()[0].c(0), 1.0, 1e-15);
}

TEST(CohomologicalSolve, ZeroForcing) {
  const auto phi = cohomological_solve(angle_field(1), vec({1.0}), dioph::DiophParams{1.0, 0.1, 1});
  EXPECT_TRUE(phi.empty());
}

TEST(CohomologicalSolve, ExactResonance) {
  auto rhs = angle_field(2);
  rhs.add({1, -1}, Basis::Cos, {0, 0, 0}, Vector::Constant(1, 1.0));
  try {
    cohomological_solve(rhs, vec({1.0, 1.0}), dioph::DiophParams{1.0, 0.1, 1});
    FAIL() << "no error raised";
  } catch (const SmallDivisorError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SmallDivisorBreach);
    EXPECT_EQ(e.mode(), (std::vector<int>{1, -1}));
    EXPECT_EQ(e.divisor(), 0.0);
  }
}

TEST(CohomologicalSolve, NonzeroMean) {
  auto rhs = angle_field(1);
  rhs.add({0}, Basis::Cos, {0, 0, 0}, Vector::Constant(1, 1.0));
  EXPECT_EQ(kind_of([&] { cohomological_solve(rhs, vec({1.0}), dioph::DiophParams{1.0, 0.1, 1}); }),
            ErrorKind::NonzeroMean);
}

TEST(CohomologicalSolve, RandomFieldsSatisfyEquation) {
  Gen gen(41);
  const Vector freq = vec({1.0, (std::sqrt(5.0) - 1) / 2});
  for (int trial = 0; trial < 10; ++trial) {
    auto rhs = angle_field(2);
    for (int i = 0; i < 6; ++i) {
      const std::vector<int> k{gen.integer(0, 3), gen.integer(-3, 3)};
      if (k[0] == 0 && k[1] == 0) continue;
      rhs.add(k, gen.integer(0, 1) ? Basis::Cos : Basis::Sin, {0, 0, 0}, gen.vector(1));
    }
    const auto phi = cohomological_solve(rhs, freq, dioph::DiophParams{1.0, 1e-3, 1});
    const Vector theta = gen.vector(2, 0, 6), vars = Vector::Zero(3);
    const double h = 1e-6;
    const double lhs = (phi.evaluate(theta + h * freq, vars)(0) - phi.evaluate(theta - h * freq, vars)(0)) / (2 * h);
    EXPECT_NEAR(lhs, rhs.evaluate(theta, vars)(0), 1e-7);
  }
}

TEST(SolveTorus, ZeroPerturbationIsIdentity) {
  const Problem pb = make_problem("zero_perturbation");
  const auto t = kamrev2::testing::solve(pb);
  EXPECT_EQ(t.iterations, 0);
  EXPECT_EQ(t.u.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(t.v.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(t.a.cos.cwiseAbs().maxCoeff() + t.a.sin.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(t.B0.cos.cwiseAbs().maxCoeff() + t.B0.sin.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(t.omega_prime, pb.target.omega0);
}

TEST(SolveTorus, ForcedOscillatorClosedForm) {
  const Problem pb = make_problem("forced_oscillator");
  const auto t = kamrev2::testing::solve(pb);
  EXPECT_NEAR(t.v(0), -0.003, 1e-12);
  const int k1 = mode_index(t, {1});
  ASSERT_GE(k1, 0);
  EXPECT_NEAR(t.B0.sin(k1, 0), 0.01, 1e-12);
  EXPECT_NEAR(t.B0.cos(k1, 0), 0.0, 1e-15);
  for (std::size_t i = 0; i < t.modes.size(); ++i) {
    if (static_cast<int>(i) == k1) continue;
    EXPECT_LT(std::abs(t.B0.sin(static_cast<Eigen::Index>(i), 0)), 1e-14);
  }
}

TEST(SolveTorus, RotationMatchesExactConjugacy) {
  const Problem pb = make_problem("rotation");
  const auto t = kamrev2::testing::solve(pb);
  const kamrev2::testing::RotationOracle oracle{1e-3, pb.target.omega0(0) + pb.spec.omega(0)};
  EXPECT_NEAR(t.u(0), oracle.u(), 1e-12);
  Gen gen(42);
  for (int i = 0; i < 20; ++i) {
    const Vector theta = gen.vector(2, 0, 2 * M_PI);
    EXPECT_NEAR(t.a.value(t.modes, theta)(0, 0), oracle.a(theta(0) + theta(1)), 1e-12);
  }
}

TEST(SolveTorus, FloquetPreservesFloquetMatrix) {
  const Problem pb = make_problem("floquet");
  const auto t = kamrev2::testing::solve(pb);
  EXPECT_TRUE(t.M_prime == pb.unf.evaluate(pb.target.mu0, pb.target.chi0));
  EXPECT_LT(floquet_residual(pb.spec, t, pb.unf).reducibility, 1e-9);
  EXPECT_LT(symmetry_residuals(t, pb.spec.R).max(), 1e-13);
}

TEST(SolveTorus, SecondOrderOracleMatchesMonodromy) {
  Matrix M(2, 2), E(2, 2);
  M << 0, 1, 1, 0;
  E << 0, 1, -1, 0;
  const double eps = 1e-2;
  const double predicted = 1.0 + eps * eps * kamrev2::testing::second_order_shift(M, E, 1.0, 0).real();
  const Eigen::VectorXcd mu = monodromy(M, E, eps, 1.0, 20000).eigenvalues();
  const double measured = std::log(std::max(std::abs(mu(0)), std::abs(mu(1)))) / (2 * M_PI);
  EXPECT_NEAR(predicted, 1.0 - eps * eps / 5.0, 1e-15);
  EXPECT_NEAR(measured, predicted, 1e-7);
}

TEST(SolveTorus, CoupledModelAfterElimination) {
  const Problem pb = make_problem("coupled");
  const auto t = kamrev2::testing::solve(pb);
  EXPECT_LT(floquet_residual(pb.spec, t, pb.unf).max(), 1e-10);
}

TEST(SolveTorus, GateExceeded) {
  const Problem pb = make_problem("forced_oscillator");
  SolverConfig cfg;
  cfg.perturbation_gate = 1e-3;
  EXPECT_EQ(kind_of([&] { kamrev2::testing::solve(pb, cfg); }), ErrorKind::GateExceeded);
}

TEST(SolveTorus, ResonantTargetBreachesDivisorGuard) {
  Problem pb = make_problem("rotation");
  pb.target.omega0 = vec({2.0 * pb.spec.omega(0)});  // <(omega0, Omega), (1, -2)> = 0
  EXPECT_EQ(kind_of([&] { kamrev2::testing::solve(pb); }), ErrorKind::SmallDivisorBreach);
}

TEST(SolveTorus, ZzCouplingMustBeEliminated) {
  Problem pb = make_problem("floquet");
  const auto raw = kamrev2::testing::load_model("coupled");
  EXPECT_EQ(kind_of([&] { solve_torus(raw, pb.target, pb.unf, kamrev2::testing::solver_guard()); }),
            ErrorKind::InvalidArgument);
}

TEST(SolveTorus, EveryIterateIsSymmetric) {
  for (const char* name : {"rotation", "floquet", "coupled"}) {
    SCOPED_TRACE(name);
    const Problem pb = make_problem(name);
    const auto full = kamrev2::testing::solve(pb);
    for (std::size_t j = 1; j < full.residual_history.size(); ++j) {
      SolverConfig cfg;
      cfg.newton_tol = full.residual_history[j] * (1.0 + 1e-9);
      const auto t = kamrev2::testing::solve(pb, cfg);
      EXPECT_EQ(t.iterations, static_cast<int>(j));
      EXPECT_LT(symmetry_residuals(t, pb.spec.R).max(), 1e-13);
    }
  }
}

TEST(SolveTorus, FrequencyAndFloquetDataAreExact) {
  for (const char* name : {"forced_oscillator", "rotation", "floquet", "coupled"}) {
    SCOPED_TRACE(name);
    const Problem pb = make_problem(name);
    const auto t = kamrev2::testing::solve(pb);
    EXPECT_TRUE(t.omega_prime == pb.target.omega0);
    EXPECT_TRUE(t.M_prime == pb.unf.evaluate(pb.target.mu0, pb.target.chi0));
    EXPECT_EQ(t.theta_shift.cwiseAbs().sum(), 0.0);
    EXPECT_EQ(t.X_shift.cwiseAbs().sum(), 0.0);
    if (t.dims.n > 0) {
      EXPECT_LT(t.a.mean().cwiseAbs().maxCoeff(), 1e-15);
    }
  }
}

TEST(SolveTorus, QuadraticConvergence) {
  for (const char* name : {"rotation", "floquet", "coupled"}) {
    SCOPED_TRACE(name);
    const auto t = kamrev2::testing::solve(make_problem(name));
    const auto ord = convergence_order(t.residual_history);
    EXPECT_GE(ord.order, 1.8);
  }
}

TEST(SolveTorus, HalvingPerturbationHalvesFirstOrderData) {
  struct Case {
    const char* model;
    double eps;
  };
  for (const Case c : {Case{"rotation", 1e-3}, Case{"floquet", 1e-3}, Case{"forced_oscillator", 1e-2}}) {
    SCOPED_TRACE(c.model);
    Problem full = make_problem(c.model);
    Problem half = full;
    half.spec = full.spec.with_perturbation_scaled(0.5);
    const auto tf = kamrev2::testing::solve(full);
    const auto th = kamrev2::testing::solve(half);
    const double tol = 10.0 * c.eps * c.eps;
    auto cmp = [&](const Matrix& a, const Matrix& b) {
      if (a.size() == 0) return;
      EXPECT_LT((b - 0.5 * a).cwiseAbs().maxCoeff(), tol);
    };
    cmp(tf.u, th.u);
    cmp(tf.v, th.v);
    cmp(tf.w, th.w);
    cmp(tf.W, th.W);
    cmp(tf.a.sin, th.a.sin);
    cmp(tf.B0.sin, th.B0.sin);
    cmp(tf.B1.cos, th.B1.cos);
    cmp(tf.B1.sin, th.B1.sin);
  }
}

TEST(FloquetResidual, IdentityTransformShowsPerturbation) {
  const Problem pb = make_problem("forced_oscillator");
  const auto t = identity_transform(pb.spec, pb.target, pb.unf, 4);
  const auto res = floquet_residual(pb.spec, t, pb.unf);
  EXPECT_NEAR(res.torus, 0.013, 1e-4);  // sup of eps (c + cos X) on the offset grid
  EXPECT_GT(res.drift, 0.002);
}

TEST(FloquetResidual, HandBuiltOscillatorTransform) {
  const Problem pb = make_problem("forced_oscillator");
  auto t = identity_transform(pb.spec, pb.target, pb.unf, 4);
  t.B0.sin(mode_index(t, {1}), 0) = 0.01;
  t.v(0) = -0.003;
  EXPECT_LT(floquet_residual(pb.spec, t, pb.unf).max(), 1e-13);
}

TEST(FloquetResidual, ConvergedSolvesAreTight) {
  for (const char* name : {"forced_oscillator", "rotation", "floquet", "coupled"}) {
    SCOPED_TRACE(name);
    const Problem pb = make_problem(name);
    const auto t = kamrev2::testing::solve(pb);
    const auto res = floquet_residual(pb.spec, t, pb.unf);
    EXPECT_LT(res.max(), 10 * SolverConfig{}.newton_tol);
    EXPECT_LT(res.x_shift, 1e-13);
  }
}

TEST(VerifyByIntegration, ForcedOscillatorStaysOnTorus) {
  const Problem pb = make_problem("forced_oscillator");
  const auto t = kamrev2::testing::solve(pb);
  EXPECT_LT(verify_by_integration(pb.spec, t, pb.unf, 100.0).max_distance, 1e-9);
}

TEST(VerifyByIntegration, ZeroPerturbation) {
  const Problem pb = make_problem("zero_perturbation");
  const auto t = kamrev2::testing::solve(pb);
  EXPECT_LT(verify_by_integration(pb.spec, t, pb.unf, 20.0).max_distance, 1e-10);
}

TEST(VerifyByIntegration, HyperbolicGrowthBound) {
  const Problem pb = make_problem("floquet");
  const auto t = kamrev2::testing::solve(pb);
  const auto rep = verify_by_integration(pb.spec, t, pb.unf, 5.0);
  EXPECT_NEAR(rep.max_real_part, 1.0, 1e-12);
  EXPECT_NEAR(rep.bound, std::exp(5.0) * 1e-10, 1e-16);
  EXPECT_LT(rep.max_distance, rep.bound);
}

TEST(ConvergenceOrder, SyntheticHistories) {
  const std::vector<double> quad{1e-2, 1e-4, 1e-8};
  EXPECT_NEAR(convergence_order(quad, 1e-1).order, 2.0, 1e-12);
  EXPECT_TRUE(std::isinf(convergence_order({1e-2, 1e-17}).order));
  EXPECT_EQ(convergence_order({1.0, 0.5}).order, 0.0);
}

TEST(TransformItems, BlocksAndEmbedding) {
  const Problem pb = make_problem("floquet");
  const auto t = kamrev2::testing::solve(pb);
  EXPECT_EQ(t.item("b1").rows, 1);
  EXPECT_EQ(t.item("c2").rows, 2);
  EXPECT_EQ(t.item("c1").cols, 1);
  EXPECT_EQ(t.item("b2").cols, 2);
  const Vector theta = vec({0.3});
  const auto [x, Y] = t.embed(theta, Vector::Zero(3));
  EXPECT_EQ(x.size(), 0);
  EXPECT_LT((Y - t.B0.value(t.modes, theta).col(0)).cwiseAbs().maxCoeff(), 1e-15);
}
