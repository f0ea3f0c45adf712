#include "kamrev2/series.hpp"

#include "support/generators.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace kamrev2::series;
using kamrev2::testing::Gen;
using Eigen::VectorXd;

namespace {

VectorXd scalar(double c) { return VectorXd::Constant(1, c); }

}  // namespace

TEST(Poly, ProductOfBinomials) {
  const Poly x = Poly::variable(2, 0), y = Poly::variable(2, 1);
  const Poly p = (x + y) * (x + y.scaled(-1.0));  // x^2 - y^2
  EXPECT_EQ(p.terms().size(), 2u);
  EXPECT_EQ(p.terms().at({2, 0}), 1.0);
  EXPECT_EQ(p.terms().at({0, 2}), -1.0);
}

TEST(Poly, PowerAndFilter) {
  const Poly q = (Poly::variable(1, 0) + Poly::constant(1, 1.0)).pow(3);
  EXPECT_EQ(q.terms().at({1}), 3.0);
  const Poly low = q.filtered([](const std::vector<int>& e) { return e[0] <= 1; });
  EXPECT_EQ(low.terms().size(), 2u);
}

TEST(FourierTaylorField, NegatedModesAreCanonical) {
  FourierTaylorField f(1, 2, VarLayout{1, 0, 1});
  f.add({-1, 1}, Basis::Sin, {0, 0, 0}, scalar(2.0));
  ASSERT_EQ(f.terms().size(), 1u);
  EXPECT_EQ(f.terms()[0].k, (std::vector<int>{1, -1}));
  EXPECT_EQ(f.terms()[0].c(0), -2.0);
  f.add({1, -1}, Basis::Sin, {0, 0, 0}, scalar(2.0));
  EXPECT_TRUE(f.empty());
}

TEST(FourierTaylorField, EvaluateMatchesClosedForm) {
  const VarLayout L{1, 0, 1};  // vars (y, sigma, mu)
  FourierTaylorField f(1, 1, L);
  f.add({1}, Basis::Cos, {1, 0, 0}, scalar(0.5));
  f.add({0}, Basis::Cos, {0, 1, 1}, scalar(3.0));
  VectorXd angles(1), vars(3);
  angles << 0.4;
  vars << 2.0, -1.0, 0.25;
  EXPECT_NEAR(f.evaluate(angles, vars)(0), 0.5 * std::cos(0.4) * 2.0 + 3.0 * -1.0 * 0.25, 1e-15);
}

TEST(FourierTaylorField, DerivativeIsExact) {
  Gen gen(5);
  const VarLayout L{1, 1, 1};
  FourierTaylorField f(2, 2, L);
  for (int i = 0; i < 12; ++i) {
    std::vector<int> d(static_cast<std::size_t>(L.nvars()));
    for (auto& e : d) e = gen.integer(0, 2);
    f.add({gen.integer(0, 2), gen.integer(-2, 2)}, gen.integer(0, 1) ? Basis::Cos : Basis::Sin, d,
          gen.vector(2));
  }
  const VectorXd angles = gen.vector(2, 0.0, 6.0);
  VectorXd vars = gen.vector(L.nvars());
  for (int v = 0; v < L.nvars(); ++v) {
    const double h = 1e-5;
    VectorXd vp = vars, vm = vars;
    vp(v) += h;
    vm(v) -= h;
    const VectorXd fd = (f.evaluate(angles, vp) - f.evaluate(angles, vm)) / (2 * h);
    EXPECT_LT((f.derivative(v).evaluate(angles, vars) - fd).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(FourierTaylorField, ReflectionNegatesSinTerms) {
  FourierTaylorField f(1, 1, VarLayout{1, 0, 1});
  f.add({1}, Basis::Sin, {0, 0, 0}, scalar(1.0));
  f.add({2}, Basis::Cos, {0, 0, 0}, scalar(1.0));
  const auto r = f.reflect_angles();
  VectorXd a(1), v = VectorXd::Zero(3);
  a << 0.7;
  VectorXd am = -a;
  EXPECT_NEAR(r.evaluate(a, v)(0), f.evaluate(am, v)(0), 1e-15);
}

TEST(FourierTaylorField, SubstitutionComposes) {
  // f = y^2 with y -> y + sigma.
  const VarLayout L{1, 0, 1};
  FourierTaylorField f(1, 1, L);
  f.add({0}, Basis::Cos, {2, 0, 0}, scalar(1.0));
  std::vector<Poly> subs{Poly::variable(3, 0) + Poly::variable(3, 1), Poly::variable(3, 1),
                         Poly::variable(3, 2)};
  const auto g = f.substitute(subs);
  VectorXd a = VectorXd::Zero(1), v(3);
  v << 0.3, 0.5, 0.0;
  EXPECT_NEAR(g.evaluate(a, v)(0), 0.64, 1e-15);
}

TEST(FourierTaylorField, AlgebraAndComparison) {
  FourierTaylorField f(2, 1, VarLayout{1, 0, 1});
  VectorXd c(2);
  c << 1.0, -2.0;
  f.add({1}, Basis::Cos, {0, 0, 0}, c);
  Eigen::MatrixXd A(1, 2);
  A << 3.0, 1.0;
  const auto g = f.left_multiply(A);
  EXPECT_EQ(g.target_dim(), 1);
  EXPECT_EQ(g.terms()[0].c(0), 1.0);
  EXPECT_EQ(f.plus(f.scaled(-1.0)).terms().size(), 0u);
  EXPECT_EQ(f.max_coefficient_difference(f.scaled(2.0)), 2.0);
  EXPECT_TRUE(f == f.scaled(1.0));
  EXPECT_EQ(f.max_mode_l1(), 1);
  EXPECT_TRUE(f.depends_on_angles());
  EXPECT_EQ(f.coefficient_norm(), 2.0);
}
