#include "kamrev2/errors.hpp"
#include "kamrev2/revlin.hpp"

#include "support/generators.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace kamrev2;
using namespace kamrev2::revlin;
using kamrev2::testing::Gen;

namespace {

Matrix mat2(double a, double b, double c, double d) {
  Matrix M(2, 2);
  M << a, b, c, d;
  return M;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::InvalidArgument;
}

InvolutionMatrix canonical() { return check_involution(mat2(1, 0, 0, -1)); }

// Sorted by (real, imag) for multiset comparison.
std::vector<std::complex<double>> sorted(std::vector<std::complex<double>> v) {
  std::sort(v.begin(), v.end(), [](auto a, auto b) {
    if (std::abs(a.real() - b.real()) > 1e-7) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  return v;
}

}  // namespace

TEST(CheckInvolution, DiagonalIsCanonical) {
  const auto R = check_involution(mat2(1, 0, 0, -1));
  EXPECT_EQ(R.p(), 1);
  EXPECT_EQ(R.dim(), 2);
}

TEST(CheckInvolution, SwapHasHalfDimensionOne) {
  EXPECT_EQ(check_involution(mat2(0, 1, 1, 0)).p(), 1);
}

TEST(CheckInvolution, IdentityHasWrongSignature) {
  EXPECT_EQ(kind_of([] { check_involution(mat2(1, 0, 0, 1)); }), ErrorKind::WrongSignature);
}

TEST(CheckInvolution, NonInvolutionRejected) {
  EXPECT_EQ(kind_of([] { check_involution(mat2(2, 0, 0, -1)); }), ErrorKind::NotInvolutive);
}

TEST(CheckInvolution, OddDimensionRejected) {
  EXPECT_EQ(kind_of([] { check_involution(Matrix::Identity(3, 3)); }), ErrorKind::DimensionMismatch);
}

TEST(CheckInvolution, EmptyIsHalfDimensionZero) {
  EXPECT_EQ(check_involution(Matrix(0, 0)).p(), 0);
}

TEST(ReversibilityDefect, AntiDiagonalIsReversible) {
  EXPECT_EQ(reversibility_defect(mat2(0, 1, 1, 0), canonical()), 0.0);
}

TEST(ReversibilityDefect, IdentityGivesTwo) {
  EXPECT_EQ(reversibility_defect(Matrix::Identity(2, 2), canonical()), 2.0);
}

TEST(ReversibilityDefect, ZeroMatrix) {
  EXPECT_EQ(reversibility_defect(Matrix::Zero(2, 2), canonical()), 0.0);
}

TEST(ReversibilityDefect, DimensionMismatch) {
  EXPECT_EQ(kind_of([] { reversibility_defect(Matrix::Zero(3, 3), canonical()); }),
            ErrorKind::DimensionMismatch);
}

TEST(ClassifySpectrum, RealPair) {
  const auto s = classify_spectrum(mat2(0, 1, 1, 0), canonical());
  EXPECT_EQ(s.nu1, 1);
  EXPECT_EQ(s.nu2, 0);
  EXPECT_EQ(s.nu3, 0);
  ASSERT_EQ(s.alpha.size(), 1);
  EXPECT_NEAR(s.alpha(0), 1.0, 1e-14);
  EXPECT_EQ(s.beta.size(), 0);
}

TEST(ClassifySpectrum, ImaginaryPair) {
  const auto s = classify_spectrum(mat2(0, 1, -1, 0), canonical());
  EXPECT_EQ(s.nu1, 0);
  EXPECT_EQ(s.nu2, 1);
  EXPECT_EQ(s.alpha.size(), 0);
  ASSERT_EQ(s.beta.size(), 1);
  EXPECT_NEAR(s.beta(0), 1.0, 1e-14);
}

TEST(ClassifySpectrum, NilpotentIsSingular) {
  EXPECT_EQ(kind_of([] { classify_spectrum(mat2(0, 0, 1, 0), canonical()); }), ErrorKind::SingularMatrix);
}

TEST(ClassifySpectrum, NonReversibleRejected) {
  EXPECT_EQ(kind_of([] { classify_spectrum(Matrix::Identity(2, 2), canonical()); }),
            ErrorKind::NotReversible);
}

TEST(ClassifySpectrum, RepeatedPairsRejected) {
  Matrix R = Matrix::Identity(4, 4);
  R(2, 2) = R(3, 3) = -1;
  Matrix M = Matrix::Zero(4, 4);
  M.topRightCorner(2, 2).setIdentity();
  M.bottomLeftCorner(2, 2).setIdentity();
  EXPECT_EQ(kind_of([&] { classify_spectrum(M, check_involution(R)); }), ErrorKind::MultipleEigenvalues);
}

TEST(ClassifySpectrum, QuadrupleFromComplexBlock) {
  // z2 = A z1 with A a rotation-scaling: eigenvalues of M square to eig(AB).
  Matrix R = Matrix::Identity(4, 4);
  R(2, 2) = R(3, 3) = -1;
  Matrix M = Matrix::Zero(4, 4);
  Matrix A(2, 2);
  A << 1.0, -2.0, 2.0, 1.0;
  M.topRightCorner(2, 2) = A;
  M.bottomLeftCorner(2, 2).setIdentity();
  const auto s = classify_spectrum(M, check_involution(R));
  EXPECT_EQ(s.nu3, 1);
  EXPECT_EQ(s.p(), 2);
  const std::complex<double> lam = std::sqrt(std::complex<double>(1.0, 2.0));
  EXPECT_NEAR(s.alpha(0), std::abs(lam.real()), 1e-12);
  EXPECT_NEAR(s.beta(0), std::abs(lam.imag()), 1e-12);
}

TEST(MatrixPolynomial, EvaluateAndDerivative) {
  MatrixPolynomial P(2, 2, 2);
  P.add_term({0, 0}, mat2(1, 0, 0, 1));
  P.add_term({2, 1}, mat2(0, 3, 0, 0));
  Vector mu(2);
  mu << 0.5, -2.0;
  EXPECT_NEAR(P.evaluate(mu)(0, 1), 3.0 * 0.25 * -2.0, 1e-15);
  EXPECT_NEAR(P.derivative(mu, 0)(0, 1), 3.0 * 2 * 0.5 * -2.0, 1e-15);
  EXPECT_NEAR(P.derivative(mu, 1)(0, 1), 3.0 * 0.25, 1e-15);
  EXPECT_EQ(P.degree(), 3);
}

TEST(BuildUnfolding, RealPairExample) {
  MatrixPolynomial M(2, 2, 1);
  M.add_term({0}, mat2(0, 1, 1, 0));
  M.add_term({1}, mat2(0, 1, 0, 0));
  const auto R = canonical();
  const auto unf = build_unfolding(M, R);
  ASSERT_EQ(unf.S(), 1);
  // The direction is [[0, 1], [0, 0]] up to scale; alpha^2 = (1 + mu + c chi).
  const Matrix& V = unf.directions[0];
  EXPECT_EQ(V(0, 0), 0.0);
  EXPECT_EQ(V(1, 1), 0.0);
  EXPECT_EQ(reversibility_defect(V, R), 0.0);
  const Matrix J = spectral_jacobian(unf, R, Vector::Zero(1), Vector::Zero(1));
  EXPECT_NEAR(J(0, 0), 0.5, 1e-9);
  EXPECT_NEAR(std::abs(J(0, 1)), 0.5 * V.cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_EQ(submersivity_rank(unf, R), 1);
}

TEST(BuildUnfolding, ImaginaryPairExample) {
  MatrixPolynomial M(2, 2, 1);
  M.add_term({0}, mat2(0, 1, -1, 0));
  const auto R = canonical();
  const auto unf = build_unfolding(M, R);
  ASSERT_EQ(unf.S(), 1);
  // beta(chi) for M + chi V with V = [[0, 1], [0, 0]] is sqrt(1 + chi): derivative +1/2.
  Unfolding manual = unf;
  manual.directions[0] = mat2(0, 1, 0, 0);
  const Matrix J = spectral_jacobian(manual, R, Vector::Zero(1), Vector::Zero(1));
  EXPECT_NEAR(J(0, 1), 0.5, 1e-9);
  EXPECT_NEAR(spectral_parameters(manual, R, Vector::Zero(1), Vector::Constant(1, 0.21))(0),
              std::sqrt(1.21), 1e-12);
  EXPECT_EQ(submersivity_rank(unf, R), 1);
}

TEST(BuildUnfolding, EmptyNormalBlock) {
  const auto R = check_involution(Matrix(0, 0));
  const auto unf = build_unfolding(MatrixPolynomial(0, 0, 1), R);
  EXPECT_EQ(unf.S(), 0);
  EXPECT_EQ(unf.p, 0);
  EXPECT_EQ(submersivity_rank(unf, R), 0);
}

TEST(SubmersivityRank, RealPairExampleHasRankOne) {
  MatrixPolynomial M(2, 2, 1);
  M.add_term({0}, mat2(0, 1, 1, 0));
  M.add_term({1}, mat2(0, 1, 0, 0));
  const auto R = canonical();
  const auto unf = build_unfolding(M, R);
  const Matrix J = spectral_jacobian(unf, R, Vector::Zero(1), Vector::Zero(1));
  EXPECT_EQ(J.rows(), 1);
  EXPECT_EQ(J.cols(), 2);
  EXPECT_EQ(submersivity_rank(unf, R), 1);
}

TEST(SubmersivityRank, ConstantWithoutDirections) {
  Unfolding unf;
  unf.p = 1;
  unf.s = 1;
  unf.base = MatrixPolynomial::constant(mat2(0, 1, 1, 0), 1);
  EXPECT_EQ(submersivity_rank(unf, canonical()), 0);
}

// Properties over random reversible matrices.

class RandomReversible : public ::testing::TestWithParam<int> {};

TEST_P(RandomReversible, EigenvaluesPairUnderNegation) {
  Gen gen(1000 + GetParam());
  for (int trial = 0; trial < 25; ++trial) {
    const auto inv = gen.involution(GetParam());
    const Matrix M = gen.reversible(inv);
    if (kamrev2::testing::spectral_gap(M) < 1e-3) continue;
    const auto R = check_involution(inv.R);
    EXPECT_LT(reversibility_defect(M, R), 1e-12);
    const Eigen::VectorXcd ev = M.eigenvalues();
    for (int i = 0; i < ev.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < ev.size(); ++j) best = std::min(best, std::abs(ev(i) + ev(j)));
      EXPECT_LT(best, 1e-9);
    }
  }
}

TEST_P(RandomReversible, ReconstructionMatchesEigenvalues) {
  Gen gen(2000 + GetParam());
  for (int trial = 0; trial < 25; ++trial) {
    const auto inv = gen.involution(GetParam());
    const Matrix M = gen.reversible(inv);
    if (kamrev2::testing::spectral_gap(M) < 1e-3) continue;
    const auto R = check_involution(inv.R);
    const auto s = classify_spectrum(M, R);
    EXPECT_EQ(s.p(), GetParam());
    EXPECT_TRUE((s.alpha.array() > 0).all());
    EXPECT_TRUE((s.beta.array() > 0).all());
    const auto rebuilt = sorted(s.eigenvalues());
    const Eigen::VectorXcd ev = M.eigenvalues();
    const auto direct = sorted(std::vector<std::complex<double>>(ev.data(), ev.data() + ev.size()));
    ASSERT_EQ(rebuilt.size(), direct.size());
    for (std::size_t i = 0; i < rebuilt.size(); ++i) EXPECT_LT(std::abs(rebuilt[i] - direct[i]), 1e-9);
  }
}

TEST_P(RandomReversible, ConjugationByCommutingMatrixPreservesSpectrum) {
  Gen gen(3000 + GetParam());
  for (int trial = 0; trial < 25; ++trial) {
    const auto inv = gen.involution(GetParam());
    const Matrix M = gen.reversible(inv);
    if (kamrev2::testing::spectral_gap(M) < 1e-3) continue;
    const auto R = check_involution(inv.R);
    const Matrix C = gen.commuting(inv);
    const Matrix Mc = C * M * C.inverse();
    EXPECT_LT(reversibility_defect(Mc, R), 1e-10);
    const auto a = classify_spectrum(M, R);
    const auto b = classify_spectrum(Mc, R);
    EXPECT_EQ(a.nu1, b.nu1);
    EXPECT_EQ(a.nu2, b.nu2);
    EXPECT_EQ(a.nu3, b.nu3);
    EXPECT_LT((a.parameters() - b.parameters()).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST_P(RandomReversible, UnfoldingInvariantsOnSample) {
  const int p = GetParam();
  Gen gen(4000 + p);
  int built = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto inv = gen.involution(p);
    const Matrix M0 = gen.reversible(inv);
    if (kamrev2::testing::spectral_gap(M0) < 1e-2) continue;
    const auto R = check_involution(inv.R);
    MatrixPolynomial M(2 * p, 2 * p, 1);
    M.add_term({0}, M0);
    M.add_term({1}, gen.reversible(inv, 0.1));
    const auto unf = build_unfolding(M, R);
    ++built;
    EXPECT_EQ(unf.S(), p);
    EXPECT_EQ(submersivity_rank(unf, R), p);
    for (int k = 0; k < 10; ++k) {
      const Vector mu = gen.vector(1, -0.01, 0.01);
      const Vector chi = gen.vector(p, -0.01, 0.01);
      EXPECT_EQ((unf.evaluate(mu, Vector::Zero(p)) - M.evaluate(mu)).cwiseAbs().maxCoeff(), 0.0);
      const Matrix Mn = unf.evaluate(mu, chi);
      EXPECT_LT((Mn * R.R() + R.R() * Mn).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
  EXPECT_GT(built, 0);
}

INSTANTIATE_TEST_SUITE_P(HalfDimensions, RandomReversible, ::testing::Values(1, 2, 3));
