#pragma once

#include <Eigen/Dense>

#include <complex>
#include <utility>
#include <vector>

namespace kamrev2::revlin {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Validated involution R of R^{2p} with ±1 eigenspaces of equal dimension p.
class InvolutionMatrix {
 public:
  InvolutionMatrix() = default;
  const Matrix& R() const noexcept { return R_; }
  int p() const noexcept { return p_; }
  int dim() const noexcept { return 2 * p_; }

 private:
  friend InvolutionMatrix check_involution(const Matrix& R);
  Matrix R_;
  int p_ = 0;
};

InvolutionMatrix check_involution(const Matrix& R);

// Spectrum of an infinitesimally reversible matrix with simple spectrum:
// nu1 real pairs ±alpha, nu2 imaginary pairs ±i beta, nu3 quadruples ±alpha±i beta.
// alpha = (real-pair values ascending, quadruple real parts), beta = (imaginary-pair
// values ascending, quadruple imaginary parts); quadruples are ordered by (alpha, beta).
struct ReversibleSpectrum {
  int nu1 = 0;
  int nu2 = 0;
  int nu3 = 0;
  Vector alpha;
  Vector beta;

  int p() const noexcept { return nu1 + nu2 + 2 * nu3; }
  // Full multiset of 2p eigenvalues reconstructed from the classification.
  std::vector<std::complex<double>> eigenvalues() const;
  // (alpha, beta) stacked; length p.
  Vector parameters() const;
};

double reversibility_defect(const Matrix& M, const InvolutionMatrix& R);

ReversibleSpectrum classify_spectrum(const Matrix& M, const InvolutionMatrix& R,
                                     double tol = 1e-9);

// M(mu) = sum_d C_d mu^d over multi-indices d in N^s.
class MatrixPolynomial {
 public:
  struct Term {
    std::vector<int> exponents;
    Matrix coeff;
  };

  MatrixPolynomial() = default;
  MatrixPolynomial(int rows, int cols, int s);
  static MatrixPolynomial constant(const Matrix& C, int s);

  void add_term(std::vector<int> exponents, const Matrix& coeff);

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  int s() const noexcept { return s_; }
  int degree() const;
  const std::vector<Term>& terms() const noexcept { return terms_; }

  Matrix evaluate(const Vector& mu) const;
  Matrix derivative(const Vector& mu, int j) const;

  // Row-major evaluation for arbitrary scalar types (dual numbers in the solver).
  template <class T>
  void evaluate_into(const T* mu, T* out) const {
    const int sz = rows_ * cols_;
    for (int i = 0; i < sz; ++i) out[i] = T(0.0);
    for (const auto& t : terms_) {
      T mono(1.0);
      for (int j = 0; j < s_; ++j)
        for (int e = 0; e < t.exponents[j]; ++e) mono = mono * mu[j];
      for (int r = 0; r < rows_; ++r)
        for (int c = 0; c < cols_; ++c) {
          const double v = t.coeff(r, c);
          if (v != 0.0) out[r * cols_ + c] = out[r * cols_ + c] + mono * v;
        }
    }
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  int s_ = 0;
  std::vector<Term> terms_;
};

// M_new(mu, chi) = M(mu) + sum_j chi_j V_j, with each V_j anti-commuting with R.
struct Unfolding {
  int p = 0;
  int s = 0;
  MatrixPolynomial base;
  std::vector<Matrix> directions;

  int S() const noexcept { return static_cast<int>(directions.size()); }
  Matrix evaluate(const Vector& mu, const Vector& chi) const;

  template <class T>
  void evaluate_into(const T* mu, const T* chi, T* out) const {
    base.evaluate_into(mu, out);
    const int d = 2 * p;
    for (std::size_t j = 0; j < directions.size(); ++j)
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) {
          const double v = directions[j](r, c);
          if (v != 0.0) out[r * d + c] = out[r * d + c] + chi[j] * v;
        }
  }
};

// One direction per real or imaginary pair and two per quadruple, built in an eigenbasis of
// M(0) adapted to R and pulled back; S = p.
Unfolding build_unfolding(const MatrixPolynomial& M, const InvolutionMatrix& R,
                          double tol = 1e-9);

// Jacobian of (mu, chi) -> (alpha_new, beta_new) at the given point; p x (s + S).
Matrix spectral_jacobian(const Unfolding& unf, const InvolutionMatrix& R, const Vector& mu,
                         const Vector& chi, double tol = 1e-9);

// (alpha_new, beta_new) at (mu, chi); length p.
Vector spectral_parameters(const Unfolding& unf, const InvolutionMatrix& R, const Vector& mu,
                           const Vector& chi, double tol = 1e-9);

// Numerical rank of spectral_jacobian (singular values above 1e-9).
int submersivity_rank(const Unfolding& unf, const InvolutionMatrix& R, const Vector& mu,
                      const Vector& chi, double tol = 1e-9);
int submersivity_rank(const Unfolding& unf, const InvolutionMatrix& R);

}  // namespace kamrev2::revlin
