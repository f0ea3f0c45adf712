#include "kamrev2/revlin.hpp"

#include "kamrev2/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace kamrev2::revlin {

namespace {

using Complex = std::complex<double>;

enum class GroupKind { RealPair, ImagPair, Quadruple };

struct Group {
  GroupKind kind;
  int index;  // column of the eigen decomposition holding the representative
  Complex lambda;
};

struct Analysis {
  Eigen::MatrixXcd V;
  Eigen::MatrixXcd Vinv;
  Eigen::VectorXcd values;
  std::vector<Group> real, imag, quad;
  ReversibleSpectrum spectrum;
};

Analysis analyze(const Matrix& M, const InvolutionMatrix& R, double tol) {
  if (M.rows() != M.cols() || M.rows() != R.dim())
    fail(ErrorKind::DimensionMismatch, "matrix and involution dimensions differ");
  const double defect = reversibility_defect(M, R);
  if (!(defect < tol)) {
    std::ostringstream os;
    os << "MR + RM has max-norm " << defect;
    fail(ErrorKind::NotReversible, os.str());
  }
  Analysis a;
  const int d = static_cast<int>(M.rows());
  if (d == 0) {
    a.spectrum.alpha.resize(0);
    a.spectrum.beta.resize(0);
    return a;
  }
  Eigen::EigenSolver<Matrix> es(M, true);
  if (es.info() != Eigen::Success) fail(ErrorKind::ClassificationFailed, "eigen solver failed");
  a.values = es.eigenvalues();
  a.V = es.eigenvectors();
  for (int i = 0; i < d; ++i)
    if (std::abs(a.values[i]) < tol) fail(ErrorKind::SingularMatrix, "zero eigenvalue");
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      if (std::abs(a.values[i] - a.values[j]) < tol)
        fail(ErrorKind::MultipleEigenvalues, "eigenvalue gap below tolerance");
  a.Vinv = a.V.inverse();

  for (int i = 0; i < d; ++i) {
    const Complex l = a.values[i];
    if (std::abs(l.imag()) < tol) {
      if (l.real() > 0) a.real.push_back({GroupKind::RealPair, i, Complex(l.real(), 0.0)});
    } else if (std::abs(l.real()) < tol) {
      if (l.imag() > 0) a.imag.push_back({GroupKind::ImagPair, i, Complex(0.0, l.imag())});
    } else if (l.real() > 0 && l.imag() > 0) {
      a.quad.push_back({GroupKind::Quadruple, i, l});
    }
  }
  const int p = R.p();
  if (static_cast<int>(a.real.size() + a.imag.size() + 2 * a.quad.size()) != p)
    fail(ErrorKind::ClassificationFailed, "eigenvalues do not pair as (lambda, -lambda)");

  std::sort(a.real.begin(), a.real.end(),
            [](const Group& x, const Group& y) { return x.lambda.real() < y.lambda.real(); });
  std::sort(a.imag.begin(), a.imag.end(),
            [](const Group& x, const Group& y) { return x.lambda.imag() < y.lambda.imag(); });
  std::sort(a.quad.begin(), a.quad.end(), [](const Group& x, const Group& y) {
    if (x.lambda.real() != y.lambda.real()) return x.lambda.real() < y.lambda.real();
    return x.lambda.imag() < y.lambda.imag();
  });

  auto& s = a.spectrum;
  s.nu1 = static_cast<int>(a.real.size());
  s.nu2 = static_cast<int>(a.imag.size());
  s.nu3 = static_cast<int>(a.quad.size());
  s.alpha.resize(s.nu1 + s.nu3);
  s.beta.resize(s.nu2 + s.nu3);
  for (int i = 0; i < s.nu1; ++i) s.alpha[i] = a.real[i].lambda.real();
  for (int i = 0; i < s.nu2; ++i) s.beta[i] = a.imag[i].lambda.imag();
  for (int i = 0; i < s.nu3; ++i) {
    s.alpha[s.nu1 + i] = a.quad[i].lambda.real();
    s.beta[s.nu2 + i] = a.quad[i].lambda.imag();
  }
  return a;
}

// Rows of the parameter Jacobian for a perturbation direction dM, in (alpha, beta) order.
Vector parameter_derivative(const Analysis& a, const Matrix& dM) {
  const auto& s = a.spectrum;
  Vector out(s.p());
  auto dl = [&](int idx) -> Complex {
    return (a.Vinv.row(idx) * dM.cast<Complex>() * a.V.col(idx))(0, 0);
  };
  for (int i = 0; i < s.nu1; ++i) out[i] = dl(a.real[i].index).real();
  for (int i = 0; i < s.nu3; ++i) {
    const Complex d = dl(a.quad[i].index);
    out[s.nu1 + i] = d.real();
    out[s.nu1 + s.nu3 + s.nu2 + i] = d.imag();
  }
  for (int i = 0; i < s.nu2; ++i) out[s.nu1 + s.nu3 + i] = dl(a.imag[i].index).imag();
  return out;
}

Vector real_part_normalized(const Eigen::VectorXcd& v) {
  // Rotate the phase so the largest entry is real, then take the real part.
  Eigen::Index k;
  v.cwiseAbs().maxCoeff(&k);
  const Complex phase = std::conj(v[k]) / std::abs(v[k]);
  return (v * phase).real();
}

}  // namespace

InvolutionMatrix check_involution(const Matrix& R) {
  if (R.rows() != R.cols() || R.rows() % 2 != 0)
    fail(ErrorKind::DimensionMismatch, "involution must be square of even dimension");
  const Matrix defect = R * R - Matrix::Identity(R.rows(), R.cols());
  if (R.size() > 0 && defect.cwiseAbs().maxCoeff() > 1e-12)
    fail(ErrorKind::NotInvolutive, "R*R differs from the identity");
  // With R*R = I the eigenvalues are ±1; equal multiplicities iff trace vanishes.
  if (std::abs(R.trace()) > 0.5)
    fail(ErrorKind::WrongSignature, "eigenvalues +1 and -1 have unequal multiplicities");
  InvolutionMatrix out;
  out.R_ = R;
  out.p_ = static_cast<int>(R.rows() / 2);
  return out;
}

std::vector<std::complex<double>> ReversibleSpectrum::eigenvalues() const {
  std::vector<Complex> out;
  for (int i = 0; i < nu1; ++i) {
    out.emplace_back(alpha[i], 0.0);
    out.emplace_back(-alpha[i], 0.0);
  }
  for (int i = 0; i < nu2; ++i) {
    out.emplace_back(0.0, beta[i]);
    out.emplace_back(0.0, -beta[i]);
  }
  for (int i = 0; i < nu3; ++i) {
    const double a = alpha[nu1 + i], b = beta[nu2 + i];
    out.emplace_back(a, b);
    out.emplace_back(a, -b);
    out.emplace_back(-a, b);
    out.emplace_back(-a, -b);
  }
  return out;
}

Vector ReversibleSpectrum::parameters() const {
  Vector out(alpha.size() + beta.size());
  out << alpha, beta;
  return out;
}

double reversibility_defect(const Matrix& M, const InvolutionMatrix& R) {
  if (M.rows() != M.cols() || M.rows() != R.dim())
    fail(ErrorKind::DimensionMismatch, "matrix and involution dimensions differ");
  if (M.size() == 0) return 0.0;
  return (M * R.R() + R.R() * M).cwiseAbs().maxCoeff();
}

ReversibleSpectrum classify_spectrum(const Matrix& M, const InvolutionMatrix& R, double tol) {
  return analyze(M, R, tol).spectrum;
}

MatrixPolynomial::MatrixPolynomial(int rows, int cols, int s) : rows_(rows), cols_(cols), s_(s) {}

MatrixPolynomial MatrixPolynomial::constant(const Matrix& C, int s) {
  MatrixPolynomial out(static_cast<int>(C.rows()), static_cast<int>(C.cols()), s);
  out.add_term(std::vector<int>(s, 0), C);
  return out;
}

void MatrixPolynomial::add_term(std::vector<int> exponents, const Matrix& coeff) {
  if (static_cast<int>(exponents.size()) != s_ || coeff.rows() != rows_ || coeff.cols() != cols_)
    fail(ErrorKind::DimensionMismatch, "matrix polynomial term has wrong shape");
  for (auto& t : terms_)
    if (t.exponents == exponents) {
      t.coeff += coeff;
      return;
    }
  terms_.push_back({std::move(exponents), coeff});
}

int MatrixPolynomial::degree() const {
  int d = 0;
  for (const auto& t : terms_) {
    int sum = 0;
    for (int e : t.exponents) sum += e;
    d = std::max(d, sum);
  }
  return d;
}

Matrix MatrixPolynomial::evaluate(const Vector& mu) const {
  Matrix out = Matrix::Zero(rows_, cols_);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> tmp(rows_, cols_);
  evaluate_into(mu.data(), tmp.data());
  out = tmp;
  return out;
}

Matrix MatrixPolynomial::derivative(const Vector& mu, int j) const {
  Matrix out = Matrix::Zero(rows_, cols_);
  for (const auto& t : terms_) {
    const int e = t.exponents[j];
    if (e == 0) continue;
    double mono = e;
    for (int i = 0; i < s_; ++i) {
      const int pow = t.exponents[i] - (i == j ? 1 : 0);
      for (int k = 0; k < pow; ++k) mono *= mu[i];
    }
    out += mono * t.coeff;
  }
  return out;
}

Matrix Unfolding::evaluate(const Vector& mu, const Vector& chi) const {
  const int d = 2 * p;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> tmp(d, d);
  evaluate_into(mu.data(), chi.data(), tmp.data());
  return tmp;
}

Unfolding build_unfolding(const MatrixPolynomial& M, const InvolutionMatrix& R, double tol) {
  const int p = R.p();
  if (M.rows() != 2 * p || M.cols() != 2 * p)
    fail(ErrorKind::DimensionMismatch, "matrix polynomial and involution dimensions differ");
  for (const auto& t : M.terms())
    if (t.coeff.size() > 0 && (t.coeff * R.R() + R.R() * t.coeff).cwiseAbs().maxCoeff() > 1e-12)
      fail(ErrorKind::NotReversible, "a coefficient of M(mu) does not anti-commute with R");

  Unfolding unf;
  unf.p = p;
  unf.s = M.s();
  unf.base = M;
  if (p == 0) return unf;

  const Matrix M0 = M.evaluate(Vector::Zero(M.s()));
  Analysis a;
  try {
    a = analyze(M0, R, tol);
  } catch (const Error& e) {
    fail(ErrorKind::ClassificationFailed, std::string("spectrum of M(0): ") + e.what());
  }
  const auto& sp = a.spectrum;
  const Matrix& Rm = R.R();
  const int d = 2 * p;

  // Adapted basis: each group spans an M-invariant block split by R into even/odd halves.
  Matrix T(d, d);
  std::vector<std::pair<int, int>> entry(p);  // (row, col) in the adapted basis per parameter
  std::vector<bool> use_J(p, false);
  int col = 0;
  for (int i = 0; i < sp.nu1; ++i) {
    const Vector v = real_part_normalized(a.V.col(a.real[i].index));
    const Vector e1 = v + Rm * v;
    const double al = a.real[i].lambda.real();
    T.col(col) = e1;
    T.col(col + 1) = M0 * e1 / al;  // block [[0, al], [al, 0]]
    entry[i] = {col, col + 1};
    col += 2;
  }
  for (int i = 0; i < sp.nu2; ++i) {
    const Eigen::VectorXcd v = a.V.col(a.imag[i].index);
    Vector x = v.real();
    Vector e1 = x + Rm * x;
    if (e1.norm() < 1e-6 * x.norm()) {
      x = v.imag();
      e1 = x + Rm * x;
    }
    const double be = a.imag[i].lambda.imag();
    T.col(col) = e1;
    T.col(col + 1) = -M0 * e1 / be;  // block [[0, be], [-be, 0]]
    entry[sp.nu1 + sp.nu3 + i] = {col, col + 1};
    col += 2;
  }
  for (int i = 0; i < sp.nu3; ++i) {
    const Eigen::VectorXcd v = a.V.col(a.quad[i].index);
    const Eigen::VectorXcd Rv = Rm.cast<Complex>() * v;
    const Eigen::VectorXcd u = v + Rv;
    const Eigen::VectorXcd w = v - Rv;
    // Basis (Re u, Im u, Re w, Im w): M = [[0, B], [B, 0]], B = [[a, b], [-b, a]].
    T.col(col) = u.real();
    T.col(col + 1) = u.imag();
    T.col(col + 2) = w.real();
    T.col(col + 3) = w.imag();
    entry[sp.nu1 + i] = {col, col + 2};
    entry[sp.nu1 + sp.nu3 + sp.nu2 + i] = {col, col + 2};
    use_J[sp.nu1 + sp.nu3 + sp.nu2 + i] = true;
    col += 4;
  }

  const Eigen::FullPivLU<Matrix> lu(T);
  if (!lu.isInvertible()) fail(ErrorKind::ClassificationFailed, "adapted basis is singular");
  const Matrix Tinv = lu.inverse();

  for (int j = 0; j < p; ++j) {
    Matrix E = Matrix::Zero(d, d);
    const auto [r, c] = entry[j];
    const bool is_quad = (j >= sp.nu1 && j < sp.nu1 + sp.nu3) || use_J[j];
    if (!is_quad) {
      E(r, c) = 1.0;
    } else if (!use_J[j]) {
      E(r, c) = 1.0;
      E(r + 1, c + 1) = 1.0;
    } else {
      E(r, c + 1) = 1.0;
      E(r + 1, c) = -1.0;
    }
    Matrix V = T * E * Tinv;
    V = 0.5 * (V - Rm * V * Rm);
    unf.directions.push_back(V);
  }

  const int rank = submersivity_rank(unf, R, Vector::Zero(unf.s), Vector::Zero(unf.S()), tol);
  if (rank < p) {
    std::ostringstream os;
    os << "unfolding directions reach rank " << rank << " < p=" << p;
    fail(ErrorKind::SubmersivityFailed, os.str());
  }
  return unf;
}

Matrix spectral_jacobian(const Unfolding& unf, const InvolutionMatrix& R, const Vector& mu,
                         const Vector& chi, double tol) {
  const int p = unf.p;
  Matrix J(p, unf.s + unf.S());
  if (p == 0) return J;
  const Analysis a = analyze(unf.evaluate(mu, chi), R, tol);
  for (int j = 0; j < unf.s; ++j) J.col(j) = parameter_derivative(a, unf.base.derivative(mu, j));
  for (int j = 0; j < unf.S(); ++j) J.col(unf.s + j) = parameter_derivative(a, unf.directions[j]);
  return J;
}

Vector spectral_parameters(const Unfolding& unf, const InvolutionMatrix& R, const Vector& mu,
                           const Vector& chi, double tol) {
  if (unf.p == 0) return Vector(0);
  return classify_spectrum(unf.evaluate(mu, chi), R, tol).parameters();
}

int submersivity_rank(const Unfolding& unf, const InvolutionMatrix& R, const Vector& mu,
                      const Vector& chi, double tol) {
  if (unf.p == 0 || unf.s + unf.S() == 0) return 0;
  const Matrix J = spectral_jacobian(unf, R, mu, chi, tol);
  const Eigen::JacobiSVD<Matrix> svd(J);
  int rank = 0;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()[i] > 1e-9) ++rank;
  return rank;
}

int submersivity_rank(const Unfolding& unf, const InvolutionMatrix& R) {
  return submersivity_rank(unf, R, Vector::Zero(unf.s), Vector::Zero(unf.S()));
}

}  // namespace kamrev2::revlin
