#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <map>
#include <vector>

namespace kamrev2::series {

enum class Basis { Cos, Sin };

// Polynomial variables in the fixed order (y[m], z[2p], sigma[m], mu[s]).
struct VarLayout {
  int m = 0;
  int p = 0;
  int s = 0;

  int nvars() const noexcept { return 2 * m + 2 * p + s; }
  int y(int i) const noexcept { return i; }
  int z(int i) const noexcept { return m + i; }
  int sigma(int i) const noexcept { return m + 2 * p + i; }
  int mu(int i) const noexcept { return 2 * m + 2 * p + i; }
  bool operator==(const VarLayout&) const = default;
};

// Sparse real polynomial; keys are exponent vectors of fixed length.
class Poly {
 public:
  explicit Poly(int nvars = 0) : nvars_(nvars) {}
  static Poly constant(int nvars, double c);
  static Poly variable(int nvars, int i);

  int nvars() const noexcept { return nvars_; }
  const std::map<std::vector<int>, double>& terms() const noexcept { return terms_; }
  void add(const std::vector<int>& exps, double c);

  Poly operator+(const Poly& o) const;
  Poly operator*(const Poly& o) const;
  Poly scaled(double c) const;
  Poly pow(int e) const;
  // Drops monomials rejected by keep(exps).
  Poly filtered(const std::function<bool(const std::vector<int>&)>& keep) const;

 private:
  int nvars_;
  std::map<std::vector<int>, double> terms_;
};

struct Term {
  std::vector<int> k;  // Fourier mode over the n + N angles (x, X)
  Basis basis = Basis::Cos;
  std::vector<int> d;  // monomial exponents over VarLayout
  Eigen::VectorXd c;   // coefficient in R^target_dim
};

// Truncated Fourier-Taylor series sum c * {cos|sin}(<k, angles>) * vars^d.
// Stored modes are canonical: k = 0 only with cos, otherwise first nonzero entry positive.
class FourierTaylorField {
 public:
  FourierTaylorField() = default;
  FourierTaylorField(int target_dim, int n_angles, VarLayout layout);

  // Canonicalizes k (flipping sin sign for negated modes) and merges duplicates.
  void add(std::vector<int> k, Basis basis, std::vector<int> d, const Eigen::VectorXd& c);
  void add(const Term& t) { add(t.k, t.basis, t.d, t.c); }

  int target_dim() const noexcept { return target_dim_; }
  int n_angles() const noexcept { return n_angles_; }
  const VarLayout& layout() const noexcept { return layout_; }
  const std::vector<Term>& terms() const noexcept { return terms_; }
  bool empty() const noexcept { return terms_.empty(); }

  int max_mode_l1() const;
  int max_mode_abs() const;
  int max_degree() const;
  bool depends_on_angles() const;
  // Sum over terms of the max-abs coefficient entry.
  double coefficient_norm() const;

  template <class T>
  void evaluate(const T* angles, const T* vars, T* out) const {
    using std::cos;
    using std::sin;
    for (int i = 0; i < target_dim_; ++i) out[i] = T(0.0);
    for (const auto& t : terms_) {
      T mono(1.0);
      bool has_phase = false;
      T phase(0.0);
      for (int j = 0; j < n_angles_; ++j)
        if (t.k[j] != 0) {
          phase = phase + angles[j] * static_cast<double>(t.k[j]);
          has_phase = true;
        }
      if (has_phase) mono = t.basis == Basis::Cos ? cos(phase) : sin(phase);
      for (std::size_t j = 0; j < t.d.size(); ++j)
        for (int e = 0; e < t.d[j]; ++e) mono = mono * vars[j];
      for (int i = 0; i < target_dim_; ++i) {
        const double ci = t.c[i];
        if (ci != 0.0) out[i] = out[i] + mono * ci;
      }
    }
  }
  Eigen::VectorXd evaluate(const Eigen::VectorXd& angles, const Eigen::VectorXd& vars) const;

  FourierTaylorField derivative(int var) const;
  // Replaces variable i by subs[i]; keep filters the resulting monomials.
  FourierTaylorField substitute(const std::vector<Poly>& subs,
                                const std::function<bool(const std::vector<int>&)>& keep = {}) const;
  // f(-angles, vars).
  FourierTaylorField reflect_angles() const;
  // A * f with A of shape (rows x target_dim).
  FourierTaylorField left_multiply(const Eigen::MatrixXd& A) const;
  FourierTaylorField plus(const FourierTaylorField& o) const;
  FourierTaylorField scaled(double c) const;
  // Max-abs coefficient of this - o (exact comparison of canonical forms).
  double max_coefficient_difference(const FourierTaylorField& o) const;

  bool operator==(const FourierTaylorField& o) const;

 private:
  int target_dim_ = 0;
  int n_angles_ = 0;
  VarLayout layout_;
  std::vector<Term> terms_;  // sorted by (k, basis, d)
};

}  // namespace kamrev2::series
