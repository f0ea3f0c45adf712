#pragma once

#include "kamrev2/dioph.hpp"
#include "kamrev2/revlin.hpp"
#include "kamrev2/series.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace kamrev2::systems {

using series::FourierTaylorField;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Dims {
  int n = 0;
  int m = 1;
  int p = 0;
  int N = 1;
  int s = 1;

  int d() const noexcept { return m + 2 * p; }  // normal dimension (y, z)
  bool operator==(const Dims&) const = default;
};

// Context-2 model:
//   x' = F(mu) + Delta(sigma, mu) + xi + f
//   y' = sigma + Z(mu) z + eta + g
//   z' = M(mu) z + zeta + h
//   X' = Omega
// Every field shares the angle list (x, X) and the variable layout (y, z, sigma, mu).
// Z is empty for systems already in normal form.
struct SystemSpec {
  std::string name;
  Dims dims;
  Vector omega;
  revlin::InvolutionMatrix R;
  dioph::DiophParams omega_dioph{1.0, 1e-3, 1};

  FourierTaylorField F, Delta, M, Z;
  FourierTaylorField xi, eta, zeta;
  FourierTaylorField f, g, h;

  series::VarLayout layout() const noexcept { return {dims.m, dims.p, dims.s}; }
  int n_angles() const noexcept { return dims.n + dims.N; }
  revlin::MatrixPolynomial M_poly() const;
  revlin::MatrixPolynomial Z_poly() const;
  bool has_Z() const noexcept { return !Z.empty(); }
  // Sum of max-abs coefficients of f, g, h: the perturbation size gate input.
  double perturbation_norm() const;
  // Copy with f, g, h scaled by c.
  SystemSpec with_perturbation_scaled(double c) const;
};

// Empty fields of the right shapes for the given dims; R defaults to diag(I_p, -I_p).
SystemSpec make_empty_spec(const Dims& dims, const Vector& omega);

struct ParseOptions {
  int max_mu_degree = 4;
  int max_normal_degree = 8;   // degree cap in (y, z, sigma)
  int omega_cutoff = 200;
  bool check_omega = true;
};

SystemSpec parse_system(const std::string& document, const ParseOptions& opt = {});
std::string serialize_system(const SystemSpec& spec);

// Throws OrderViolation / NotReversible / OmegaNotDiophantine / SchemaError when invalid.
void validate_system(const SystemSpec& spec, const ParseOptions& opt = {});
void check_order_conditions(const SystemSpec& spec);

// Exact parity defect: max coefficient of D G . V + V o G computed symbolically.
double exact_reversibility_defect(const SystemSpec& spec);

struct ResidualGrid {
  int points_per_angle = 8;
  int points_per_variable = 3;
  double half_width = 0.1;
  std::size_t max_points = 50000;
};

// Max over a deterministic grid of |D G . V(q) + V(G q)|, X-component included.
double reversibility_residual(const SystemSpec& spec, const ResidualGrid& grid = {});

struct ParameterBox {
  Vector center;
  double radius = 1.0;
  int points_per_axis = 5;
};

// y' = y - Z M^{-1} z with Z M^{-1} expanded as a Taylor polynomial in mu of degree mu_cap.
SystemSpec eliminate_Zz(const SystemSpec& spec_raw, const ParameterBox& box = {}, int mu_cap = 4);

struct Point {
  Vector x, y, z, X;
};

// Full velocity (x', y', z', X') of the original system at parameters (sigma, mu).
Vector evaluate_field(const SystemSpec& spec, const Point& q, const Vector& sigma, const Vector& mu);

// The normal-form part of a system as used by the solvers. In extended mode the x-equation
// constant is the free parameter omega and the z-equation matrix is M_new(mu, chi); in
// original mode they are F(mu) + Delta(sigma, mu) and M(mu).
class FieldModel {
 public:
  static FieldModel original(const SystemSpec& spec);
  static FieldModel extended(const SystemSpec& spec, const revlin::Unfolding& unf);

  const Dims& dims() const noexcept { return dims_; }
  bool extended_mode() const noexcept { return extended_; }
  const revlin::Unfolding& unfolding() const noexcept { return unf_; }
  int S() const noexcept { return unf_.S(); }

  // out = (x', y', z') with n + m + 2p entries. omega and chi are ignored in original mode.
  template <class T>
  void velocity(const T* angles, const T* Y, const T* sigma, const T* omega, const T* mu,
                const T* chi, T* out) const {
    const int n = dims_.n, m = dims_.m, dz = 2 * dims_.p;
    std::vector<T> vars(static_cast<std::size_t>(layout_.nvars()));
    fill_vars(Y, sigma, mu, vars.data());
    fx_.evaluate(angles, vars.data(), out);
    if (extended_)
      for (int i = 0; i < n; ++i) out[i] = out[i] + omega[i];
    fy_.evaluate(angles, vars.data(), out + n);
    for (int i = 0; i < m; ++i) out[n + i] = out[n + i] + sigma[i];
    fz_.evaluate(angles, vars.data(), out + n + m);
    if (dz > 0) {
      std::vector<T> Mz(static_cast<std::size_t>(dz * dz));
      unf_.evaluate_into(mu, chi, Mz.data());  // original mode has S = 0
      for (int r = 0; r < dz; ++r) {
        T acc(0.0);
        for (int c = 0; c < dz; ++c) acc = acc + Mz[r * dz + c] * Y[m + c];
        out[n + m + r] = out[n + m + r] + acc;
      }
    }
  }

  // Partial derivatives with respect to Y = (y, z): Jx (n x d), JY (d x d), row-major.
  template <class T>
  void jacobian_Y(const T* angles, const T* Y, const T* sigma, const T* mu, const T* chi,
                  T* Jx, T* JY) const {
    const int n = dims_.n, m = dims_.m, dz = 2 * dims_.p, d = m + dz;
    std::vector<T> vars(static_cast<std::size_t>(layout_.nvars()));
    fill_vars(Y, sigma, mu, vars.data());
    std::vector<T> col(static_cast<std::size_t>(std::max(n, d)));
    for (int j = 0; j < d; ++j) {
      dfx_[j].evaluate(angles, vars.data(), col.data());
      for (int i = 0; i < n; ++i) Jx[i * d + j] = col[i];
      dfy_[j].evaluate(angles, vars.data(), col.data());
      for (int i = 0; i < m; ++i) JY[i * d + j] = col[i];
      dfz_[j].evaluate(angles, vars.data(), col.data());
      for (int i = 0; i < dz; ++i) JY[(m + i) * d + j] = col[i];
    }
    if (dz > 0) {
      std::vector<T> Mz(static_cast<std::size_t>(dz * dz));
      unf_.evaluate_into(mu, chi, Mz.data());  // original mode has S = 0
      for (int r = 0; r < dz; ++r)
        for (int c = 0; c < dz; ++c) JY[(m + r) * d + m + c] = JY[(m + r) * d + m + c] + Mz[r * dz + c];
    }
  }

 private:
  template <class T>
  void fill_vars(const T* Y, const T* sigma, const T* mu, T* vars) const {
    const int m = dims_.m, dz = 2 * dims_.p;
    for (int i = 0; i < m + dz; ++i) vars[i] = Y[i];
    for (int i = 0; i < m; ++i) vars[layout_.sigma(i)] = sigma[i];
    for (int i = 0; i < dims_.s; ++i) vars[layout_.mu(i)] = mu[i];
  }
  Dims dims_;
  series::VarLayout layout_;
  bool extended_ = false;
  revlin::Unfolding unf_;
  FourierTaylorField fx_, fy_, fz_;
  std::vector<FourierTaylorField> dfx_, dfy_, dfz_;
};

}  // namespace kamrev2::systems
