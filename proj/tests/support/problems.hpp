#pragma once

#include "kamrev2/revlin.hpp"
#include "kamrev2/systems.hpp"
#include "kamrev2/torus.hpp"

#include "support/generators.hpp"

#include <cmath>
#include <string>

namespace kamrev2::testing {

// A bundled model in normal form together with its unfolding and the default target
// (mu0 = 0, chi0 = 0, omega0 = F(0)).
struct Problem {
  systems::SystemSpec spec;
  revlin::Unfolding unf;
  torus::Target target;
};

inline Problem make_problem(const systems::SystemSpec& raw) {
  Problem pb;
  pb.spec = raw.has_Z() ? systems::eliminate_Zz(raw) : raw;
  pb.unf = revlin::build_unfolding(pb.spec.M_poly(), pb.spec.R);
  pb.target.mu0 = Vector::Zero(pb.spec.dims.s);
  pb.target.chi0 = Vector::Zero(pb.unf.S());
  const int n = pb.spec.dims.n;
  pb.target.omega0 = Vector::Zero(n);
  if (n > 0) {
    Vector vars = Vector::Zero(pb.spec.layout().nvars());
    pb.target.omega0 = pb.spec.F.evaluate(Vector::Zero(pb.spec.n_angles()), vars);
  }
  return pb;
}

inline Problem make_problem(const std::string& model) { return make_problem(load_model(model)); }

// Solver guard used throughout the tests: loose enough for every bundled target.
inline dioph::DiophParams solver_guard() { return {1.0, 1e-3, 2}; }

inline torus::TorusTransform solve(const Problem& pb, const torus::SolverConfig& cfg = {}) {
  return torus::solve_torus(pb.spec, pb.target, pb.unf, solver_guard(), cfg);
}

// Index of the canonical mode k in a transform's mode list, or -1.
inline int mode_index(const torus::TorusTransform& t, const std::vector<int>& k) {
  for (std::size_t i = 0; i < t.modes.size(); ++i)
    if (t.modes[i] == k) return static_cast<int>(i);
  return -1;
}

// Exact conjugacy for phi' = A + eps cos(phi) with rotation number W = sqrt(A^2 - eps^2):
// phi = psi + a(psi), where tan(phi/2) = kappa tan(psi/2) and kappa = sqrt((A + eps)/(A - eps)).
struct RotationOracle {
  double eps;
  double W;

  double A() const { return std::sqrt(W * W + eps * eps); }
  double u() const { return A() - W; }
  double a(double psi) const {
    const double inv_kappa = std::sqrt((A() - eps) / (A() + eps));
    const double phi = 2.0 * std::atan2(std::sin(psi / 2.0), inv_kappa * std::cos(psi / 2.0));
    double d = phi - psi;
    while (d > M_PI) d -= 2.0 * M_PI;
    while (d < -M_PI) d += 2.0 * M_PI;
    return d;
  }
};

// Second-order shift of the eigenvalue lambda_i of Lambda under z' = (Lambda + eps cos(Omega t) E) z:
// sum_j sum_{k = +-1} (E_k)_ij (E_-k)_ji / (lambda_i - lambda_j - i k Omega), E_{+-1} = E'/2 in the
// eigenbasis of Lambda. Returns the coefficient of eps^2.
inline std::complex<double> second_order_shift(const Matrix& Lambda, const Matrix& E, double Omega, int i) {
  Eigen::EigenSolver<Matrix> es(Lambda);
  const Eigen::MatrixXcd T = es.eigenvectors();
  const Eigen::VectorXcd lam = es.eigenvalues();
  const Eigen::MatrixXcd Ep = T.inverse() * E.cast<std::complex<double>>() * T / 2.0;
  const std::complex<double> I(0.0, 1.0);
  std::complex<double> acc = 0.0;
  for (int j = 0; j < lam.size(); ++j)
    for (int k : {-1, 1}) acc += Ep(i, j) * Ep(j, i) / (lam(i) - lam(j) - I * double(k) * Omega);
  return acc;
}

}  // namespace kamrev2::testing
