#pragma once

#include "kamrev2/dioph.hpp"
#include "kamrev2/revlin.hpp"
#include "kamrev2/series.hpp"
#include "kamrev2/systems.hpp"

#include <Eigen/Dense>

#include <complex>
#include <string>
#include <vector>

namespace kamrev2::torus {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using systems::Dims;
using systems::FieldModel;
using systems::SystemSpec;

// Canonical modes over n + N angles: modes[0] is zero, the rest have max |k_i| <= K and
// first nonzero entry positive.
std::vector<std::vector<int>> mode_box(int n_angles, int K);

// cos and sin of <k, theta> for every mode.
struct ModeTrig {
  Vector cos;
  Vector sin;
};
ModeTrig mode_trig(const std::vector<std::vector<int>>& modes, const Vector& theta);

// Matrix-valued trigonometric polynomial sum C_k cos<k,theta> + S_k sin<k,theta>.
// Row i of cos/sin holds the row-major flattening of C_k / S_k for modes[i].
struct FourierItem {
  int rows = 0;
  int cols = 0;
  Matrix cos;
  Matrix sin;

  Matrix value(const std::vector<std::vector<int>>& modes, const Vector& theta) const;
  // d/dtheta_j of the item.
  Matrix derivative(const std::vector<std::vector<int>>& modes, const Vector& theta, int j) const;
  Matrix value(const ModeTrig& trig) const;
  Matrix derivative(const std::vector<std::vector<int>>& modes, const ModeTrig& trig, int j) const;
  Matrix mean() const;
  // Sub-block rows [r0, r0+nr), cols [c0, c0+nc).
  FourierItem block(int r0, int nr, int c0, int nc) const;
};

struct Target {
  Vector omega0;  // n
  Vector mu0;     // s
  Vector chi0;    // S
};

// Parameter values (omega, sigma, mu, chi) at which a field is evaluated.
struct FieldParams {
  Vector omega;
  Vector sigma;
  Vector mu;
  Vector chi;
};

// Transform x = xbar + a, (y, z) = B0 + (I + B1)(ybar, zbar), X untouched, with B0 = (b0; c0)
// and B1 = [[b1, b2], [c1, c2]]. Counterterms shift omega0 + u, sigma = v, mu0 + w, chi0 + W.
struct TorusTransform {
  Dims dims;
  Vector Omega;
  int K = 0;
  std::vector<std::vector<int>> modes;
  FourierItem a;   // n x 1
  FourierItem B0;  // d x 1
  FourierItem B1;  // d x d

  Vector u, v, w, W;
  Vector lambda;  // coordinates of (w, W) in the submersive row space
  Target target;
  Vector omega_prime;
  Matrix M_prime;
  Vector theta_shift;  // always zero: X-equation shift
  Vector X_shift;      // always zero: X-coordinate change

  int iterations = 0;
  std::vector<double> residual_history;
  int unknowns = 0;
  int grid_points = 0;

  // One of a, b0, b1, b2, c0, c1, c2.
  FourierItem item(const std::string& name) const;
  FieldParams params() const;
  // Returns {x, Y} of the torus point at angles theta and normal offset Ybar.
  std::pair<Vector, Vector> embed(const Vector& theta, const Vector& Ybar) const;
};

struct SolverConfig {
  int fourier_cutoff = 0;     // max |k_i| of unknowns; 0 picks max(8, 4 * model modes)
  double newton_tol = 1e-11;
  int max_iters = 30;
  double perturbation_gate = 0.1;
  int precheck_cutoff = 0;    // extra |k|_1 cutoff for the Diophantine precheck
  bool precheck = true;
  int max_unknowns = 4000;
  double divergence_factor = 1e3;
};

int resolve_cutoff(const SystemSpec& spec, const SolverConfig& cfg);

// Unique zero-mean phi with (freq . d/dtheta) phi = rhs. rhs must not depend on the
// polynomial variables. Each mode must satisfy |<freq, k>| >= gamma |k|_1^{-tau}.
series::FourierTaylorField cohomological_solve(const series::FourierTaylorField& rhs,
                                               const Vector& freq, const dioph::DiophParams& guard);

// Orthonormal basis of (s + S) directions spanning the row space of the spectral Jacobian.
Matrix submersive_directions(const revlin::Unfolding& unf, const revlin::InvolutionMatrix& R,
                             const Vector& mu0, const Vector& chi0);

TorusTransform identity_transform(const SystemSpec& spec, const Target& target,
                                  const revlin::Unfolding& unf, int K);

// Newton iteration on the truncated conjugacy equations of the extended system.
TorusTransform solve_torus(const SystemSpec& spec, const Target& target, const revlin::Unfolding& unf,
                           const dioph::DiophParams& dioph, const SolverConfig& cfg = {});

struct SymmetryResiduals {
  double a = 0, b0 = 0, b1 = 0, b2 = 0, c0 = 0, c1 = 0, c2 = 0;
  double max() const;
};

// max over a grid of |E(-theta) - A E(theta) B| for each transform item.
SymmetryResiduals symmetry_residuals(const TorusTransform& t, const revlin::InvolutionMatrix& R);

struct FloquetResidual {
  double torus = 0.0;         // tangency defect of the field at Ybar = 0
  double frequency = 0.0;     // |xbar' - omega_prime| at the torus
  double drift = 0.0;         // constant and linear parts of the ybar-equation
  double reducibility = 0.0;  // zbar-linearization minus [0, M_prime]
  double x_shift = 0.0;       // X' - Omega
  int grid_points = 0;

  double max() const;
};

// Re-evaluates the transformed field on a grid offset by half a cell, finer than the
// solver grid. points_per_angle = 0 picks 2 * (4K + 4), capped at 200k points in total.
FloquetResidual floquet_residual(const FieldModel& model, const FieldParams& params,
                                 const TorusTransform& t, int points_per_angle = 0);
FloquetResidual floquet_residual(const SystemSpec& spec, const TorusTransform& t,
                                 const revlin::Unfolding& unf, int points_per_angle = 0);

struct IntegrationReport {
  double horizon = 0.0;
  double max_distance = 0.0;
  int starts = 0;
  std::vector<std::complex<double>> normal_spectrum;  // eigenvalues of M_prime
  double max_real_part = 0.0;
  double growth_factor = 1.0;  // exp(max_real_part * horizon)
  double bound = 0.0;          // growth_factor * 1e-10
};

// Integrates from `starts` torus points over [0, T] with an adaptive order-7/8 scheme at
// tolerance 1e-12 and measures the distance to the transported torus point.
IntegrationReport verify_by_integration(const FieldModel& model, const FieldParams& params,
                                        const TorusTransform& t, double T, int starts = 4);
IntegrationReport verify_by_integration(const SystemSpec& spec, const TorusTransform& t,
                                        const revlin::Unfolding& unf, double T, int starts = 4);

// Estimated convergence order from (log r_j, log r_{j+1}) pairs with r_j < threshold.
// Infinity when no such pair exists but the history converged.
struct ConvergenceOrder {
  double order = 0.0;
  int pairs = 0;
};
ConvergenceOrder convergence_order(const std::vector<double>& history, double threshold = 1e-3,
                                   double floor = 1e-15);

}  // namespace kamrev2::torus
