#pragma once

#include "kamrev2/dioph.hpp"
#include "kamrev2/revlin.hpp"
#include "kamrev2/systems.hpp"
#include "kamrev2/torus.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace kamrev2::herman {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using systems::SystemSpec;
using torus::FieldParams;
using torus::TorusTransform;

// The (m + s + S + n + N)-parameter family: omega replaces F + Delta, M_new(mu, chi) replaces
// M(mu) and X' = Omega + theta.
struct ExtendedSystem {
  SystemSpec spec;
  revlin::Unfolding unf;
  systems::FieldModel model;

  int parameter_count() const;
  // (x', y', z', X') at the point q.
  Vector velocity(const systems::Point& q, const FieldParams& params, const Vector& theta) const;
};

ExtendedSystem extend_system(const SystemSpec& spec, const revlin::Unfolding& unf);

struct Counterterms {
  Vector u, v, w, W;
};

// Counterterms at (omega, theta = 0, mu, chi).
using CountertermMap =
    std::function<Counterterms(const Vector& omega, const Vector& mu, const Vector& chi)>;
using MuMap = std::function<Vector(const Vector& mu)>;
using DeltaMap = std::function<Vector(const Vector& sigma, const Vector& mu)>;

// Counterterm map backed by solve_torus probes (precheck off; the divisor guard still applies).
CountertermMap solver_counterterms(const SystemSpec& spec, const revlin::Unfolding& unf,
                                   const dioph::DiophParams& dioph, const torus::SolverConfig& cfg);

MuMap frequency_map(const SystemSpec& spec);  // F(mu)
DeltaMap shift_map(const SystemSpec& spec);   // Delta(sigma, mu)

struct KeyOptions {
  double tol = 1e-10;
  int max_iters = 50;
  double fd_step = 1e-4;  // five-point stencil step
};

struct KeySolution {
  Vector phi;  // omega
  Vector psi;  // chi
  int iterations = 0;
  double residual = 0.0;
};

// Solves omega + u = F(mu + w) + Delta(v, mu + w), chi + W = 0 for (omega, chi).
KeySolution solve_key_system(const Vector& mu, const CountertermMap& ct, const MuMap& F,
                             const DeltaMap& Delta, int n, int S, const KeyOptions& opt = {});

struct ShiftOptions {
  double tol = 1e-12;
  int max_iters = 200;
};

struct ShiftInverse {
  Vector Upsilon;
  int iterations = 0;
  double contraction = 0.0;  // largest observed ratio of successive steps
};

// Fixed point mu0 = mu - w(mu0); the result must stay in the ball of the given radius.
ShiftInverse invert_shift(const Vector& mu, const MuMap& w_along, double radius,
                          const ShiftOptions& opt = {});

struct SweepConfig {
  double radius = 1.0;
  int grid = 2001;  // points per axis over [-r, r]^s
  double eps2 = 0.1;
  dioph::DiophParams dioph{2.5, 1e-4, 2};
  int dioph_cutoff = 200;
  int Q = 1;
  int cL = 1;
  torus::SolverConfig solver;
  KeyOptions key;
  int threads = 1;
  bool keep_transforms = false;
  bool check_consistency = true;
  dioph::SphereOptions sphere;
  std::vector<double> gamma_ladder{1e-2, 1e-3, 1e-4, 1e-5};
  // Scales the small-divisor guard inside key-system probes; the stencil samples
  // frequencies near, not at, the grid point. Membership in G still uses dioph.gamma.
  double probe_guard = 0.25;

  void validate(const SystemSpec& spec) const;
};

struct FamilyRecord {
  std::vector<int> index;
  Vector mu;
  bool in_Gamma_prime = false;
  bool in_Gamma_dblprime = false;
  bool dioph_pass = false;
  bool in_G = false;
  double worst_ratio = 0.0;
  std::vector<int> worst_k, worst_l;
  Vector Theta, Upsilon, Phi, Psi;
  Vector omega_prime;
  revlin::ReversibleSpectrum spectrum;
  std::string status = "outside";  // outside | computed | not_diophantine | solved | error
  std::string error;
  int iterations = 0;
  double final_residual = 0.0;
  double symmetry = 0.0;
  double consistency = 0.0;
  double contraction = 0.0;
  std::optional<TorusTransform> transform;
};

struct MeasureBookkeeping {
  double radius = 0.0;
  double radius_prime = 0.0;      // r (1 - eps2/3)^(1/s)
  double radius_dblprime = 0.0;   // r (1 - 2 eps2/3)^(1/s)
  double cell = 0.0;              // grid cell volume h^s
  double spacing = 0.0;
  double meas_Gamma = 0.0;        // grid measures
  double meas_Gamma_prime = 0.0;
  double meas_Gamma_dblprime = 0.0;
  double meas_G = 0.0;
  double exact_Gamma = 0.0;       // closed-form ball volumes
  double exact_Gamma_prime = 0.0;
  double exact_Gamma_dblprime = 0.0;
  double fraction_G = 0.0;             // meas(G) / meas(Gamma)
  double fraction_G_in_dblprime = 0.0; // meas(G) / meas(Gamma'')
  int points = 0;
};

struct LadderRow {
  double gamma = 0.0;
  double fraction = 0.0;             // relative to Gamma
  double fraction_in_dblprime = 0.0; // relative to Gamma''
};

struct WhitneyFamily {
  int s = 0;
  int grid = 0;
  std::vector<FamilyRecord> records;
  MeasureBookkeeping measure;
  std::vector<LadderRow> ladder;
};

// Closed-form radii of Gamma' and Gamma''.
std::pair<double, double> shrunken_radii(double r, double eps2, int s);

// G fractions at another gamma from the stored worst ratios (same scan).
LadderRow ladder_row(const WhitneyFamily& fam, double gamma);

WhitneyFamily sweep(const SystemSpec& spec, const revlin::Unfolding& unf, const SweepConfig& cfg);

struct WhitneyReport {
  int order = 0;
  std::vector<double> theta_derivative;       // max |D^j Theta|, j = 1..order
  std::vector<double> transform_derivative;   // same for transform coefficients (if kept)
  double theta_first_min = 0.0;               // range of first differences of Theta
  double theta_first_max = 0.0;
  double consistency = 0.0;                   // max |D^j_h - D^j_2h| over windows
  int windows = 0;
  double spacing = 0.0;
};

WhitneyReport whitney_report(const WhitneyFamily& fam, int cL);

}  // namespace kamrev2::herman
