#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace kamrev2::dioph {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct DiophParams {
  double tau = 2.5;
  double gamma = 1e-4;
  int L = 2;

  void validate() const;
};

struct DiophReport {
  std::vector<int> worst_k;
  std::vector<int> worst_l;
  double worst_ratio = std::numeric_limits<double>::infinity();
  int cutoff = 0;
  bool pass = true;
};

// Nonzero k in Z^dim with |k|_1 <= K_max and first nonzero entry positive, ordered by
// (|k|_1, lexicographic k). (k, l) and (-k, -l) give the same divisor, so this half is enough.
class ModeTable {
 public:
  ModeTable(int dim, int K_max, double tau);
  int dim() const noexcept { return dim_; }
  int cutoff() const noexcept { return K_max_; }
  double tau() const noexcept { return tau_; }
  std::size_t size() const noexcept { return weight_.size(); }
  const int* mode(std::size_t i) const { return &modes_[i * static_cast<std::size_t>(dim_)]; }
  double weight(std::size_t i) const { return weight_[i]; }  // |k|_1^tau

 private:
  int dim_;
  int K_max_;
  double tau_;
  std::vector<int> modes_;
  std::vector<double> weight_;
};

// All l in Z^nu with |l|_1 <= L (zero included), ordered by (|l|_1, lexicographic l).
std::vector<std::vector<int>> l_vectors(int nu, int L, bool include_zero = true);

DiophReport affine_dioph_check(const Vector& F, const Vector& beta, const DiophParams& params,
                               int K_max);
DiophReport affine_dioph_check(const Vector& F, const Vector& beta, const DiophParams& params,
                               const ModeTable& table);

// Derivatives D^q of F (n components) and beta (nu components) at a point, for |q| <= order.
struct JetData {
  Vector center;
  int order = 0;
  std::vector<std::vector<int>> multi_indices;  // graded order, first is q = 0
  Matrix F;     // n x count
  Matrix beta;  // nu x count

  int s() const noexcept { return static_cast<int>(center.size()); }
  int n() const noexcept { return static_cast<int>(F.rows()); }
  int nu() const noexcept { return static_cast<int>(beta.rows()); }
  int index_of(const std::vector<int>& q) const;
  void validate() const;
};

// Multi-indices q in N^s with |q| <= order; graded, lexicographically descending within a degree.
std::vector<std::vector<int>> multi_indices(int s, int order);

using VectorMap = std::function<Vector(const Vector&)>;

// Jet of (F, beta) by tensor-product central differences with step h.
JetData jet_by_differences(const VectorMap& F, const VectorMap& beta, const Vector& center,
                           int order, double h = 1e-3);

struct SphereOptions {
  int points = 2000;        // sphere sample size for s <= 3
  int mc_points = 20000;    // for s > 3
  int refine_steps = 20;
  std::uint64_t seed = 0;
};

// Sphere search result: `value` is the refined estimate; [lower, upper] bracket the true optimum.
struct SphereBound {
  double value = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

SphereBound rho_Q(const JetData& jet, int Q = -1, const SphereOptions& opt = {});
SphereBound xi_Q(const JetData& jet, const std::vector<int>& l, int Q = -1,
                 const SphereOptions& opt = {});

struct NondegeneracyResult {
  bool pass = false;
  int case_tag = 0;
  std::string detail;
};

NondegeneracyResult nondegeneracy_check(const JetData& jet, int Q, int L,
                                        const SphereOptions& opt = {});

struct Ball {
  Vector center;
  double radius = 1.0;
};

struct Sampler {
  enum class Kind { Grid, MonteCarlo };
  Kind kind = Kind::Grid;
  int points_per_axis = 101;
  int mc_points = 10000;
  std::uint64_t seed = 0;
};

struct MeasureReport {
  std::vector<Vector> points;
  std::vector<double> weights;
  std::vector<double> worst_ratio;
  double gamma = 0.0;
  double fraction = 0.0;
  double min_ratio = 0.0;
  double median_ratio = 0.0;
  int cutoff = 0;

  // Fraction of weighted samples whose worst ratio is at least g (same scan, other gamma).
  double fraction_at(double g) const;
};

// Sample points of a ball with quadrature weights; grid weights are trapezoidal.
void sample_ball(const Ball& ball, const Sampler& sampler, std::vector<Vector>& points,
                 std::vector<double>& weights);

MeasureReport measure_estimate(const Ball& K, const VectorMap& F_tilde, const VectorMap& beta_tilde,
                               const Vector& Omega, const DiophParams& params,
                               const Sampler& sampler, int K_max, int threads = 1,
                               std::optional<DiophParams> omega_star = std::nullopt);

}  // namespace kamrev2::dioph
