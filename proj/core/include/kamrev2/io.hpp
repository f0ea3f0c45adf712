#pragma once

#include "kamrev2/dioph.hpp"
#include "kamrev2/herman.hpp"
#include "kamrev2/revlin.hpp"
#include "kamrev2/torus.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

namespace kamrev2::io {

using json = nlohmann::ordered_json;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Non-finite entries become null.
json to_json(const Vector& v);
json to_json(const Matrix& A);  // row-major nested arrays
json to_json(const revlin::ReversibleSpectrum& s);
json to_json(const dioph::DiophReport& r);
json to_json(const torus::SymmetryResiduals& r);
json to_json(const torus::FloquetResidual& r);
json to_json(const torus::IntegrationReport& r);
json to_json(const herman::MeasureBookkeeping& m);
json to_json(const herman::WhitneyReport& r);

// Fourier entries {"k", "basis", "c"} with c the row-major coefficient; zero entries omitted.
json fourier_entries(const torus::FourierItem& item, const std::vector<std::vector<int>>& modes);
torus::FourierItem fourier_item(const json& entries, int rows, int cols,
                                const std::vector<std::vector<int>>& modes);

struct TransformChecks {
  std::optional<torus::SymmetryResiduals> symmetry;
  std::optional<torus::FloquetResidual> floquet;
  std::optional<torus::IntegrationReport> integration;
};

json transform_json(const torus::TorusTransform& t, const TransformChecks& checks = {});
// Inverse of transform_json for the fields that define the torus (diagnostics are dropped).
torus::TorusTransform transform_from_json(const json& doc);

json measure_json(const dioph::MeasureReport& r, const std::vector<double>& gamma_ladder);
// gamma, fraction rows for a dioph measure run.
std::string measure_csv(const dioph::MeasureReport& r, const std::vector<double>& gamma_ladder);

json family_json(const herman::WhitneyFamily& fam, const std::optional<herman::WhitneyReport>& whitney);
std::string family_measures_csv(const herman::WhitneyFamily& fam);
// mu columns followed by Theta columns, one row per solved G point.
std::string theta_csv(const herman::WhitneyFamily& fam);
// Long format: index, mu columns, quantity, component, value.
std::string family_long_csv(const herman::WhitneyFamily& fam);

// Shortest round-trip decimal form; "nan", "inf", "-inf" for non-finite values.
std::string format_number(double x);

void write_file(const std::string& path, const std::string& content);

}  // namespace kamrev2::io
