#include "kamrev2/io.hpp"

#include "kamrev2/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace kamrev2::io {

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace {

json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json int_array(const std::vector<int>& v) { return json(v); }

Vector read_vector(const json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

Matrix read_matrix(const json& j, int rows, int cols) {
  Matrix A(rows, cols);
  if (static_cast<int>(j.size()) != rows) fail(ErrorKind::SchemaError, "matrix row count mismatch");
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(j[r].size()) != cols) fail(ErrorKind::SchemaError, "matrix column count mismatch");
    for (int c = 0; c < cols; ++c) A(r, c) = j[r][c].get<double>();
  }
  return A;
}

std::string csv_row(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  out += '\n';
  return out;
}

}  // namespace

json to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number(v[i]));
  return out;
}

json to_json(const Matrix& A) {
  json out = json::array();
  for (Eigen::Index r = 0; r < A.rows(); ++r) out.push_back(to_json(Vector(A.row(r).transpose())));
  return out;
}

json to_json(const revlin::ReversibleSpectrum& s) {
  json eig = json::array();
  for (const auto& z : s.eigenvalues()) eig.push_back({number(z.real()), number(z.imag())});
  return {{"nu1", s.nu1}, {"nu2", s.nu2}, {"nu3", s.nu3},
          {"alpha", to_json(s.alpha)}, {"beta", to_json(s.beta)}, {"eigenvalues", eig}};
}

json to_json(const dioph::DiophReport& r) {
  return {{"verdict", r.pass ? "pass" : "fail"},
          {"worst_k", int_array(r.worst_k)},
          {"worst_l", int_array(r.worst_l)},
          {"worst_ratio", number(r.worst_ratio)},
          {"cutoff", r.cutoff}};
}

json to_json(const torus::SymmetryResiduals& r) {
  return {{"a", r.a}, {"b0", r.b0}, {"b1", r.b1}, {"b2", r.b2},
          {"c0", r.c0}, {"c1", r.c1}, {"c2", r.c2}, {"max", r.max()}};
}

json to_json(const torus::FloquetResidual& r) {
  return {{"torus", r.torus},         {"frequency", r.frequency}, {"drift", r.drift},
          {"reducibility", r.reducibility}, {"x_shift", r.x_shift}, {"grid_points", r.grid_points},
          {"max", r.max()}};
}

json to_json(const torus::IntegrationReport& r) {
  json spec = json::array();
  for (const auto& z : r.normal_spectrum) spec.push_back({number(z.real()), number(z.imag())});
  return {{"horizon", r.horizon},         {"starts", r.starts},
          {"max_distance", number(r.max_distance)}, {"normal_spectrum", spec},
          {"max_real_part", r.max_real_part}, {"growth_factor", number(r.growth_factor)},
          {"bound", number(r.bound)}};
}

json to_json(const herman::MeasureBookkeeping& m) {
  return {{"radius", m.radius},
          {"radius_prime", m.radius_prime},
          {"radius_dblprime", m.radius_dblprime},
          {"spacing", m.spacing},
          {"cell", m.cell},
          {"points", m.points},
          {"meas_Gamma", m.meas_Gamma},
          {"meas_Gamma_prime", m.meas_Gamma_prime},
          {"meas_Gamma_dblprime", m.meas_Gamma_dblprime},
          {"meas_G", m.meas_G},
          {"exact_Gamma", m.exact_Gamma},
          {"exact_Gamma_prime", m.exact_Gamma_prime},
          {"exact_Gamma_dblprime", m.exact_Gamma_dblprime},
          {"fraction_G", m.fraction_G},
          {"fraction_G_in_dblprime", m.fraction_G_in_dblprime}};
}

json to_json(const herman::WhitneyReport& r) {
  return {{"order", r.order},
          {"theta_derivative", r.theta_derivative},
          {"transform_derivative", r.transform_derivative},
          {"theta_first_min", r.theta_first_min},
          {"theta_first_max", r.theta_first_max},
          {"consistency", r.consistency},
          {"windows", r.windows},
          {"spacing", r.spacing}};
}

json fourier_entries(const torus::FourierItem& item, const std::vector<std::vector<int>>& modes) {
  json out = json::array();
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    for (const bool sine : {false, true}) {
      if (sine && i == 0) continue;
      const Vector c = (sine ? item.sin : item.cos).row(idx).transpose();
      if (c.size() == 0 || c.cwiseAbs().maxCoeff() == 0.0) continue;
      out.push_back({{"k", int_array(modes[i])}, {"basis", sine ? "sin" : "cos"}, {"c", to_json(c)}});
    }
  }
  return out;
}

torus::FourierItem fourier_item(const json& entries, int rows, int cols,
                                const std::vector<std::vector<int>>& modes) {
  torus::FourierItem item;
  item.rows = rows;
  item.cols = cols;
  const auto nm = static_cast<Eigen::Index>(modes.size());
  item.cos = Matrix::Zero(nm, rows * cols);
  item.sin = Matrix::Zero(nm, rows * cols);
  for (const auto& e : entries) {
    const auto k = e.at("k").get<std::vector<int>>();
    const auto it = std::find(modes.begin(), modes.end(), k);
    if (it == modes.end()) fail(ErrorKind::SchemaError, "Fourier entry outside the mode box");
    const Vector c = read_vector(e.at("c"));
    if (c.size() != rows * cols) fail(ErrorKind::SchemaError, "Fourier entry has the wrong length");
    const bool sine = e.at("basis").get<std::string>() == "sin";
    (sine ? item.sin : item.cos).row(it - modes.begin()) = c.transpose();
  }
  return item;
}

json transform_json(const torus::TorusTransform& t, const TransformChecks& checks) {
  const auto& d = t.dims;
  json doc;
  doc["dims"] = {{"n", d.n}, {"m", d.m}, {"p", d.p}, {"N", d.N}, {"s", d.s}};
  doc["omega"] = to_json(t.Omega);
  doc["fourier_cutoff"] = t.K;
  doc["target"] = {{"omega0", to_json(t.target.omega0)},
                   {"mu0", to_json(t.target.mu0)},
                   {"chi0", to_json(t.target.chi0)}};
  doc["counterterms"] = {{"u", to_json(t.u)}, {"v", to_json(t.v)}, {"w", to_json(t.w)},
                         {"W", to_json(t.W)}, {"lambda", to_json(t.lambda)}};
  doc["omega_prime"] = to_json(t.omega_prime);
  doc["M_prime"] = to_json(t.M_prime);
  doc["fields"] = {{"a", fourier_entries(t.a, t.modes)},
                   {"B0", fourier_entries(t.B0, t.modes)},
                   {"B1", fourier_entries(t.B1, t.modes)}};
  const auto order = torus::convergence_order(t.residual_history);
  json residual = {{"iterations", t.iterations},
                   {"unknowns", t.unknowns},
                   {"grid_points", t.grid_points},
                   {"history", t.residual_history},
                   {"convergence_order", number(order.order)},
                   {"convergence_pairs", order.pairs},
                   {"theta_shift", to_json(t.theta_shift)},
                   {"X_shift", to_json(t.X_shift)}};
  if (checks.symmetry) residual["symmetry"] = to_json(*checks.symmetry);
  if (checks.floquet) residual["floquet"] = to_json(*checks.floquet);
  if (checks.integration) residual["integration"] = to_json(*checks.integration);
  doc["residual"] = residual;
  return doc;
}

torus::TorusTransform transform_from_json(const json& doc) {
  torus::TorusTransform t;
  const auto& dj = doc.at("dims");
  t.dims = {dj.at("n").get<int>(), dj.at("m").get<int>(), dj.at("p").get<int>(), dj.at("N").get<int>(),
            dj.at("s").get<int>()};
  const int n = t.dims.n, dd = t.dims.d(), N = t.dims.N;
  t.Omega = read_vector(doc.at("omega"));
  if (t.Omega.size() != N) fail(ErrorKind::SchemaError, "omega length does not match N");
  t.K = doc.at("fourier_cutoff").get<int>();
  t.modes = torus::mode_box(n + N, t.K);
  const auto& tg = doc.at("target");
  t.target = {read_vector(tg.at("omega0")), read_vector(tg.at("mu0")), read_vector(tg.at("chi0"))};
  const auto& ct = doc.at("counterterms");
  t.u = read_vector(ct.at("u"));
  t.v = read_vector(ct.at("v"));
  t.w = read_vector(ct.at("w"));
  t.W = read_vector(ct.at("W"));
  t.lambda = read_vector(ct.at("lambda"));
  t.omega_prime = read_vector(doc.at("omega_prime"));
  t.M_prime = read_matrix(doc.at("M_prime"), 2 * t.dims.p, 2 * t.dims.p);
  const auto& f = doc.at("fields");
  t.a = fourier_item(f.at("a"), n, 1, t.modes);
  t.B0 = fourier_item(f.at("B0"), dd, 1, t.modes);
  t.B1 = fourier_item(f.at("B1"), dd, dd, t.modes);
  t.theta_shift = Vector::Zero(N);
  t.X_shift = Vector::Zero(N);
  if (doc.contains("residual")) {
    const auto& r = doc["residual"];
    t.iterations = r.value("iterations", 0);
    t.unknowns = r.value("unknowns", 0);
    t.grid_points = r.value("grid_points", 0);
    if (r.contains("history")) t.residual_history = r["history"].get<std::vector<double>>();
  }
  return t;
}

json measure_json(const dioph::MeasureReport& r, const std::vector<double>& gamma_ladder) {
  json ladder = json::array();
  for (double g : gamma_ladder) ladder.push_back({{"gamma", g}, {"fraction", r.fraction_at(g)}});
  return {{"gamma", r.gamma},
          {"fraction", r.fraction},
          {"min_ratio", number(r.min_ratio)},
          {"median_ratio", number(r.median_ratio)},
          {"cutoff", r.cutoff},
          {"points", r.points.size()},
          {"ladder", ladder}};
}

std::string measure_csv(const dioph::MeasureReport& r, const std::vector<double>& gamma_ladder) {
  std::string out = csv_row({"gamma", "fraction"});
  for (double g : gamma_ladder) out += csv_row({format_number(g), format_number(r.fraction_at(g))});
  return out;
}

json family_json(const herman::WhitneyFamily& fam, const std::optional<herman::WhitneyReport>& whitney) {
  json records = json::array();
  for (const auto& rec : fam.records) {
    json j = {{"index", int_array(rec.index)},
              {"mu", to_json(rec.mu)},
              {"in_Gamma_prime", rec.in_Gamma_prime},
              {"in_Gamma_dblprime", rec.in_Gamma_dblprime},
              {"in_G", rec.in_G},
              {"status", rec.status}};
    if (rec.status != "outside") {
      j["Upsilon"] = to_json(rec.Upsilon);
      j["Phi"] = to_json(rec.Phi);
      j["Psi"] = to_json(rec.Psi);
      j["contraction"] = rec.contraction;
      j["dioph"] = {{"pass", rec.dioph_pass},
                    {"worst_ratio", number(rec.worst_ratio)},
                    {"worst_k", int_array(rec.worst_k)},
                    {"worst_l", int_array(rec.worst_l)}};
    }
    if (rec.status == "solved") {
      j["Theta"] = to_json(rec.Theta);
      j["omega_prime"] = to_json(rec.omega_prime);
      j["spectrum"] = to_json(rec.spectrum);
      j["iterations"] = rec.iterations;
      j["final_residual"] = rec.final_residual;
      j["symmetry"] = rec.symmetry;
      j["consistency"] = rec.consistency;
    }
    if (!rec.error.empty()) j["error"] = rec.error;
    records.push_back(std::move(j));
  }
  json ladder = json::array();
  for (const auto& row : fam.ladder)
    ladder.push_back({{"gamma", row.gamma},
                      {"fraction", row.fraction},
                      {"fraction_in_dblprime", row.fraction_in_dblprime}});
  json doc = {{"s", fam.s}, {"grid", fam.grid}, {"measure", to_json(fam.measure)}, {"ladder", ladder}};
  doc["whitney"] = whitney ? to_json(*whitney) : json(nullptr);
  doc["records"] = std::move(records);
  return doc;
}

std::string family_measures_csv(const herman::WhitneyFamily& fam) {
  std::string out = csv_row({"gamma", "fraction_in_Gamma", "fraction_in_Gamma_dblprime"});
  for (const auto& row : fam.ladder)
    out += csv_row({format_number(row.gamma), format_number(row.fraction),
                    format_number(row.fraction_in_dblprime)});
  return out;
}

std::string theta_csv(const herman::WhitneyFamily& fam) {
  std::vector<std::string> header;
  for (int i = 0; i < fam.s; ++i) header.push_back("mu_" + std::to_string(i));
  int m = 0;
  for (const auto& rec : fam.records)
    if (rec.status == "solved") {
      m = static_cast<int>(rec.Theta.size());
      break;
    }
  for (int i = 0; i < m; ++i) header.push_back("theta_" + std::to_string(i));
  std::string out = csv_row(header);
  for (const auto& rec : fam.records) {
    if (!(rec.in_G && rec.status == "solved")) continue;
    std::vector<std::string> row;
    for (int i = 0; i < fam.s; ++i) row.push_back(format_number(rec.mu[i]));
    for (int i = 0; i < m; ++i) row.push_back(format_number(rec.Theta[i]));
    out += csv_row(row);
  }
  return out;
}

std::string family_long_csv(const herman::WhitneyFamily& fam) {
  std::vector<std::string> header{"record"};
  for (int i = 0; i < fam.s; ++i) header.push_back("mu_" + std::to_string(i));
  header.insert(header.end(), {"quantity", "component", "value"});
  std::string out = csv_row(header);
  for (std::size_t r = 0; r < fam.records.size(); ++r) {
    const auto& rec = fam.records[r];
    if (rec.status == "outside") continue;
    std::vector<std::string> prefix{std::to_string(r)};
    for (int i = 0; i < fam.s; ++i) prefix.push_back(format_number(rec.mu[i]));
    auto emit = [&](const std::string& name, const Vector& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        auto row = prefix;
        row.insert(row.end(), {name, std::to_string(i), format_number(v[i])});
        out += csv_row(row);
      }
    };
    emit("in_G", Vector::Constant(1, rec.in_G ? 1.0 : 0.0));
    emit("worst_ratio", Vector::Constant(1, rec.worst_ratio));
    emit("Upsilon", rec.Upsilon);
    emit("Phi", rec.Phi);
    emit("Psi", rec.Psi);
    if (rec.status == "solved") {
      emit("Theta", rec.Theta);
      emit("omega_prime", rec.omega_prime);
      emit("alpha", rec.spectrum.alpha);
      emit("beta", rec.spectrum.beta);
    }
  }
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::InvalidArgument, "cannot open " + path + " for writing");
  os << content;
  if (!os) fail(ErrorKind::InvalidArgument, "failed writing " + path);
}

}  // namespace kamrev2::io
