#include "kamrev2/systems.hpp"

#include "kamrev2/errors.hpp"

#include "json.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace kamrev2::systems {

using series::Basis;
using series::Poly;
using series::Term;
using series::VarLayout;
using json = nlohmann::json;

namespace {

const char* const kFieldNames[] = {"F", "Delta", "M", "Z", "xi", "eta", "zeta", "f", "g", "h"};

FourierTaylorField* field_by_name(SystemSpec& s, const std::string& name) {
  if (name == "F") return &s.F;
  if (name == "Delta") return &s.Delta;
  if (name == "M") return &s.M;
  if (name == "Z") return &s.Z;
  if (name == "xi") return &s.xi;
  if (name == "eta") return &s.eta;
  if (name == "zeta") return &s.zeta;
  if (name == "f") return &s.f;
  if (name == "g") return &s.g;
  if (name == "h") return &s.h;
  return nullptr;
}

const FourierTaylorField* field_by_name(const SystemSpec& s, const std::string& name) {
  return field_by_name(const_cast<SystemSpec&>(s), name);
}

int target_dim_of(const std::string& name, const Dims& d) {
  if (name == "F" || name == "Delta" || name == "xi" || name == "f") return d.n;
  if (name == "eta" || name == "g") return d.m;
  if (name == "zeta" || name == "h") return 2 * d.p;
  if (name == "M") return 4 * d.p * d.p;
  return d.m * 2 * d.p;  // Z
}

revlin::MatrixPolynomial to_matrix_polynomial(const FourierTaylorField& fld, int rows, int cols,
                                              const VarLayout& L) {
  revlin::MatrixPolynomial out(rows, cols, L.s);
  for (const auto& t : fld.terms()) {
    std::vector<int> e(L.s);
    for (int i = 0; i < L.s; ++i) e[i] = t.d[L.mu(i)];
    Matrix C(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) C(r, c) = t.c[r * cols + c];
    out.add_term(e, C);
  }
  return out;
}

// Field sum_j A(mu)[:, j] z_j from a mu-only matrix field A with the given row count.
FourierTaylorField linear_z_field(const FourierTaylorField& A, int rows, int n_angles,
                                  const VarLayout& L) {
  const int dz = 2 * L.p;
  FourierTaylorField out(rows, n_angles, L);
  for (const auto& t : A.terms())
    for (int j = 0; j < dz; ++j) {
      Vector col(rows);
      for (int r = 0; r < rows; ++r) col[r] = t.c[r * dz + j];
      auto d = t.d;
      d[L.z(j)] += 1;
      out.add(t.k, t.basis, d, col);
    }
  return out;
}

std::string describe_term(const std::string& field, const Term& t, const VarLayout& L) {
  std::ostringstream os;
  os << field << " term k=(";
  for (std::size_t i = 0; i < t.k.size(); ++i) os << (i ? "," : "") << t.k[i];
  os << ") basis=" << (t.basis == Basis::Cos ? "cos" : "sin") << " d=(y:";
  auto dump = [&](int from, int count) {
    os << "[";
    for (int i = 0; i < count; ++i) os << (i ? "," : "") << t.d[from + i];
    os << "]";
  };
  dump(L.y(0), L.m);
  os << " z:";
  dump(L.m, 2 * L.p);
  os << " sigma:";
  dump(L.m + 2 * L.p, L.m);
  os << " mu:";
  dump(2 * L.m + 2 * L.p, L.s);
  os << ")";
  return os.str();
}

struct Degrees {
  int yz = 0, sigma = 0, mu = 0;
};

Degrees degrees_of(const Term& t, const VarLayout& L) {
  Degrees d;
  for (int i = 0; i < L.m; ++i) d.yz += t.d[L.y(i)];
  for (int i = 0; i < 2 * L.p; ++i) d.yz += t.d[L.z(i)];
  for (int i = 0; i < L.m; ++i) d.sigma += t.d[L.sigma(i)];
  for (int i = 0; i < L.s; ++i) d.mu += t.d[L.mu(i)];
  return d;
}

bool has_angles(const Term& t) {
  for (int v : t.k)
    if (v != 0) return true;
  return false;
}

std::vector<Poly> involution_substitution(const SystemSpec& spec) {
  const VarLayout L = spec.layout();
  const int nv = L.nvars();
  std::vector<Poly> subs;
  for (int i = 0; i < nv; ++i) subs.push_back(Poly::variable(nv, i));
  for (int i = 0; i < L.m; ++i) subs[L.y(i)] = Poly::variable(nv, L.y(i)).scaled(-1.0);
  const Matrix& R = spec.R.R();
  for (int i = 0; i < 2 * L.p; ++i) {
    Poly p(nv);
    for (int j = 0; j < 2 * L.p; ++j)
      if (R(i, j) != 0.0) p = p + Poly::variable(nv, L.z(j)).scaled(R(i, j));
    subs[L.z(i)] = p;
  }
  return subs;
}

FourierTaylorField apply_involution(const FourierTaylorField& f, const std::vector<Poly>& subs) {
  return f.substitute(subs).reflect_angles();
}

double max_coefficient(const FourierTaylorField& f) {
  double m = 0.0;
  for (const auto& t : f.terms()) m = std::max(m, t.c.cwiseAbs().maxCoeff());
  return m;
}

// Multiplies every term by mu^e.
FourierTaylorField times_mu_monomial(const FourierTaylorField& f, const std::vector<int>& e) {
  const VarLayout L = f.layout();
  FourierTaylorField out(f.target_dim(), f.n_angles(), L);
  for (const auto& t : f.terms()) {
    auto d = t.d;
    for (int i = 0; i < L.s; ++i) d[L.mu(i)] += e[i];
    out.add(t.k, t.basis, d, t.c);
  }
  return out;
}

using MuPoly = std::map<std::vector<int>, Matrix>;

int mu_degree(const std::vector<int>& e) {
  int s = 0;
  for (int v : e) s += v;
  return s;
}

MuPoly mupoly_mul(const MuPoly& a, const MuPoly& b, int cap) {
  MuPoly out;
  for (const auto& [ea, A] : a)
    for (const auto& [eb, B] : b) {
      std::vector<int> e(ea.size());
      for (std::size_t i = 0; i < e.size(); ++i) e[i] = ea[i] + eb[i];
      if (mu_degree(e) > cap) continue;
      Matrix P = A * B;
      auto it = out.find(e);
      if (it == out.end())
        out.emplace(e, P);
      else
        it->second += P;
    }
  return out;
}

MuPoly to_mupoly(const revlin::MatrixPolynomial& P) {
  MuPoly out;
  for (const auto& t : P.terms()) {
    auto it = out.find(t.exponents);
    if (it == out.end())
      out.emplace(t.exponents, t.coeff);
    else
      it->second += t.coeff;
  }
  return out;
}

void check_caps(const SystemSpec& spec, const ParseOptions& opt) {
  const VarLayout L = spec.layout();
  for (const char* name : kFieldNames) {
    const auto* f = field_by_name(spec, name);
    for (const auto& t : f->terms()) {
      const Degrees d = degrees_of(t, L);
      if (d.mu > opt.max_mu_degree)
        fail(ErrorKind::SchemaError, describe_term(name, t, L) + " exceeds the mu degree cap");
      if (d.yz + d.sigma > opt.max_normal_degree)
        fail(ErrorKind::SchemaError, describe_term(name, t, L) + " exceeds the (y,z,sigma) degree cap");
    }
  }
}

std::vector<int> read_int_array(const json& j, std::size_t expected, const std::string& what) {
  if (!j.is_array() || j.size() != expected) {
    std::ostringstream os;
    os << what << " must be an array of " << expected << " integers";
    fail(ErrorKind::SchemaError, os.str());
  }
  std::vector<int> out;
  for (const auto& v : j) {
    if (!v.is_number_integer()) fail(ErrorKind::SchemaError, what + " entries must be integers");
    out.push_back(v.get<int>());
  }
  return out;
}

Vector read_real_array(const json& j, std::size_t expected, const std::string& what) {
  if (!j.is_array() || j.size() != expected) {
    std::ostringstream os;
    os << what << " must be an array of " << expected << " numbers";
    fail(ErrorKind::SchemaError, os.str());
  }
  Vector out(static_cast<Eigen::Index>(expected));
  for (std::size_t i = 0; i < expected; ++i) {
    if (!j[i].is_number()) fail(ErrorKind::SchemaError, what + " entries must be numbers");
    out[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return out;
}

Term read_term(const json& jt, const std::string& field, const Dims& dims, int target) {
  if (!jt.is_object()) fail(ErrorKind::SchemaError, field + " entries must be objects");
  for (const auto& [key, _] : jt.items())
    if (key != "k" && key != "basis" && key != "d" && key != "c")
      fail(ErrorKind::SchemaError, field + " entry has unknown key '" + key + "'");
  const VarLayout L{dims.m, dims.p, dims.s};
  Term t;
  const int na = dims.n + dims.N;
  t.k = jt.contains("k") ? read_int_array(jt["k"], na, field + ".k") : std::vector<int>(na, 0);
  t.basis = Basis::Cos;
  if (jt.contains("basis")) {
    const auto& b = jt["basis"];
    if (!b.is_string() || (b != "cos" && b != "sin"))
      fail(ErrorKind::SchemaError, field + ".basis must be \"cos\" or \"sin\"");
    t.basis = b == "cos" ? Basis::Cos : Basis::Sin;
  }
  t.d.assign(L.nvars(), 0);
  if (jt.contains("d")) {
    const auto& jd = jt["d"];
    if (!jd.is_object()) fail(ErrorKind::SchemaError, field + ".d must be an object");
    for (const auto& [key, val] : jd.items()) {
      int from = 0, count = 0;
      if (key == "y") {
        from = L.y(0);
        count = L.m;
      } else if (key == "z") {
        from = L.m;
        count = 2 * L.p;
      } else if (key == "sigma") {
        from = L.m + 2 * L.p;
        count = L.m;
      } else if (key == "mu") {
        from = 2 * L.m + 2 * L.p;
        count = L.s;
      } else {
        fail(ErrorKind::SchemaError, field + ".d has unknown variable group '" + key + "'");
      }
      const auto e = read_int_array(val, count, field + ".d." + key);
      for (int i = 0; i < count; ++i) {
        if (e[i] < 0) fail(ErrorKind::SchemaError, field + ".d exponents must be non-negative");
        t.d[from + i] = e[i];
      }
    }
  }
  if (!jt.contains("c")) fail(ErrorKind::SchemaError, field + " entry lacks coefficients 'c'");
  t.c = read_real_array(jt["c"], target, field + ".c");
  return t;
}

json write_term(const Term& t, const VarLayout& L) {
  json jt;
  jt["k"] = t.k;
  jt["basis"] = t.basis == Basis::Cos ? "cos" : "sin";
  json jd;
  auto slice = [&](int from, int count) {
    return std::vector<int>(t.d.begin() + from, t.d.begin() + from + count);
  };
  jd["y"] = slice(0, L.m);
  jd["z"] = slice(L.m, 2 * L.p);
  jd["sigma"] = slice(L.m + 2 * L.p, L.m);
  jd["mu"] = slice(2 * L.m + 2 * L.p, L.s);
  jt["d"] = jd;
  jt["c"] = std::vector<double>(t.c.data(), t.c.data() + t.c.size());
  return jt;
}

}  // namespace

revlin::MatrixPolynomial SystemSpec::M_poly() const {
  return to_matrix_polynomial(M, 2 * dims.p, 2 * dims.p, layout());
}

revlin::MatrixPolynomial SystemSpec::Z_poly() const {
  return to_matrix_polynomial(Z, dims.m, 2 * dims.p, layout());
}

double SystemSpec::perturbation_norm() const {
  return f.coefficient_norm() + g.coefficient_norm() + h.coefficient_norm();
}

SystemSpec SystemSpec::with_perturbation_scaled(double c) const {
  SystemSpec out = *this;
  out.f = f.scaled(c);
  out.g = g.scaled(c);
  out.h = h.scaled(c);
  return out;
}

SystemSpec make_empty_spec(const Dims& dims, const Vector& omega) {
  if (dims.n < 0 || dims.m < 1 || dims.p < 0 || dims.N < 1 || dims.s < 1)
    fail(ErrorKind::SchemaError, "dims must satisfy n >= 0, m >= 1, p >= 0, N >= 1, s >= 1");
  if (omega.size() != dims.N) fail(ErrorKind::SchemaError, "omega must have N entries");
  SystemSpec s;
  s.dims = dims;
  s.omega = omega;
  Matrix R = Matrix::Zero(2 * dims.p, 2 * dims.p);
  for (int i = 0; i < dims.p; ++i) {
    R(i, i) = 1.0;
    R(dims.p + i, dims.p + i) = -1.0;
  }
  s.R = revlin::check_involution(R);
  const VarLayout L = s.layout();
  const int na = s.n_angles();
  for (const char* name : kFieldNames)
    *field_by_name(s, name) = FourierTaylorField(target_dim_of(name, dims), na, L);
  return s;
}

void check_order_conditions(const SystemSpec& spec) {
  const VarLayout L = spec.layout();
  auto violation = [&](const std::string& field, const Term& t, const std::string& why) {
    fail(ErrorKind::OrderViolation, describe_term(field, t, L) + ": " + why);
  };
  auto only_mu = [&](const std::string& field, const FourierTaylorField& f) {
    for (const auto& t : f.terms()) {
      if (has_angles(t)) violation(field, t, "must not depend on the angles");
      const Degrees d = degrees_of(t, L);
      if (d.yz > 0 || d.sigma > 0) violation(field, t, "may depend on mu only");
    }
  };
  only_mu("F", spec.F);
  only_mu("M", spec.M);
  only_mu("Z", spec.Z);
  for (const auto& t : spec.Delta.terms()) {
    if (has_angles(t)) violation("Delta", t, "must not depend on the angles");
    const Degrees d = degrees_of(t, L);
    if (d.yz > 0) violation("Delta", t, "may depend on (sigma, mu) only");
    if (d.sigma < 1) violation("Delta", t, "Delta = O(sigma) forbids sigma-degree 0");
  }
  for (const auto& t : spec.xi.terms()) {
    if (has_angles(t)) violation("xi", t, "must not depend on the angles");
    if (degrees_of(t, L).yz < 1) violation("xi", t, "xi = O(y,z) forbids (y,z)-degree 0");
  }
  for (const auto& t : spec.eta.terms()) {
    if (has_angles(t)) violation("eta", t, "must not depend on the angles");
    if (degrees_of(t, L).yz < 2) violation("eta", t, "eta = O_2(y,z) forbids (y,z)-degree <= 1");
  }
  for (const auto& t : spec.zeta.terms()) {
    if (has_angles(t)) violation("zeta", t, "must not depend on the angles");
    const Degrees d = degrees_of(t, L);
    if (d.yz + d.sigma < 2)
      violation("zeta", t, "zeta = O_2(y,z,sigma) forbids (y,z,sigma)-degree <= 1");
  }
}

double exact_reversibility_defect(const SystemSpec& spec) {
  const VarLayout L = spec.layout();
  const int na = spec.n_angles();
  const auto subs = involution_substitution(spec);
  const FourierTaylorField Vx = spec.F.plus(spec.Delta).plus(spec.xi).plus(spec.f);
  FourierTaylorField Vy = spec.eta.plus(spec.g);
  if (spec.has_Z()) Vy = Vy.plus(linear_z_field(spec.Z, spec.dims.m, na, L));
  const FourierTaylorField Vz =
      linear_z_field(spec.M, 2 * spec.dims.p, na, L).plus(spec.zeta).plus(spec.h);
  double defect = 0.0;
  defect = std::max(defect, max_coefficient(apply_involution(Vx, subs).plus(Vx.scaled(-1.0))));
  defect = std::max(defect, max_coefficient(apply_involution(Vy, subs).plus(Vy.scaled(-1.0))));
  if (spec.dims.p > 0)
    defect = std::max(defect,
                      max_coefficient(apply_involution(Vz, subs).plus(Vz.left_multiply(spec.R.R()))));
  return defect;
}

void validate_system(const SystemSpec& spec, const ParseOptions& opt) {
  const Dims& d = spec.dims;
  if (d.n < 0 || d.m < 1 || d.p < 0 || d.N < 1 || d.s < 1)
    fail(ErrorKind::SchemaError, "dims must satisfy n >= 0, m >= 1, p >= 0, N >= 1, s >= 1");
  if (spec.omega.size() != d.N) fail(ErrorKind::SchemaError, "omega must have N entries");
  if (spec.R.p() != d.p) fail(ErrorKind::SchemaError, "R must be 2p x 2p");
  check_caps(spec, opt);
  check_order_conditions(spec);
  const double defect = exact_reversibility_defect(spec);
  if (!(defect < 1e-10)) {
    std::ostringstream os;
    os << "field is not reversible under (x,y,z,X) -> (-x,-y,Rz,-X); parity defect " << defect;
    fail(ErrorKind::NotReversible, os.str());
  }
  if (opt.check_omega) {
    const auto rep = dioph::affine_dioph_check(spec.omega, Vector(0), spec.omega_dioph, opt.omega_cutoff);
    if (!rep.pass) {
      std::ostringstream os;
      os << "Omega fails (tau*, gamma*) = (" << spec.omega_dioph.tau << ", " << spec.omega_dioph.gamma
         << ") at k=(";
      for (std::size_t i = 0; i < rep.worst_k.size(); ++i) os << (i ? "," : "") << rep.worst_k[i];
      os << "), ratio " << rep.worst_ratio;
      fail(ErrorKind::OmegaNotDiophantine, os.str());
    }
  }
}

SystemSpec parse_system(const std::string& document, const ParseOptions& opt) {
  json j;
  try {
    j = json::parse(document);
  } catch (const json::exception& e) {
    fail(ErrorKind::SchemaError, std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::SchemaError, "model document must be an object");
  for (const auto& [key, _] : j.items())
    if (key != "name" && key != "dims" && key != "omega" && key != "R" && key != "dioph_star" &&
        key != "fields" && key != "description")
      fail(ErrorKind::SchemaError, "unknown top-level key '" + key + "'");
  if (!j.contains("dims") || !j["dims"].is_object()) fail(ErrorKind::SchemaError, "missing dims");
  Dims dims;
  for (const auto& [key, val] : j["dims"].items()) {
    if (!val.is_number_integer()) fail(ErrorKind::SchemaError, "dims." + key + " must be an integer");
    const int v = val.get<int>();
    if (key == "n") dims.n = v;
    else if (key == "m") dims.m = v;
    else if (key == "p") dims.p = v;
    else if (key == "N") dims.N = v;
    else if (key == "s") dims.s = v;
    else fail(ErrorKind::SchemaError, "unknown dims key '" + key + "'");
  }
  for (const char* key : {"n", "m", "p", "N", "s"})
    if (!j["dims"].contains(key)) fail(ErrorKind::SchemaError, std::string("dims.") + key + " missing");
  if (!j.contains("omega")) fail(ErrorKind::SchemaError, "missing omega");
  if (dims.N < 1) fail(ErrorKind::SchemaError, "dims.N must be at least 1");
  SystemSpec spec = make_empty_spec(dims, read_real_array(j["omega"], dims.N, "omega"));
  if (j.contains("name")) {
    if (!j["name"].is_string()) fail(ErrorKind::SchemaError, "name must be a string");
    spec.name = j["name"].get<std::string>();
  }
  if (dims.p > 0) {
    if (!j.contains("R")) fail(ErrorKind::SchemaError, "R is required when p > 0");
    const auto& jr = j["R"];
    if (!jr.is_array() || static_cast<int>(jr.size()) != 2 * dims.p)
      fail(ErrorKind::SchemaError, "R must have 2p rows");
    Matrix R(2 * dims.p, 2 * dims.p);
    for (int r = 0; r < 2 * dims.p; ++r) R.row(r) = read_real_array(jr[r], 2 * dims.p, "R row").transpose();
    spec.R = revlin::check_involution(R);
  } else if (j.contains("R") && !(j["R"].is_array() && j["R"].empty())) {
    fail(ErrorKind::SchemaError, "R must be empty when p = 0");
  }
  if (j.contains("dioph_star")) {
    const auto& jd = j["dioph_star"];
    if (!jd.is_object() || !jd.contains("tau") || !jd.contains("gamma") || !jd["tau"].is_number() ||
        !jd["gamma"].is_number())
      fail(ErrorKind::SchemaError, "dioph_star must be {\"tau\": number, \"gamma\": number}");
    spec.omega_dioph.tau = jd["tau"].get<double>();
    spec.omega_dioph.gamma = jd["gamma"].get<double>();
    spec.omega_dioph.L = 1;
    try {
      spec.omega_dioph.validate();
    } catch (const Error& e) {
      fail(ErrorKind::SchemaError, std::string("dioph_star: ") + e.what());
    }
  }
  if (j.contains("fields")) {
    const auto& jf = j["fields"];
    if (!jf.is_object()) fail(ErrorKind::SchemaError, "fields must be an object");
    for (const auto& [name, entries] : jf.items()) {
      FourierTaylorField* fld = field_by_name(spec, name);
      if (!fld) fail(ErrorKind::SchemaError, "unknown field '" + name + "'");
      if (!entries.is_array()) fail(ErrorKind::SchemaError, "field '" + name + "' must be an array");
      const int target = target_dim_of(name, dims);
      for (const auto& jt : entries) {
        const Term t = read_term(jt, name, dims, target);
        if (target > 0) fld->add(t);
      }
    }
  }
  validate_system(spec, opt);
  return spec;
}

std::string serialize_system(const SystemSpec& spec) {
  json j;
  j["name"] = spec.name;
  j["dims"] = {{"n", spec.dims.n}, {"m", spec.dims.m}, {"p", spec.dims.p}, {"N", spec.dims.N},
               {"s", spec.dims.s}};
  j["omega"] = std::vector<double>(spec.omega.data(), spec.omega.data() + spec.omega.size());
  json R = json::array();
  for (int r = 0; r < spec.R.dim(); ++r) {
    std::vector<double> row(spec.R.dim());
    for (int c = 0; c < spec.R.dim(); ++c) row[c] = spec.R.R()(r, c);
    R.push_back(row);
  }
  j["R"] = R;
  j["dioph_star"] = {{"tau", spec.omega_dioph.tau}, {"gamma", spec.omega_dioph.gamma}};
  json fields = json::object();
  const VarLayout L = spec.layout();
  for (const char* name : kFieldNames) {
    const auto* f = field_by_name(spec, name);
    if (f->empty()) continue;
    json arr = json::array();
    for (const auto& t : f->terms()) arr.push_back(write_term(t, L));
    fields[name] = arr;
  }
  j["fields"] = fields;
  return j.dump(2);
}

FieldModel FieldModel::original(const SystemSpec& spec) {
  FieldModel fm;
  fm.dims_ = spec.dims;
  fm.layout_ = spec.layout();
  fm.extended_ = false;
  fm.unf_.p = spec.dims.p;
  fm.unf_.s = spec.dims.s;
  fm.unf_.base = spec.M_poly();
  fm.fx_ = spec.F.plus(spec.Delta).plus(spec.xi).plus(spec.f);
  fm.fy_ = spec.eta.plus(spec.g);
  if (spec.has_Z())
    fm.fy_ = fm.fy_.plus(linear_z_field(spec.Z, spec.dims.m, spec.n_angles(), fm.layout_));
  fm.fz_ = spec.zeta.plus(spec.h);
  const int d = spec.dims.d();
  for (int j = 0; j < d; ++j) {
    fm.dfx_.push_back(fm.fx_.derivative(j));
    fm.dfy_.push_back(fm.fy_.derivative(j));
    fm.dfz_.push_back(fm.fz_.derivative(j));
  }
  return fm;
}

FieldModel FieldModel::extended(const SystemSpec& spec, const revlin::Unfolding& unf) {
  if (spec.has_Z()) fail(ErrorKind::InvalidArgument, "eliminate the Zz coupling before extending");
  if (unf.p != spec.dims.p || unf.s != spec.dims.s)
    fail(ErrorKind::DimensionMismatch, "unfolding does not match the system dimensions");
  FieldModel fm;
  fm.dims_ = spec.dims;
  fm.layout_ = spec.layout();
  fm.extended_ = true;
  fm.unf_ = unf;
  fm.fx_ = spec.xi.plus(spec.f);
  fm.fy_ = spec.eta.plus(spec.g);
  fm.fz_ = spec.zeta.plus(spec.h);
  const int d = spec.dims.d();
  for (int j = 0; j < d; ++j) {
    fm.dfx_.push_back(fm.fx_.derivative(j));
    fm.dfy_.push_back(fm.fy_.derivative(j));
    fm.dfz_.push_back(fm.fz_.derivative(j));
  }
  return fm;
}

namespace {

Vector evaluate_with(const FieldModel& fm, const SystemSpec& spec, const Point& q,
                     const Vector& sigma, const Vector& mu) {
  const Dims& d = spec.dims;
  Vector angles(d.n + d.N);
  angles << q.x, q.X;
  Vector Y(d.d());
  Y << q.y, q.z;
  Vector out(d.n + d.d() + d.N);
  fm.velocity(angles.data(), Y.data(), sigma.data(), static_cast<const double*>(nullptr), mu.data(),
              static_cast<const double*>(nullptr), out.data());
  out.tail(d.N) = spec.omega;
  return out;
}

}  // namespace

Vector evaluate_field(const SystemSpec& spec, const Point& q, const Vector& sigma, const Vector& mu) {
  const Dims& d = spec.dims;
  if (q.x.size() != d.n || q.y.size() != d.m || q.z.size() != 2 * d.p || q.X.size() != d.N ||
      sigma.size() != d.m || mu.size() != d.s)
    fail(ErrorKind::DimensionMismatch, "evaluation point does not match the system dimensions");
  return evaluate_with(FieldModel::original(spec), spec, q, sigma, mu);
}

double reversibility_residual(const SystemSpec& spec, const ResidualGrid& grid) {
  const Dims& d = spec.dims;
  const VarLayout L = spec.layout();
  const int na = d.n + d.N;
  const int nv = L.nvars();
  const FieldModel fm = FieldModel::original(spec);
  const Matrix& R = spec.R.R();

  std::vector<int> radix;
  for (int i = 0; i < na; ++i) radix.push_back(grid.points_per_angle);
  for (int i = 0; i < nv; ++i) radix.push_back(grid.points_per_variable);
  double total = 1.0;
  for (int r : radix) total *= r;
  const std::size_t count = static_cast<std::size_t>(std::min<double>(total, static_cast<double>(grid.max_points)));
  const double stride = total / static_cast<double>(count);

  double worst = 0.0;
  for (std::size_t s = 0; s < count; ++s) {
    double code = std::floor(static_cast<double>(s) * stride);
    std::vector<int> digit(radix.size());
    for (std::size_t i = 0; i < radix.size(); ++i) {
      digit[i] = static_cast<int>(std::fmod(code, radix[i]));
      code = std::floor(code / radix[i]);
    }
    Vector angles(na), vars(nv);
    for (int i = 0; i < na; ++i) angles[i] = 2.0 * M_PI * digit[i] / grid.points_per_angle;
    for (int i = 0; i < nv; ++i) {
      const int P = grid.points_per_variable;
      vars[i] = P == 1 ? 0.0 : grid.half_width * (-1.0 + 2.0 * digit[na + i] / (P - 1));
    }
    Point q{angles.head(d.n), vars.segment(L.y(0), d.m), vars.segment(d.m, 2 * d.p), angles.tail(d.N)};
    const Vector sigma = vars.segment(L.sigma(0), d.m);
    const Vector mu = vars.segment(L.mu(0), d.s);
    Point gq{-q.x, -q.y, R * q.z, -q.X};
    const Vector v = evaluate_with(fm, spec, q, sigma, mu);
    const Vector vg = evaluate_with(fm, spec, gq, sigma, mu);
    Vector res(v.size());
    res.head(d.n) = -v.head(d.n) + vg.head(d.n);
    res.segment(d.n, d.m) = -v.segment(d.n, d.m) + vg.segment(d.n, d.m);
    res.segment(d.n + d.m, 2 * d.p) = R * v.segment(d.n + d.m, 2 * d.p) + vg.segment(d.n + d.m, 2 * d.p);
    res.tail(d.N) = -v.tail(d.N) + vg.tail(d.N);
    if (res.size() > 0) worst = std::max(worst, res.cwiseAbs().maxCoeff());
  }
  return worst;
}

SystemSpec eliminate_Zz(const SystemSpec& raw, const ParameterBox& box, int mu_cap) {
  if (!raw.has_Z()) return raw;
  const Dims& d = raw.dims;
  const VarLayout L = raw.layout();
  const int dz = 2 * d.p;
  const int nv = L.nvars();
  const Matrix& R = raw.R.R();

  const revlin::MatrixPolynomial Zp = raw.Z_poly();
  for (const auto& t : Zp.terms())
    if ((t.coeff * R - t.coeff).cwiseAbs().maxCoeff() > 1e-12)
      fail(ErrorKind::NotReversible, "Z coefficient violates Z R = Z");

  const revlin::MatrixPolynomial Mp = raw.M_poly();
  {
    const Vector center = box.center.size() == d.s ? box.center : Vector::Zero(d.s);
    const int P = std::max(box.points_per_axis, 1);
    std::vector<int> idx(d.s, 0);
    for (;;) {
      Vector mu(d.s);
      for (int i = 0; i < d.s; ++i)
        mu[i] = center[i] + (P == 1 ? 0.0 : box.radius * (-1.0 + 2.0 * idx[i] / (P - 1)));
      if ((mu - center).norm() <= box.radius * (1.0 + 1e-12)) {
        const Matrix Mm = Mp.evaluate(mu);
        const Eigen::FullPivLU<Matrix> lu(Mm);
        const double scale = std::max(1.0, Mm.cwiseAbs().maxCoeff());
        if (!lu.isInvertible() || std::abs(lu.determinant()) < 1e-12 * std::pow(scale, dz)) {
          std::ostringstream os;
          os << "M(mu) is singular at mu=(" << mu.transpose() << ")";
          fail(ErrorKind::SingularM, os.str());
        }
      }
      int i = 0;
      while (i < d.s && ++idx[i] == P) idx[i++] = 0;
      if (i == d.s) break;
    }
  }
  const Matrix M0 = Mp.evaluate(Vector::Zero(d.s));
  const Eigen::FullPivLU<Matrix> lu0(M0);
  if (!lu0.isInvertible()) fail(ErrorKind::SingularM, "M(0) is singular");
  const Matrix M0inv = lu0.inverse();

  // M^{-1} = sum_j (-M0^{-1} M1)^j M0^{-1}, truncated at mu-degree mu_cap.
  MuPoly M1;
  for (const auto& [e, C] : to_mupoly(Mp))
    if (mu_degree(e) > 0) M1.emplace(e, C);
  MuPoly A;
  for (const auto& [e, C] : M1) A.emplace(e, -M0inv * C);
  MuPoly term;
  term.emplace(std::vector<int>(d.s, 0), M0inv);
  MuPoly Minv = term;
  for (int j = 1; j <= mu_cap; ++j) {
    term = mupoly_mul(A, term, mu_cap);
    for (const auto& [e, C] : term) {
      auto it = Minv.find(e);
      if (it == Minv.end())
        Minv.emplace(e, C);
      else
        it->second += C;
    }
  }
  const MuPoly K = mupoly_mul(to_mupoly(Zp), Minv, mu_cap);

  // y_i -> y_i + sum_j K_ij(mu) z_j.
  std::vector<Poly> subs;
  for (int i = 0; i < nv; ++i) subs.push_back(Poly::variable(nv, i));
  for (int i = 0; i < d.m; ++i) {
    Poly p = Poly::variable(nv, L.y(i));
    for (const auto& [e, C] : K)
      for (int j = 0; j < dz; ++j) {
        if (C(i, j) == 0.0) continue;
        std::vector<int> ex(nv, 0);
        ex[L.z(j)] = 1;
        for (int k = 0; k < d.s; ++k) ex[L.mu(k)] = e[k];
        p.add(ex, C(i, j));
      }
    subs[L.y(i)] = p;
  }
  auto keep = [&](const std::vector<int>& e) {
    int deg = 0;
    for (int k = 0; k < d.s; ++k) deg += e[L.mu(k)];
    return deg <= mu_cap;
  };
  auto truncate = [&](const FourierTaylorField& f) {
    FourierTaylorField out(f.target_dim(), f.n_angles(), L);
    for (const auto& t : f.terms())
      if (keep(t.d)) out.add(t);
    return out;
  };
  auto K_times = [&](const FourierTaylorField& f) {
    FourierTaylorField out(d.m, f.n_angles(), L);
    for (const auto& [e, C] : K) out = out.plus(times_mu_monomial(f.left_multiply(C), e));
    return truncate(out);
  };

  SystemSpec out = raw;
  out.Z = FourierTaylorField(d.m * dz, raw.n_angles(), L);
  out.xi = raw.xi.substitute(subs, keep);
  out.f = raw.f.substitute(subs, keep);
  out.zeta = raw.zeta.substitute(subs, keep);
  out.h = raw.h.substitute(subs, keep);
  out.eta = raw.eta.substitute(subs, keep).plus(K_times(out.zeta).scaled(-1.0));
  out.g = raw.g.substitute(subs, keep).plus(K_times(out.h).scaled(-1.0));

  // Z z - K M z vanishes through mu-degree mu_cap by construction of K.
  const MuPoly KM = mupoly_mul(K, to_mupoly(Mp), mu_cap);
  for (const auto& [e, C] : to_mupoly(Zp)) {
    Matrix diff = C;
    auto it = KM.find(e);
    if (it != KM.end()) diff -= it->second;
    if (diff.size() > 0 && diff.cwiseAbs().maxCoeff() > 1e-9)
      fail(ErrorKind::SingularM, "Taylor inverse of M(mu) failed to cancel the Zz term");
  }
  try {
    check_order_conditions(out);
  } catch (const Error& e) {
    fail(ErrorKind::OrderViolation,
         std::string("after Zz elimination (zeta must be O_2(y,z) on the coupled components): ") + e.what());
  }
  return out;
}

}  // namespace kamrev2::systems
