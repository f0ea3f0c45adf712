#include "cli.hpp"

#include "kamrev2/dioph.hpp"
#include "kamrev2/errors.hpp"
#include "kamrev2/herman.hpp"
#include "kamrev2/io.hpp"
#include "kamrev2/parallel.hpp"
#include "kamrev2/revlin.hpp"
#include "kamrev2/systems.hpp"
#include "kamrev2/torus.hpp"

#include "CLI11.hpp"

#include <openssl/evp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <thread>

#ifndef KAMREV2_VERSION
#define KAMREV2_VERSION "0.0.0"
#endif

namespace kamrev2::cli {

namespace fs = std::filesystem;
using io::json;
using Vector = Eigen::VectorXd;

const std::vector<std::string>& override_keys() {
  static const std::vector<std::string> keys{
      "tau",      "gamma",      "L",         "kmax",         "grid",   "eps2",   "cl",
      "Q",        "radius",     "center",    "fourier",      "newton_tol", "max_iters", "gate",
      "max_unknowns", "omega0", "mu0",       "chi0",         "horizon", "starts", "keep_transforms",
      "ladder"};
  return keys;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  EVP_DigestUpdate(ctx, bytes.data(), bytes.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::shared_ptr<spdlog::logger> logger() {
  static auto log = [] {
    auto l = spdlog::stderr_color_mt("kamrev2");
    const char* env = std::getenv("KAMREV2_LOG");
    l->set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
    return l;
  }();
  return log;
}

double parse_double(const std::string& key, const std::string& text) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != text.size()) throw UsageError("--" + key + ": not a number: '" + text + "'");
  return v;
}

int parse_int(const std::string& key, const std::string& text) {
  const double v = parse_double(key, text);
  if (v != static_cast<int>(v)) throw UsageError("--" + key + ": not an integer: '" + text + "'");
  return static_cast<int>(v);
}

Vector parse_list(const std::string& key, const std::string& text) {
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) vals.push_back(parse_double(key, item));
  return Eigen::Map<Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

// Resolved parameters: overrides applied over defaults, echoed into the manifest.
class Params {
 public:
  explicit Params(const std::map<std::string, std::string>& ov) : ov_(ov) {
    for (const auto& [k, v] : ov) {
      (void)v;
      const auto& keys = override_keys();
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw UsageError("unknown parameter '" + k + "'");
    }
  }

  double real(const std::string& key, double def) {
    const auto it = ov_.find(key);
    const double v = it == ov_.end() ? def : parse_double(key, it->second);
    resolved_[key] = v;
    return v;
  }
  int integer(const std::string& key, int def) {
    const auto it = ov_.find(key);
    const int v = it == ov_.end() ? def : parse_int(key, it->second);
    resolved_[key] = v;
    return v;
  }
  Vector list(const std::string& key, const Vector& def) {
    const auto it = ov_.find(key);
    const Vector v = it == ov_.end() ? def : parse_list(key, it->second);
    resolved_[key] = io::to_json(v);
    return v;
  }
  bool flag(const std::string& key, bool def) {
    const auto it = ov_.find(key);
    bool v = def;
    if (it != ov_.end()) {
      if (it->second == "true" || it->second == "1") v = true;
      else if (it->second == "false" || it->second == "0") v = false;
      else throw UsageError("--" + key + ": expected true or false");
    }
    resolved_[key] = v;
    return v;
  }
  void expect_length(const std::string& key, const Vector& v, Eigen::Index n) {
    if (v.size() != n) {
      std::ostringstream os;
      os << key << " needs " << n << " entries, got " << v.size();
      throw UsageError(os.str());
    }
  }

  dioph::DiophParams dioph() {
    dioph::DiophParams d;
    d.tau = real("tau", d.tau);
    d.gamma = real("gamma", d.gamma);
    d.L = integer("L", d.L);
    return d;
  }

  torus::SolverConfig solver() {
    torus::SolverConfig c;
    c.fourier_cutoff = integer("fourier", c.fourier_cutoff);
    c.newton_tol = real("newton_tol", c.newton_tol);
    c.max_iters = integer("max_iters", c.max_iters);
    c.perturbation_gate = real("gate", c.perturbation_gate);
    c.max_unknowns = integer("max_unknowns", c.max_unknowns);
    return c;
  }

  const json& resolved() const { return resolved_; }

 private:
  std::map<std::string, std::string> ov_;
  json resolved_ = json::object();
};

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::OmegaNotDiophantine:
    case ErrorKind::Degenerate:
    case ErrorKind::SmallDivisorBreach:
      return kPreconditionFailure;
    case ErrorKind::NotInvolutive:
    case ErrorKind::WrongSignature:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::NotReversible:
    case ErrorKind::SchemaError:
    case ErrorKind::OrderViolation:
    case ErrorKind::InvalidArgument:
    case ErrorKind::CutoffTooSmall:
    case ErrorKind::ZeroL:
    case ErrorKind::EmptyTarget:
    case ErrorKind::SamplerEmpty:
      return kValidationFailure;
    default:
      return kSolverFailure;
  }
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("cannot read model file '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct Context {
  const RunConfig& cfg;
  Params params;
  std::string model_text;
  std::map<std::string, std::string> outputs;  // file name -> content

  void emit(const std::string& name, const std::string& content) { outputs[name] = content; }
  void emit(const std::string& name, const json& doc) { outputs[name] = doc.dump(2) + "\n"; }
};

systems::SystemSpec load_spec(Context& ctx, bool check_omega) {
  systems::ParseOptions opt;
  opt.check_omega = check_omega;
  opt.omega_cutoff = ctx.params.integer("kmax", opt.omega_cutoff);
  return systems::parse_system(ctx.model_text, opt);
}

systems::SystemSpec normal_form(const systems::SystemSpec& spec) {
  if (!spec.has_Z()) return spec;
  logger()->info("eliminating the Zz coupling");
  return systems::eliminate_Zz(spec);
}

Vector frequency_at(const systems::SystemSpec& spec, const Vector& mu) {
  return herman::frequency_map(spec)(mu);
}

json dims_json(const systems::Dims& d) {
  return {{"n", d.n}, {"m", d.m}, {"p", d.p}, {"N", d.N}, {"s", d.s}};
}

int cmd_validate(Context& ctx) {
  json doc;
  try {
    const auto spec = load_spec(ctx, true);
    doc = {{"valid", true},
           {"name", spec.name},
           {"dims", dims_json(spec.dims)},
           {"has_Z", spec.has_Z()},
           {"reversibility_residual", systems::reversibility_residual(spec)},
           {"reversibility_defect", systems::exact_reversibility_defect(spec)},
           {"perturbation_norm", spec.perturbation_norm()},
           {"omega_dioph", {{"tau", spec.omega_dioph.tau}, {"gamma", spec.omega_dioph.gamma}}}};
    ctx.emit("validation.json", doc);
    return kSuccess;
  } catch (const Error& e) {
    doc = {{"valid", false}, {"error", {{"kind", std::string(to_string(e.kind()))}, {"message", e.what()}}}};
    ctx.emit("validation.json", doc);
    throw;
  }
}

int cmd_classify(Context& ctx) {
  const auto spec = load_spec(ctx, true);
  const Vector mu0 = ctx.params.list("mu0", Vector::Zero(spec.dims.s));
  ctx.params.expect_length("mu0", mu0, spec.dims.s);
  const auto M = spec.M_poly();
  const auto Mat = M.evaluate(mu0);
  json doc = {{"mu0", io::to_json(mu0)}, {"M", io::to_json(Mat)}};
  if (spec.dims.p > 0) {
    doc["spectrum"] = io::to_json(revlin::classify_spectrum(Mat, spec.R));
    const auto unf = revlin::build_unfolding(M, spec.R);
    doc["unfolding"] = {{"S", unf.S()},
                        {"submersivity_rank", revlin::submersivity_rank(unf, spec.R, mu0, Vector::Zero(unf.S()))}};
  } else {
    doc["spectrum"] = io::to_json(revlin::ReversibleSpectrum{});
    doc["unfolding"] = {{"S", 0}, {"submersivity_rank", 0}};
  }
  ctx.emit("spectrum.json", doc);
  return kSuccess;
}

int cmd_dioph_check(Context& ctx) {
  const auto spec = load_spec(ctx, false);
  const Vector mu0 = ctx.params.list("mu0", Vector::Zero(spec.dims.s));
  ctx.params.expect_length("mu0", mu0, spec.dims.s);
  const auto dp = ctx.params.dioph();
  const int kmax = ctx.params.integer("kmax", 200);
  Vector freq(spec.n_angles());
  freq << frequency_at(spec, mu0), spec.omega;
  const Vector beta = spec.dims.p > 0 ? Vector(revlin::classify_spectrum(spec.M_poly().evaluate(mu0), spec.R).beta)
                                      : Vector(0);
  const auto rep = dioph::affine_dioph_check(freq, beta, dp, kmax);
  json doc = io::to_json(rep);
  doc["frequency"] = io::to_json(freq);
  doc["beta"] = io::to_json(beta);
  doc["params"] = {{"tau", dp.tau}, {"gamma", dp.gamma}, {"L", dp.L}};
  ctx.emit("dioph.json", doc);
  if (!rep.pass) {
    logger()->error("pair is not Diophantine up to cutoff {}", kmax);
    return kPreconditionFailure;
  }
  return kSuccess;
}

int cmd_measure(Context& ctx) {
  const auto spec = load_spec(ctx, false);
  const int s = spec.dims.s;
  dioph::Ball ball;
  ball.center = ctx.params.list("center", Vector::Zero(s));
  ctx.params.expect_length("center", ball.center, s);
  ball.radius = ctx.params.real("radius", 1.0);
  const auto dp = ctx.params.dioph();
  const int kmax = ctx.params.integer("kmax", 200);
  dioph::Sampler sampler;
  sampler.points_per_axis = ctx.params.integer("grid", sampler.points_per_axis);
  sampler.seed = ctx.cfg.seed;
  if (s >= 3) sampler.kind = dioph::Sampler::Kind::MonteCarlo;
  Vector ladder_default(6);
  ladder_default << 1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5;
  const Vector ladder = ctx.params.list("ladder", ladder_default);
  const auto F = herman::frequency_map(spec);
  const auto M = spec.M_poly();
  const auto& R = spec.R;
  const int p = spec.dims.p;
  const dioph::VectorMap beta = [&M, &R, p](const Vector& mu) {
    return p > 0 ? Vector(revlin::classify_spectrum(M.evaluate(mu), R).beta) : Vector(0);
  };
  const int threads = ctx.cfg.threads > 0 ? ctx.cfg.threads : default_thread_count();
  const auto rep = dioph::measure_estimate(ball, F, beta, spec.omega, dp, sampler, kmax, std::max(1, threads));
  const std::vector<double> lv(ladder.data(), ladder.data() + ladder.size());
  ctx.emit("measure.json", io::measure_json(rep, lv));
  ctx.emit("measures.csv", io::measure_csv(rep, lv));
  return kSuccess;
}

int cmd_solve(Context& ctx) {
  const auto spec = normal_form(load_spec(ctx, true));
  const auto unf = revlin::build_unfolding(spec.M_poly(), spec.R);
  torus::Target target;
  target.mu0 = ctx.params.list("mu0", Vector::Zero(spec.dims.s));
  ctx.params.expect_length("mu0", target.mu0, spec.dims.s);
  target.chi0 = ctx.params.list("chi0", Vector::Zero(unf.S()));
  ctx.params.expect_length("chi0", target.chi0, unf.S());
  target.omega0 = ctx.params.list("omega0", frequency_at(spec, target.mu0));
  ctx.params.expect_length("omega0", target.omega0, spec.dims.n);
  const auto dp = ctx.params.dioph();
  const auto sc = ctx.params.solver();
  const double horizon = ctx.params.real("horizon", 0.0);
  const int starts = ctx.params.integer("starts", 4);

  const auto t = torus::solve_torus(spec, target, unf, dp, sc);
  io::TransformChecks checks;
  checks.symmetry = torus::symmetry_residuals(t, spec.R);
  checks.floquet = torus::floquet_residual(spec, t, unf);
  if (horizon > 0) checks.integration = torus::verify_by_integration(spec, t, unf, horizon, starts);
  logger()->info("converged in {} iterations, residual {}", t.iterations, t.residual_history.back());
  ctx.emit("transform.json", io::transform_json(t, checks));
  return kSuccess;
}

int cmd_sweep(Context& ctx) {
  const auto spec = normal_form(load_spec(ctx, true));
  const auto unf = revlin::build_unfolding(spec.M_poly(), spec.R);
  herman::SweepConfig sc;
  sc.radius = ctx.params.real("radius", sc.radius);
  sc.grid = ctx.params.integer("grid", sc.grid);
  sc.eps2 = ctx.params.real("eps2", sc.eps2);
  sc.dioph = ctx.params.dioph();
  sc.dioph_cutoff = ctx.params.integer("kmax", sc.dioph_cutoff);
  sc.Q = ctx.params.integer("Q", sc.Q);
  sc.cL = ctx.params.integer("cl", sc.cL);
  sc.solver = ctx.params.solver();
  sc.keep_transforms = ctx.params.flag("keep_transforms", false);
  sc.sphere.seed = ctx.cfg.seed;
  sc.threads = ctx.cfg.threads > 0 ? ctx.cfg.threads : default_thread_count();
  sc.threads = std::max(1, sc.threads);
  const Vector ladder = ctx.params.list(
      "ladder", Eigen::Map<const Vector>(sc.gamma_ladder.data(), static_cast<Eigen::Index>(sc.gamma_ladder.size())));
  sc.gamma_ladder.assign(ladder.data(), ladder.data() + ladder.size());

  const auto fam = herman::sweep(spec, unf, sc);
  std::optional<herman::WhitneyReport> whitney;
  try {
    whitney = herman::whitney_report(fam, sc.cL);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::InsufficientGrid) throw;
    logger()->warn("smoothness report skipped: {}", e.what());
  }
  int errors = 0;
  for (const auto& r : fam.records) errors += r.status == "error";
  if (errors) logger()->warn("{} grid points failed; see family.json", errors);
  ctx.emit("family.json", io::family_json(fam, whitney));
  ctx.emit("measures.csv", io::family_measures_csv(fam));
  ctx.emit("theta.csv", io::theta_csv(fam));
  ctx.emit("family_long.csv", io::family_long_csv(fam));
  return kSuccess;
}

}  // namespace

int run(const RunConfig& config) {
  Context ctx{config, Params({}), {}, {}};
  int code = kSuccess;
  json error = nullptr;
  std::string command = config.command;
  if (command == "dioph") command += " " + (config.subcommand.empty() ? "check" : config.subcommand);
  try {
    ctx.params = Params(config.overrides);
    if (config.model_path.empty()) throw UsageError("--model is required");
    ctx.model_text = read_file(config.model_path);
    if (command == "validate") code = cmd_validate(ctx);
    else if (command == "classify") code = cmd_classify(ctx);
    else if (command == "dioph check") code = cmd_dioph_check(ctx);
    else if (command == "dioph measure" || command == "measure") code = cmd_measure(ctx);
    else if (command == "solve") code = cmd_solve(ctx);
    else if (command == "sweep") code = cmd_sweep(ctx);
    else throw UsageError("unknown command '" + command + "'");
  } catch (const Error& e) {
    code = exit_code_for(e.kind());
    error = {{"kind", std::string(to_string(e.kind()))}, {"message", e.what()}};
    logger()->error("{}: {}", to_string(e.kind()), e.what());
  } catch (const UsageError& e) {
    code = kValidationFailure;
    error = {{"kind", "Usage"}, {"message", e.what()}};
    logger()->error("{}", e.what());
  } catch (const json::exception& e) {
    code = kValidationFailure;
    error = {{"kind", "SchemaError"}, {"message", e.what()}};
    logger()->error("{}", e.what());
  }

  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) {
    logger()->error("cannot create output directory {}: {}", config.output_dir, ec.message());
    return kValidationFailure;
  }
  json outputs = json::object();
  for (const auto& [name, content] : ctx.outputs) {
    io::write_file((fs::path(config.output_dir) / name).string(), content);
    outputs[name] = sha256_hex(content);
  }
  json manifest = {{"tool", "kamrev2"},
                   {"version", KAMREV2_VERSION},
                   {"command", command},
                   {"seed", config.seed},
                   {"threads", config.threads},
                   {"flags", config.overrides},
                   {"parameters", ctx.params.resolved()},
                   {"inputs", {{"model", {{"path", config.model_path},
                                          {"bytes", ctx.model_text.size()},
                                          {"sha256", sha256_hex(ctx.model_text)}}}}},
                   {"outputs", outputs},
                   {"exit_code", code},
                   {"error", error}};
  io::write_file((fs::path(config.output_dir) / "run_manifest.json").string(), manifest.dump(2) + "\n");
  return code;
}

bool parse_args(int argc, char** argv, RunConfig& config, int& exit_code) {
  CLI::App app{"Reversible KAM tori: model validation, Diophantine scans, torus solves and parameter sweeps"};
  app.require_subcommand(1);
  app.set_version_flag("--version", KAMREV2_VERSION);

  std::map<std::string, std::string> flag_values;
  std::vector<std::string> sets;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--model", config.model_path, "Model JSON file")->required();
    sub->add_option("--out", config.output_dir, "Output directory");
    sub->add_option("--seed", config.seed, "Seed for sampled sphere searches and Monte Carlo");
    sub->add_option("--threads", config.threads, "Worker threads (0: logical cores)");
    static const std::pair<const char*, const char*> flags[] = {
        {"tau", "Diophantine exponent"},
        {"gamma", "Diophantine constant"},
        {"kmax", "Mode cutoff |k|_1 of Diophantine scans"},
        {"grid", "Grid points per parameter axis"},
        {"eps2", "Measure shrink of the parameter ball, in (0, 1)"},
        {"cl", "Finite-difference order of the smoothness report"},
        {"fourier", "Fourier cutoff per angle (0: automatic)"},
        {"omega0", "Target internal frequency, comma separated"},
        {"mu0", "Target parameter, comma separated"},
        {"chi0", "Target unfolding parameter, comma separated"},
        {"radius", "Radius of the parameter ball"},
        {"center", "Center of the parameter ball, comma separated"},
        {"horizon", "Integration horizon of the a posteriori check"}};
    for (const auto& [key, help] : flags) sub->add_option(std::string("--") + key, flag_values[key], help);
    sub->add_option("--set", sets, "Parameter override key=value (repeatable)");
  };
  auto* validate = app.add_subcommand("validate", "Parse and validate a model");
  auto* classify = app.add_subcommand("classify", "Classify the normal spectrum at mu0");
  auto* dioph = app.add_subcommand("dioph", "Diophantine checks");
  dioph->require_subcommand(1);
  auto* dcheck = dioph->add_subcommand("check", "Check the frequency pair at mu0");
  auto* dmeasure = dioph->add_subcommand("measure", "Estimate the Diophantine fraction of a ball");
  auto* measure = app.add_subcommand("measure", "Same as 'dioph measure'");
  auto* solve = app.add_subcommand("solve", "Solve for the reducible torus at a target");
  auto* sweep = app.add_subcommand("sweep", "Sweep the parameter ball and build the family");
  for (auto* sub : {validate, classify, dcheck, dmeasure, measure, solve, sweep}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    exit_code = app.exit(e);
    if (exit_code != 0) exit_code = kValidationFailure;
    return false;
  }
  for (auto* sub : {validate, classify, solve, sweep, measure})
    if (sub->parsed()) config.command = sub->get_name();
  if (dioph->parsed()) {
    config.command = "dioph";
    config.subcommand = dcheck->parsed() ? "check" : "measure";
  }
  for (const auto& [k, v] : flag_values)
    if (!v.empty()) config.overrides[k] = v;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::fprintf(stderr, "--set expects key=value, got '%s'\n", s.c_str());
      exit_code = kValidationFailure;
      return false;
    }
    config.overrides[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return true;
}

}  // namespace kamrev2::cli
