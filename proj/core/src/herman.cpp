#include "kamrev2/herman.hpp"

#include "kamrev2/errors.hpp"
#include "kamrev2/parallel.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace kamrev2::herman {

int ExtendedSystem::parameter_count() const {
  const auto& d = spec.dims;
  return d.m + d.s + unf.S() + d.n + d.N;
}

Vector ExtendedSystem::velocity(const systems::Point& q, const FieldParams& params,
                                const Vector& theta) const {
  const auto& d = spec.dims;
  Vector ang(d.n + d.N), Y(d.d());
  ang << q.x, q.X;
  Y << q.y, q.z;
  Vector out(d.n + d.d() + d.N);
  model.velocity(ang.data(), Y.data(), params.sigma.data(), params.omega.data(), params.mu.data(),
                 params.chi.data(), out.data());
  out.tail(d.N) = spec.omega + theta;
  return out;
}

ExtendedSystem extend_system(const SystemSpec& spec, const revlin::Unfolding& unf) {
  return ExtendedSystem{spec, unf, systems::FieldModel::extended(spec, unf)};
}

MuMap frequency_map(const SystemSpec& spec) {
  const auto L = spec.layout();
  const int na = spec.n_angles();
  return [F = spec.F, L, na](const Vector& mu) {
    Vector vars = Vector::Zero(L.nvars());
    for (int i = 0; i < L.s; ++i) vars[L.mu(i)] = mu[i];
    return F.evaluate(Vector::Zero(na), vars);
  };
}

DeltaMap shift_map(const SystemSpec& spec) {
  const auto L = spec.layout();
  const int na = spec.n_angles();
  return [D = spec.Delta, L, na](const Vector& sigma, const Vector& mu) {
    Vector vars = Vector::Zero(L.nvars());
    for (int i = 0; i < L.m; ++i) vars[L.sigma(i)] = sigma[i];
    for (int i = 0; i < L.s; ++i) vars[L.mu(i)] = mu[i];
    return D.evaluate(Vector::Zero(na), vars);
  };
}

CountertermMap solver_counterterms(const SystemSpec& spec, const revlin::Unfolding& unf,
                                   const dioph::DiophParams& dioph, const torus::SolverConfig& cfg) {
  torus::SolverConfig probe = cfg;
  probe.precheck = false;
  return [&spec, &unf, dioph, probe](const Vector& omega, const Vector& mu, const Vector& chi) {
    const TorusTransform t = torus::solve_torus(spec, {omega, mu, chi}, unf, dioph, probe);
    return Counterterms{t.u, t.v, t.w, t.W};
  };
}

namespace {

double max_abs(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

KeySolution solve_key_system(const Vector& mu, const CountertermMap& ct, const MuMap& F,
                             const DeltaMap& Delta, int n, int S, const KeyOptions& opt) {
  KeySolution sol;
  sol.phi = Vector::Zero(n);
  sol.psi = Vector::Zero(S);
  if (n + S == 0) return sol;
  auto G = [&](const Vector& z) {
    const Vector omega = z.head(n), chi = z.tail(S);
    const Counterterms c = ct(omega, mu, chi);
    Vector out(n + S);
    const Vector mu_shift = mu + c.w;
    if (n > 0) out.head(n) = omega + c.u - F(mu_shift) - Delta(c.v, mu_shift);
    if (S > 0) out.tail(S) = chi + c.W;
    return out;
  };
  auto jacobian = [&](const Vector& z) {
    Matrix J(n + S, n + S);
    const double h = opt.fd_step;
    for (int j = 0; j < n + S; ++j) {
      Vector zp1 = z, zm1 = z, zp2 = z, zm2 = z;
      zp1[j] += h;
      zm1[j] -= h;
      zp2[j] += 2 * h;
      zm2[j] -= 2 * h;
      J.col(j) = (-G(zp2) + 8.0 * G(zp1) - 8.0 * G(zm1) + G(zm2)) / (12.0 * h);
    }
    return J;
  };
  Vector z(n + S);
  z.head(n) = F(mu);
  z.tail(S).setZero();
  Vector r = G(z);
  std::vector<double> history{max_abs(r)};
  Eigen::PartialPivLU<Matrix> lu(jacobian(z));
  int stalls = 0;
  while (!(history.back() < opt.tol)) {
    if (sol.iterations >= opt.max_iters || !std::isfinite(history.back()))
      throw NewtonDivergedError("key system did not converge; counterterms too large", history);
    z -= lu.solve(r);
    r = G(z);
    history.push_back(max_abs(r));
    ++sol.iterations;
    if (history.back() >= history[history.size() - 2]) {
      if (++stalls >= 3) {
        lu.compute(jacobian(z));
        stalls = 0;
      }
    }
  }
  sol.phi = z.head(n);
  sol.psi = z.tail(S);
  sol.residual = history.back();
  return sol;
}

ShiftInverse invert_shift(const Vector& mu, const MuMap& w_along, double radius, const ShiftOptions& opt) {
  ShiftInverse out;
  Vector mu0 = mu;
  double prev = 0.0;
  for (int it = 1;; ++it) {
    const Vector next = mu - w_along(mu0);
    const double step = max_abs(next - mu0);
    if (!std::isfinite(step)) fail(ErrorKind::ContractionFailed, "shift map produced non-finite values");
    if (it > 1 && prev > 0.0) out.contraction = std::max(out.contraction, step / prev);
    mu0 = next;
    out.iterations = it;
    if (step <= opt.tol) break;
    if (it >= 3 && prev > 0.0 && step >= prev) {
      std::ostringstream os;
      os << "fixed-point iteration is not contracting (ratio " << step / prev << ")";
      fail(ErrorKind::ContractionFailed, os.str());
    }
    if (it >= opt.max_iters) fail(ErrorKind::ContractionFailed, "fixed-point iteration did not converge");
    prev = step;
  }
  if (mu0.norm() > radius * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "Upsilon(mu) = (" << mu0.transpose() << ") leaves the ball of radius " << radius;
    fail(ErrorKind::ContractionFailed, os.str());
  }
  out.Upsilon = mu0;
  return out;
}

void SweepConfig::validate(const SystemSpec& spec) const {
  dioph.validate();
  if (!(radius > 0)) fail(ErrorKind::InvalidArgument, "Gamma radius must be positive");
  if (grid < 2) fail(ErrorKind::InvalidArgument, "grid needs at least 2 points per axis");
  if (!(eps2 > 0 && eps2 < 1)) fail(ErrorKind::InvalidArgument, "eps2 must lie in (0, 1)");
  if (Q < 1 || cL < 1) fail(ErrorKind::InvalidArgument, "Q and cL must be positive");
  if (!(probe_guard > 0 && probe_guard <= 1)) fail(ErrorKind::InvalidArgument, "probe_guard must lie in (0, 1]");
  if (dioph_cutoff < 1) fail(ErrorKind::CutoffTooSmall, "Diophantine cutoff must be positive");
  const int nN = spec.dims.n + spec.dims.N;
  if (!(dioph.tau > nN * Q)) {
    std::ostringstream os;
    os << "tau = " << dioph.tau << " must exceed (n + N) Q = " << nN * Q;
    fail(ErrorKind::InvalidArgument, os.str());
  }
  if (dioph.tau < spec.omega_dioph.tau) {
    std::ostringstream os;
    os << "tau = " << dioph.tau << " must be at least tau* = " << spec.omega_dioph.tau;
    fail(ErrorKind::InvalidArgument, os.str());
  }
}

std::pair<double, double> shrunken_radii(double r, double eps2, int s) {
  return {r * std::pow(1.0 - eps2 / 3.0, 1.0 / s), r * std::pow(1.0 - 2.0 * eps2 / 3.0, 1.0 / s)};
}

namespace {

double ball_volume(double r, int s) {
  return std::pow(M_PI, s / 2.0) / std::tgamma(s / 2.0 + 1.0) * std::pow(r, s);
}

struct GridPoint {
  std::vector<int> index;
  Vector mu;
  double weight = 1.0;
};

std::vector<GridPoint> ball_grid(int s, int P, double r) {
  std::vector<GridPoint> out;
  const double h = 2.0 * r / (P - 1);
  std::vector<int> idx(s, 0);
  for (;;) {
    GridPoint g;
    g.index = idx;
    g.mu.resize(s);
    for (int i = 0; i < s; ++i) {
      g.mu[i] = -r + h * idx[i];
      if (idx[i] == 0 || idx[i] == P - 1) g.weight *= 0.5;
    }
    if (g.mu.norm() <= r * (1.0 + 1e-12)) out.push_back(std::move(g));
    int i = s - 1;
    while (i >= 0 && ++idx[i] == P) idx[i--] = 0;
    if (i < 0) break;
  }
  return out;
}

revlin::ReversibleSpectrum spectrum_at(const revlin::Unfolding& unf, const revlin::InvolutionMatrix& R,
                                       const Vector& mu, const Vector& chi) {
  return revlin::classify_spectrum(unf.evaluate(mu, chi), R);
}

void check_nondegeneracy(const SystemSpec& spec, const std::vector<GridPoint>& pts, double r2,
                         const SweepConfig& cfg) {
  const MuMap F = frequency_map(spec);
  const revlin::MatrixPolynomial M = spec.M_poly();
  const auto& R = spec.R;
  const dioph::VectorMap beta = [&M, &R](const Vector& mu) {
    return revlin::classify_spectrum(M.evaluate(mu), R).beta;
  };
  std::vector<const GridPoint*> inner;
  for (const auto& g : pts)
    if (g.mu.norm() <= r2 * (1.0 + 1e-12)) inner.push_back(&g);
  const std::size_t cap = 4096;
  const std::size_t stride = std::max<std::size_t>(1, (inner.size() + cap - 1) / cap);
  for (std::size_t i = 0; i < inner.size(); i += stride) {
    const Vector& mu = inner[i]->mu;
    const auto jet = dioph::jet_by_differences(F, beta, mu, cfg.Q);
    const auto res = dioph::nondegeneracy_check(jet, cfg.Q, cfg.dioph.L, cfg.sphere);
    if (!res.pass) {
      std::ostringstream os;
      os << "(F, beta) is not affinely (" << cfg.Q << ", " << cfg.dioph.L << ")-nondegenerate at mu=("
         << mu.transpose() << "): " << res.detail;
      fail(ErrorKind::Degenerate, os.str());
    }
  }
}

// Counterterm probes for one grid point, remembering the last transform.
class PointProbe {
 public:
  PointProbe(const SystemSpec& spec, const revlin::Unfolding& unf, const SweepConfig& cfg)
      : spec_(spec), unf_(unf) {
    probe_cfg_ = cfg.solver;
    probe_cfg_.precheck = false;
    guard_ = cfg.dioph;
    guard_.gamma *= cfg.probe_guard;
  }

  Counterterms operator()(const Vector& omega, const Vector& mu, const Vector& chi) {
    const TorusTransform& t = solve(omega, mu, chi);
    return Counterterms{t.u, t.v, t.w, t.W};
  }

  const TorusTransform& solve(const Vector& omega, const Vector& mu, const Vector& chi) {
    if (!(last_ && last_omega_ == omega && last_mu_ == mu && last_chi_ == chi)) {
      last_ = torus::solve_torus(spec_, {omega, mu, chi}, unf_, guard_, probe_cfg_);
      last_omega_ = omega;
      last_mu_ = mu;
      last_chi_ = chi;
    }
    return *last_;
  }

 private:
  const SystemSpec& spec_;
  const revlin::Unfolding& unf_;
  torus::SolverConfig probe_cfg_;
  dioph::DiophParams guard_;
  std::optional<TorusTransform> last_;
  Vector last_omega_, last_mu_, last_chi_;
};

}  // namespace

LadderRow ladder_row(const WhitneyFamily& fam, double gamma) {
  double g = 0.0, all = 0.0, inner = 0.0;
  const std::size_t n = fam.records.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = fam.records[i];
    double w = 1.0;
    for (int v : rec.index)
      if (v == 0 || v == fam.grid - 1) w *= 0.5;
    all += w;
    if (rec.in_Gamma_dblprime) {
      inner += w;
      if (rec.status != "error" && rec.worst_ratio >= gamma) g += w;
    }
  }
  LadderRow row;
  row.gamma = gamma;
  row.fraction = all > 0 ? g / all : 0.0;
  row.fraction_in_dblprime = inner > 0 ? g / inner : 0.0;
  return row;
}

WhitneyFamily sweep(const SystemSpec& spec, const revlin::Unfolding& unf, const SweepConfig& cfg) {
  cfg.validate(spec);
  if (spec.has_Z()) fail(ErrorKind::InvalidArgument, "eliminate the Zz coupling before sweeping");
  const int s = spec.dims.s, n = spec.dims.n, S = unf.S();
  const auto [r1, r2] = shrunken_radii(cfg.radius, cfg.eps2, s);
  const std::vector<GridPoint> pts = ball_grid(s, cfg.grid, cfg.radius);
  if (pts.empty()) fail(ErrorKind::SamplerEmpty, "parameter grid is empty");
  check_nondegeneracy(spec, pts, r2, cfg);

  WhitneyFamily fam;
  fam.s = s;
  fam.grid = cfg.grid;
  fam.records.resize(pts.size());
  const MuMap F = frequency_map(spec);
  const DeltaMap Delta = shift_map(spec);
  const systems::FieldModel original = systems::FieldModel::original(spec);
  const dioph::ModeTable table(n + spec.dims.N, cfg.dioph_cutoff, cfg.dioph.tau);

  parallel_for(pts.size(), cfg.threads, [&](std::size_t i) {
    FamilyRecord& rec = fam.records[i];
    rec.index = pts[i].index;
    rec.mu = pts[i].mu;
    const double norm = rec.mu.norm();
    rec.in_Gamma_prime = norm <= r1 * (1.0 + 1e-12);
    rec.in_Gamma_dblprime = norm <= r2 * (1.0 + 1e-12);
    if (!rec.in_Gamma_prime) return;
    try {
      PointProbe probe(spec, unf, cfg);
      const CountertermMap ct = [&probe](const Vector& o, const Vector& m, const Vector& c) {
        return probe(o, m, c);
      };
      KeySolution key;
      Vector key_mu;
      auto key_at = [&](const Vector& mu0) {
        key = solve_key_system(mu0, ct, F, Delta, n, S, cfg.key);
        key_mu = mu0;
        return probe(key.phi, mu0, key.psi).w;
      };
      const ShiftInverse inv = invert_shift(rec.mu, key_at, cfg.radius);
      if (!(key_mu == inv.Upsilon)) key_at(inv.Upsilon);
      rec.Upsilon = inv.Upsilon;
      rec.Phi = key.phi;
      rec.Psi = key.psi;
      rec.contraction = inv.contraction;
      rec.status = "computed";

      const auto beta = spectrum_at(unf, spec.R, rec.Upsilon, rec.Psi).beta;
      Vector freq(n + spec.dims.N);
      freq << rec.Phi, spec.omega;
      const auto rep = dioph::affine_dioph_check(freq, beta, cfg.dioph, table);
      rec.dioph_pass = rep.pass;
      rec.worst_ratio = rep.worst_ratio;
      rec.worst_k = rep.worst_k;
      rec.worst_l = rep.worst_l;
      rec.in_G = rec.in_Gamma_dblprime && rec.dioph_pass;
      if (!rec.in_G) {
        if (!rec.dioph_pass) rec.status = "not_diophantine";
        return;
      }
      const TorusTransform t = probe.solve(rec.Phi, rec.Upsilon, rec.Psi);
      rec.Theta = t.v;
      rec.omega_prime = t.omega_prime;
      rec.spectrum = revlin::classify_spectrum(t.M_prime, spec.R);
      rec.iterations = t.iterations;
      rec.final_residual = t.residual_history.back();
      rec.symmetry = torus::symmetry_residuals(t, spec.R).max();
      if (cfg.check_consistency) {
        const FieldParams orig{rec.Phi, rec.Theta, rec.mu, Vector(0)};
        rec.consistency = torus::floquet_residual(original, orig, t, 4 * t.K + 4).max();
      }
      if (cfg.keep_transforms) rec.transform = t;
      rec.status = "solved";
    } catch (const Error& e) {
      rec.status = "error";
      rec.error = e.what();
    }
  });

  MeasureBookkeeping& mb = fam.measure;
  mb.radius = cfg.radius;
  mb.radius_prime = r1;
  mb.radius_dblprime = r2;
  mb.spacing = 2.0 * cfg.radius / (cfg.grid - 1);
  mb.cell = std::pow(mb.spacing, s);
  mb.points = static_cast<int>(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double w = pts[i].weight * mb.cell;
    const auto& rec = fam.records[i];
    mb.meas_Gamma += w;
    if (rec.in_Gamma_prime) mb.meas_Gamma_prime += w;
    if (rec.in_Gamma_dblprime) mb.meas_Gamma_dblprime += w;
    if (rec.in_G && rec.status == "solved") mb.meas_G += w;
  }
  mb.exact_Gamma = ball_volume(cfg.radius, s);
  mb.exact_Gamma_prime = ball_volume(r1, s);
  mb.exact_Gamma_dblprime = ball_volume(r2, s);
  mb.fraction_G = mb.meas_Gamma > 0 ? mb.meas_G / mb.meas_Gamma : 0.0;
  mb.fraction_G_in_dblprime = mb.meas_Gamma_dblprime > 0 ? mb.meas_G / mb.meas_Gamma_dblprime : 0.0;
  for (double g : cfg.gamma_ladder) fam.ladder.push_back(ladder_row(fam, g));
  return fam;
}

namespace {

Vector flatten(const TorusTransform& t) {
  std::vector<double> v;
  for (const auto* it : {&t.a, &t.B0, &t.B1}) {
    v.insert(v.end(), it->cos.data(), it->cos.data() + it->cos.size());
    v.insert(v.end(), it->sin.data(), it->sin.data() + it->sin.size());
  }
  return Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// j-th forward divided difference of equally spaced samples with spacing h.
Vector forward_difference(const std::vector<Vector>& f, int start, int stride, int j, double h) {
  Vector acc = Vector::Zero(f[start].size());
  double binom = 1.0;
  for (int i = 0; i <= j; ++i) {
    const double sign = ((j - i) % 2 == 0) ? 1.0 : -1.0;
    acc += sign * binom * f[start + i * stride];
    binom = binom * (j - i) / (i + 1);
  }
  return acc / std::pow(h * stride, j);
}

}  // namespace

WhitneyReport whitney_report(const WhitneyFamily& fam, int cL) {
  if (cL < 1) fail(ErrorKind::InvalidArgument, "smoothness order must be positive");
  WhitneyReport rep;
  rep.order = cL;
  rep.theta_derivative.assign(cL, 0.0);
  rep.spacing = fam.measure.spacing;
  const double h = fam.measure.spacing;
  std::map<std::vector<int>, std::size_t> in_G;
  bool have_transforms = true;
  for (std::size_t i = 0; i < fam.records.size(); ++i)
    if (fam.records[i].in_G && fam.records[i].status == "solved") {
      in_G.emplace(fam.records[i].index, i);
      if (!fam.records[i].transform) have_transforms = false;
    }
  if (have_transforms) rep.transform_derivative.assign(cL, 0.0);
  rep.theta_first_min = std::numeric_limits<double>::infinity();
  rep.theta_first_max = -std::numeric_limits<double>::infinity();

  for (int axis = 0; axis < fam.s; ++axis) {
    for (const auto& [idx, rec_i] : in_G) {
      // Longest run of G points starting here along the axis, up to 2 cL + 1.
      std::vector<Vector> theta, coeff;
      std::vector<int> cur = idx;
      for (int t = 0; t <= 2 * cL; ++t) {
        const auto it = in_G.find(cur);
        if (it == in_G.end()) break;
        const auto& rec = fam.records[it->second];
        theta.push_back(rec.Theta);
        if (have_transforms) coeff.push_back(flatten(*rec.transform));
        ++cur[axis];
      }
      const int len = static_cast<int>(theta.size());
      if (len < cL + 2) continue;
      ++rep.windows;
      for (int j = 1; j <= cL; ++j) {
        const Vector d = forward_difference(theta, 0, 1, j, h);
        rep.theta_derivative[j - 1] = std::max(rep.theta_derivative[j - 1], max_abs(d));
        if (j == 1 && d.size() > 0) {
          rep.theta_first_min = std::min(rep.theta_first_min, d.minCoeff());
          rep.theta_first_max = std::max(rep.theta_first_max, d.maxCoeff());
        }
        if (have_transforms)
          rep.transform_derivative[j - 1] =
              std::max(rep.transform_derivative[j - 1], max_abs(forward_difference(coeff, 0, 1, j, h)));
        if (len >= 2 * j + 1)
          rep.consistency = std::max(rep.consistency, max_abs(d - forward_difference(theta, 0, 2, j, h)));
      }
    }
  }
  if (rep.windows == 0) {
    std::ostringstream os;
    os << "no run of " << cL + 2 << " consecutive G points along any axis";
    fail(ErrorKind::InsufficientGrid, os.str());
  }
  if (!std::isfinite(rep.theta_first_min)) rep.theta_first_min = rep.theta_first_max = 0.0;
  return rep;
}

}  // namespace kamrev2::herman
