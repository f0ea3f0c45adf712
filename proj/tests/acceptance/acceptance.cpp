// Acceptance suite: one PASS/FAIL line per criterion. Usage: acceptance [c01..c10|all]

#include "kamrev2/dioph.hpp"
#include "kamrev2/herman.hpp"
#include "kamrev2/parallel.hpp"
#include "kamrev2/revlin.hpp"
#include "kamrev2/torus.hpp"

#include "support/problems.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace kamrev2;
using kamrev2::testing::make_problem;
using kamrev2::testing::mode_index;
using kamrev2::testing::Problem;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  std::vector<std::string> notes;

  // Records a named check; the criterion passes only if every check does.
  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    detail << (detail.tellp() > 0 ? "; " : "") << what << (ok ? "" : " [violated]");
  }
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

double max_coeff(const torus::FourierItem& item) {
  double m = 0.0;
  if (item.cos.size()) m = std::max(m, item.cos.cwiseAbs().maxCoeff());
  if (item.sin.size()) m = std::max(m, item.sin.cwiseAbs().maxCoeff());
  return m;
}

double max_abs(const VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Converged solves of criteria 1-3, cached across criteria.
struct Solves {
  Problem oscillator = make_problem("forced_oscillator");
  Problem rotation = make_problem("rotation");
  Problem floquet = make_problem("floquet");
  torus::TorusTransform t1 = kamrev2::testing::solve(oscillator);
  torus::TorusTransform t2 = kamrev2::testing::solve(rotation);
  torus::TorusTransform t3 = kamrev2::testing::solve(floquet);
};

Solves& solves() {
  static Solves s;
  return s;
}

// Criterion 4 configuration: F(mu) = 1 + mu on [-1, 1], grid 2001, tau 2.5, gamma 1e-4, eps2 0.1.
herman::SweepConfig sweep_config(double gamma, bool keep) {
  herman::SweepConfig cfg;
  cfg.radius = 1.0;
  cfg.grid = 2001;
  cfg.eps2 = 0.1;
  cfg.dioph = dioph::DiophParams{2.5, gamma, 2};
  cfg.threads = default_thread_count();
  cfg.keep_transforms = keep;
  return cfg;
}

const herman::WhitneyFamily& zero_family() {
  static const herman::WhitneyFamily fam = [] {
    const Problem pb = make_problem("zero_perturbation");
    return herman::sweep(pb.spec, pb.unf, sweep_config(1e-4, true));
  }();
  return fam;
}

void c01(Outcome& o) {
  const auto& s = solves();
  const auto& t = s.t1;
  const double eps = 1e-2, c = 0.3;
  o.check(std::abs(t.v(0) + eps * c) <= 1e-10, "|v + eps c| = " + fmt(std::abs(t.v(0) + eps * c)));
  // b0 = eps sin X: sin coefficient eps on mode 1, nothing else.
  const int k1 = mode_index(t, {1});
  double b0_err = k1 < 0 ? std::numeric_limits<double>::infinity() : 0.0;
  for (std::size_t i = 0; k1 >= 0 && i < t.modes.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double want_sin = static_cast<int>(i) == k1 ? eps : 0.0;
    b0_err = std::max({b0_err, std::abs(t.B0.sin(r, 0) - want_sin), std::abs(t.B0.cos(r, 0))});
  }
  o.check(b0_err <= 1e-10, "b0 coefficient error " + fmt(b0_err));
  const auto rep = torus::verify_by_integration(s.oscillator.spec, t, s.oscillator.unf, 100.0);
  o.check(rep.max_distance <= 1e-9, "integration distance over T=100 " + fmt(rep.max_distance));
}

void c02(Outcome& o) {
  const auto& s = solves();
  const auto& t = s.t2;
  const double eps = 1e-3;
  const double W = s.rotation.target.omega0(0) + s.rotation.spec.omega(0);
  const kamrev2::testing::RotationOracle exact{eps, W};
  double err_stated = 0.0, err_exact = 0.0;
  const int samples = 64;
  for (int i = 0; i < samples; ++i)
    for (int j = 0; j < samples; ++j) {
      VectorXd theta(2);
      theta << 2 * M_PI * i / samples, 2 * M_PI * j / samples;
      const double a = t.a.value(t.modes, theta)(0, 0);
      const double psi = theta(0) + theta(1);
      err_stated = std::max(err_stated, std::abs(a - (-eps * std::sin(psi) / W)));
      err_exact = std::max(err_exact, std::abs(a - exact.a(psi)));
    }
  o.check(err_stated <= 1e-10, "|a + eps sin(x+X)/(omega0+Omega)| = " + fmt(err_stated));
  o.check(std::abs(t.u(0)) <= 1e-10, "|u| = " + fmt(std::abs(t.u(0))));
  o.notes.push_back("exact conjugacy oracle: |a - a_exact| = " + fmt(err_exact) +
                    ", |u - (sqrt(W^2+eps^2) - W)| = " + fmt(std::abs(t.u(0) - exact.u())));
}

void c03(Outcome& o) {
  const auto& s = solves();
  const auto& pb = s.floquet;
  const auto& t = s.t3;
  const double eps = 1e-3;
  const auto res = torus::floquet_residual(pb.spec, t, pb.unf);
  o.check(res.reducibility < 1e-9, "reducibility residual " + fmt(res.reducibility));
  const MatrixXd M_target = pb.unf.evaluate(pb.target.mu0, pb.target.chi0);
  o.check(t.M_prime == M_target, "M' == M_new(mu0, chi0) bit-exact");
  const auto spec = revlin::classify_spectrum(t.M_prime, pb.spec.R);
  o.check(spec.nu1 == 1 && spec.nu2 == 0 && spec.nu3 == 0, "spectrum class (" + std::to_string(spec.nu1) + "," +
                                                             std::to_string(spec.nu2) + "," +
                                                             std::to_string(spec.nu3) + ")");
  // The counterterm-shifted matrix plus its second-order drift must land on alpha'.
  const MatrixXd M_shift = pb.unf.evaluate(pb.target.mu0 + t.w, pb.target.chi0 + t.W);
  MatrixXd E(2, 2);
  E << 0, 1, -1, 0;
  Eigen::EigenSolver<MatrixXd> es(M_shift);
  int top = 0;
  for (int i = 1; i < 2; ++i)
    if (es.eigenvalues()(i).real() > es.eigenvalues()(top).real()) top = i;
  const double alpha_shift = revlin::classify_spectrum(M_shift, pb.spec.R).alpha(0);
  const double predicted =
      alpha_shift + eps * eps * kamrev2::testing::second_order_shift(M_shift, E, pb.spec.omega(0), top).real();
  const double alpha_prime = spec.alpha.size() ? spec.alpha(0) : std::numeric_limits<double>::quiet_NaN();
  o.check(std::abs(alpha_prime - predicted) <= 5 * eps * eps,
          "|alpha' - expansion| = " + fmt(std::abs(alpha_prime - predicted)) + " (bound " + fmt(5 * eps * eps) + ")");
}

void c04(Outcome& o) {
  const auto& fam = zero_family();
  int solved = 0, theta_bad = 0, omega_bad = 0, nonidentity = 0;
  for (const auto& r : fam.records) {
    if (r.status != "solved") continue;
    ++solved;
    theta_bad += max_abs(r.Theta) != 0.0;
    omega_bad += !(r.omega_prime(0) == 1.0 + r.mu(0));
    const auto& t = *r.transform;
    const double size = std::max({max_coeff(t.a), max_coeff(t.B0), max_coeff(t.B1), max_abs(t.u), max_abs(t.v),
                                  max_abs(t.w), max_abs(t.W)});
    nonidentity += size != 0.0;
  }
  o.check(solved > 0, std::to_string(solved) + " solved points");
  o.check(theta_bad == 0, std::to_string(theta_bad) + " with Theta != 0");
  o.check(omega_bad == 0, std::to_string(omega_bad) + " with omega' != F(mu)");
  o.check(nonidentity == 0, std::to_string(nonidentity) + " non-identity transforms");
  o.check(fam.measure.fraction_G > 1.0 - 0.1, "fraction of G in Gamma " + fmt(fam.measure.fraction_G));
}

void c05(Outcome& o) {
  const Problem pb = make_problem("zero_perturbation");
  double prev = -1.0;
  bool monotone = true;
  std::ostringstream row;
  double last_inner = 0.0;
  for (double g : {1e-2, 1e-3, 1e-4, 1e-5}) {
    const auto fam = herman::sweep(pb.spec, pb.unf, sweep_config(g, false));
    const double f = fam.measure.fraction_G;
    monotone = monotone && f >= prev;
    prev = f;
    last_inner = fam.measure.fraction_G_in_dblprime;
    row << " gamma=" << fmt(g) << ":" << fmt(f) << "/" << fmt(last_inner);
  }
  o.check(monotone, "fraction in Gamma / in Gamma'' non-decreasing:" + row.str());
  o.check(last_inner > 0.99, "fraction of Gamma'' at gamma=1e-5 " + fmt(last_inner));
}

void c06(Outcome& o) {
  const auto& m = zero_family().measure;
  const double r = 1.0, eps2 = 0.1;
  const int s = 1;
  const double r1 = r * std::pow(1 - eps2 / 3, 1.0 / s), r2 = r * std::pow(1 - 2 * eps2 / 3, 1.0 / s);
  const double ulp = 4 * std::numeric_limits<double>::epsilon() * r;
  o.check(std::abs(m.radius_prime - r1) <= ulp, "radius' error " + fmt(std::abs(m.radius_prime - r1)));
  o.check(std::abs(m.radius_dblprime - r2) <= ulp, "radius'' error " + fmt(std::abs(m.radius_dblprime - r2)));
  const double third = eps2 / 3 * m.meas_Gamma;
  const double d1 = std::abs((m.meas_Gamma - m.meas_Gamma_prime) - third);
  const double d2 = std::abs((m.meas_Gamma_prime - m.meas_Gamma_dblprime) - third);
  o.check(d1 <= m.cell, "meas(Gamma\\Gamma') off by " + fmt(d1) + " (cell " + fmt(m.cell) + ")");
  o.check(d2 <= m.cell, "meas(Gamma'\\Gamma'') off by " + fmt(d2));
}

void c07(Outcome& o) {
  const auto& s = solves();
  double sym = 0.0, xres = 0.0;
  bool shifts_zero = true;
  int count = 0;
  auto visit = [&](const torus::TorusTransform& t, const systems::SystemSpec& spec, const revlin::Unfolding& unf) {
    ++count;
    sym = std::max(sym, torus::symmetry_residuals(t, spec.R).max());
    shifts_zero = shifts_zero && max_abs(t.theta_shift) == 0.0 && max_abs(t.X_shift) == 0.0;
    xres = std::max(xres, torus::floquet_residual(spec, t, unf).x_shift);
  };
  visit(s.t1, s.oscillator.spec, s.oscillator.unf);
  visit(s.t2, s.rotation.spec, s.rotation.unf);
  visit(s.t3, s.floquet.spec, s.floquet.unf);
  const Problem zero = make_problem("zero_perturbation");
  for (const auto& r : zero_family().records)
    if (r.status == "solved") visit(*r.transform, zero.spec, zero.unf);
  o.check(sym < 1e-12, "max symmetry residual " + fmt(sym) + " over " + std::to_string(count) + " solves");
  o.check(shifts_zero, "U and A identically zero");
  o.check(xres < 1e-13, "a posteriori X shift residual " + fmt(xres));
}

dioph::JetData jet_s1(const std::vector<double>& F, const std::vector<double>& beta, int order) {
  dioph::JetData j;
  j.center = VectorXd::Zero(1);
  j.order = order;
  j.multi_indices = dioph::multi_indices(1, order);
  j.F = MatrixXd::Zero(F.empty() ? 0 : 1, order + 1);
  j.beta = MatrixXd::Zero(beta.empty() ? 0 : 1, order + 1);
  for (int q = 0; q <= order; ++q) {
    if (!F.empty()) j.F(0, j.index_of({q})) = F[static_cast<std::size_t>(q)];
    if (!beta.empty()) j.beta(0, j.index_of({q})) = beta[static_cast<std::size_t>(q)];
  }
  return j;
}

void c08(Outcome& o) {
  auto exact = [&](const dioph::SphereBound& b, double want, const std::string& name) {
    const double gap = b.upper - b.lower;
    const bool ok = gap < 1e-6 && std::abs(b.value - want) <= std::max(gap, 1e-12) && b.lower <= want + 1e-12 &&
                    want <= b.upper + 1e-12;
    o.check(ok, name + " = " + fmt(b.value) + " (gap " + fmt(gap) + ", want " + fmt(want) + ")");
  };
  // Jets from closed-form derivatives at mu = 0.
  exact(dioph::rho_Q(jet_s1({0, 1}, {}, 1), 1), 1.0, "rho1[F=mu]");
  const auto square = jet_s1({0, 0, 2}, {}, 2);
  exact(dioph::rho_Q(square, 1), 0.0, "rho1[F=mu^2]");
  exact(dioph::rho_Q(square, 2), 2.0, "rho2[F=mu^2]");
  exact(dioph::xi_Q(jet_s1({}, {0, 3}, 1), {2}, 1), 6.0, "Xi1[beta=3mu,l=2]");
}

void c09(Outcome& o) {
  const Problem pb = make_problem("eps_family");
  herman::SweepConfig cfg;
  cfg.grid = 201;
  cfg.threads = default_thread_count();
  const auto fam = herman::sweep(pb.spec, pb.unf, cfg);
  const auto rep = herman::whitney_report(fam, 1);
  const double eps = 1e-2;
  const double err = std::max(std::abs(rep.theta_first_min + eps), std::abs(rep.theta_first_max + eps));
  o.check(rep.windows > 0, std::to_string(rep.windows) + " difference windows");
  o.check(err <= 1e-8, "max |dTheta/dmu + eps| = " + fmt(err));
}

void c10(Outcome& o) {
  const auto& s = solves();
  const std::pair<const char*, const torus::TorusTransform*> runs[] = {
      {"c1", &s.t1}, {"c2", &s.t2}, {"c3", &s.t3}};
  for (const auto& [name, t] : runs) {
    const auto ord = torus::convergence_order(t->residual_history);
    o.check(ord.order >= 1.8, std::string(name) + " order " + fmt(ord.order) + " (" + std::to_string(ord.pairs) +
                                  " pairs, " + std::to_string(t->iterations) + " iterations)");
  }
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<std::string, std::function<void(Outcome&)>> criteria{
      {"c01", c01}, {"c02", c02}, {"c03", c03}, {"c04", c04}, {"c05", c05},
      {"c06", c06}, {"c07", c07}, {"c08", c08}, {"c09", c09}, {"c10", c10}};
  std::string which = argc > 1 ? argv[1] : "all";
  if (which.size() == 2 && which[0] == 'c') which = "c0" + which.substr(1);
  if (which != "all" && !criteria.count(which)) {
    std::fprintf(stderr, "usage: %s [c01..c10|all]\n", argv[0]);
    return 2;
  }
  bool all_pass = true;
  for (const auto& [name, fn] : criteria) {
    if (which != "all" && which != name) continue;
    Outcome o;
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    all_pass = all_pass && o.pass;
    std::printf("%s %s: %s\n", name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.str().c_str());
    for (const auto& note : o.notes) std::printf("    note: %s\n", note.c_str());
    std::fflush(stdout);
  }
  return all_pass ? 0 : 1;
}
