#include "torus_internal.hpp"

#include "kamrev2/errors.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace kamrev2::torus {

using detail::Coefficients;
using detail::GridValues;
using detail::Layout;

namespace {

double l1(const std::vector<int>& k) {
  double s = 0.0;
  for (int v : k) s += std::abs(v);
  return s;
}

void check_divisor(const std::vector<int>& k, double divisor, const dioph::DiophParams& guard) {
  const double threshold = guard.gamma * std::pow(l1(k), -guard.tau);
  if (!(std::abs(divisor) >= threshold)) throw SmallDivisorError(k, std::abs(divisor), threshold);
}

int model_mode_abs(const SystemSpec& spec) {
  int mm = 0;
  for (const auto* f : {&spec.xi, &spec.eta, &spec.zeta, &spec.f, &spec.g, &spec.h})
    mm = std::max(mm, f->max_mode_abs());
  return mm;
}

}  // namespace

int resolve_cutoff(const SystemSpec& spec, const SolverConfig& cfg) {
  const int mm = model_mode_abs(spec);
  const int K = cfg.fourier_cutoff > 0 ? cfg.fourier_cutoff : std::max(8, 4 * mm);
  if (K < mm) {
    std::ostringstream os;
    os << "Fourier cutoff " << K << " is below the model's largest mode " << mm;
    fail(ErrorKind::CutoffTooSmall, os.str());
  }
  return K;
}

series::FourierTaylorField cohomological_solve(const series::FourierTaylorField& rhs,
                                               const Vector& freq, const dioph::DiophParams& guard) {
  if (freq.size() != rhs.n_angles())
    fail(ErrorKind::DimensionMismatch, "frequency vector does not match the number of angles");
  series::FourierTaylorField out(rhs.target_dim(), rhs.n_angles(), rhs.layout());
  for (const auto& t : rhs.terms()) {
    for (int e : t.d)
      if (e != 0) fail(ErrorKind::InvalidArgument, "right-hand side must depend on the angles only");
    bool zero = true;
    double kn = 0.0;
    for (std::size_t j = 0; j < t.k.size(); ++j) {
      if (t.k[j] != 0) zero = false;
      kn += t.k[j] * freq[static_cast<Eigen::Index>(j)];
    }
    if (zero) {
      std::ostringstream os;
      os << "right-hand side has nonzero mean " << t.c.cwiseAbs().maxCoeff();
      fail(ErrorKind::NonzeroMean, os.str());
    }
    check_divisor(t.k, kn, guard);
    if (t.basis == series::Basis::Cos)
      out.add(t.k, series::Basis::Sin, t.d, t.c / kn);
    else
      out.add(t.k, series::Basis::Cos, t.d, -t.c / kn);
  }
  return out;
}

Matrix submersive_directions(const revlin::Unfolding& unf, const revlin::InvolutionMatrix& R,
                             const Vector& mu0, const Vector& chi0) {
  const int p = unf.p;
  const int ns = unf.s + unf.S();
  if (p == 0) return Matrix(ns, 0);
  const Matrix J = revlin::spectral_jacobian(unf, R, mu0, chi0);
  Eigen::JacobiSVD<Matrix> svd(J, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double scale = std::max(1.0, sv.size() ? sv[0] : 0.0);
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > 1e-9 * scale) ++rank;
  if (rank < p) {
    std::ostringstream os;
    os << "spectral Jacobian has rank " << rank << " < p = " << p;
    fail(ErrorKind::SubmersivityFailed, os.str());
  }
  return svd.matrixV().leftCols(p);
}

namespace {

void check_target(const SystemSpec& spec, const Target& target, const revlin::Unfolding& unf) {
  if (target.omega0.size() != spec.dims.n || target.mu0.size() != spec.dims.s ||
      target.chi0.size() != unf.S())
    fail(ErrorKind::DimensionMismatch, "target (omega0, mu0, chi0) does not match the system");
  if (unf.p != spec.dims.p || unf.s != spec.dims.s)
    fail(ErrorKind::DimensionMismatch, "unfolding does not match the system");
}

FourierItem zero_item(int nm, int rows, int cols) {
  FourierItem it;
  it.rows = rows;
  it.cols = cols;
  it.cos = Matrix::Zero(nm, rows * cols);
  it.sin = Matrix::Zero(nm, rows * cols);
  return it;
}

}  // namespace

TorusTransform identity_transform(const SystemSpec& spec, const Target& target,
                                  const revlin::Unfolding& unf, int K) {
  check_target(spec, target, unf);
  TorusTransform t;
  t.dims = spec.dims;
  t.Omega = spec.omega;
  t.K = K;
  t.modes = mode_box(spec.n_angles(), K);
  const int nm = static_cast<int>(t.modes.size());
  const int d = spec.dims.d();
  t.a = zero_item(nm, spec.dims.n, 1);
  t.B0 = zero_item(nm, d, 1);
  t.B1 = zero_item(nm, d, d);
  t.u = Vector::Zero(spec.dims.n);
  t.v = Vector::Zero(spec.dims.m);
  t.w = Vector::Zero(spec.dims.s);
  t.W = Vector::Zero(unf.S());
  t.lambda = Vector::Zero(spec.dims.p);
  t.target = target;
  t.omega_prime = target.omega0;
  t.M_prime = unf.evaluate(target.mu0, target.chi0);
  t.theta_shift = Vector::Zero(spec.dims.N);
  t.X_shift = Vector::Zero(spec.dims.N);
  return t;
}

namespace {

// Maps grid values of (E1, E2, E3) to the Galerkin equations, one column per block of qtot.
class Projector {
 public:
  explicit Projector(const Layout& L) : L_(L) {}

  // E: n_grid x (qtot * cols). Returns equations x cols.
  Matrix project(const Matrix& E, int cols) const {
    const int nm = static_cast<int>(L_.modes.size());
    const Matrix C = L_.grid->Pstack * E;
    const auto Cc = C.topRows(nm);
    const auto Cs = C.bottomRows(nm);
    Matrix out(L_.equations, cols);
    const int off[3] = {0, L_.qa, L_.qa + L_.qB0};
    const int len[3] = {L_.qa, L_.qB0, L_.qB1};
    for (int c = 0; c < cols; ++c) {
      int row = 0;
      const int base = c * L_.qtot;
      for (int g = 0; g < 3; ++g) {
        const auto& B = L_.eqn[g];
        if (len[g] == 0) continue;
        if (B.mean.cols() > 0) {
          out.block(row, c, B.mean.cols(), 1).noalias() =
              B.mean.transpose() * Cc.block(0, base + off[g], 1, len[g]).transpose();
          row += static_cast<int>(B.mean.cols());
        }
        for (int i = 1; i < nm; ++i) {
          if (B.cos.cols() > 0) {
            out.block(row, c, B.cos.cols(), 1).noalias() =
                B.cos.transpose() * Cc.block(i, base + off[g], 1, len[g]).transpose();
            row += static_cast<int>(B.cos.cols());
          }
          if (B.sin.cols() > 0) {
            out.block(row, c, B.sin.cols(), 1).noalias() =
                B.sin.transpose() * Cs.block(i, base + off[g], 1, len[g]).transpose();
            row += static_cast<int>(B.sin.cols());
          }
        }
      }
    }
    return out;
  }

 private:
  const Layout& L_;
};

// Per-grid-point inputs of the conjugacy residual.
template <class T>
struct PointInputs {
  std::vector<T> a, da, Dna, B0, dB0, DnB0, B1, DnB1, omega, sigma, mu, chi;

  void load(const Layout& L, const GridValues& gv, const FieldParams& p, int g) {
    const int n = L.dims.n, d = L.d;
    auto fill = [&](std::vector<T>& dst, const Matrix& src) {
      dst.resize(src.cols());
      for (int i = 0; i < src.cols(); ++i) dst[i] = T(src(g, i));
    };
    fill(a, gv.val[detail::GroupA]);
    fill(Dna, gv.dnu[detail::GroupA]);
    fill(B0, gv.val[detail::GroupB0]);
    fill(DnB0, gv.dnu[detail::GroupB0]);
    fill(B1, gv.val[detail::GroupB1]);
    fill(DnB1, gv.dnu[detail::GroupB1]);
    da.assign(n * n, T(0.0));
    dB0.assign(d * n, T(0.0));
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) da[i * n + j] = T(gv.dx[detail::GroupA][j](g, i));
      for (int i = 0; i < d; ++i) dB0[i * n + j] = T(gv.dx[detail::GroupB0][j](g, i));
    }
    auto vec = [](std::vector<T>& dst, const Vector& src) {
      dst.resize(src.size());
      for (int i = 0; i < src.size(); ++i) dst[i] = T(src[i]);
    };
    vec(omega, p.omega);
    vec(sigma, p.sigma);
    vec(mu, p.mu);
    vec(chi, p.chi);
  }

  void residual(const FieldModel& model, const Layout& L, int g, T* E) const {
    const Eigen::RowVectorXd th = L.grid->theta.row(g);
    detail::conjugacy_residual(model, L, th.data(), a.data(), da.data(), Dna.data(), B0.data(),
                               dB0.data(), DnB0.data(), B1.data(), DnB1.data(), omega.data(),
                               sigma.data(), mu.data(), chi.data(), E);
  }
};

}  // namespace

namespace {

class ConjugacySystem {
 public:
  ConjugacySystem(const FieldModel& model, const Layout& L) : model_(model), L_(L), proj_(L) {}

  Vector residual(const Vector& q) const {
    const Coefficients c = detail::unpack(L_, q);
    const GridValues gv = detail::synthesize(L_, c);
    const FieldParams p = detail::shifted_params(L_, c.u, c.v, c.lambda);
    Matrix E(L_.n_grid, L_.qtot);
    PointInputs<double> in;
    std::vector<double> e(L_.qtot);
    for (int g = 0; g < L_.n_grid; ++g) {
      in.load(L_, gv, p, g);
      in.residual(model_, L_, g, e.data());
      for (int i = 0; i < L_.qtot; ++i) E(g, i) = e[i];
    }
    return proj_.project(E, 1).col(0);
  }

  Matrix jacobian(const Vector& q) const {
    const Coefficients c = detail::unpack(L_, q);
    const GridValues gv = detail::synthesize(L_, c);
    const FieldParams p = detail::shifted_params(L_, c.u, c.v, c.lambda);
    const int Nu = L_.unknowns();
    const int n = L_.dims.n, s = L_.dims.s;
    Matrix J(L_.equations, Nu);
    constexpr int kChunk = 64;
    PointInputs<Dual> in;
    std::vector<Dual> e(L_.qtot);
    for (int j0 = 0; j0 < Nu; j0 += kChunk) {
      const int cols = std::min(kChunk, Nu - j0);
      Matrix D(L_.n_grid, L_.qtot * cols);
      for (int cc = 0; cc < cols; ++cc) {
        const detail::Slot& slot = L_.slots[j0 + cc];
        for (int g = 0; g < L_.n_grid; ++g) {
          in.load(L_, gv, p, g);
          seed(slot, g, in, n, s);
          in.residual(model_, L_, g, e.data());
          for (int i = 0; i < L_.qtot; ++i) D(g, cc * L_.qtot + i) = e[i].d;
        }
      }
      J.middleCols(j0, cols) = proj_.project(D, cols);
    }
    return J;
  }

 private:
  void seed(const detail::Slot& slot, int g, PointInputs<Dual>& in, int n, int s) const {
    switch (slot.group) {
      case detail::GroupU: in.omega[slot.col].d = 1.0; return;
      case detail::GroupV: in.sigma[slot.col].d = 1.0; return;
      case detail::GroupLambda: {
        for (int i = 0; i < s; ++i) in.mu[i].d = L_.Vsub(i, slot.col);
        for (int i = 0; i < static_cast<int>(in.chi.size()); ++i) in.chi[i].d = L_.Vsub(s + i, slot.col);
        return;
      }
      default: break;
    }
    const auto& B = L_.unk[slot.group];
    const Matrix& basis = slot.mode == 0 ? B.mean : (slot.sine ? B.sin : B.cos);
    const int i = slot.mode;
    const double tv = slot.sine ? L_.grid->sinT(g, i) : L_.grid->cosT(g, i);
    const double td = slot.sine ? L_.grid->cosT(g, i) : -L_.grid->sinT(g, i);
    const double kn = L_.k_dot_nu[i];
    const auto b = basis.col(slot.col);
    const int q = static_cast<int>(b.size());
    std::vector<Dual>* val = nullptr;
    std::vector<Dual>* dnu = nullptr;
    std::vector<Dual>* dx = nullptr;
    switch (slot.group) {
      case detail::GroupA: val = &in.a; dnu = &in.Dna; dx = &in.da; break;
      case detail::GroupB0: val = &in.B0; dnu = &in.DnB0; dx = &in.dB0; break;
      default: val = &in.B1; dnu = &in.DnB1; break;
    }
    for (int r = 0; r < q; ++r) {
      if (b[r] == 0.0) continue;
      (*val)[r].d = b[r] * tv;
      (*dnu)[r].d = b[r] * kn * td;
      if (dx)
        for (int j = 0; j < n; ++j) (*dx)[r * n + j].d = b[r] * L_.modes[i][j] * td;
    }
  }

  const FieldModel& model_;
  const Layout& L_;
  Projector proj_;
};

double max_abs(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

TorusTransform solve_torus(const SystemSpec& spec, const Target& target, const revlin::Unfolding& unf,
                           const dioph::DiophParams& dioph, const SolverConfig& cfg) {
  dioph.validate();
  if (!(cfg.newton_tol > 0) || cfg.max_iters < 1 || !(cfg.perturbation_gate > 0))
    fail(ErrorKind::InvalidArgument, "solver tolerances must be positive");
  check_target(spec, target, unf);
  if (spec.has_Z()) fail(ErrorKind::InvalidArgument, "eliminate the Zz coupling before solving");
  const double pert = spec.perturbation_norm();
  if (pert > cfg.perturbation_gate) {
    std::ostringstream os;
    os << "perturbation norm " << pert << " exceeds the gate " << cfg.perturbation_gate;
    fail(ErrorKind::GateExceeded, os.str());
  }
  const Matrix M_prime = unf.evaluate(target.mu0, target.chi0);
  const revlin::ReversibleSpectrum spectrum = revlin::classify_spectrum(M_prime, spec.R);
  const Matrix Vsub = submersive_directions(unf, spec.R, target.mu0, target.chi0);
  const int K = resolve_cutoff(spec, cfg);
  const int na = spec.n_angles();

  Vector nu(na);
  nu << target.omega0, spec.omega;
  const auto modes = mode_box(na, K);
  for (std::size_t i = 1; i < modes.size(); ++i) {
    double kn = 0.0;
    for (int j = 0; j < na; ++j) kn += modes[i][j] * nu[j];
    check_divisor(modes[i], kn, dioph);
  }
  if (cfg.precheck) {
    const int cutoff = std::max(na * K, cfg.precheck_cutoff);
    const auto rep = dioph::affine_dioph_check(nu, spectrum.beta, dioph, cutoff);
    if (!rep.pass) {
      const double divisor = rep.worst_ratio / std::pow(l1(rep.worst_k), dioph.tau);
      throw SmallDivisorError(rep.worst_k, divisor, dioph.gamma * std::pow(l1(rep.worst_k), -dioph.tau));
    }
  }

  TorusTransform t = identity_transform(spec, target, unf, K);
  const Layout L = detail::build_layout(spec, target, K, M_prime, Vsub);
  if (L.unknowns() > cfg.max_unknowns) {
    std::ostringstream os;
    os << L.unknowns() << " unknowns exceed the cap " << cfg.max_unknowns << "; lower the Fourier cutoff";
    fail(ErrorKind::InvalidArgument, os.str());
  }
  t.unknowns = L.unknowns();
  t.grid_points = L.n_grid;

  const FieldModel model = FieldModel::extended(spec, unf);
  const ConjugacySystem sys(model, L);
  Vector q = Vector::Zero(L.unknowns());
  Vector r = sys.residual(q);
  double rn = max_abs(r);
  const double r0 = rn;
  t.residual_history.push_back(rn);
  int iter = 0;
  while (!(rn < cfg.newton_tol)) {
    if (!std::isfinite(rn) || rn > cfg.divergence_factor * std::max(r0, cfg.newton_tol))
      throw NewtonDivergedError("Newton residual blew up", t.residual_history);
    if (iter >= cfg.max_iters)
      throw NewtonDivergedError("Newton did not reach the tolerance within max_iters", t.residual_history);
    const Matrix J = sys.jacobian(q);
    const Vector delta = J.partialPivLu().solve(-r);
    q += delta;
    r = sys.residual(q);
    rn = max_abs(r);
    t.residual_history.push_back(rn);
    ++iter;
  }
  t.iterations = iter;

  const Coefficients c = detail::unpack(L, q);
  t.a.cos = c.cos[detail::GroupA];
  t.a.sin = c.sin[detail::GroupA];
  t.B0.cos = c.cos[detail::GroupB0];
  t.B0.sin = c.sin[detail::GroupB0];
  t.B1.cos = c.cos[detail::GroupB1];
  t.B1.sin = c.sin[detail::GroupB1];
  t.u = c.u;
  t.v = c.v;
  t.lambda = c.lambda;
  const Vector shift = Vsub.cols() > 0 ? Vector(Vsub * c.lambda) : Vector::Zero(Vsub.rows());
  t.w = shift.head(spec.dims.s);
  t.W = shift.tail(unf.S());
  return t;
}

double SymmetryResiduals::max() const { return std::max({a, b0, b1, b2, c0, c1, c2}); }

SymmetryResiduals symmetry_residuals(const TorusTransform& t, const revlin::InvolutionMatrix& R) {
  const int na = t.dims.n + t.dims.N;
  const int m = t.dims.m, dz = 2 * t.dims.p;
  const Matrix S = detail::normal_involution(t.dims, t.dims.p > 0 ? R.R() : Matrix(0, 0));
  int P = 16;
  while (na > 1 && std::pow(P, na) > 20000 && P > 4) P /= 2;
  long long total = 1;
  for (int j = 0; j < na; ++j) total *= P;
  SymmetryResiduals res;
  auto upd = [](double& slot, const Matrix& E) {
    if (E.size() > 0) slot = std::max(slot, E.cwiseAbs().maxCoeff());
  };
  for (long long g = 0; g < total; ++g) {
    Vector th(na);
    long long code = g;
    for (int j = na - 1; j >= 0; --j) {
      th[j] = 2.0 * M_PI * ((code % P) + 0.37) / P;
      code /= P;
    }
    const ModeTrig trig = mode_trig(t.modes, th);
    const ModeTrig mirror{trig.cos, -trig.sin};
    const Matrix a1 = t.a.value(trig), a2 = t.a.value(mirror);
    upd(res.a, a2 + a1);
    const Matrix B01 = t.B0.value(trig), B02 = t.B0.value(mirror);
    const Matrix dB0 = B02 - S * B01;
    upd(res.b0, dB0.topRows(m));
    upd(res.c0, dB0.bottomRows(dz));
    const Matrix B11 = t.B1.value(trig), B12 = t.B1.value(mirror);
    const Matrix dB1 = B12 - S * B11 * S;
    upd(res.b1, dB1.topLeftCorner(m, m));
    upd(res.b2, dB1.topRightCorner(m, dz));
    upd(res.c1, dB1.bottomLeftCorner(dz, m));
    upd(res.c2, dB1.bottomRightCorner(dz, dz));
  }
  return res;
}

ConvergenceOrder convergence_order(const std::vector<double>& history, double threshold, double floor) {
  std::vector<double> xs, ys;
  for (std::size_t j = 0; j + 1 < history.size(); ++j)
    if (history[j] < threshold && history[j] > 0.0 && history[j + 1] > floor) {
      xs.push_back(std::log(history[j]));
      ys.push_back(std::log(history[j + 1]));
    }
  ConvergenceOrder out;
  out.pairs = static_cast<int>(xs.size());
  if (xs.empty()) {
    out.order = !history.empty() && history.back() < threshold ? std::numeric_limits<double>::infinity() : 0.0;
    return out;
  }
  if (xs.size() == 1) {
    out.order = ys[0] / xs[0];
    return out;
  }
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  out.order = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return out;
}

}  // namespace kamrev2::torus
