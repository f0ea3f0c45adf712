#include "kamrev2/dioph.hpp"

#include "kamrev2/errors.hpp"
#include "kamrev2/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace kamrev2::dioph {

namespace {

constexpr double kPositive = 1e-12;

void enumerate_level(int dim, int level, std::vector<int>& cur, int pos, int remaining,
                     std::vector<int>& out) {
  if (pos == dim - 1) {
    const int vals[2] = {-remaining, remaining};
    const int count = remaining == 0 ? 1 : 2;
    for (int i = 0; i < count; ++i) {
      cur[pos] = vals[i];
      int first = 0;
      for (int j = 0; j < dim; ++j)
        if (cur[j] != 0) {
          first = cur[j];
          break;
        }
      if (first > 0) out.insert(out.end(), cur.begin(), cur.end());
    }
    return;
  }
  for (int v = -remaining; v <= remaining; ++v) {
    cur[pos] = v;
    enumerate_level(dim, level, cur, pos + 1, remaining - std::abs(v), out);
  }
}

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

// Homogeneous polynomial sum_q c_q u^q on the unit sphere of R^s.
struct HomPoly {
  std::vector<std::vector<int>> q;
  std::vector<double> c;
  int degree = 0;

  double eval(const Vector& u) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      double m = c[i];
      for (std::size_t j = 0; j < q[i].size(); ++j)
        for (int e = 0; e < q[i][j]; ++e) m *= u[static_cast<Eigen::Index>(j)];
      acc += m;
    }
    return acc;
  }
  double lipschitz() const {
    double s = 0.0;
    for (double v : c) s += std::abs(v);
    return degree * s;
  }
};

struct SphereSample {
  std::vector<Vector> points;
  double covering = 0.0;  // chord covering radius; infinity when unknown
};

SphereSample sphere_points(int s, const SphereOptions& opt) {
  SphereSample out;
  if (s == 1) {
    out.points = {Vector::Constant(1, 1.0), Vector::Constant(1, -1.0)};
    out.covering = 0.0;
    return out;
  }
  if (s == 2) {
    const int N = std::max(opt.points, 4);
    for (int i = 0; i < N; ++i) {
      const double t = 2.0 * M_PI * i / N;
      Vector v(2);
      v << std::cos(t), std::sin(t);
      out.points.push_back(v);
    }
    out.covering = 2.0 * std::sin(M_PI / (2.0 * N));
    return out;
  }
  if (s == 3) {
    const int N = std::max(opt.points, 8);
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < N; ++i) {
      const double z = 1.0 - 2.0 * (i + 0.5) / N;
      const double r = std::sqrt(1.0 - z * z);
      const double t = golden * i;
      Vector v(3);
      v << r * std::cos(t), r * std::sin(t), z;
      out.points.push_back(v);
    }
    // Fibonacci lattices cover the sphere with chord radius about 2.2/sqrt(N); 3/sqrt(N) is safe.
    out.covering = 3.0 / std::sqrt(static_cast<double>(N));
    return out;
  }
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int i = 0; i < opt.mc_points; ++i) {
    Vector v(s);
    for (int j = 0; j < s; ++j) v[j] = nd(rng);
    out.points.push_back(v.normalized());
  }
  out.covering = std::numeric_limits<double>::infinity();
  return out;
}

// Coordinate descent on the sphere; sign = +1 maximizes f, -1 minimizes.
template <class Fn>
double refine_on_sphere(Fn&& f, Vector x, double fx, int steps, double h0, double sign) {
  if (x.size() <= 1) return fx;
  double h = h0;
  for (int step = 0; step < steps; ++step) {
    bool improved = false;
    for (Eigen::Index i = 0; i < x.size(); ++i)
      for (double dir : {1.0, -1.0}) {
        Vector y = x;
        y[i] += dir * h;
        y.normalize();
        const double fy = f(y);
        if (sign * fy > sign * fx) {
          x = y;
          fx = fy;
          improved = true;
        }
      }
    if (!improved) h *= 0.5;
  }
  return fx;
}

struct MaxResult {
  double value = 0.0;
  double upper = 0.0;
};

MaxResult max_abs_on_sphere(const HomPoly& poly, const SphereSample& sphere, int steps) {
  MaxResult r;
  if (poly.q.empty()) return r;
  double best = -1.0;
  Vector best_u;
  for (const auto& u : sphere.points) {
    const double v = std::abs(poly.eval(u));
    if (v > best) {
      best = v;
      best_u = u;
    }
  }
  const double sampled = best;
  const double h0 = std::isfinite(sphere.covering) ? std::max(sphere.covering, 1e-6) : 0.1;
  r.value = refine_on_sphere([&](const Vector& u) { return std::abs(poly.eval(u)); }, best_u, best,
                             steps, h0, 1.0);
  r.upper = std::max(r.value, sampled + poly.lipschitz() * sphere.covering);
  return r;
}

// Homogeneous pieces J!/q! * <D^q H, w> for J = 1..Q given a weight vector w on components.
std::vector<HomPoly> directional_pieces(const JetData& jet, const Matrix& H, const Vector& w,
                                        int Q) {
  std::vector<HomPoly> out(Q);
  for (int J = 1; J <= Q; ++J) out[J - 1].degree = J;
  for (std::size_t idx = 0; idx < jet.multi_indices.size(); ++idx) {
    const auto& q = jet.multi_indices[idx];
    const int J = std::accumulate(q.begin(), q.end(), 0);
    if (J < 1 || J > Q) continue;
    double qf = 1.0;
    for (int e : q) qf *= factorial(e);
    const double c = factorial(J) / qf * H.col(static_cast<Eigen::Index>(idx)).dot(w);
    out[J - 1].q.push_back(q);
    out[J - 1].c.push_back(c);
  }
  return out;
}

MaxResult max_over_orders(const std::vector<HomPoly>& pieces, const SphereSample& sphere,
                          int steps) {
  MaxResult best;
  for (const auto& p : pieces) {
    const MaxResult r = max_abs_on_sphere(p, sphere, steps);
    best.value = std::max(best.value, r.value);
    best.upper = std::max(best.upper, r.upper);
  }
  return best;
}

int resolve_order(const JetData& jet, int Q) {
  if (Q < 0) Q = jet.order;
  if (Q < 1 || Q > jet.order)
    fail(ErrorKind::InvalidArgument, "order Q must satisfy 1 <= Q <= jet.order");
  return Q;
}

}  // namespace

void DiophParams::validate() const {
  if (!(gamma > 0.0)) fail(ErrorKind::InvalidArgument, "gamma must be positive");
  if (L < 1) fail(ErrorKind::InvalidArgument, "L must be at least 1");
  if (!(tau >= 0.0)) fail(ErrorKind::InvalidArgument, "tau must be non-negative");
}

ModeTable::ModeTable(int dim, int K_max, double tau) : dim_(dim), K_max_(K_max), tau_(tau) {
  if (K_max < 1) fail(ErrorKind::CutoffTooSmall, "K_max must be at least 1");
  if (dim < 1) return;
  std::vector<int> cur(dim, 0);
  for (int level = 1; level <= K_max; ++level) {
    const std::size_t before = modes_.size();
    enumerate_level(dim, level, cur, 0, level, modes_);
    const std::size_t added = (modes_.size() - before) / static_cast<std::size_t>(dim);
    weight_.insert(weight_.end(), added, std::pow(static_cast<double>(level), tau));
  }
}

std::vector<std::vector<int>> l_vectors(int nu, int L, bool include_zero) {
  std::vector<std::vector<int>> out;
  if (include_zero) out.emplace_back(nu, 0);
  if (nu == 0) return out;
  std::vector<int> cur(nu, 0);
  for (int level = 1; level <= L; ++level) {
    std::function<void(int, int)> rec = [&](int pos, int rem) {
      if (pos == nu - 1) {
        if (rem == 0) {
          cur[pos] = 0;
          out.push_back(cur);
          return;
        }
        cur[pos] = -rem;
        out.push_back(cur);
        cur[pos] = rem;
        out.push_back(cur);
        return;
      }
      for (int v = -rem; v <= rem; ++v) {
        cur[pos] = v;
        rec(pos + 1, rem - std::abs(v));
      }
    };
    rec(0, level);
  }
  return out;
}

DiophReport affine_dioph_check(const Vector& F, const Vector& beta, const DiophParams& params,
                               int K_max) {
  if (K_max < 1) fail(ErrorKind::CutoffTooSmall, "K_max must be at least 1");
  if (F.size() == 0) {
    DiophReport r;
    r.cutoff = K_max;
    return r;
  }
  return affine_dioph_check(F, beta, params, ModeTable(static_cast<int>(F.size()), K_max, params.tau));
}

DiophReport affine_dioph_check(const Vector& F, const Vector& beta, const DiophParams& params,
                               const ModeTable& table) {
  params.validate();
  DiophReport r;
  r.cutoff = table.cutoff();
  const int n = static_cast<int>(F.size());
  if (n == 0) return r;
  if (table.dim() != n) fail(ErrorKind::DimensionMismatch, "mode table dimension differs from F");
  if (std::abs(table.tau() - params.tau) > 0.0)
    fail(ErrorKind::InvalidArgument, "mode table built for a different tau");
  const auto ls = l_vectors(static_cast<int>(beta.size()), params.L);
  std::vector<double> lb(ls.size());
  for (std::size_t j = 0; j < ls.size(); ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < ls[j].size(); ++i) acc += beta[static_cast<Eigen::Index>(i)] * ls[j][i];
    lb[j] = acc;
  }
  double worst = std::numeric_limits<double>::infinity();
  std::size_t wk = 0, wl = 0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const int* k = table.mode(i);
    double fk = 0.0;
    for (int j = 0; j < n; ++j) fk += F[j] * k[j];
    const double w = table.weight(i);
    for (std::size_t j = 0; j < lb.size(); ++j) {
      const double ratio = std::abs(fk + lb[j]) * w;
      if (ratio < worst) {
        worst = ratio;
        wk = i;
        wl = j;
      }
    }
  }
  r.worst_ratio = worst;
  if (table.size() > 0) {
    r.worst_k.assign(table.mode(wk), table.mode(wk) + n);
    r.worst_l = ls[wl];
  }
  r.pass = worst >= params.gamma;
  return r;
}

std::vector<std::vector<int>> multi_indices(int s, int order) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(s, 0);
  for (int deg = 0; deg <= order; ++deg) {
    std::function<void(int, int)> rec = [&](int pos, int rem) {
      if (pos == s - 1) {
        cur[pos] = rem;
        out.push_back(cur);
        return;
      }
      for (int v = rem; v >= 0; --v) {
        cur[pos] = v;
        rec(pos + 1, rem - v);
      }
    };
    if (s == 0) {
      if (deg == 0) out.emplace_back();
      continue;
    }
    rec(0, deg);
  }
  return out;
}

int JetData::index_of(const std::vector<int>& q) const {
  for (std::size_t i = 0; i < multi_indices.size(); ++i)
    if (multi_indices[i] == q) return static_cast<int>(i);
  return -1;
}

void JetData::validate() const {
  const auto expected = multi_indices.size();
  const auto want = dioph::multi_indices(s(), order).size();
  if (expected != want || static_cast<std::size_t>(F.cols()) != want ||
      static_cast<std::size_t>(beta.cols()) != want)
    fail(ErrorKind::DimensionMismatch, "jet coefficient count differs from binom(s+Q, s)");
  if (!F.allFinite() || !beta.allFinite())
    fail(ErrorKind::InvalidArgument, "jet coefficients must be finite");
}

JetData jet_by_differences(const VectorMap& F, const VectorMap& beta, const Vector& center,
                           int order, double h) {
  if (order > 4) fail(ErrorKind::InvalidArgument, "difference jets support order <= 4");
  JetData jet;
  jet.center = center;
  jet.order = order;
  const int s = static_cast<int>(center.size());
  jet.multi_indices = multi_indices(s, order);
  // Central stencils (offsets in units of h, weights) for derivative orders 0..4.
  static const std::vector<std::vector<std::pair<int, double>>> stencil = {
      {{0, 1.0}},
      {{-1, -0.5}, {1, 0.5}},
      {{-1, 1.0}, {0, -2.0}, {1, 1.0}},
      {{-2, -0.5}, {-1, 1.0}, {1, -1.0}, {2, 0.5}},
      {{-2, 1.0}, {-1, -4.0}, {0, 6.0}, {1, -4.0}, {2, 1.0}},
  };
  const Vector F0 = F(center);
  const Vector b0 = beta(center);
  jet.F = Matrix::Zero(F0.size(), static_cast<Eigen::Index>(jet.multi_indices.size()));
  jet.beta = Matrix::Zero(b0.size(), static_cast<Eigen::Index>(jet.multi_indices.size()));
  for (std::size_t idx = 0; idx < jet.multi_indices.size(); ++idx) {
    const auto& q = jet.multi_indices[idx];
    int total = 0;
    for (int e : q) total += e;
    if (total == 0) {
      jet.F.col(static_cast<Eigen::Index>(idx)) = F0;
      jet.beta.col(static_cast<Eigen::Index>(idx)) = b0;
      continue;
    }
    std::vector<std::size_t> pos(s, 0);
    Vector accF = Vector::Zero(F0.size()), accB = Vector::Zero(b0.size());
    for (;;) {
      Vector x = center;
      double w = 1.0;
      for (int i = 0; i < s; ++i) {
        const auto& st = stencil[q[i]][pos[i]];
        x[i] += st.first * h;
        w *= st.second;
      }
      accF += w * F(x);
      accB += w * beta(x);
      int i = 0;
      while (i < s && ++pos[i] == stencil[q[i]].size()) pos[i++] = 0;
      if (i == s) break;
    }
    const double scale = std::pow(h, -total);
    jet.F.col(static_cast<Eigen::Index>(idx)) = accF * scale;
    jet.beta.col(static_cast<Eigen::Index>(idx)) = accB * scale;
  }
  return jet;
}

SphereBound rho_Q(const JetData& jet, int Q, const SphereOptions& opt) {
  if (jet.n() == 0) fail(ErrorKind::EmptyTarget, "rho_Q needs n >= 1");
  Q = resolve_order(jet, Q);
  const int n = jet.n();
  const SphereSample usph = sphere_points(jet.s(), opt);

  auto value_at = [&](const Vector& e) {
    return max_over_orders(directional_pieces(jet, jet.F, e, Q), usph, opt.refine_steps);
  };

  SphereBound out;
  if (n == 1) {
    // e = ±1 give the same value, so rho is the inner max itself.
    const MaxResult r = value_at(Vector::Constant(1, 1.0));
    out.value = r.value;
    out.lower = r.value;
    out.upper = r.upper;
    return out;
  }

  SphereOptions eopt = opt;
  eopt.seed = opt.seed + 1;
  const SphereSample esph = sphere_points(n, eopt);
  double best_lo = std::numeric_limits<double>::infinity();
  double best_hi = std::numeric_limits<double>::infinity();
  Vector best_e;
  for (const auto& e : esph.points) {
    const MaxResult r = value_at(e);
    if (r.value < best_lo) {
      best_lo = r.value;
      best_e = e;
    }
    best_hi = std::min(best_hi, r.upper);
  }
  const double refined = refine_on_sphere(
      [&](const Vector& e) { return value_at(e).value; }, best_e, best_lo, opt.refine_steps,
      std::isfinite(esph.covering) ? std::max(esph.covering, 1e-6) : 0.1, -1.0);
  double lip_e = 0.0;
  for (int J = 1; J <= Q; ++J) {
    double acc = 0.0;
    for (std::size_t idx = 0; idx < jet.multi_indices.size(); ++idx) {
      const auto& q = jet.multi_indices[idx];
      if (std::accumulate(q.begin(), q.end(), 0) != J) continue;
      double qf = 1.0;
      for (int e : q) qf *= factorial(e);
      acc += factorial(J) / qf * jet.F.col(static_cast<Eigen::Index>(idx)).norm();
    }
    lip_e = std::max(lip_e, acc);
  }
  out.value = refined;
  out.upper = std::max(best_hi, refined);
  out.lower = std::max(0.0, best_lo - lip_e * esph.covering);
  out.lower = std::min(out.lower, refined);
  return out;
}

SphereBound xi_Q(const JetData& jet, const std::vector<int>& l, int Q, const SphereOptions& opt) {
  bool zero = true;
  for (int v : l) zero = zero && v == 0;
  if (zero) fail(ErrorKind::ZeroL, "l must be nonzero");
  if (static_cast<int>(l.size()) != jet.nu()) fail(ErrorKind::DimensionMismatch, "l has wrong length");
  Q = resolve_order(jet, Q);
  Vector lw(jet.nu());
  for (int i = 0; i < jet.nu(); ++i) lw[i] = l[i];
  const SphereSample usph = sphere_points(jet.s(), opt);
  const MaxResult r = max_over_orders(directional_pieces(jet, jet.beta, lw, Q), usph, opt.refine_steps);
  return {r.value, r.value, r.upper};
}

NondegeneracyResult nondegeneracy_check(const JetData& jet, int Q, int L,
                                        const SphereOptions& opt) {
  Q = resolve_order(jet, Q);
  const int n = jet.n(), nu = jet.nu();
  NondegeneracyResult res;
  std::ostringstream os;
  if (n == 0 && nu == 0) {
    res.pass = true;
    res.case_tag = 4;
    res.detail = "n = nu = 0";
    return res;
  }
  if (n == 0) {
    res.case_tag = 3;
    res.pass = true;
    for (const auto& l : l_vectors(nu, L, false)) {
      const SphereBound xi = xi_Q(jet, l, Q, opt);
      if (!(xi.value > kPositive)) {
        res.pass = false;
        os << "Xi vanishes for l=(";
        for (std::size_t i = 0; i < l.size(); ++i) os << (i ? "," : "") << l[i];
        os << ")";
        break;
      }
    }
    res.detail = res.pass ? "Xi_l > 0 for all 1 <= |l| <= L" : os.str();
    return res;
  }
  const SphereBound rho = rho_Q(jet, Q, opt);
  if (nu == 0) {
    res.case_tag = 2;
    res.pass = rho.value > kPositive;
    os << "rho=" << rho.value << " in [" << rho.lower << ", " << rho.upper << "]";
    res.detail = os.str();
    return res;
  }
  res.case_tag = 1;
  if (!(rho.value > kPositive)) {
    os << "rho vanishes (" << rho.value << ")";
    res.detail = os.str();
    return res;
  }
  const double rho_lo = rho.lower > kPositive ? rho.lower : rho.value;
  for (const auto& l : l_vectors(nu, L, false)) {
    const SphereBound xi = xi_Q(jet, l, Q, opt);
    const double xi_hi = std::isfinite(xi.upper) ? xi.upper : xi.value;
    const double bound = xi_hi / rho_lo * (1.0 + 1e-12);
    const int kb = static_cast<int>(std::floor(bound));
    std::vector<int> k(n, -kb);
    for (;;) {
      double norm2 = 0.0;
      for (int v : k) norm2 += static_cast<double>(v) * v;
      if (std::sqrt(norm2) <= bound) {
        double best = 0.0;
        for (std::size_t idx = 0; idx < jet.multi_indices.size(); ++idx) {
          const auto& q = jet.multi_indices[idx];
          const int J = std::accumulate(q.begin(), q.end(), 0);
          if (J < 1 || J > Q) continue;
          double acc = 0.0;
          for (int i = 0; i < n; ++i) acc += jet.F(i, static_cast<Eigen::Index>(idx)) * k[i];
          for (int i = 0; i < nu; ++i) acc += jet.beta(i, static_cast<Eigen::Index>(idx)) * l[i];
          best = std::max(best, std::abs(acc));
        }
        if (!(best > kPositive)) {
          os << "derivatives of <F,k>+<beta,l> vanish at k=(";
          for (int i = 0; i < n; ++i) os << (i ? "," : "") << k[i];
          os << "), l=(";
          for (int i = 0; i < nu; ++i) os << (i ? "," : "") << l[i];
          os << ")";
          res.detail = os.str();
          return res;
        }
      }
      int i = 0;
      while (i < n && ++k[i] > kb) k[i++] = -kb;
      if (i == n) break;
    }
  }
  res.pass = true;
  os << "rho=" << rho.value << " (lower " << rho.lower << ")";
  res.detail = os.str();
  return res;
}

double MeasureReport::fraction_at(double g) const {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < worst_ratio.size(); ++i) {
    den += weights[i];
    if (worst_ratio[i] >= g) num += weights[i];
  }
  return den > 0.0 ? num / den : 0.0;
}

void sample_ball(const Ball& ball, const Sampler& sampler, std::vector<Vector>& points,
                 std::vector<double>& weights) {
  points.clear();
  weights.clear();
  const int s = static_cast<int>(ball.center.size());
  if (s == 0) return;
  if (sampler.kind == Sampler::Kind::MonteCarlo) {
    std::mt19937_64 rng(sampler.seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    for (int i = 0; i < sampler.mc_points; ++i) {
      Vector d(s);
      for (int j = 0; j < s; ++j) d[j] = nd(rng);
      d.normalize();
      const double r = ball.radius * std::pow(ud(rng), 1.0 / s);
      points.push_back(ball.center + r * d);
      weights.push_back(1.0);
    }
    return;
  }
  const int P = sampler.points_per_axis;
  if (P < 1) return;
  std::vector<int> idx(s, 0);
  for (;;) {
    Vector x(s);
    double w = 1.0;
    for (int j = 0; j < s; ++j) {
      const double t = P == 1 ? 0.0 : -1.0 + 2.0 * idx[j] / (P - 1);
      x[j] = ball.center[j] + ball.radius * t;
      if (P > 1 && (idx[j] == 0 || idx[j] == P - 1)) w *= 0.5;
    }
    if ((x - ball.center).norm() <= ball.radius * (1.0 + 1e-12)) {
      points.push_back(x);
      weights.push_back(w);
    }
    int j = 0;
    while (j < s && ++idx[j] == P) idx[j++] = 0;
    if (j == s) break;
  }
}

MeasureReport measure_estimate(const Ball& K, const VectorMap& F_tilde, const VectorMap& beta_tilde,
                               const Vector& Omega, const DiophParams& params,
                               const Sampler& sampler, int K_max, int threads,
                               std::optional<DiophParams> omega_star) {
  params.validate();
  if (omega_star) {
    if (params.tau < omega_star->tau)
      fail(ErrorKind::InvalidArgument, "tau must be at least the forcing exponent tau*");
    if (Omega.size() > 0 && !affine_dioph_check(Omega, Vector(0), *omega_star, K_max).pass)
      fail(ErrorKind::OmegaNotDiophantine, "forcing frequencies fail their Diophantine check");
  }
  MeasureReport rep;
  rep.gamma = params.gamma;
  rep.cutoff = K_max;
  sample_ball(K, sampler, rep.points, rep.weights);
  if (rep.points.empty()) fail(ErrorKind::SamplerEmpty, "sampler produced no points");

  const Vector F0 = F_tilde(rep.points.front());
  const int dim = static_cast<int>(F0.size() + Omega.size());
  std::optional<ModeTable> table;
  if (dim > 0) table.emplace(dim, K_max, params.tau);

  rep.worst_ratio.assign(rep.points.size(), std::numeric_limits<double>::infinity());
  parallel_for(rep.points.size(), threads, [&](std::size_t i) {
    if (dim == 0) return;
    const Vector F = F_tilde(rep.points[i]);
    Vector full(F.size() + Omega.size());
    full << F, Omega;
    rep.worst_ratio[i] = affine_dioph_check(full, beta_tilde(rep.points[i]), params, *table).worst_ratio;
  });
  rep.fraction = rep.fraction_at(params.gamma);
  std::vector<double> sorted = rep.worst_ratio;
  std::sort(sorted.begin(), sorted.end());
  rep.min_ratio = sorted.front();
  rep.median_ratio = sorted[sorted.size() / 2];
  return rep;
}

}  // namespace kamrev2::dioph
