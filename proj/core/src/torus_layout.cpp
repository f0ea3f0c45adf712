#include "torus_internal.hpp"

#include "kamrev2/errors.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <sstream>

namespace kamrev2::torus {

std::vector<std::vector<int>> mode_box(int n_angles, int K) {
  if (n_angles < 1 || K < 0) fail(ErrorKind::InvalidArgument, "mode box needs n_angles >= 1, K >= 0");
  std::vector<std::vector<int>> out;
  out.emplace_back(n_angles, 0);
  std::vector<int> k(n_angles, -K);
  for (;;) {
    int first = 0;
    for (int v : k)
      if (v != 0) {
        first = v;
        break;
      }
    if (first > 0) out.push_back(k);
    int i = n_angles - 1;
    while (i >= 0 && k[i] == K) k[i--] = -K;
    if (i < 0) break;
    ++k[i];
  }
  return out;
}

namespace {

Matrix reshape_row(const Eigen::RowVectorXd& r, int rows, int cols) {
  Matrix out(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out(i, j) = r[i * cols + j];
  return out;
}

}  // namespace

ModeTrig mode_trig(const std::vector<std::vector<int>>& modes, const Vector& theta) {
  const auto na = theta.size();
  int K = 0;
  for (const auto& k : modes)
    for (int v : k) K = std::max(K, std::abs(v));
  // powers[j][K + e] = exp(i e theta_j)
  std::vector<std::vector<std::complex<double>>> powers(static_cast<std::size_t>(na));
  for (Eigen::Index j = 0; j < na; ++j) {
    auto& pw = powers[static_cast<std::size_t>(j)];
    pw.assign(2 * K + 1, 1.0);
    const std::complex<double> z = std::polar(1.0, theta[j]);
    for (int e = 1; e <= K; ++e) {
      pw[K + e] = e % 16 == 0 ? std::polar(1.0, e * theta[j]) : pw[K + e - 1] * z;
      pw[K - e] = std::conj(pw[K + e]);
    }
  }
  ModeTrig t;
  t.cos.resize(static_cast<Eigen::Index>(modes.size()));
  t.sin.resize(static_cast<Eigen::Index>(modes.size()));
  for (std::size_t i = 0; i < modes.size(); ++i) {
    std::complex<double> z = 1.0;
    for (Eigen::Index j = 0; j < na; ++j) z *= powers[static_cast<std::size_t>(j)][K + modes[i][j]];
    t.cos[static_cast<Eigen::Index>(i)] = z.real();
    t.sin[static_cast<Eigen::Index>(i)] = z.imag();
  }
  return t;
}

Matrix FourierItem::value(const ModeTrig& trig) const {
  const Eigen::RowVectorXd acc = trig.cos.transpose() * cos + trig.sin.transpose() * sin;
  return reshape_row(acc, rows, cols);
}

Matrix FourierItem::derivative(const std::vector<std::vector<int>>& modes, const ModeTrig& trig,
                               int j) const {
  Vector kc(trig.cos.size()), ks(trig.sin.size());
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    kc[ii] = modes[i][j] * trig.cos[ii];
    ks[ii] = -modes[i][j] * trig.sin[ii];
  }
  const Eigen::RowVectorXd acc = ks.transpose() * cos + kc.transpose() * sin;
  return reshape_row(acc, rows, cols);
}

Matrix FourierItem::value(const std::vector<std::vector<int>>& modes, const Vector& theta) const {
  return value(mode_trig(modes, theta));
}

Matrix FourierItem::derivative(const std::vector<std::vector<int>>& modes, const Vector& theta,
                               int j) const {
  return derivative(modes, mode_trig(modes, theta), j);
}

Matrix FourierItem::mean() const {
  if (cos.rows() == 0) return Matrix::Zero(rows, cols);
  return reshape_row(cos.row(0), rows, cols);
}

FourierItem FourierItem::block(int r0, int nr, int c0, int nc) const {
  FourierItem out;
  out.rows = nr;
  out.cols = nc;
  out.cos.resize(cos.rows(), nr * nc);
  out.sin.resize(sin.rows(), nr * nc);
  for (int i = 0; i < nr; ++i)
    for (int j = 0; j < nc; ++j) {
      out.cos.col(i * nc + j) = cos.col((r0 + i) * cols + c0 + j);
      out.sin.col(i * nc + j) = sin.col((r0 + i) * cols + c0 + j);
    }
  return out;
}

FourierItem TorusTransform::item(const std::string& name) const {
  const int m = dims.m, dz = 2 * dims.p;
  if (name == "a") return a;
  if (name == "b0") return B0.block(0, m, 0, 1);
  if (name == "c0") return B0.block(m, dz, 0, 1);
  if (name == "b1") return B1.block(0, m, 0, m);
  if (name == "b2") return B1.block(0, m, m, dz);
  if (name == "c1") return B1.block(m, dz, 0, m);
  if (name == "c2") return B1.block(m, dz, m, dz);
  fail(ErrorKind::InvalidArgument, "unknown transform item '" + name + "'");
}

FieldParams TorusTransform::params() const {
  FieldParams p;
  p.omega = target.omega0 + u;
  p.sigma = v;
  p.mu = target.mu0 + w;
  p.chi = target.chi0 + W;
  return p;
}

std::pair<Vector, Vector> TorusTransform::embed(const Vector& theta, const Vector& Ybar) const {
  const int n = dims.n;
  const ModeTrig trig = mode_trig(modes, theta);
  Vector x = theta.head(n) + a.value(trig).col(0);
  Vector Y = B0.value(trig).col(0) + (Matrix::Identity(dims.d(), dims.d()) + B1.value(trig)) * Ybar;
  return {x, Y};
}

namespace detail {

Matrix symmetry_operator(const Matrix& A, const Matrix& B) {
  const int r = static_cast<int>(A.rows()), c = static_cast<int>(B.rows());
  Matrix T = Matrix::Zero(r * c, r * c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      for (int k = 0; k < r; ++k)
        for (int l = 0; l < c; ++l) T(i * c + j, k * c + l) = A(i, k) * B(l, j);
  return T;
}

Matrix range_basis(const Matrix& P, double tol) {
  if (P.rows() == 0) return Matrix(0, 0);
  Eigen::JacobiSVD<Matrix> svd(P, Eigen::ComputeFullU);
  const auto& sv = svd.singularValues();
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > tol) ++rank;
  return svd.matrixU().leftCols(rank);
}

Matrix normal_involution(const Dims& dims, const Matrix& R) {
  const int m = dims.m, dz = 2 * dims.p;
  Matrix S = Matrix::Zero(m + dz, m + dz);
  S.topLeftCorner(m, m) = -Matrix::Identity(m, m);
  if (dz > 0) S.bottomRightCorner(dz, dz) = R;
  return S;
}

ClassBasis class_basis(const Matrix& T) {
  const Matrix I = Matrix::Identity(T.rows(), T.cols());
  ClassBasis b;
  b.cos = range_basis(0.5 * (I + T), 0.5);
  b.sin = range_basis(0.5 * (I - T), 0.5);
  b.mean = b.cos;
  return b;
}

namespace {

// B1 mean: drop the b1 block (gauge) and the R-commuting centralizer of M_prime.
Matrix B1_mean_basis(const Dims& dims, const Matrix& T, const Matrix& M_prime) {
  const int m = dims.m, dz = 2 * dims.p, d = m + dz, p = dims.p;
  const int q = d * d;
  Matrix Dmask = Matrix::Identity(q, q);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) Dmask(i * d + j, i * d + j) = 0.0;
  Matrix P = 0.5 * (Matrix::Identity(q, q) + T) * Dmask;
  if (p > 0) {
    Matrix Z(q, p);
    Matrix power = Matrix::Identity(dz, dz);
    const Matrix M2 = M_prime * M_prime;
    for (int j = 0; j < p; ++j) {
      Matrix E = Matrix::Zero(d, d);
      E.bottomRightCorner(dz, dz) = power;
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) Z(r * d + c, j) = E(r, c);
      power = power * M2;
    }
    const Matrix Q = range_basis(Z, 1e-10 * std::max(1.0, Z.norm()));
    if (Q.cols() != p) fail(ErrorKind::SingularMatrix, "centralizer of M' is degenerate");
    P = (Matrix::Identity(q, q) - Q * Q.transpose()) * P;
  }
  const Matrix B = range_basis(P, 1e-8);
  const int expected = 2 * m * p + 2 * p * p - p;
  if (B.cols() != expected) {
    std::ostringstream os;
    os << "mean gauge basis has dimension " << B.cols() << ", expected " << expected;
    fail(ErrorKind::SingularMatrix, os.str());
  }
  return B;
}

}  // namespace

std::shared_ptr<const GridTables> grid_tables(int na, int K, const std::vector<std::vector<int>>& modes) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::shared_ptr<const GridTables>> cache;
  {
    std::lock_guard<std::mutex> lock(mutex);
    const auto it = cache.find({na, K});
    if (it != cache.end()) return it->second;
  }
  const int P = 4 * K + 4;
  long long total = 1;
  for (int j = 0; j < na; ++j) total *= P;
  const int n_grid = static_cast<int>(total);
  const int nm = static_cast<int>(modes.size());
  // Phases are multiples of 2 pi / P, so every entry is a lookup into one period.
  std::vector<double> c(P), s(P);
  for (int r = 0; r < P; ++r) {
    c[r] = std::cos(2.0 * M_PI * r / P);
    s[r] = std::sin(2.0 * M_PI * r / P);
  }
  auto g = std::make_shared<GridTables>();
  g->theta.resize(n_grid, na);
  g->cosT.resize(n_grid, nm);
  g->sinT.resize(n_grid, nm);
  std::vector<int> idx(na);
  for (int p = 0; p < n_grid; ++p) {
    int code = p;
    for (int j = na - 1; j >= 0; --j) {
      idx[j] = code % P;
      g->theta(p, j) = 2.0 * M_PI * idx[j] / P;
      code /= P;
    }
    for (int i = 0; i < nm; ++i) {
      long long r = 0;
      for (int j = 0; j < na; ++j) r += static_cast<long long>(modes[i][j]) * idx[j];
      r %= P;
      if (r < 0) r += P;
      g->cosT(p, i) = c[r];
      g->sinT(p, i) = s[r];
    }
  }
  g->Pcos = g->cosT.transpose() * (2.0 / n_grid);
  g->Pcos.row(0) *= 0.5;
  g->Psin = g->sinT.transpose() * (2.0 / n_grid);
  g->Pstack.resize(2 * nm, n_grid);
  g->Pstack << g->Pcos, g->Psin;
  std::lock_guard<std::mutex> lock(mutex);
  return cache.emplace(std::make_pair(na, K), std::move(g)).first->second;
}

Layout build_layout(const SystemSpec& spec, const Target& target, int K, const Matrix& M_prime,
                    const Matrix& Vsub) {
  Layout L;
  L.dims = spec.dims;
  L.K = K;
  L.na = spec.dims.n + spec.dims.N;
  L.d = spec.dims.d();
  const int n = spec.dims.n, m = spec.dims.m, d = L.d, p = spec.dims.p;
  L.qa = n;
  L.qB0 = d;
  L.qB1 = d * d;
  L.qtot = L.qa + L.qB0 + L.qB1;
  L.nu.resize(L.na);
  L.nu << target.omega0, spec.omega;
  L.omega0 = target.omega0;
  L.mu0 = target.mu0;
  L.chi0 = target.chi0;
  L.Vsub = Vsub;
  L.Lambda = Matrix::Zero(d, d);
  if (d > m) L.Lambda.bottomRightCorner(d - m, d - m) = M_prime;

  L.modes = mode_box(L.na, K);
  for (const auto& k : L.modes) {
    double s = 0.0;
    for (int j = 0; j < L.na; ++j) s += k[j] * L.nu[j];
    L.k_dot_nu.push_back(s);
  }
  const int nm = static_cast<int>(L.modes.size());

  L.points_per_angle = 4 * K + 4;
  L.grid = grid_tables(L.na, K, L.modes);
  L.n_grid = static_cast<int>(L.grid->theta.rows());

  const Matrix R = spec.dims.p > 0 ? spec.R.R() : Matrix(0, 0);
  const Matrix S = normal_involution(spec.dims, R);
  const Matrix In = Matrix::Identity(n, n);
  const Matrix T_B1 = symmetry_operator(S, S);
  L.unk[GroupA] = class_basis(-In);
  L.unk[GroupB0] = class_basis(S);
  L.unk[GroupB1] = class_basis(T_B1);
  L.unk[GroupB1].mean = B1_mean_basis(spec.dims, T_B1, M_prime);
  L.eqn[0] = class_basis(In);
  L.eqn[1] = class_basis(-S);
  L.eqn[2] = class_basis(symmetry_operator(-S, S));

  for (int g = 0; g < 3; ++g) {
    const ClassBasis& B = L.unk[g];
    for (int c = 0; c < B.mean.cols(); ++c) L.slots.push_back({Group(g), 0, false, c});
    for (int i = 1; i < nm; ++i) {
      for (int c = 0; c < B.cos.cols(); ++c) L.slots.push_back({Group(g), i, false, c});
      for (int c = 0; c < B.sin.cols(); ++c) L.slots.push_back({Group(g), i, true, c});
    }
  }
  for (int i = 0; i < n; ++i) L.slots.push_back({GroupU, -1, false, i});
  for (int i = 0; i < m; ++i) L.slots.push_back({GroupV, -1, false, i});
  for (int i = 0; i < p; ++i) L.slots.push_back({GroupLambda, -1, false, i});

  L.equations = 0;
  for (int g = 0; g < 3; ++g)
    L.equations += static_cast<int>(L.eqn[g].mean.cols() + (nm - 1) * (L.eqn[g].cos.cols() + L.eqn[g].sin.cols()));
  if (L.equations != L.unknowns()) {
    std::ostringstream os;
    os << "conjugacy system is not square: " << L.equations << " equations, " << L.unknowns()
       << " unknowns";
    fail(ErrorKind::SingularMatrix, os.str());
  }
  return L;
}

Coefficients unpack(const Layout& L, const Vector& q) {
  const int nm = static_cast<int>(L.modes.size());
  const int qs[3] = {L.qa, L.qB0, L.qB1};
  Coefficients c;
  for (int g = 0; g < 3; ++g) {
    c.cos[g] = Matrix::Zero(nm, qs[g]);
    c.sin[g] = Matrix::Zero(nm, qs[g]);
  }
  c.u = Vector::Zero(L.dims.n);
  c.v = Vector::Zero(L.dims.m);
  c.lambda = Vector::Zero(L.dims.p);
  for (int j = 0; j < L.unknowns(); ++j) {
    const Slot& s = L.slots[j];
    switch (s.group) {
      case GroupU: c.u[s.col] += q[j]; break;
      case GroupV: c.v[s.col] += q[j]; break;
      case GroupLambda: c.lambda[s.col] += q[j]; break;
      default: {
        const ClassBasis& B = L.unk[s.group];
        const Matrix& basis = s.mode == 0 ? B.mean : (s.sine ? B.sin : B.cos);
        if (s.sine)
          c.sin[s.group].row(s.mode) += q[j] * basis.col(s.col).transpose();
        else
          c.cos[s.group].row(s.mode) += q[j] * basis.col(s.col).transpose();
      }
    }
  }
  return c;
}

GridValues synthesize(const Layout& L, const Coefficients& c) {
  GridValues gv;
  const int nm = static_cast<int>(L.modes.size());
  const int n = L.dims.n, ng = L.n_grid;
  for (int g = 0; g < 3; ++g) {
    const int q = static_cast<int>(c.cos[g].cols());
    const int blocks = 2 + n;  // value, d/dnu, d/dx_j
    Matrix R;
    if (c.cos[g].isZero(0.0) && c.sin[g].isZero(0.0)) {
      R = Matrix::Zero(ng, blocks * q);
    } else {
      // One product per trig table: columns [value | nu-derivative | x_j-derivatives].
      Matrix A(nm, blocks * q), B(nm, blocks * q);
      for (int i = 0; i < nm; ++i) {
        const double kn = L.k_dot_nu[i];
        A.row(i).segment(0, q) = c.cos[g].row(i);
        B.row(i).segment(0, q) = c.sin[g].row(i);
        A.row(i).segment(q, q) = kn * c.sin[g].row(i);
        B.row(i).segment(q, q) = -kn * c.cos[g].row(i);
        for (int j = 0; j < n; ++j) {
          const double kj = L.modes[i][j];
          A.row(i).segment((2 + j) * q, q) = kj * c.sin[g].row(i);
          B.row(i).segment((2 + j) * q, q) = -kj * c.cos[g].row(i);
        }
      }
      R.noalias() = L.grid->cosT * A;
      R.noalias() += L.grid->sinT * B;
    }
    gv.val[g] = R.middleCols(0, q);
    gv.dnu[g] = R.middleCols(q, q);
    for (int j = 0; j < n; ++j) gv.dx[g].push_back(R.middleCols((2 + j) * q, q));
  }
  return gv;
}

FieldParams shifted_params(const Layout& L, const Vector& u, const Vector& v, const Vector& lambda) {
  FieldParams p;
  p.omega = L.omega0 + u;
  p.sigma = v;
  const Vector shift = L.Vsub.cols() > 0 ? Vector(L.Vsub * lambda) : Vector::Zero(L.Vsub.rows());
  const int s = L.dims.s;
  p.mu = L.mu0 + shift.head(s);
  p.chi = L.chi0 + shift.tail(shift.size() - s);
  return p;
}

}  // namespace detail
}  // namespace kamrev2::torus
