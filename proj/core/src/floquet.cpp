#include "kamrev2/dual.hpp"
#include "kamrev2/errors.hpp"
#include "kamrev2/torus.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>

namespace kamrev2::torus {

double FloquetResidual::max() const {
  return std::max({torus, frequency, drift, reducibility, x_shift});
}

namespace {

double max_abs(const Matrix& A) { return A.size() ? A.cwiseAbs().maxCoeff() : 0.0; }

std::vector<Dual> as_dual(const Vector& v) {
  std::vector<Dual> out(v.size());
  for (int i = 0; i < v.size(); ++i) out[i] = Dual(v[i]);
  return out;
}

}  // namespace

FloquetResidual floquet_residual(const FieldModel& model, const FieldParams& params,
                                 const TorusTransform& t, int points_per_angle) {
  const int n = t.dims.n, m = t.dims.m, d = t.dims.d(), N = t.dims.N, na = n + N;
  int P = points_per_angle > 0 ? points_per_angle : 2 * (4 * t.K + 4);
  while (P > 4 && std::pow(static_cast<double>(P), na) > 200000.0) --P;
  long long total = 1;
  for (int j = 0; j < na; ++j) total *= P;

  const auto omega = as_dual(params.omega);
  const auto sigma = as_dual(params.sigma);
  const auto mu = as_dual(params.mu);
  const auto chi = as_dual(params.chi);
  Matrix Lambda = Matrix::Zero(d, d);
  if (d > m) Lambda.bottomRightCorner(d - m, d - m) = t.M_prime;

  FloquetResidual res;
  res.grid_points = static_cast<int>(total);
  const int nm = static_cast<int>(t.modes.size());
  // Half-cell offsets make every phase a multiple of pi / P.
  std::vector<double> ctab(2 * P), stab(2 * P);
  for (int r = 0; r < 2 * P; ++r) {
    ctab[r] = std::cos(M_PI * r / P);
    stab[r] = std::sin(M_PI * r / P);
  }
  const FourierItem* items[3] = {&t.a, &t.B0, &t.B1};
  // All items and their angle derivatives in one product per trig table.
  int offset[3], width[3], cols = 0;
  for (int it = 0; it < 3; ++it) {
    offset[it] = cols;
    width[it] = items[it]->rows * items[it]->cols;
    cols += (1 + na) * width[it];
  }
  Matrix coefA(nm, cols), coefB(nm, cols);
  for (int it = 0; it < 3; ++it) {
    const int w = width[it];
    coefA.middleCols(offset[it], w) = items[it]->cos;
    coefB.middleCols(offset[it], w) = items[it]->sin;
    for (int j = 0; j < na; ++j)
      for (int i = 0; i < nm; ++i) {
        const double kj = t.modes[i][j];
        coefA.block(i, offset[it] + (1 + j) * w, 1, w) = kj * items[it]->sin.row(i);
        coefB.block(i, offset[it] + (1 + j) * w, 1, w) = -kj * items[it]->cos.row(i);
      }
  }
  constexpr long long kChunk = 1024;
  std::vector<Dual> ang(na), Y(d), V(n + d);
  std::vector<int> idx(na);
  Vector a(n), B0(d), xdot_v(n), Ybdot_v(d), Vv(n + d), Vd(n + d);
  Matrix B1(d, d), IB1(d, d), da(n, na), dB0(d, na), Lin(d, d), dB1_flow(d, d);
  std::vector<Matrix> dB1(na, Matrix(d, d));
  Eigen::PartialPivLU<Matrix> Ax_lu(std::max(n, 1)), IB1_lu(d);
  for (long long g0 = 0; g0 < total; g0 += kChunk) {
    const int rows = static_cast<int>(std::min(kChunk, total - g0));
    Matrix th(rows, na), Ct(rows, nm), St(rows, nm);
    for (int r = 0; r < rows; ++r) {
      long long code = g0 + r;
      for (int j = na - 1; j >= 0; --j) {
        idx[j] = static_cast<int>(code % P);
        th(r, j) = M_PI * (2 * idx[j] + 1) / P;
        code /= P;
      }
      for (int i = 0; i < nm; ++i) {
        long long ph = 0;
        for (int j = 0; j < na; ++j) ph += static_cast<long long>(t.modes[i][j]) * (2 * idx[j] + 1);
        ph %= 2 * P;
        if (ph < 0) ph += 2 * P;
        Ct(r, i) = ctab[ph];
        St(r, i) = stab[ph];
      }
    }
    const Matrix R = Ct * coefA + St * coefB;
    // Column blocks of R: item it, derivative slot j (0 = value, 1 + j = d/dtheta_j).
    auto block = [&](int it, int slot) { return R.middleCols(offset[it] + slot * width[it], width[it]); };
    Matrix val[3];
    std::vector<Matrix> der[3];
    for (int it = 0; it < 3; ++it) {
      val[it] = block(it, 0);
      for (int j = 0; j < na; ++j) der[it].push_back(block(it, 1 + j));
    }
    for (int r = 0; r < rows; ++r) {
      if (n > 0) a = val[0].row(r).transpose();
      B0 = val[1].row(r).transpose();
      for (int i = 0; i < d; ++i)
        for (int k = 0; k < d; ++k) B1(i, k) = val[2](r, i * d + k);
      for (int j = 0; j < na; ++j) {
        if (n > 0) da.col(j) = der[0][j].row(r).transpose();
        dB0.col(j) = der[1][j].row(r).transpose();
        for (int i = 0; i < d; ++i)
          for (int k = 0; k < d; ++k) dB1[j](i, k) = der[2][j](r, i * d + k);
      }
      if (n > 0) Ax_lu.compute(Matrix::Identity(n, n) + da.leftCols(n));
      IB1 = Matrix::Identity(d, d) + B1;
      IB1_lu.compute(IB1);
      for (int i = 0; i < na; ++i) ang[i] = Dual(i < n ? th(r, i) + a[i] : th(r, i));

      for (int col = -1; col < d; ++col) {
        for (int i = 0; i < d; ++i) {
          Y[i] = Dual(B0[i]);
          if (col >= 0) Y[i].d = IB1(i, col);
        }
        model.velocity(ang.data(), Y.data(), sigma.data(), omega.data(), mu.data(), chi.data(), V.data());
        for (int i = 0; i < n + d; ++i) {
          Vv[i] = V[i].v;
          Vd[i] = V[i].d;
        }
        if (col < 0) {
          if (n > 0) xdot_v = Ax_lu.solve(Vv.head(n) - da.rightCols(N) * t.Omega);
          Vector rhs_Y = Vv.tail(d) - dB0.rightCols(N) * t.Omega;
          if (n > 0) rhs_Y -= dB0.leftCols(n) * xdot_v;
          Ybdot_v = IB1_lu.solve(rhs_Y);
          continue;
        }
        const Vector xdot_d = n > 0 ? Vector(Ax_lu.solve(Vd.head(n))) : Vector(0);
        dB1_flow.setZero();
        for (int i = 0; i < n; ++i) dB1_flow += dB1[i] * xdot_v[i];
        for (int j = 0; j < N; ++j) dB1_flow += dB1[n + j] * t.Omega[j];
        Vector rhs = Vd.tail(d) - dB1_flow.col(col);
        if (n > 0) rhs -= dB0.leftCols(n) * xdot_d;
        Lin.col(col) = IB1_lu.solve(rhs);
      }
      if (n > 0) res.frequency = std::max(res.frequency, max_abs(xdot_v - t.omega_prime));
      res.torus = std::max(res.torus, max_abs(Ybdot_v));
      res.drift = std::max({res.drift, max_abs(Ybdot_v.head(m)), max_abs(Lin.topRows(m))});
      if (d > m)
        res.reducibility =
            std::max(res.reducibility, max_abs(Lin.bottomRows(d - m) - Lambda.bottomRows(d - m)));
    }
  }
  res.x_shift = std::max(max_abs(t.theta_shift), max_abs(t.X_shift));
  return res;
}

FloquetResidual floquet_residual(const SystemSpec& spec, const TorusTransform& t,
                                 const revlin::Unfolding& unf, int points_per_angle) {
  return floquet_residual(FieldModel::extended(spec, unf), t.params(), t, points_per_angle);
}

}  // namespace kamrev2::torus
