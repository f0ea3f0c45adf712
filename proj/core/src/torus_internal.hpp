#pragma once

#include "kamrev2/dual.hpp"
#include "kamrev2/torus.hpp"

#include <Eigen/Dense>

#include <memory>
#include <vector>

namespace kamrev2::torus::detail {

// T with T vec(E) = vec(A E B) on row-major flattenings of r x c matrices.
Matrix symmetry_operator(const Matrix& A, const Matrix& B);

// Orthonormal basis of the column space of P (singular values above tol).
Matrix range_basis(const Matrix& P, double tol = 1e-8);

// diag(-I_m, R): the normal-coordinate part of the involution.
Matrix normal_involution(const Dims& dims, const Matrix& R);

// Cosine coefficients obey C = T C, sine coefficients S = -T S.
struct ClassBasis {
  Matrix mean;  // q x r0
  Matrix cos;   // q x r+
  Matrix sin;   // q x r-
};

ClassBasis class_basis(const Matrix& T);

enum Group { GroupA = 0, GroupB0 = 1, GroupB1 = 2, GroupU = 3, GroupV = 4, GroupLambda = 5 };

struct Slot {
  Group group;
  int mode;  // index into modes; -1 for parameters
  bool sine;
  int col;   // basis column or parameter component
};

// Collocation grid of (4K + 4)^na points and the mode tables on it.
struct GridTables {
  Matrix theta;  // n_grid x na
  Matrix cosT;   // n_grid x n_modes
  Matrix sinT;
  Matrix Pcos;   // n_modes x n_grid: mean row 1/Ng, others 2/Ng
  Matrix Psin;
  Matrix Pstack;  // [Pcos; Psin]
};

std::shared_ptr<const GridTables> grid_tables(int na, int K, const std::vector<std::vector<int>>& modes);

struct Layout {
  Dims dims;
  int K = 0;
  int na = 0;
  int d = 0;
  int qa = 0, qB0 = 0, qB1 = 0;  // flattened sizes: n, d, d*d
  int qtot = 0;                   // qa + qB0 + qB1 (residual components E1, E2, E3)
  Vector nu;                      // (omega0, Omega)
  std::vector<std::vector<int>> modes;
  std::vector<double> k_dot_nu;

  int points_per_angle = 0;
  int n_grid = 0;
  std::shared_ptr<const GridTables> grid;  // shared by all layouts with the same (na, K)

  ClassBasis unk[3];  // a, B0, B1 (B1 mean excludes the gauge directions)
  ClassBasis eqn[3];  // E1, E2, E3
  Matrix Vsub;        // (s + S) x p

  std::vector<Slot> slots;
  int unknowns() const { return static_cast<int>(slots.size()); }
  int equations = 0;

  Matrix Lambda;   // d x d: diag(0_m, M_prime)
  Vector omega0;
  Vector mu0, chi0;
};

Layout build_layout(const SystemSpec& spec, const Target& target, int K, const Matrix& M_prime,
                    const Matrix& Vsub);

// Coefficients of a, B0, B1 (cos and sin, n_modes x q) from the unknown vector.
struct Coefficients {
  Matrix cos[3];
  Matrix sin[3];
  Vector u, v, lambda;
};
Coefficients unpack(const Layout& L, const Vector& q);

// Values of the transform items and their derivatives on the solver grid.
struct GridValues {
  Matrix val[3];   // n_grid x q
  Matrix dnu[3];   // derivative along nu
  std::vector<Matrix> dx[3];  // dx[g][j]: derivative along xbar_j, j < n
};
GridValues synthesize(const Layout& L, const Coefficients& c);

// Parameter values implied by the counterterms.
FieldParams shifted_params(const Layout& L, const Vector& u, const Vector& v, const Vector& lambda);

// E1 = V_x - omega0 - D a; E2 = V_Y - D B0;
// E3 = dB0 (I + da)^{-1} Jx (I + B1) + D B1 + (I + B1) Lambda - J_Y (I + B1).
template <class T>
void conjugacy_residual(const FieldModel& model, const Layout& L, const double* theta, const T* a,
                        const T* da, const T* Dna, const T* B0, const T* dB0, const T* DnB0,
                        const T* B1, const T* DnB1, const T* omega, const T* sigma, const T* mu,
                        const T* chi, T* E) {
  const int n = L.dims.n, d = L.d, na = L.na;
  std::vector<T> ang(na), V(n + d), Jx(n * d), JY(d * d);
  for (int i = 0; i < na; ++i) ang[i] = T(theta[i]);
  for (int i = 0; i < n; ++i) ang[i] = ang[i] + a[i];
  model.velocity(ang.data(), B0, sigma, omega, mu, chi, V.data());
  model.jacobian_Y(ang.data(), B0, sigma, mu, chi, Jx.data(), JY.data());
  for (int i = 0; i < n; ++i) E[i] = V[i] - L.omega0[i] - Dna[i];
  for (int i = 0; i < d; ++i) E[n + i] = V[n + i] - DnB0[i];

  std::vector<T> IB1(d * d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) IB1[r * d + c] = B1[r * d + c] + (r == c ? 1.0 : 0.0);

  T* E3 = E + n + d;
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) {
      T acc = DnB1[r * d + c];
      for (int k = 0; k < d; ++k) {
        const double lam = L.Lambda(k, c);
        if (lam != 0.0) acc = acc + IB1[r * d + k] * lam;
        acc = acc - JY[r * d + k] * IB1[k * d + c];
      }
      E3[r * d + c] = acc;
    }
  if (n == 0) return;

  // P = (I + da)^{-1} Jx (I + B1) by Gauss-Jordan with partial pivoting on values.
  std::vector<T> Mx(n * n), P(n * d);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) Mx[r * n + c] = da[r * n + c] + (r == c ? 1.0 : 0.0);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c) {
      T acc(0.0);
      for (int k = 0; k < d; ++k) acc = acc + Jx[r * d + k] * IB1[k * d + c];
      P[r * d + c] = acc;
    }
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(value_of(Mx[r * n + col])) > std::abs(value_of(Mx[piv * n + col]))) piv = r;
    if (piv != col) {
      for (int c = 0; c < n; ++c) std::swap(Mx[col * n + c], Mx[piv * n + c]);
      for (int c = 0; c < d; ++c) std::swap(P[col * d + c], P[piv * d + c]);
    }
    const T inv = T(1.0) / Mx[col * n + col];
    for (int c = 0; c < n; ++c) Mx[col * n + c] = Mx[col * n + c] * inv;
    for (int c = 0; c < d; ++c) P[col * d + c] = P[col * d + c] * inv;
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const T f = Mx[r * n + col];
      for (int c = 0; c < n; ++c) Mx[r * n + c] = Mx[r * n + c] - f * Mx[col * n + c];
      for (int c = 0; c < d; ++c) P[r * d + c] = P[r * d + c] - f * P[col * d + c];
    }
  }
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) {
      T acc = E3[r * d + c];
      for (int k = 0; k < n; ++k) acc = acc + dB0[r * n + k] * P[k * d + c];
      E3[r * d + c] = acc;
    }
}

}  // namespace kamrev2::torus::detail
