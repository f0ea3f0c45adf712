#include "kamrev2/series.hpp"

#include "kamrev2/errors.hpp"

#include <algorithm>
#include <tuple>

namespace kamrev2::series {

Poly Poly::constant(int nvars, double c) {
  Poly p(nvars);
  p.add(std::vector<int>(nvars, 0), c);
  return p;
}

Poly Poly::variable(int nvars, int i) {
  Poly p(nvars);
  std::vector<int> e(nvars, 0);
  e[i] = 1;
  p.add(e, 1.0);
  return p;
}

void Poly::add(const std::vector<int>& exps, double c) {
  if (c == 0.0) return;
  auto [it, inserted] = terms_.try_emplace(exps, c);
  if (!inserted) {
    it->second += c;
    if (it->second == 0.0) terms_.erase(it);
  }
}

Poly Poly::operator+(const Poly& o) const {
  Poly r = *this;
  for (const auto& [e, c] : o.terms_) r.add(e, c);
  return r;
}

Poly Poly::operator*(const Poly& o) const {
  Poly r(nvars_);
  std::vector<int> e(nvars_);
  for (const auto& [ea, ca] : terms_)
    for (const auto& [eb, cb] : o.terms_) {
      for (int i = 0; i < nvars_; ++i) e[i] = ea[i] + eb[i];
      r.add(e, ca * cb);
    }
  return r;
}

Poly Poly::scaled(double c) const {
  Poly r(nvars_);
  for (const auto& [e, v] : terms_) r.add(e, v * c);
  return r;
}

Poly Poly::pow(int e) const {
  Poly r = constant(nvars_, 1.0);
  for (int i = 0; i < e; ++i) r = r * *this;
  return r;
}

Poly Poly::filtered(const std::function<bool(const std::vector<int>&)>& keep) const {
  Poly r(nvars_);
  for (const auto& [e, c] : terms_)
    if (keep(e)) r.add(e, c);
  return r;
}

namespace {

auto key_of(const Term& t) { return std::tie(t.k, t.basis, t.d); }

}  // namespace

FourierTaylorField::FourierTaylorField(int target_dim, int n_angles, VarLayout layout)
    : target_dim_(target_dim), n_angles_(n_angles), layout_(layout) {}

void FourierTaylorField::add(std::vector<int> k, Basis basis, std::vector<int> d,
                             const Eigen::VectorXd& c) {
  if (static_cast<int>(k.size()) != n_angles_ || static_cast<int>(d.size()) != layout_.nvars() ||
      c.size() != target_dim_)
    fail(ErrorKind::DimensionMismatch, "series term has wrong shape");
  for (int e : d)
    if (e < 0) fail(ErrorKind::InvalidArgument, "negative monomial exponent");
  Eigen::VectorXd coeff = c;
  int first = 0;
  for (int v : k)
    if (v != 0) {
      first = v;
      break;
    }
  if (first == 0 && basis == Basis::Sin) return;  // sin(0) = 0
  if (first < 0) {
    for (auto& v : k) v = -v;
    if (basis == Basis::Sin) coeff = -coeff;
  }
  if (coeff.size() > 0 && coeff.cwiseAbs().maxCoeff() == 0.0) return;
  Term t{std::move(k), basis, std::move(d), coeff};
  auto it = std::lower_bound(terms_.begin(), terms_.end(), t,
                             [](const Term& a, const Term& b) { return key_of(a) < key_of(b); });
  if (it != terms_.end() && key_of(*it) == key_of(t)) {
    it->c += t.c;
    if (it->c.cwiseAbs().maxCoeff() == 0.0) terms_.erase(it);
    return;
  }
  terms_.insert(it, std::move(t));
}

int FourierTaylorField::max_mode_l1() const {
  int m = 0;
  for (const auto& t : terms_) {
    int s = 0;
    for (int v : t.k) s += std::abs(v);
    m = std::max(m, s);
  }
  return m;
}

int FourierTaylorField::max_mode_abs() const {
  int m = 0;
  for (const auto& t : terms_)
    for (int v : t.k) m = std::max(m, std::abs(v));
  return m;
}

int FourierTaylorField::max_degree() const {
  int m = 0;
  for (const auto& t : terms_) {
    int s = 0;
    for (int v : t.d) s += v;
    m = std::max(m, s);
  }
  return m;
}

bool FourierTaylorField::depends_on_angles() const {
  for (const auto& t : terms_)
    for (int v : t.k)
      if (v != 0) return true;
  return false;
}

double FourierTaylorField::coefficient_norm() const {
  double s = 0.0;
  for (const auto& t : terms_) s += t.c.cwiseAbs().maxCoeff();
  return s;
}

Eigen::VectorXd FourierTaylorField::evaluate(const Eigen::VectorXd& angles,
                                             const Eigen::VectorXd& vars) const {
  if (angles.size() != n_angles_ || vars.size() != layout_.nvars())
    fail(ErrorKind::DimensionMismatch, "evaluation point has wrong shape");
  Eigen::VectorXd out(target_dim_);
  evaluate(angles.data(), vars.data(), out.data());
  return out;
}

FourierTaylorField FourierTaylorField::derivative(int var) const {
  FourierTaylorField r(target_dim_, n_angles_, layout_);
  for (const auto& t : terms_) {
    if (t.d[var] == 0) continue;
    auto d = t.d;
    const double f = d[var];
    d[var] -= 1;
    r.add(t.k, t.basis, d, t.c * f);
  }
  return r;
}

FourierTaylorField FourierTaylorField::substitute(
    const std::vector<Poly>& subs, const std::function<bool(const std::vector<int>&)>& keep) const {
  const int nv = layout_.nvars();
  if (static_cast<int>(subs.size()) != nv)
    fail(ErrorKind::DimensionMismatch, "substitution needs one polynomial per variable");
  FourierTaylorField r(target_dim_, n_angles_, layout_);
  for (const auto& t : terms_) {
    Poly prod = Poly::constant(nv, 1.0);
    for (int j = 0; j < nv; ++j)
      if (t.d[j] > 0) prod = prod * subs[j].pow(t.d[j]);
    for (const auto& [e, c] : prod.terms()) {
      if (keep && !keep(e)) continue;
      r.add(t.k, t.basis, e, t.c * c);
    }
  }
  return r;
}

FourierTaylorField FourierTaylorField::reflect_angles() const {
  FourierTaylorField r(target_dim_, n_angles_, layout_);
  for (const auto& t : terms_) r.add(t.k, t.basis, t.d, t.basis == Basis::Sin ? Eigen::VectorXd(-t.c) : t.c);
  return r;
}

FourierTaylorField FourierTaylorField::left_multiply(const Eigen::MatrixXd& A) const {
  if (A.cols() != target_dim_) fail(ErrorKind::DimensionMismatch, "left factor has wrong width");
  FourierTaylorField r(static_cast<int>(A.rows()), n_angles_, layout_);
  for (const auto& t : terms_) r.add(t.k, t.basis, t.d, A * t.c);
  return r;
}

FourierTaylorField FourierTaylorField::plus(const FourierTaylorField& o) const {
  if (o.target_dim_ != target_dim_ || o.n_angles_ != n_angles_ || !(o.layout_ == layout_))
    fail(ErrorKind::DimensionMismatch, "series shapes differ");
  FourierTaylorField r = *this;
  for (const auto& t : o.terms_) r.add(t);
  return r;
}

FourierTaylorField FourierTaylorField::scaled(double c) const {
  FourierTaylorField r(target_dim_, n_angles_, layout_);
  for (const auto& t : terms_) r.add(t.k, t.basis, t.d, t.c * c);
  return r;
}

double FourierTaylorField::max_coefficient_difference(const FourierTaylorField& o) const {
  const FourierTaylorField diff = plus(o.scaled(-1.0));
  double m = 0.0;
  for (const auto& t : diff.terms_) m = std::max(m, t.c.cwiseAbs().maxCoeff());
  return m;
}

bool FourierTaylorField::operator==(const FourierTaylorField& o) const {
  if (target_dim_ != o.target_dim_ || n_angles_ != o.n_angles_ || !(layout_ == o.layout_) ||
      terms_.size() != o.terms_.size())
    return false;
  for (std::size_t i = 0; i < terms_.size(); ++i)
    if (key_of(terms_[i]) != key_of(o.terms_[i]) || terms_[i].c != o.terms_[i].c) return false;
  return true;
}

}  // namespace kamrev2::series
