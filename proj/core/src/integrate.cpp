#include "kamrev2/errors.hpp"
#include "kamrev2/torus.hpp"

#include <boost/numeric/odeint.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace kamrev2::torus {

namespace {

using State = std::vector<double>;

// Fractional parts of square roots of primes: deterministic, well spread start angles.
double start_angle(int start, int j) {
  static const double primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  const double c = std::sqrt(primes[j % 12]);
  const double v = (start + 1) * c;
  return 2.0 * M_PI * (v - std::floor(v));
}

}  // namespace

IntegrationReport verify_by_integration(const FieldModel& model, const FieldParams& params,
                                        const TorusTransform& t, double T, int starts) {
  if (!(T > 0) || starts < 1) fail(ErrorKind::InvalidArgument, "horizon and start count must be positive");
  namespace odeint = boost::numeric::odeint;
  const int n = t.dims.n, d = t.dims.d(), N = t.dims.N, na = n + N;

  IntegrationReport rep;
  rep.horizon = T;
  rep.starts = starts;
  if (t.M_prime.size() > 0) {
    Eigen::EigenSolver<Matrix> es(t.M_prime);
    for (int i = 0; i < es.eigenvalues().size(); ++i) {
      rep.normal_spectrum.push_back(es.eigenvalues()[i]);
      rep.max_real_part = std::max(rep.max_real_part, es.eigenvalues()[i].real());
    }
  }
  rep.growth_factor = std::exp(rep.max_real_part * T);
  rep.bound = rep.growth_factor * 1e-10;

  auto rhs = [&](const State& s, State& ds, double) {
    std::vector<double> ang(na);
    for (int i = 0; i < n; ++i) ang[i] = s[i];
    for (int j = 0; j < N; ++j) ang[n + j] = s[n + d + j];
    model.velocity(ang.data(), s.data() + n, params.sigma.data(), params.omega.data(), params.mu.data(),
                   params.chi.data(), ds.data());
    for (int j = 0; j < N; ++j) ds[n + d + j] = t.Omega[j];
  };

  Vector nu(na);
  nu << t.omega_prime, t.Omega;
  constexpr int kSamples = 1000;
  std::vector<double> times(kSamples + 1);
  for (int i = 0; i <= kSamples; ++i) times[i] = T * i / kSamples;

  for (int st = 0; st < starts; ++st) {
    Vector th0(na);
    for (int j = 0; j < na; ++j) th0[j] = start_angle(st, j);
    const auto [x0, Y0] = t.embed(th0, Vector::Zero(d));
    State s(n + d + N);
    for (int i = 0; i < n; ++i) s[i] = x0[i];
    for (int i = 0; i < d; ++i) s[n + i] = Y0[i];
    for (int j = 0; j < N; ++j) s[n + d + j] = th0[n + j];

    auto observer = [&](const State& cur, double time) {
      const Vector th = th0 + nu * time;
      const auto [xe, Ye] = t.embed(th, Vector::Zero(d));
      double dist = 0.0;
      for (int i = 0; i < n; ++i) dist = std::max(dist, std::abs(cur[i] - xe[i]));
      for (int i = 0; i < d; ++i) dist = std::max(dist, std::abs(cur[n + i] - Ye[i]));
      if (!std::isfinite(dist)) fail(ErrorKind::IntegratorFailure, "state became non-finite");
      rep.max_distance = std::max(rep.max_distance, dist);
    };
    try {
      auto stepper = odeint::make_controlled(1e-12, 1e-12, odeint::runge_kutta_fehlberg78<State>());
      odeint::integrate_times(stepper, rhs, s, times.begin(), times.end(), T / kSamples, observer);
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      std::ostringstream os;
      os << "integrator failed: " << e.what();
      fail(ErrorKind::IntegratorFailure, os.str());
    }
  }
  return rep;
}

IntegrationReport verify_by_integration(const SystemSpec& spec, const TorusTransform& t,
                                        const revlin::Unfolding& unf, double T, int starts) {
  return verify_by_integration(FieldModel::extended(spec, unf), t.params(), t, T, starts);
}

}  // namespace kamrev2::torus
