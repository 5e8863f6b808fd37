#pragma once

// Referenced phase analysis: find the unit vector w whose projection
// y = w^T x has maximal phase locking |rho|^2 with a given reference phase.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "phaselock/optim.hpp"
#include "phaselock/signalcore.hpp"

namespace phaselock {

struct RPAProblem {
  AnalyticMatrix mixtures;
  std::vector<double> ref_phase;
  double amp_floor = 1e-8;  // relative to max_t Y^2(t)

  void validate() const {
    if (mixtures.channels() < 1) throw InvalidArgument("RPA needs at least one channel");
    if (ref_phase.size() != mixtures.samples())
      throw InvalidArgument("reference phase length differs from the number of samples");
    if (!(amp_floor > 0.0)) throw InvalidArgument("amp_floor must be positive");
  }
};

struct RPASolution {
  Eigen::VectorXd w;
  ComplexPLV plv;
  OptimizerTrace trace;
  std::vector<double> start_objectives;  // objective at each usable initialization
};

/// Phase of the reference signal, via its analytic signal.
inline std::vector<double> reference_phase_from_signal(std::span<const double> reference) {
  SignalMatrix s;
  s.data = Eigen::Map<const RowMatrix>(reference.data(), 1, static_cast<Eigen::Index>(reference.size()));
  const AnalyticMatrix a = analytic(s);
  const auto p = a.phase_of(0);
  return {p.begin(), p.end()};
}

namespace detail {

/// Per-sample quantities of the estimated source y = w^T x.
struct Projection {
  std::vector<double> y, y_h, y2, phase;
};

inline Projection project(const AnalyticMatrix& a, const Eigen::VectorXd& w, double amp_floor, std::size_t row = 0) {
  const auto n = static_cast<Eigen::Index>(a.channels());
  const std::size_t t_count = a.samples();
  if (w.size() != n) throw InvalidArgument("weight vector length differs from the number of channels");
  Projection p;
  p.y.resize(t_count);
  p.y_h.resize(t_count);
  p.y2.resize(t_count);
  p.phase.resize(t_count);
  double peak = 0.0;
  for (std::size_t t = 0; t < t_count; ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    double re = 0.0;
    double im = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      re += w(i) * a.x()(i, ti);
      im += w(i) * a.x_h()(i, ti);
    }
    p.y[t] = re;
    p.y_h[t] = im;
    p.y2[t] = re * re + im * im;
    p.phase[t] = std::atan2(im, re);
    peak = std::max(peak, p.y2[t]);
  }
  if (!std::isfinite(peak)) throw DomainError("non-finite estimated source");
  const double floor = amp_floor * peak;
  std::size_t bad = 0;
  for (double v : p.y2)
    if (!(v > floor)) ++bad;
  if (bad > 0) {
    std::ostringstream os;
    os << "estimated source " << row << " has " << bad
       << " samples below the amplitude floor (weights nearly orthogonal to the signal)";
    throw AmplitudeFloorError(os.str(), row, bad);
  }
  return p;
}

/// Sum over t of c[t] * G(t) w, using G(t) w = x_h(t) y(t) - x(t) y_h(t).
inline Eigen::VectorXd weighted_kernel_sum(const AnalyticMatrix& a, const Projection& p, const std::vector<double>& c) {
  const auto n = static_cast<Eigen::Index>(a.channels());
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
  for (std::size_t t = 0; t < c.size(); ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    for (Eigen::Index i = 0; i < n; ++i)
      acc(i) += c[t] * (a.x_h()(i, ti) * p.y[t] - a.x()(i, ti) * p.y_h[t]);
  }
  return acc;
}

}  // namespace detail

inline ComplexPLV rpa_plv(const RPAProblem& problem, const Eigen::VectorXd& w) {
  problem.validate();
  const auto p = detail::project(problem.mixtures, w, problem.amp_floor);
  return plv(p.phase, problem.ref_phase);
}

/// |rho|^2 between the phase of w^T x and the reference phase.
inline double rpa_objective(const RPAProblem& problem, const Eigen::VectorXd& w) {
  const ComplexPLV r = rpa_plv(problem, w);
  return r.re * r.re + r.im * r.im;
}

/// 2 |rho| < sin(Phi - dphi(t)) / Y^2(t) G_x(t) > w.
inline Eigen::VectorXd rpa_gradient(const RPAProblem& problem, const Eigen::VectorXd& w) {
  problem.validate();
  const auto p = detail::project(problem.mixtures, w, problem.amp_floor);
  const ComplexPLV r = plv(p.phase, problem.ref_phase);
  const double mag = r.magnitude();
  const double big_phi = r.argument();
  std::vector<double> c(p.y.size());
  for (std::size_t t = 0; t < c.size(); ++t)
    c[t] = std::sin(big_phi - (p.phase[t] - problem.ref_phase[t])) / p.y2[t];
  const Eigen::VectorXd sum = detail::weighted_kernel_sum(problem.mixtures, p, c);
  return (2.0 * mag / static_cast<double>(c.size())) * sum;
}

/// Multi-start ascent on the unit sphere. Starts are drawn sequentially from
/// one generator seeded with cfg.seed; a start that violates the amplitude
/// floor is skipped.
inline RPASolution rpa_solve(const RPAProblem& problem, const OptimizerConfig& cfg, int n_starts) {
  problem.validate();
  cfg.validate();
  if (n_starts < 1) throw InvalidArgument("n_starts must be at least 1");
  std::mt19937_64 rng(cfg.seed);
  const auto n = static_cast<Eigen::Index>(problem.mixtures.channels());
  auto objective = [&](const Eigen::VectorXd& w) { return rpa_objective(problem, w); };
  auto gradient = [&](const Eigen::VectorXd& w) { return rpa_gradient(problem, w); };

  RPASolution best;
  double best_value = -std::numeric_limits<double>::infinity();
  std::string last_error;
  for (int s = 0; s < n_starts; ++s) {
    const Eigen::VectorXd init = random_unit_vector(rng, n);
    double init_value = 0.0;
    try {
      init_value = objective(init);
    } catch (const AmplitudeFloorError& e) {
      last_error = e.what();
      continue;
    }
    best.start_objectives.push_back(init_value);
    auto run = ascend(objective, gradient, init, Retraction::UnitNorm, cfg);
    const double value = run.trace.final_objective();
    if (value > best_value) {
      best_value = value;
      best.w = run.state;
      best.trace = std::move(run.trace);
    }
  }
  if (best.start_objectives.empty())
    throw AmplitudeFloorError("every RPA start violates the amplitude floor: " + last_error, 0, 0);
  best.plv = rpa_plv(problem, best.w);
  return best;
}

}  // namespace phaselock
