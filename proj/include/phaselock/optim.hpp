#pragma once

// First-order optimization on plain, unit-norm and orthonormal parameters:
// steepest ascent/descent with Armijo backtracking, retractions, and the
// central-difference gradient oracle used by the gradient checks.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phaselock/errors.hpp"

namespace phaselock {

enum class Retraction { None, UnitNorm, Orthonormal };
enum class Termination { GradientSmall, ObjectiveStalled, MaxIters };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::GradientSmall: return "GradientSmall";
    case Termination::ObjectiveStalled: return "ObjectiveStalled";
    case Termination::MaxIters: return "MaxIters";
  }
  return "?";
}

inline const char* to_string(Retraction r) {
  switch (r) {
    case Retraction::None: return "None";
    case Retraction::UnitNorm: return "UnitNorm";
    case Retraction::Orthonormal: return "Orthonormal";
  }
  return "?";
}

struct OptimizerConfig {
  int max_iters = 2000;
  double step0 = 0.5;
  double backtrack_factor = 0.5;
  double armijo_c = 1e-4;
  double grad_tol = 1e-7;
  double obj_tol = 1e-12;
  std::uint64_t seed = 0;

  void validate() const {
    // max_iters = 0 is accepted: the run returns its (retracted) start.
    if (max_iters < 0) throw InvalidArgument("max_iters must be nonnegative");
    if (!(step0 > 0.0)) throw InvalidArgument("step0 must be positive");
    if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0))
      throw InvalidArgument("backtrack_factor must lie in (0, 1)");
    if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw InvalidArgument("armijo_c must lie in (0, 1)");
    if (!(grad_tol > 0.0)) throw InvalidArgument("grad_tol must be positive");
    if (!(obj_tol > 0.0)) throw InvalidArgument("obj_tol must be positive");
  }
};

struct TraceEntry {
  int iteration = 0;
  double objective = 0.0;
  double gradient_norm = 0.0;
  double step = 0.0;  // step that produced this iterate; 0 for the start
};

struct OptimizerTrace {
  std::vector<TraceEntry> iterates;
  Termination termination = Termination::MaxIters;

  double final_objective() const { return iterates.empty() ? std::nan("") : iterates.back().objective; }
};

class OptimizationError : public Error {
 public:
  OptimizationError(const std::string& what, OptimizerTrace trace) : Error(what), trace_(std::move(trace)) {}
  const OptimizerTrace& trace() const noexcept { return trace_; }

 private:
  OptimizerTrace trace_;
};

/// Nearest orthogonal matrix (polar factor U V^T of the SVD).
inline Eigen::MatrixXd polar_orthogonal(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return svd.matrixU() * svd.matrixV().transpose();
}

template <class State>
State retract(const State& s, Retraction kind) {
  switch (kind) {
    case Retraction::None:
      return s;
    case Retraction::UnitNorm: {
      State out = s;
      for (Eigen::Index c = 0; c < out.cols(); ++c) {
        const double n = out.col(c).norm();
        if (!(n > 0.0) || !std::isfinite(n)) throw DomainError("cannot normalize a zero or non-finite vector");
        out.col(c) /= n;
      }
      return out;
    }
    case Retraction::Orthonormal: {
      if (!s.allFinite()) throw DomainError("cannot orthonormalize a non-finite matrix");
      return polar_orthogonal(s);
    }
  }
  return s;
}

/// Component of the Euclidean gradient tangent to the constraint set at s.
template <class State>
State tangent_gradient(const State& s, const State& g, Retraction kind) {
  switch (kind) {
    case Retraction::None:
      return g;
    case Retraction::UnitNorm: {
      State out = g;
      for (Eigen::Index c = 0; c < out.cols(); ++c) out.col(c) -= s.col(c) * s.col(c).dot(g.col(c));
      return out;
    }
    case Retraction::Orthonormal: {
      const Eigen::MatrixXd sg = s.transpose() * g;
      return g - s * (0.5 * (sg + sg.transpose()));
    }
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||, 1e-12); the one agreement measure for
/// gradient checks.
template <class A, class B>
double relative_error(const A& a, const B& b) {
  const double denom = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / denom;
}

template <class State>
struct OptimizationResult {
  State state;
  OptimizerTrace trace;
};

enum class Direction { Ascent, Descent };

namespace detail {

template <class Objective, class State>
bool try_evaluate(const Objective& objective, const State& s, double& value) {
  try {
    value = objective(s);
  } catch (const DomainError&) {
    return false;
  }
  return std::isfinite(value);
}

}  // namespace detail

/// Steepest ascent or descent with Armijo backtracking restarted from step0 at
/// every iteration. Each accepted step improves the objective by at least
/// armijo_c * step * |g|^2, where g is the gradient projected on the
/// constraint's tangent space, so trace objectives are monotone.
/// Candidates whose objective throws DomainError or is non-finite are treated
/// as rejected steps. A non-finite objective or gradient at an accepted
/// iterate aborts with OptimizationError carrying the trace so far.
template <class State, class Objective, class Gradient>
OptimizationResult<State> optimize(Direction direction, const Objective& objective, const Gradient& gradient,
                                   const State& init, Retraction retraction, const OptimizerConfig& cfg) {
  cfg.validate();
  const double sign = direction == Direction::Ascent ? 1.0 : -1.0;
  OptimizationResult<State> result{retract(init, retraction), {}};
  State& s = result.state;
  OptimizerTrace& trace = result.trace;

  double f = objective(s);
  if (!std::isfinite(f)) throw OptimizationError("non-finite objective at the initial point", trace);
  double last_step = 0.0;
  bool stalled = false;

  constexpr int kMaxBacktracks = 60;
  for (int k = 0;; ++k) {
    const State g = gradient(s);
    if (g.rows() != s.rows() || g.cols() != s.cols())
      throw InvalidArgument("gradient shape does not match state shape");
    const State tg = tangent_gradient(s, g, retraction);
    const double gn = tg.norm();
    trace.iterates.push_back({k, f, gn, last_step});
    if (!std::isfinite(gn) || !g.allFinite()) {
      std::ostringstream os;
      os << "non-finite gradient at iteration " << k;
      throw OptimizationError(os.str(), trace);
    }
    if (gn < cfg.grad_tol) {
      trace.termination = Termination::GradientSmall;
      break;
    }
    if (stalled) {
      trace.termination = Termination::ObjectiveStalled;
      break;
    }
    if (k >= cfg.max_iters) {
      trace.termination = Termination::MaxIters;
      break;
    }

    double step = cfg.step0;
    bool accepted = false;
    State candidate;
    double f_candidate = 0.0;
    for (int b = 0; b < kMaxBacktracks; ++b, step *= cfg.backtrack_factor) {
      State trial = s + (sign * step) * tg;
      try {
        candidate = retract(trial, retraction);
      } catch (const DomainError&) {
        continue;
      }
      if (!detail::try_evaluate(objective, candidate, f_candidate)) continue;
      if (sign * (f_candidate - f) >= cfg.armijo_c * step * gn * gn) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      trace.termination = Termination::ObjectiveStalled;
      break;
    }
    stalled = std::abs(f_candidate - f) <= cfg.obj_tol * std::max(1.0, std::abs(f));
    s = std::move(candidate);
    f = f_candidate;
    last_step = step;
  }
  return result;
}

template <class State, class Objective, class Gradient>
OptimizationResult<State> ascend(const Objective& objective, const Gradient& gradient, const State& init,
                                 Retraction retraction, const OptimizerConfig& cfg) {
  return optimize(Direction::Ascent, objective, gradient, init, retraction, cfg);
}

template <class State, class Objective, class Gradient>
OptimizationResult<State> descend(const Objective& objective, const Gradient& gradient, const State& init,
                                  Retraction retraction, const OptimizerConfig& cfg) {
  return optimize(Direction::Descent, objective, gradient, init, retraction, cfg);
}

template <class State>
struct FdGradient {
  State value;
  std::vector<Eigen::Index> nonfinite;  // flat (column-major) coordinates whose probe failed

  bool ok() const { return nonfinite.empty(); }
};

/// Central differences (f(s + h e) - f(s - h e)) / 2h over the raw
/// coordinates; no retraction is applied to the probes.
template <class State, class Objective>
FdGradient<State> fd_gradient(const Objective& objective, const State& s, double h) {
  if (!(h > 0.0)) throw InvalidArgument("finite-difference step must be positive");
  FdGradient<State> out{State::Zero(s.rows(), s.cols()), {}};
  State probe = s;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double orig = probe(i);
    double plus = 0.0;
    double minus = 0.0;
    probe(i) = orig + h;
    const bool ok_plus = detail::try_evaluate(objective, probe, plus);
    probe(i) = orig - h;
    const bool ok_minus = detail::try_evaluate(objective, probe, minus);
    probe(i) = orig;
    if (ok_plus && ok_minus) {
      out.value(i) = (plus - minus) / (2.0 * h);
    } else {
      out.value(i) = std::numeric_limits<double>::quiet_NaN();
      out.nonfinite.push_back(i);
    }
  }
  return out;
}

// Seeded draws used for multi-start initializations.

inline Eigen::VectorXd random_gaussian_vector(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

inline Eigen::MatrixXd random_gaussian_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = normal(rng);
  return m;
}

inline Eigen::VectorXd random_unit_vector(std::mt19937_64& rng, Eigen::Index n) {
  Eigen::VectorXd v;
  do {
    v = random_gaussian_vector(rng, n);
  } while (v.norm() < 1e-8);
  return v / v.norm();
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// signs of R's diagonal folded into Q).
inline Eigen::MatrixXd random_orthogonal(std::mt19937_64& rng, Eigen::Index n) {
  const Eigen::MatrixXd g = random_gaussian_matrix(rng, n, n);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < n; ++i)
    if (r(i, i) < 0.0) q.col(i) = -q.col(i);
  return q;
}

}  // namespace phaselock
