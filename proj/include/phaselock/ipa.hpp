#pragma once

// Independent phase analysis inside one subspace: a square unmixing matrix W
// is optimized over the pairwise phase locking of the sources y = W z,
// regularized by log|det W|.

#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <vector>

#include "phaselock/optim.hpp"
#include "phaselock/rpa.hpp"
#include "phaselock/signalcore.hpp"

namespace phaselock {

/// MinimizeLocking minimizes P - lambda log|det W| (sources as phase-independent
/// as possible). MaximizeLocking minimizes -P - lambda log|det W|, i.e.
/// maximizes P + lambda log|det W|. Both keep the log-det barrier against
/// det W -> 0.
enum class IPAConvention { MinimizeLocking, MaximizeLocking };

struct IPAProblem {
  AnalyticMatrix subspace;  // z and z_h
  double lambda = 0.0;
  double amp_floor = 1e-8;
  IPAConvention convention = IPAConvention::MinimizeLocking;

  void validate() const {
    if (subspace.channels() < 2) throw InvalidArgument("IPA needs a subspace of at least two channels");
    if (!(lambda >= 0.0 && lambda < 1.0)) throw InvalidArgument("lambda must lie in [0, 1)");
    if (!(amp_floor > 0.0)) throw InvalidArgument("amp_floor must be positive");
  }

  double locking_sign() const { return convention == IPAConvention::MinimizeLocking ? 1.0 : -1.0; }
};

struct IPASolution {
  Eigen::MatrixXd W;
  PLVMatrix plv_before;
  PLVMatrix plv_after;
  OptimizerTrace trace;
};

inline AnalyticMatrix unmix(const AnalyticMatrix& z, const Eigen::MatrixXd& W) {
  if (W.cols() != static_cast<Eigen::Index>(z.channels())) throw InvalidArgument("unmixing matrix width mismatch");
  return AnalyticMatrix::from_parts(W * z.x(), W * z.x_h());
}

namespace detail {

inline void check_square(const IPAProblem& problem, const Eigen::MatrixXd& W) {
  const auto n = static_cast<Eigen::Index>(problem.subspace.channels());
  if (W.rows() != n || W.cols() != n) throw InvalidArgument("W must be N x N for an N-channel subspace");
  if (!W.allFinite()) throw DomainError("W has non-finite entries");
}

inline double log_abs_det(const Eigen::MatrixXd& W) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(W);
  const double det = lu.determinant();
  if (!(std::abs(det) > 1e-12)) {
    std::ostringstream os;
    os << "unmixing matrix is singular (|det W| = " << std::abs(det) << ")";
    throw SingularMatrixError(os.str());
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < W.rows(); ++i) acc += std::log(std::abs(lu.matrixLU()(i, i)));
  return acc;
}

inline std::vector<Projection> project_rows(const IPAProblem& problem, const Eigen::MatrixXd& W) {
  std::vector<Projection> rows;
  rows.reserve(static_cast<std::size_t>(W.rows()));
  for (Eigen::Index m = 0; m < W.rows(); ++m)
    rows.push_back(project(problem.subspace, W.row(m).transpose(), problem.amp_floor, static_cast<std::size_t>(m)));
  return rows;
}

inline double locking_term(const std::vector<Projection>& rows, double lambda) {
  const std::size_t n = rows.size();
  double sum = static_cast<double>(n);  // p_mm = 1
  for (std::size_t m = 0; m < n; ++m) {
    for (std::size_t k = m + 1; k < n; ++k) {
      const ComplexPLV r = plv(rows[m].phase, rows[k].phase);
      sum += 2.0 * (r.re * r.re + r.im * r.im);
    }
  }
  return (1.0 - lambda) / static_cast<double>(n * n) * sum;
}

}  // namespace detail

/// P = (1 - lambda)/N^2 sum_{m,n} |rho_mn|^2 over the phases of y = W z.
inline double ipa_locking_term(const IPAProblem& problem, const Eigen::MatrixXd& W) {
  problem.validate();
  detail::check_square(problem, W);
  return detail::locking_term(detail::project_rows(problem, W), problem.lambda);
}

inline double ipa_objective(const IPAProblem& problem, const Eigen::MatrixXd& W) {
  problem.validate();
  detail::check_square(problem, W);
  const double logdet = detail::log_abs_det(W);
  const double p = detail::locking_term(detail::project_rows(problem, W), problem.lambda);
  return problem.locking_sign() * p - problem.lambda * logdet;
}

/// Gradient of P alone. Row j is
///   4 (1 - lambda)/N^2 sum_k |rho_jk| < sin(Psi_jk - dphi_jk(t)) G_z(t) / Y_j(t)^2 > w_j
/// with Psi_jk the circular mean phase difference arg rho_jk. Pairs with
/// |rho_jk| < 1e-12 contribute nothing.
inline Eigen::MatrixXd ipa_locking_gradient(const IPAProblem& problem, const Eigen::MatrixXd& W) {
  problem.validate();
  detail::check_square(problem, W);
  const auto rows = detail::project_rows(problem, W);
  const std::size_t n = rows.size();
  const std::size_t t_count = problem.subspace.samples();
  const double scale = 4.0 * (1.0 - problem.lambda) / static_cast<double>(n * n) / static_cast<double>(t_count);

  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(W.rows(), W.cols());
  std::vector<double> c(t_count);
  for (std::size_t j = 0; j < n; ++j) {
    std::fill(c.begin(), c.end(), 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      if (k == j) continue;
      const ComplexPLV r = plv(rows[j].phase, rows[k].phase);
      const double mag = r.magnitude();
      if (mag < 1e-12) continue;
      const double psi = r.argument();
      for (std::size_t t = 0; t < t_count; ++t)
        c[t] += mag * std::sin(psi - (rows[j].phase[t] - rows[k].phase[t])) / rows[j].y2[t];
    }
    grad.row(static_cast<Eigen::Index>(j)) = scale * detail::weighted_kernel_sum(problem.subspace, rows[j], c).transpose();
  }
  return grad;
}

/// Gradient of ipa_objective: sign * grad P - lambda W^{-T}.
inline Eigen::MatrixXd ipa_gradient(const IPAProblem& problem, const Eigen::MatrixXd& W) {
  problem.validate();
  detail::check_square(problem, W);
  detail::log_abs_det(W);  // singularity check
  const Eigen::MatrixXd inv_t = W.inverse().transpose();
  return problem.locking_sign() * ipa_locking_gradient(problem, W) - problem.lambda * inv_t;
}

/// Multi-start descent without retraction. Start 0 is the identity; the others
/// are random orthogonal matrices perturbed by 0.05-scaled Gaussian noise.
/// Starts whose initial objective is undefined are skipped.
inline IPASolution ipa_solve(const IPAProblem& problem, const OptimizerConfig& cfg, int n_starts) {
  problem.validate();
  cfg.validate();
  if (n_starts < 1) throw InvalidArgument("n_starts must be at least 1");
  const auto n = static_cast<Eigen::Index>(problem.subspace.channels());
  std::mt19937_64 rng(cfg.seed);
  auto objective = [&](const Eigen::MatrixXd& W) { return ipa_objective(problem, W); };
  auto gradient = [&](const Eigen::MatrixXd& W) { return ipa_gradient(problem, W); };

  IPASolution best;
  double best_value = std::numeric_limits<double>::infinity();
  std::string last_error;
  for (int s = 0; s < n_starts; ++s) {
    Eigen::MatrixXd init = Eigen::MatrixXd::Identity(n, n);
    if (s > 0) init = random_orthogonal(rng, n) + 0.05 * random_gaussian_matrix(rng, n, n);
    try {
      objective(init);
    } catch (const DomainError& e) {
      last_error = e.what();
      continue;
    }
    auto run = descend(objective, gradient, init, Retraction::None, cfg);
    const double value = run.trace.final_objective();
    if (value < best_value) {
      best_value = value;
      best.W = run.state;
      best.trace = std::move(run.trace);
    }
  }
  if (!std::isfinite(best_value)) throw DomainError("every IPA start has an undefined objective: " + last_error);
  best.plv_before = plv_matrix(problem.subspace);
  best.plv_after = plv_matrix(unmix(problem.subspace, best.W));
  return best;
}

/// Mean of |rho_mn| over m != n.
inline double mean_offdiag_magnitude(const PLVMatrix& m) {
  const Eigen::Index n = m.rows();
  if (n < 2) return 0.0;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) sum += std::abs(m(i, j));
  return sum / static_cast<double>(n * (n - 1));
}

}  // namespace phaselock
