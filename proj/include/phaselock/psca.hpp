#pragma once

// Phase synchronization cluster analysis: rotate the columns of a fixed
// complex matrix V by a real orthogonal W so that J = sum_j |sum_i u_ij|,
// U = V W, is maximal, then assign each row to its dominant column.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "phaselock/optim.hpp"
#include "phaselock/signalcore.hpp"

namespace phaselock {

inline constexpr double kKinkThreshold = 1e-12;

struct PSCAProblem {
  ComplexMatrix V;  // N x P

  Eigen::Index components() const { return V.cols(); }

  void validate() const {
    if (V.cols() < 1) throw InvalidArgument("pSCA needs at least one component");
    if (V.rows() < V.cols()) throw InvalidArgument("pSCA needs N >= P");
    if (!V.allFinite()) throw InvalidArgument("V has non-finite entries");
    for (Eigen::Index k = 0; k < V.cols(); ++k) {
      if (V.col(k).cwiseAbs().maxCoeff() == 0.0) {
        std::ostringstream os;
        os << "column " << k << " of V is all zero";
        throw InvalidArgument(os.str());
      }
    }
  }
};

struct PSCASolution {
  Eigen::MatrixXd W;
  ComplexMatrix U;
  double J = 0.0;
  std::vector<int> assignment;
  OptimizerTrace trace;
  std::vector<std::string> skipped_starts;
};

/// Column sums of V.
inline Eigen::VectorXcd column_sums(const ComplexMatrix& V) { return V.colwise().sum().transpose(); }

namespace detail {

inline void check_w(const PSCAProblem& problem, const Eigen::MatrixXd& W) {
  const Eigen::Index p = problem.components();
  if (W.rows() != p || W.cols() != p) throw InvalidArgument("W must be P x P");
}

/// u_bar_j = sum_k v_bar_k w_kj.
inline Eigen::VectorXcd column_sums_of_u(const PSCAProblem& problem, const Eigen::MatrixXd& W) {
  return W.transpose().cast<std::complex<double>>() * column_sums(problem.V);
}

}  // namespace detail

/// Column-sum shortcut: J = sum_j |sum_k v_bar_k w_kj|.
inline double psca_objective(const PSCAProblem& problem, const Eigen::MatrixXd& W) {
  problem.validate();
  detail::check_w(problem, W);
  const Eigen::VectorXcd u_bar = detail::column_sums_of_u(problem, W);
  double j = 0.0;
  for (Eigen::Index c = 0; c < u_bar.size(); ++c) j += std::abs(u_bar(c));
  return j;
}

/// G_kj = (Re v_bar_k Re u_bar_j + Im v_bar_k Im u_bar_j) / |u_bar_j|.
inline Eigen::MatrixXd psca_gradient(const PSCAProblem& problem, const Eigen::MatrixXd& W) {
  problem.validate();
  detail::check_w(problem, W);
  const Eigen::VectorXcd v_bar = column_sums(problem.V);
  const Eigen::VectorXcd u_bar = detail::column_sums_of_u(problem, W);
  const Eigen::Index p = problem.components();
  Eigen::MatrixXd g(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double mag = std::abs(u_bar(j));
    if (!(mag > kKinkThreshold)) {
      std::ostringstream os;
      os << "column " << j << " of U sums to |u_bar| = " << mag << " (kink of the absolute value)";
      throw KinkError(os.str(), static_cast<std::size_t>(j));
    }
    for (Eigen::Index k = 0; k < p; ++k)
      g(k, j) = (v_bar(k).real() * u_bar(j).real() + v_bar(k).imag() * u_bar(j).imag()) / mag;
  }
  return g;
}

/// Row-wise argmax of |u_ij|; ties go to the lowest column.
inline std::vector<int> assign_rows(const ComplexMatrix& U) {
  std::vector<int> out(static_cast<std::size_t>(U.rows()), 0);
  for (Eigen::Index i = 0; i < U.rows(); ++i) {
    double best = -1.0;
    for (Eigen::Index j = 0; j < U.cols(); ++j) {
      const double m = std::abs(U(i, j));
      if (m > best) {
        best = m;
        out[static_cast<std::size_t>(i)] = static_cast<int>(j);
      }
    }
  }
  return out;
}

/// Multi-start ascent with the orthonormal retraction from Haar-random
/// orthogonal starts. Starts that run into a kink are recorded in
/// skipped_starts and dropped; KinkError is thrown only if all of them do.
inline PSCASolution psca_solve(const PSCAProblem& problem, const OptimizerConfig& cfg, int n_starts) {
  problem.validate();
  cfg.validate();
  if (n_starts < 1) throw InvalidArgument("n_starts must be at least 1");
  const Eigen::Index p = problem.components();
  std::mt19937_64 rng(cfg.seed);
  auto objective = [&](const Eigen::MatrixXd& W) { return psca_objective(problem, W); };
  auto gradient = [&](const Eigen::MatrixXd& W) { return psca_gradient(problem, W); };

  PSCASolution best;
  double best_value = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < n_starts; ++s) {
    const Eigen::MatrixXd init = random_orthogonal(rng, p);
    try {
      auto run = ascend(objective, gradient, init, Retraction::Orthonormal, cfg);
      const double value = run.trace.final_objective();
      if (value > best_value) {
        best_value = value;
        best.W = run.state;
        best.trace = std::move(run.trace);
      }
    } catch (const KinkError& e) {
      std::ostringstream os;
      os << "start " << s << ": " << e.what();
      best.skipped_starts.push_back(os.str());
    }
  }
  if (!std::isfinite(best_value)) throw KinkError("every pSCA start hit a kink", 0);
  best.U = problem.V * best.W.cast<std::complex<double>>();
  best.J = psca_objective(problem, best.W);
  best.assignment = assign_rows(best.U);
  return best;
}

/// The `count` eigenvectors of a Hermitian matrix with largest |eigenvalue|,
/// as columns. Each column's phase is fixed so that its largest-magnitude
/// entry is real and positive.
inline ComplexMatrix leading_eigenvectors(const ComplexMatrix& hermitian, Eigen::Index count) {
  if (hermitian.rows() != hermitian.cols()) throw InvalidArgument("matrix must be square");
  if (count < 1 || count > hermitian.rows()) throw InvalidArgument("eigenvector count out of range");
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(hermitian);
  if (es.info() != Eigen::Success) throw DomainError("eigendecomposition failed");
  const Eigen::VectorXd& vals = es.eigenvalues();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(vals.size()));
  for (Eigen::Index i = 0; i < vals.size(); ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return std::abs(vals(a)) > std::abs(vals(b)); });
  ComplexMatrix out(hermitian.rows(), count);
  for (Eigen::Index c = 0; c < count; ++c) {
    Eigen::VectorXcd v = es.eigenvectors().col(order[static_cast<std::size_t>(c)]);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    v *= std::polar(1.0, -std::arg(v(arg)));
    out.col(c) = v;
  }
  return out;
}

/// Orthonormal basis of the span of `V`'s columns picked by column-pivoted
/// Gram-Schmidt on the projector V V^H: the column with the largest residual
/// norm is taken next. When the span is covered by vectors with disjoint
/// support (ideal clusters), every pivot is supported on one group only, so
/// the basis separates the groups even if the eigensolver returned an
/// arbitrary unitary mix of them.
inline ComplexMatrix pivoted_basis(const ComplexMatrix& V) {
  ComplexMatrix residual = V * V.adjoint();
  const Eigen::Index p = V.cols();
  ComplexMatrix out(V.rows(), p);
  for (Eigen::Index c = 0; c < p; ++c) {
    Eigen::Index pivot = 0;
    residual.colwise().norm().maxCoeff(&pivot);
    Eigen::VectorXcd q = residual.col(pivot);
    const double norm = q.norm();
    if (!(norm > 1e-12)) throw DomainError("feature span is rank deficient");
    q /= norm;
    residual -= q * (q.adjoint() * residual);
    out.col(c) = q;
  }
  return out;
}

/// Multiplies every row by the conjugate phase of its largest-magnitude entry,
/// then every column by the conjugate phase of its sum. Removes the constant
/// phase lag of each channel so that locked channels add up coherently in J.
inline ComplexMatrix align_phases(ComplexMatrix V) {
  for (Eigen::Index i = 0; i < V.rows(); ++i) {
    Eigen::Index arg = 0;
    const double mag = V.row(i).cwiseAbs().maxCoeff(&arg);
    if (mag > 0.0) V.row(i) *= std::polar(1.0, -std::arg(V(i, arg)));
  }
  for (Eigen::Index c = 0; c < V.cols(); ++c) {
    const std::complex<double> sum = V.col(c).sum();
    if (std::abs(sum) > 1e-12) V.col(c) *= std::polar(1.0, -std::arg(sum));
  }
  return V;
}

enum class FeatureBasis { Eigenvectors, Aligned };

inline const char* to_string(FeatureBasis b) { return b == FeatureBasis::Eigenvectors ? "eigenvectors" : "aligned"; }

/// Complex feature matrix V for clustering channels from their PLV matrix:
/// the `count` leading eigenvectors, either as returned (Eigenvectors) or
/// re-expressed in the pivoted basis of their span with phases aligned
/// (Aligned, the default).
inline ComplexMatrix plv_features(const PLVMatrix& plv, Eigen::Index count,
                                  FeatureBasis basis = FeatureBasis::Aligned) {
  const ComplexMatrix v = leading_eigenvectors(plv, count);
  return basis == FeatureBasis::Aligned ? align_phases(pivoted_basis(v)) : v;
}

}  // namespace phaselock
