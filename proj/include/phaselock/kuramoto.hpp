#pragma once

// Kuramoto phase-oscillator networks: dynamics, fixed-step RK4 simulation,
// cluster mean fields, and synthesis of real sources for mixing experiments.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "phaselock/errors.hpp"
#include "phaselock/signalcore.hpp"

namespace phaselock {

using Partition = std::vector<std::vector<std::size_t>>;

struct OscillatorNetwork {
  Eigen::VectorXd omega;
  Eigen::MatrixXd kappa;  // kappa(i, k) couples oscillator k into i
  Partition clusters;

  std::size_t size() const { return static_cast<std::size_t>(omega.size()); }

  void validate() const {
    const Eigen::Index n = omega.size();
    if (n < 1) throw InvalidArgument("network needs at least one oscillator");
    if (kappa.rows() != n || kappa.cols() != n) throw InvalidArgument("kappa must be N x N");
    if (!omega.allFinite() || !kappa.allFinite()) throw InvalidArgument("network parameters must be finite");
    for (Eigen::Index i = 0; i < n; ++i)
      if (kappa(i, i) != 0.0) throw InvalidArgument("kappa diagonal must be exactly zero");
    std::vector<int> seen(static_cast<std::size_t>(n), 0);
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      if (clusters[c].empty()) {
        std::ostringstream os;
        os << "cluster " << c << " is empty";
        throw InvalidArgument(os.str());
      }
      for (std::size_t i : clusters[c]) {
        if (i >= static_cast<std::size_t>(n)) throw InvalidArgument("cluster member index out of range");
        ++seen[i];
      }
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
      if (seen[i] != 1) {
        std::ostringstream os;
        os << "oscillator " << i << " appears in " << seen[i] << " clusters (partition must cover each once)";
        throw InvalidArgument(os.str());
      }
    }
  }

  /// Cluster index of every oscillator.
  std::vector<int> labels() const {
    std::vector<int> out(size(), -1);
    for (std::size_t c = 0; c < clusters.size(); ++c)
      for (std::size_t i : clusters[c]) out[i] = static_cast<int>(c);
    return out;
  }

  /// Fills kappa blockwise: kappa_intra inside each cluster, kappa_inter across.
  static OscillatorNetwork clustered(Partition partition, Eigen::VectorXd omega, double kappa_intra,
                                     double kappa_inter) {
    OscillatorNetwork net;
    net.omega = std::move(omega);
    net.clusters = std::move(partition);
    const Eigen::Index n = net.omega.size();
    net.kappa = Eigen::MatrixXd::Constant(n, n, kappa_inter);
    for (const auto& c : net.clusters)
      for (std::size_t i : c)
        for (std::size_t k : c)
          if (i < static_cast<std::size_t>(n) && k < static_cast<std::size_t>(n))
            net.kappa(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = kappa_intra;
    for (Eigen::Index i = 0; i < n; ++i) net.kappa(i, i) = 0.0;
    net.validate();
    return net;
  }
};

/// Consecutive clusters of the given sizes: {0..s0-1}, {s0..s0+s1-1}, ...
inline Partition contiguous_partition(const std::vector<std::size_t>& sizes) {
  Partition p;
  std::size_t next = 0;
  for (std::size_t s : sizes) {
    std::vector<std::size_t> c;
    for (std::size_t k = 0; k < s; ++k) c.push_back(next++);
    p.push_back(std::move(c));
  }
  return p;
}

/// omega_i uniform in [center - spread/2, center + spread/2] of its cluster.
inline Eigen::VectorXd draw_frequencies(std::mt19937_64& rng, const Partition& partition,
                                        const std::vector<double>& centers, double spread) {
  if (centers.size() != partition.size()) throw InvalidArgument("need one frequency center per cluster");
  std::size_t n = 0;
  for (const auto& c : partition) n += c.size();
  Eigen::VectorXd omega = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  std::uniform_real_distribution<double> unit(-0.5, 0.5);
  for (std::size_t c = 0; c < partition.size(); ++c)
    for (std::size_t i : partition[c]) {
      if (i >= n) throw InvalidArgument("cluster member index out of range");
      omega(static_cast<Eigen::Index>(i)) = centers[c] + spread * unit(rng);
    }
  return omega;
}

/// d phi_i / dt = omega_i + sum_k kappa_ik sin(phi_k - phi_i), full sum.
inline Eigen::VectorXd phase_derivative(const OscillatorNetwork& net, const Eigen::VectorXd& phases) {
  const Eigen::Index n = net.omega.size();
  if (phases.size() != n) throw InvalidArgument("phase vector length differs from network size");
  Eigen::VectorXd d(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double c = net.kappa(i, k);
      if (c != 0.0) acc += c * std::sin(phases(k) - phases(i));
    }
    d(i) = net.omega(i) + acc;
  }
  return d;
}

struct PhaseTrajectory {
  RowMatrix phases;  // N x T, wrapped to (-pi, pi]
  double dt = 0.0;
  double t0 = 0.0;
};

struct SimulationOptions {
  double dt = 1e-2;
  std::size_t samples = 2;
  double t0 = 0.0;
  /// Phase diffusion strength: after each step every phase receives an
  /// independent N(0, noise^2 dt) increment. 0 disables the noise.
  double noise = 0.0;
  std::uint64_t seed = 0;
};

/// Classical fixed-step RK4 on unwrapped phases; sample t holds the state at
/// t0 + t dt, sample 0 is phases0.
inline PhaseTrajectory simulate(const OscillatorNetwork& net, const Eigen::VectorXd& phases0,
                                const SimulationOptions& opt) {
  net.validate();
  if (!(opt.dt > 0.0) || !std::isfinite(opt.dt)) throw InvalidArgument("dt must be positive");
  if (opt.samples < 2) throw InvalidArgument("need at least two samples");
  if (!(opt.noise >= 0.0)) throw InvalidArgument("noise must be nonnegative");
  if (phases0.size() != net.omega.size()) throw InvalidArgument("initial phase vector has the wrong length");
  if (!phases0.allFinite()) throw InvalidArgument("initial phases must be finite");

  const Eigen::Index n = net.omega.size();
  PhaseTrajectory traj;
  traj.dt = opt.dt;
  traj.t0 = opt.t0;
  traj.phases.resize(n, static_cast<Eigen::Index>(opt.samples));

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double kick = opt.noise * std::sqrt(opt.dt);
  const double h = opt.dt;

  Eigen::VectorXd state = phases0;
  for (std::size_t t = 0;; ++t) {
    for (Eigen::Index i = 0; i < n; ++i) traj.phases(i, static_cast<Eigen::Index>(t)) = wrap_phase(state(i));
    if (t + 1 == opt.samples) break;
    const Eigen::VectorXd k1 = phase_derivative(net, state);
    const Eigen::VectorXd k2 = phase_derivative(net, state + 0.5 * h * k1);
    const Eigen::VectorXd k3 = phase_derivative(net, state + 0.5 * h * k2);
    const Eigen::VectorXd k4 = phase_derivative(net, state + h * k3);
    state += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (kick > 0.0)
      for (Eigen::Index i = 0; i < n; ++i) state(i) += kick * normal(rng);
    if (!state.allFinite()) {
      std::ostringstream os;
      os << "non-finite oscillator state after step " << t + 1;
      throw Error(os.str());
    }
  }
  return traj;
}

struct MeanField {
  double rho = 0.0;
  double Phi = 0.0;
};

/// Polar form of (1/N) sum_k exp(i phi_k).
inline MeanField mean_field(std::span<const double> phases) {
  if (phases.empty()) throw InvalidArgument("mean field of an empty cluster");
  double c = 0.0;
  double s = 0.0;
  for (double p : phases) {
    c += std::cos(p);
    s += std::sin(p);
  }
  const double n = static_cast<double>(phases.size());
  c /= n;
  s /= n;
  return {std::hypot(c, s), wrap_phase(std::atan2(s, c))};
}

/// Intra-cluster coupling of each member, exactly and through the mean field.
struct CouplingCheck {
  Eigen::VectorXd lhs;          // sum_{k in c} kappa sin(phi_k - phi_i)
  Eigen::VectorXd rhs_factor1;  // N_c kappa rho sin(Phi - phi_i)
  Eigen::VectorXd rhs_factor2;    // 2 N_c kappa rho sin(Phi - phi_i)
};

/// Requires uniform coupling inside the cluster and no coupling into it from
/// outside; both are rejected otherwise.
inline CouplingCheck mean_field_coupling_check(const OscillatorNetwork& net, const Eigen::VectorXd& phases,
                                               std::size_t cluster_index) {
  net.validate();
  if (cluster_index >= net.clusters.size()) throw InvalidArgument("cluster index out of range");
  if (phases.size() != net.omega.size()) throw InvalidArgument("phase vector length differs from network size");
  const auto& members = net.clusters[cluster_index];
  const auto labels = net.labels();

  std::optional<double> kappa;
  for (std::size_t i : members) {
    for (std::size_t k = 0; k < net.size(); ++k) {
      if (i == k) continue;
      const double c = net.kappa(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
      if (labels[k] == static_cast<int>(cluster_index)) {
        if (!kappa) kappa = c;
        if (c != *kappa) throw InvalidArgument("coupling inside the cluster is not uniform");
      } else if (c != 0.0) {
        throw InvalidArgument("cluster receives coupling from outside; the mean-field reduction assumes none");
      }
    }
  }
  const double k_uniform = kappa.value_or(0.0);

  std::vector<double> member_phases;
  for (std::size_t i : members) member_phases.push_back(phases(static_cast<Eigen::Index>(i)));
  const MeanField mf = mean_field(member_phases);
  const double nc = static_cast<double>(members.size());

  CouplingCheck out;
  const auto m = static_cast<Eigen::Index>(members.size());
  out.lhs.resize(m);
  out.rhs_factor1.resize(m);
  out.rhs_factor2.resize(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    const double phi_i = member_phases[static_cast<std::size_t>(a)];
    double acc = 0.0;
    for (double phi_k : member_phases) acc += k_uniform * std::sin(phi_k - phi_i);
    out.lhs(a) = acc;
    out.rhs_factor1(a) = nc * k_uniform * mf.rho * std::sin(mf.Phi - phi_i);
    out.rhs_factor2(a) = 2.0 * out.rhs_factor1(a);
  }
  return out;
}

/// Least-squares c in lhs ~ c * base; NaN when base is identically zero.
inline double best_fit_factor(const Eigen::VectorXd& lhs, const Eigen::VectorXd& base) {
  const double den = base.squaredNorm();
  if (!(den > 0.0)) return std::nan("");
  return lhs.dot(base) / den;
}

enum class AmplitudeKind { Unit, SmoothRandom };

struct AmplitudeMode {
  AmplitudeKind kind = AmplitudeKind::Unit;
  std::uint64_t seed = 0;
};

/// s_i(t) = X_i(t) cos phi_i(t). SmoothRandom envelopes are
/// 1 + 0.5 * (normalized sum of three sinusoids at 1..3 cycles per record),
/// hence confined to [0.5, 1.5] and far below any oscillation that completes
/// tens of cycles per record.
inline SignalMatrix synth_sources(const PhaseTrajectory& traj, AmplitudeMode mode) {
  const Eigen::Index n = traj.phases.rows();
  const Eigen::Index t_count = traj.phases.cols();
  SignalMatrix s;
  s.sample_rate = traj.dt > 0.0 ? 1.0 / traj.dt : 1.0;
  s.data.resize(n, t_count);
  std::mt19937_64 rng(mode.seed);
  std::uniform_real_distribution<double> weight(0.2, 1.0);
  std::uniform_real_distribution<double> offset(0.0, kTwoPi);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> env(static_cast<std::size_t>(t_count), 1.0);
    if (mode.kind == AmplitudeKind::SmoothRandom) {
      double a[3];
      double th[3];
      double total = 0.0;
      for (int m = 0; m < 3; ++m) {
        a[m] = weight(rng);
        th[m] = offset(rng);
        total += a[m];
      }
      for (Eigen::Index t = 0; t < t_count; ++t) {
        double v = 0.0;
        for (int m = 0; m < 3; ++m)
          v += a[m] * std::sin(kTwoPi * (m + 1) * static_cast<double>(t) / static_cast<double>(t_count) + th[m]);
        env[static_cast<std::size_t>(t)] = 1.0 + 0.5 * v / total;
      }
    }
    for (Eigen::Index t = 0; t < t_count; ++t)
      s.data(i, t) = env[static_cast<std::size_t>(t)] * std::cos(traj.phases(i, t));
  }
  return s;
}

inline double condition_number(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || !(sv(sv.size() - 1) > 0.0)) return std::numeric_limits<double>::infinity();
  return sv(0) / sv(sv.size() - 1);
}

/// x = M s sample by sample.
inline SignalMatrix mix(const SignalMatrix& sources, const Eigen::MatrixXd& M) {
  sources.validate();
  const auto n = static_cast<Eigen::Index>(sources.channels());
  if (M.rows() != n || M.cols() != n) throw InvalidArgument("mixing matrix must be N x N");
  if (!M.allFinite()) throw InvalidArgument("mixing matrix has non-finite entries");
  if (!(condition_number(M) < 1e12)) throw SingularMatrixError("mixing matrix is singular");
  SignalMatrix out;
  out.sample_rate = sources.sample_rate;
  out.data = M * sources.data;
  return out;
}

/// Gaussian N x N matrix redrawn until its condition number is below max_cond.
inline Eigen::MatrixXd well_conditioned_mixing(std::mt19937_64& rng, Eigen::Index n, double max_cond) {
  if (!(max_cond > 1.0)) throw InvalidArgument("max_cond must exceed 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int attempt = 0; attempt < 100000; ++attempt) {
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index c = 0; c < n; ++c)
      for (Eigen::Index r = 0; r < n; ++r) m(r, c) = normal(rng);
    if (condition_number(m) < max_cond) return m;
  }
  throw Error("could not draw a mixing matrix under the requested condition number");
}

}  // namespace phaselock
