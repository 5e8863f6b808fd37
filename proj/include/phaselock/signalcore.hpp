#pragma once

// Analytic signals and phase-synchrony measurements.
//
// Every multichannel series is stored channel-major (one row per channel,
// one column per sample) in a row-major matrix so that a channel is a
// contiguous span. All time averages are plain left-to-right sums.

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <sstream>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "phaselock/errors.hpp"

namespace phaselock {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using ComplexMatrix = Eigen::MatrixXcd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Wraps an angle to (-pi, pi].
inline double wrap_phase(double angle) {
  double r = std::remainder(angle, kTwoPi);
  return r <= -kPi ? r + kTwoPi : r;
}

inline std::span<const double> row_span(const RowMatrix& m, Eigen::Index row) {
  return {m.data() + row * m.cols(), static_cast<std::size_t>(m.cols())};
}

/// Real multichannel time series, N channels x T samples.
struct SignalMatrix {
  RowMatrix data;
  double sample_rate = 1.0;

  std::size_t channels() const { return static_cast<std::size_t>(data.rows()); }
  std::size_t samples() const { return static_cast<std::size_t>(data.cols()); }

  void validate() const {
    if (data.rows() < 1) throw InvalidArgument("signal matrix needs at least one channel");
    if (data.cols() < 2) throw InvalidArgument("signal matrix needs at least two samples");
    if (!(sample_rate > 0.0) || !std::isfinite(sample_rate))
      throw InvalidArgument("sample rate must be positive and finite");
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      for (Eigen::Index t = 0; t < data.cols(); ++t) {
        if (!std::isfinite(data(i, t))) {
          std::ostringstream os;
          os << "non-finite value at channel " << i << ", sample " << t;
          throw InvalidArgument(os.str());
        }
      }
    }
  }
};

/// Per-channel analytic pair (x, x_h) with the derived instantaneous phase
/// and amplitude. Construct through analytic() or from_parts().
class AnalyticMatrix {
 public:
  AnalyticMatrix() = default;

  /// Builds the derived phase/amplitude from a given real part and quadrature.
  static AnalyticMatrix from_parts(RowMatrix x, RowMatrix x_h) {
    if (x.rows() != x_h.rows() || x.cols() != x_h.cols())
      throw InvalidArgument("analytic parts must have equal shapes");
    AnalyticMatrix a;
    a.x_ = std::move(x);
    a.x_h_ = std::move(x_h);
    a.phase_.resize(a.x_.rows(), a.x_.cols());
    a.amplitude_.resize(a.x_.rows(), a.x_.cols());
    for (Eigen::Index i = 0; i < a.x_.rows(); ++i) {
      for (Eigen::Index t = 0; t < a.x_.cols(); ++t) {
        const double re = a.x_(i, t);
        const double im = a.x_h_(i, t);
        a.phase_(i, t) = wrap_phase(std::atan2(im, re));
        a.amplitude_(i, t) = std::sqrt(re * re + im * im);
      }
    }
    return a;
  }

  const RowMatrix& x() const { return x_; }
  const RowMatrix& x_h() const { return x_h_; }
  const RowMatrix& phase() const { return phase_; }
  const RowMatrix& amplitude() const { return amplitude_; }

  std::size_t channels() const { return static_cast<std::size_t>(x_.rows()); }
  std::size_t samples() const { return static_cast<std::size_t>(x_.cols()); }

  std::span<const double> phase_of(std::size_t channel) const {
    return row_span(phase_, static_cast<Eigen::Index>(channel));
  }

  /// Drops `edge` samples from both ends.
  AnalyticMatrix trimmed(std::size_t edge) const {
    if (edge == 0) return *this;
    if (2 * edge >= samples()) throw InvalidArgument("trim removes every sample");
    const auto keep = static_cast<Eigen::Index>(samples() - 2 * edge);
    const auto start = static_cast<Eigen::Index>(edge);
    AnalyticMatrix a;
    a.x_ = x_.middleCols(start, keep);
    a.x_h_ = x_h_.middleCols(start, keep);
    a.phase_ = phase_.middleCols(start, keep);
    a.amplitude_ = amplitude_.middleCols(start, keep);
    return a;
  }

  /// Selects a subset of channels, in the given order.
  AnalyticMatrix select(std::span<const std::size_t> rows) const {
    AnalyticMatrix a;
    const auto n = static_cast<Eigen::Index>(rows.size());
    a.x_.resize(n, x_.cols());
    a.x_h_.resize(n, x_.cols());
    a.phase_.resize(n, x_.cols());
    a.amplitude_.resize(n, x_.cols());
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto src = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]);
      if (src >= x_.rows()) throw InvalidArgument("channel index out of range");
      a.x_.row(r) = x_.row(src);
      a.x_h_.row(r) = x_h_.row(src);
      a.phase_.row(r) = phase_.row(src);
      a.amplitude_.row(r) = amplitude_.row(src);
    }
    return a;
  }

 private:
  RowMatrix x_, x_h_, phase_, amplitude_;
};

/// Discrete Hilbert transform of one real series by the one-sided spectrum
/// construction: keep DC (and Nyquist for even length) once, double the
/// positive frequencies, zero the negative ones; the imaginary part of the
/// inverse transform is the quadrature signal.
inline std::vector<double> hilbert(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> in(x.begin(), x.end());
  std::vector<std::complex<double>> spectrum;
  Eigen::FFT<double> fft;
  fft.fwd(spectrum, in);
  spectrum.resize(n);
  const std::size_t half = n / 2;
  for (std::size_t k = 1; k < n; ++k) {
    if (n % 2 == 0 && k == half) continue;
    spectrum[k] *= (k <= half) ? 2.0 : 0.0;
  }
  std::vector<std::complex<double>> out;
  fft.inv(out, spectrum);
  std::vector<double> xh(n);
  for (std::size_t t = 0; t < n; ++t) xh[t] = out[t].imag();
  return xh;
}

inline AnalyticMatrix analytic(const SignalMatrix& signal) {
  signal.validate();
  RowMatrix xh(signal.data.rows(), signal.data.cols());
  for (Eigen::Index i = 0; i < signal.data.rows(); ++i) {
    const auto q = hilbert(row_span(signal.data, i));
    for (Eigen::Index t = 0; t < signal.data.cols(); ++t) xh(i, t) = q[static_cast<std::size_t>(t)];
  }
  return AnalyticMatrix::from_parts(signal.data, std::move(xh));
}

/// Complex phase-locking factor; magnitude is the locking strength, argument
/// the mean relative phase.
struct ComplexPLV {
  double re = 0.0;
  double im = 0.0;

  double magnitude() const { return std::hypot(re, im); }
  double argument() const { return std::atan2(im, re); }
  std::complex<double> value() const { return {re, im}; }
};

inline ComplexPLV plv(std::span<const double> phase_a, std::span<const double> phase_b) {
  if (phase_a.size() != phase_b.size()) throw InvalidArgument("phase series lengths differ");
  if (phase_a.empty()) throw InvalidArgument("phase series is empty");
  double c = 0.0;
  double s = 0.0;
  for (std::size_t t = 0; t < phase_a.size(); ++t) {
    const double d = phase_a[t] - phase_b[t];
    c += std::cos(d);
    s += std::sin(d);
  }
  const double n = static_cast<double>(phase_a.size());
  return {c / n, s / n};
}

/// Pairwise locking factors; Hermitian with an exact unit diagonal.
using PLVMatrix = ComplexMatrix;

inline PLVMatrix plv_matrix(const AnalyticMatrix& a) {
  if (a.channels() < 1) throw InvalidArgument("plv_matrix needs at least one channel");
  const auto n = static_cast<Eigen::Index>(a.channels());
  PLVMatrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    m(i, i) = {1.0, 0.0};
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const ComplexPLV p = plv(a.phase_of(static_cast<std::size_t>(i)), a.phase_of(static_cast<std::size_t>(j)));
      m(i, j) = p.value();
      m(j, i) = std::conj(p.value());
    }
  }
  return m;
}

inline PLVMatrix plv_matrix(const AnalyticMatrix& a, std::size_t trim) {
  return plv_matrix(a.trimmed(trim));
}

/// Arithmetic time average of phase_j - phase_k, taken literally (no circular
/// wrapping). See circular_mean_phase_diff for the angle that actually satisfies
/// <cos d> = |rho| cos(Psi).
inline double mean_phase_diff(std::span<const double> phase_j, std::span<const double> phase_k) {
  if (phase_j.size() != phase_k.size()) throw InvalidArgument("phase series lengths differ");
  if (phase_j.empty()) throw InvalidArgument("phase series is empty");
  double sum = 0.0;
  for (std::size_t t = 0; t < phase_j.size(); ++t) sum += phase_j[t] - phase_k[t];
  return sum / static_cast<double>(phase_j.size());
}

inline double circular_mean_phase_diff(std::span<const double> phase_j, std::span<const double> phase_k) {
  return plv(phase_j, phase_k).argument();
}

/// g[i][j] = x_h[i] x[j] - x[i] x_h[j] at one sample.
inline Matrix pairwise_kernel(const AnalyticMatrix& a, std::size_t t) {
  if (t >= a.samples()) throw InvalidArgument("sample index out of range");
  const auto n = static_cast<Eigen::Index>(a.channels());
  const auto ti = static_cast<Eigen::Index>(t);
  Matrix g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    g(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = a.x_h()(i, ti) * a.x()(j, ti) - a.x()(i, ti) * a.x_h()(j, ti);
      g(i, j) = v;
      g(j, i) = -v;
    }
  }
  return g;
}

/// Same kernel through amplitudes and phases: X_i X_j sin(phi_i - phi_j).
inline Matrix pairwise_kernel_polar(const AnalyticMatrix& a, std::size_t t) {
  if (t >= a.samples()) throw InvalidArgument("sample index out of range");
  const auto n = static_cast<Eigen::Index>(a.channels());
  const auto ti = static_cast<Eigen::Index>(t);
  Matrix g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      g(i, j) = a.amplitude()(i, ti) * a.amplitude()(j, ti) * std::sin(a.phase()(i, ti) - a.phase()(j, ti));
    }
  }
  return g;
}

}  // namespace phaselock
