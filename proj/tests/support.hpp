#pragma once

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "phaselock/phaselock.hpp"

namespace testing_support {

using phaselock::kPi;
using phaselock::kTwoPi;
using phaselock::RowMatrix;

/// Hilbert transform by a direct O(T^2) DFT, no FFT involved.
inline std::vector<double> dft_hilbert(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> spectrum(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t)
      acc += x[t] * std::polar(1.0, -kTwoPi * static_cast<double>((k * t) % n) / static_cast<double>(n));
    spectrum[k] = acc;
  }
  // multiply by -i sign(k): quadrature of the positive frequencies
  std::vector<std::complex<double>> h(n);
  for (std::size_t k = 0; k < n; ++k) {
    const bool nyquist = n % 2 == 0 && k == n / 2;
    if (k == 0 || nyquist) h[k] = 0.0;
    else if (k < (n + 1) / 2) h[k] = std::complex<double>(0.0, -1.0) * spectrum[k];
    else h[k] = std::complex<double>(0.0, 1.0) * spectrum[k];
  }
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    std::complex<double> acc = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      acc += h[k] * std::polar(1.0, kTwoPi * static_cast<double>((k * t) % n) / static_cast<double>(n));
    out[t] = acc.real() / static_cast<double>(n);
  }
  return out;
}

/// Rows of cos(2 pi f t / T + p) with integer f, so the discrete Hilbert
/// transform is exactly the matching sine.
inline phaselock::AnalyticMatrix exact_tones(const std::vector<int>& cycles, const std::vector<double>& offsets,
                                             const std::vector<double>& amps, Eigen::Index t_count) {
  const auto n = static_cast<Eigen::Index>(cycles.size());
  RowMatrix x(n, t_count);
  RowMatrix xh(n, t_count);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index t = 0; t < t_count; ++t) {
      const double arg = kTwoPi * cycles[static_cast<std::size_t>(i)] * static_cast<double>(t) /
                             static_cast<double>(t_count) + offsets[static_cast<std::size_t>(i)];
      x(i, t) = amps[static_cast<std::size_t>(i)] * std::cos(arg);
      xh(i, t) = amps[static_cast<std::size_t>(i)] * std::sin(arg);
    }
  return phaselock::AnalyticMatrix::from_parts(x, xh);
}

inline double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

inline double wrapped_distance(double a, double b) { return std::abs(phaselock::wrap_phase(a - b)); }

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("phaselock_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace testing_support
