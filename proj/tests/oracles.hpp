// Independent reference implementations used to check the production
// transforms. These stay deliberately naive: direct summation for the DFT
// and Gabor slice, an explicit basis matrix for the Haar transform.
#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "hppi/frontend.hpp"

namespace hppi::oracles {

inline SampleWindow random_window(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  SampleWindow w;
  w.samples = Tensor({kWindowLen, kNumChannels});
  for (double& v : w.samples.data) v = dist(rng);
  return w;
}

inline std::vector<double> column(const Tensor& t, std::size_t c) {
  std::vector<double> v(t.dim(0));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = t.at(i, c);
  return v;
}

inline double dft_magnitude(const std::vector<double>& x, std::size_t k) {
  std::complex<double> acc(0.0, 0.0);
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * n) /
                       static_cast<double>(x.size());
    acc += x[n] * std::complex<double>(std::cos(ang), std::sin(ang));
  }
  return std::abs(acc);
}

// Rows ordered [a4, d4, d3 x2, d2 x4, d1 x8] to match the transform layout.
inline std::array<std::array<double, 16>, 16> haar_basis() {
  std::array<std::array<double, 16>, 16> basis{};
  for (std::size_t n = 0; n < 16; ++n) basis[0][n] = 1.0 / 4.0;
  std::size_t row = 1;
  for (int level = 4; level >= 1; --level) {
    const std::size_t block = 1u << level;
    const std::size_t count = 16u / block;
    const double norm = 1.0 / std::sqrt(static_cast<double>(block));
    for (std::size_t k = 0; k < count; ++k)
      for (std::size_t n = 0; n < block; ++n)
        basis[row + k][k * block + n] = (n < block / 2 ? norm : -norm);
    row += count;
  }
  return basis;
}

inline double gabor_magnitude(const std::vector<double>& x, std::size_t k, double sigma) {
  std::complex<double> acc(0.0, 0.0);
  const double tc = 7.5;
  for (std::size_t tau = 0; tau < x.size(); ++tau) {
    const double d = static_cast<double>(tau) - tc;
    const double env = std::exp(-std::numbers::pi * d * d / (sigma * sigma));
    const double ang = -2.0 * std::numbers::pi * (static_cast<double>(k) / 16.0) *
                       static_cast<double>(tau);
    acc += x[tau] * env * std::complex<double>(std::cos(ang), std::sin(ang));
  }
  return std::abs(acc);
}

}  // namespace hppi::oracles
