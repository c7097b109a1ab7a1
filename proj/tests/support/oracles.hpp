/* Copyright 2026 The sincser Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef SINCSER_TESTS_SUPPORT_ORACLES_HPP_
#define SINCSER_TESTS_SUPPORT_ORACLES_HPP_

// Independent reference computations shared by the unit and acceptance
// tests: central differences, a naive DFT and seeded random fills.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "sincser/tensor.hpp"

namespace sincser::testing {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdTolerance = 1e-4;
inline constexpr int kGradSeeds = 20;

// Central difference of f with respect to every entry of `values`, which f
// reads by reference. Entries are restored after each probe.
inline std::vector<double> central_difference(std::vector<double>& values,
                                              const std::function<double()>& f,
                                              double h = kFdStep) {
  std::vector<double> grad(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double plus = f();
    values[i] = saved - h;
    const double minus = f();
    values[i] = saved;
    grad[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

inline std::vector<double> central_difference(Tensor& t,
                                              const std::function<double()>& f,
                                              double h = kFdStep) {
  return central_difference(t.values(), f, h);
}

// ||a - b|| / max(||a||, ||b||), with 0 when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  if (scale == 0.0) return 0.0;
  return std::sqrt(diff) / scale;
}

inline void fill_normal(std::span<double> out, std::mt19937_64& rng,
                        double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : out) v = dist(rng);
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double stddev = 1.0) {
  Tensor t(std::move(shape));
  fill_normal(t.span(), rng, stddev);
  return t;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// |X(f)| by direct summation at an arbitrary frequency.
inline double dft_magnitude_at(std::span<const double> x, double freq_hz,
                               double sample_rate) {
  std::complex<double> acc = 0.0;
  const double w = -2.0 * 3.14159265358979323846 * freq_hz / sample_rate;
  for (std::size_t n = 0; n < x.size(); ++n) {
    acc += x[n] * std::polar(1.0, w * static_cast<double>(n));
  }
  return std::abs(acc);
}

inline double mean_magnitude(std::span<const double> x, double lo_hz, double hi_hz,
                             double sample_rate, double step_hz = 15.625) {
  double sum = 0.0;
  int count = 0;
  for (double f = lo_hz; f <= hi_hz; f += step_hz) {
    sum += dft_magnitude_at(x, f, sample_rate);
    ++count;
  }
  return count > 0 ? sum / count : 0.0;
}

inline double rms(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return x.empty() ? 0.0 : std::sqrt(s / static_cast<double>(x.size()));
}

}  // namespace sincser::testing

#endif  // SINCSER_TESTS_SUPPORT_ORACLES_HPP_
