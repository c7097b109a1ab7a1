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

#include "sincser/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace sincser::dsp {
namespace {

void check_kernel_geometry(std::size_t length, std::size_t window_size) {
  if (length == 0 || length % 2 == 0) {
    throw std::invalid_argument("sinc kernel length must be odd, got " +
                                std::to_string(length));
  }
  if (window_size != length) {
    throw std::invalid_argument("window has " + std::to_string(window_size) +
                                " taps but kernel length is " +
                                std::to_string(length));
  }
}

// Derivative sign of |theta|; zero maps to +1.
double abs_slope(double theta) { return theta < 0.0 ? -1.0 : 1.0; }

}  // namespace

double sinc(double x) {
  if (x == 0.0) return 1.0;
  return std::sin(x) / x;
}

Cutoffs constrain_cutoffs(const SincFilterParams& p,
                          const CutoffLimits& limits) {
  const double nyquist = p.sample_rate / 2.0;
  const double f1 = limits.f_min + std::abs(p.theta1);
  const double f2 = std::min(f1 + limits.band_min + std::abs(p.theta2), nyquist);
  return {f1, f2};
}

CutoffJacobian cutoff_jacobian(const SincFilterParams& p,
                               const CutoffLimits& limits) {
  const double nyquist = p.sample_rate / 2.0;
  const double f1 = limits.f_min + std::abs(p.theta1);
  const bool clamped = f1 + limits.band_min + std::abs(p.theta2) >= nyquist;
  CutoffJacobian j;
  j.df1_dtheta1 = abs_slope(p.theta1);
  j.df2_dtheta1 = clamped ? 0.0 : abs_slope(p.theta1);
  j.df2_dtheta2 = clamped ? 0.0 : abs_slope(p.theta2);
  return j;
}

double frequency_response(double f1, double f2, double f) {
  const auto rect = [](double x) {
    const double a = std::abs(x);
    if (a < 0.5) return 1.0;
    if (a == 0.5) return 0.5;
    return 0.0;
  };
  return rect(f / (2.0 * f2)) - rect(f / (2.0 * f1));
}

std::vector<double> hamming_window(std::size_t length) {
  if (length == 0) return {};
  if (length == 1) return {1.0};
  std::vector<double> w(length);
  const double denom = static_cast<double>(length - 1);
  // Evaluate one half and mirror so the window is bitwise symmetric.
  for (std::size_t i = 0; i < (length + 1) / 2; ++i) {
    const double v = 0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(i) / denom);
    w[i] = v;
    w[length - 1 - i] = v;
  }
  return w;
}

FilterKernel kernel_from_cutoffs(double f1, double f2, double sample_rate,
                                 std::span<const double> window) {
  const std::size_t length = window.size();
  check_kernel_geometry(length, window.size());
  const std::size_t c = (length - 1) / 2;
  const double F1 = f1 / sample_rate;
  const double F2 = f2 / sample_rate;

  FilterKernel k;
  k.coeffs.assign(length, 0.0);
  k.center_index = c;
  k.f1 = f1;
  k.f2 = f2;
  for (std::size_t n = 0; n <= c; ++n) {
    const double t = static_cast<double>(n);
    const double band = 2.0 * F2 * sinc(2.0 * kPi * F2 * t) -
                        2.0 * F1 * sinc(2.0 * kPi * F1 * t);
    const double v = window[c + n] * band;
    k.coeffs[c + n] = v;
    k.coeffs[c - n] = v;
  }
  return k;
}

FilterKernel time_domain_kernel(const SincFilterParams& p,
                                std::span<const double> window,
                                const CutoffLimits& limits) {
  check_kernel_geometry(p.length, window.size());
  const Cutoffs cut = constrain_cutoffs(p, limits);
  return kernel_from_cutoffs(cut.f1, cut.f2, p.sample_rate, window);
}

KernelGradients kernel_param_gradients(const SincFilterParams& p,
                                       std::span<const double> window,
                                       const CutoffLimits& limits) {
  check_kernel_geometry(p.length, window.size());
  const Cutoffs cut = constrain_cutoffs(p, limits);
  const double F1 = cut.f1 / p.sample_rate;
  const double F2 = cut.f2 / p.sample_rate;
  const std::size_t c = (p.length - 1) / 2;

  // d/dF [2F sinc(2 pi F n)] = d/dF [sin(2 pi F n) / (pi n)] = 2 cos(2 pi F n),
  // which is also the correct limit (2) at n = 0.
  KernelGradients g;
  g.dcoeffs_df1.assign(p.length, 0.0);
  g.dcoeffs_df2.assign(p.length, 0.0);
  for (std::size_t n = 0; n <= c; ++n) {
    const double t = static_cast<double>(n);
    const double d1 = -window[c + n] * 2.0 * std::cos(2.0 * kPi * F1 * t);
    const double d2 = window[c + n] * 2.0 * std::cos(2.0 * kPi * F2 * t);
    g.dcoeffs_df1[c + n] = d1;
    g.dcoeffs_df1[c - n] = d1;
    g.dcoeffs_df2[c + n] = d2;
    g.dcoeffs_df2[c - n] = d2;
  }
  return g;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

std::vector<SincFilterParams> mel_spaced_init(int num_filters,
                                              double sample_rate,
                                              std::size_t length,
                                              const CutoffLimits& limits) {
  if (num_filters <= 0) {
    throw std::invalid_argument("num_filters must be >= 1, got " +
                                std::to_string(num_filters));
  }
  if (!(sample_rate > 0.0)) {
    throw std::invalid_argument("sample_rate must be positive");
  }
  const double nyquist = sample_rate / 2.0;
  if (limits.f_min + limits.band_min > nyquist) {
    throw std::invalid_argument("f_min + band_min exceeds Nyquist");
  }
  const double mel_lo = hz_to_mel(limits.f_min);
  const double mel_hi = hz_to_mel(nyquist);
  const auto n = static_cast<std::size_t>(num_filters);

  std::vector<double> edges(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(n));
  }
  edges.front() = limits.f_min;
  edges.back() = nyquist;

  std::vector<SincFilterParams> filters(n);
  for (std::size_t i = 0; i < n; ++i) {
    filters[i].theta1 = edges[i] - limits.f_min;
    filters[i].theta2 =
        std::max(0.0, edges[i + 1] - edges[i] - limits.band_min);
    filters[i].sample_rate = sample_rate;
    filters[i].length = length;
  }
  return filters;
}

std::vector<double> magnitude_response(std::span<const double> coeffs,
                                       std::size_t num_bins) {
  std::vector<double> mag(num_bins, 0.0);
  for (std::size_t k = 0; k < num_bins; ++k) {
    const double omega =
        kPi * static_cast<double>(k) / static_cast<double>(num_bins);
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t n = 0; n < coeffs.size(); ++n) {
      acc += coeffs[n] * std::polar(1.0, -omega * static_cast<double>(n));
    }
    mag[k] = std::abs(acc);
  }
  return mag;
}

double band_energy_fraction(std::span<const double> magnitude,
                            double sample_rate,
                            std::span<const std::pair<double, double>> bands) {
  const std::size_t num_bins = magnitude.size();
  double inside = 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < num_bins; ++k) {
    const double f = static_cast<double>(k) * sample_rate /
                     (2.0 * static_cast<double>(num_bins));
    const double e = magnitude[k] * magnitude[k];
    total += e;
    for (const auto& [lo, hi] : bands) {
      if (f >= lo && f <= hi) {
        inside += e;
        break;
      }
    }
  }
  return total > 0.0 ? inside / total : 0.0;
}

}  // namespace sincser::dsp
