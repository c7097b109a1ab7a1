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

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "doctest.h"
#include "sincser/dsp.hpp"
#include "support/oracles.hpp"

namespace dsp = sincser::dsp;
namespace st = sincser::testing;

TEST_CASE("sinc uses the continuous extension at zero") {
  CHECK(dsp::sinc(0.0) == 1.0);
  CHECK(std::abs(dsp::sinc(dsp::kPi)) < 1e-12);
  CHECK(dsp::sinc(dsp::kPi / 2) == doctest::Approx(2.0 / dsp::kPi).epsilon(1e-12));
  CHECK(dsp::sinc(-1.3) == dsp::sinc(1.3));
}

TEST_CASE("constrain_cutoffs arithmetic and clamping") {
  dsp::SincFilterParams p;
  auto c = dsp::constrain_cutoffs(p);
  CHECK(c.f1 == 30.0);
  CHECK(c.f2 == 80.0);

  p.theta1 = 50.0;
  p.theta2 = 100.0;
  c = dsp::constrain_cutoffs(p);
  CHECK(c.f1 == 80.0);
  CHECK(c.f2 == 230.0);

  p.theta1 = -50.0;
  p.theta2 = -100.0;
  c = dsp::constrain_cutoffs(p);
  CHECK(c.f1 == 80.0);
  CHECK(c.f2 == 230.0);

  p.theta2 = 1e9;
  CHECK(dsp::constrain_cutoffs(p).f2 == 8000.0);
}

TEST_CASE("constrain_cutoffs is total over extreme raw values") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> exponent(-8.0, 12.0);
  std::bernoulli_distribution sign(0.5);
  for (int i = 0; i < 2000; ++i) {
    dsp::SincFilterParams p;
    p.theta1 = (sign(rng) ? 1 : -1) * std::pow(10.0, exponent(rng));
    p.theta2 = (sign(rng) ? 1 : -1) * std::pow(10.0, exponent(rng));
    const auto c = dsp::constrain_cutoffs(p);
    REQUIRE(std::isfinite(c.f1));
    REQUIRE(std::isfinite(c.f2));
    REQUIRE(c.f1 > 0.0);
    REQUIRE(c.f2 <= 8000.0);
    // Only a theta1 that already pushes f1 past Nyquist can break f1 < f2.
    if (c.f1 + 50.0 <= 8000.0) REQUIRE(c.f1 < c.f2);
  }
}

TEST_CASE("cutoff_jacobian matches finite differences away from kinks") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> theta(-3000.0, 3000.0);
  for (int i = 0; i < 200; ++i) {
    dsp::SincFilterParams p;
    p.theta1 = theta(rng);
    p.theta2 = theta(rng);
    if (std::abs(p.theta1) < 1.0 || std::abs(p.theta2) < 1.0) continue;
    const auto c = dsp::constrain_cutoffs(p);
    const double unclamped = c.f1 + 50.0 + std::abs(p.theta2);
    if (std::abs(unclamped - 8000.0) < 1.0) continue;
    const auto j = dsp::cutoff_jacobian(p);
    const double h = 1e-4;
    auto at = [&](double t1, double t2) {
      dsp::SincFilterParams q = p;
      q.theta1 = t1;
      q.theta2 = t2;
      return dsp::constrain_cutoffs(q);
    };
    const double df1 = (at(p.theta1 + h, p.theta2).f1 - at(p.theta1 - h, p.theta2).f1) / (2 * h);
    const double df2a = (at(p.theta1 + h, p.theta2).f2 - at(p.theta1 - h, p.theta2).f2) / (2 * h);
    const double df2b = (at(p.theta1, p.theta2 + h).f2 - at(p.theta1, p.theta2 - h).f2) / (2 * h);
    CHECK(j.df1_dtheta1 == doctest::Approx(df1).epsilon(1e-6));
    CHECK(j.df2_dtheta1 == doctest::Approx(df2a).epsilon(1e-6));
    CHECK(j.df2_dtheta2 == doctest::Approx(df2b).epsilon(1e-6));
  }
}

TEST_CASE("ideal frequency response") {
  CHECK(dsp::frequency_response(300, 3000, 1000) == 1.0);
  CHECK(dsp::frequency_response(300, 3000, 100) == 0.0);
  CHECK(dsp::frequency_response(300, 3000, 5000) == 0.0);
  CHECK(dsp::frequency_response(300, 3000, -1000) == 1.0);
  CHECK(dsp::frequency_response(300, 3000, 300) == 0.5);
  CHECK(dsp::frequency_response(300, 3000, 3000) == 0.5);
}

TEST_CASE("hamming window is symmetric and positive") {
  for (std::size_t len : {1u, 3u, 251u, 257u}) {
    const auto w = dsp::hamming_window(len);
    REQUIRE(w.size() == len);
    for (std::size_t i = 0; i < len; ++i) {
      CHECK(w[i] > 0.0);
      CHECK(w[i] <= 1.0);
      CHECK(w[i] == w[len - 1 - i]);
    }
    CHECK(w[(len - 1) / 2] == 1.0);
  }
}

TEST_CASE("time_domain_kernel center tap and exact symmetry") {
  std::vector<double> ones(251, 1.0);
  const auto k = dsp::kernel_from_cutoffs(0.05 * 16000, 0.20 * 16000, 16000, ones);
  CHECK(k.center_index == 125);
  CHECK(k.coeffs[125] == doctest::Approx(0.30).epsilon(1e-12));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> theta(-4000.0, 4000.0);
  const auto window = dsp::hamming_window(251);
  for (int i = 0; i < 100; ++i) {
    dsp::SincFilterParams p;
    p.theta1 = theta(rng);
    p.theta2 = theta(rng);
    const auto kern = dsp::time_domain_kernel(p, window);
    const std::size_t c = kern.center_index;
    for (std::size_t j = 1; j <= c; ++j) REQUIRE(kern.coeffs[c + j] == kern.coeffs[c - j]);
  }
}

TEST_CASE("time_domain_kernel rejects bad geometry") {
  dsp::SincFilterParams p;
  p.length = 250;
  CHECK_THROWS_AS(dsp::time_domain_kernel(p, dsp::hamming_window(250)),
                  std::invalid_argument);
  p.length = 251;
  CHECK_THROWS_AS(dsp::time_domain_kernel(p, dsp::hamming_window(253)),
                  std::invalid_argument);
  CHECK_THROWS_AS(dsp::kernel_param_gradients(dsp::SincFilterParams{0, 0, 16000, 8},
                                              dsp::hamming_window(8)),
                  std::invalid_argument);
}

TEST_CASE("band-pass kernel passes its band and rejects low frequencies") {
  const auto window = dsp::hamming_window(257);
  const auto k = dsp::kernel_from_cutoffs(1000, 3000, 16000, window);
  const double pass = st::mean_magnitude(k.coeffs, 1200, 2800, 16000);
  double peak = 0.0;
  for (double f = 1000; f <= 3000; f += 5) {
    peak = std::max(peak, st::dft_magnitude_at(k.coeffs, f, 16000));
  }
  const double stop = st::mean_magnitude(k.coeffs, 0, 499, 16000);
  CHECK(pass >= 0.85 * peak);
  CHECK(stop <= 0.05 * peak);
}

TEST_CASE("magnitude_response agrees with a direct DFT") {
  const auto k = dsp::kernel_from_cutoffs(500, 2500, 16000, dsp::hamming_window(101));
  const auto mag = dsp::magnitude_response(k.coeffs, 64);
  for (std::size_t b = 0; b < 64; ++b) {
    const double f = b * 16000.0 / 128.0;
    CHECK(mag[b] == doctest::Approx(st::dft_magnitude_at(k.coeffs, f, 16000)).epsilon(1e-9));
  }
}

TEST_CASE("kernel_param_gradients closed forms") {
  std::vector<double> ones(101, 1.0);
  dsp::SincFilterParams p{500.0, 900.0, 16000.0, 101};
  const auto g = dsp::kernel_param_gradients(p, ones);
  // Normalized-frequency units: 2 at the center tap.
  CHECK(g.dcoeffs_df2[50] == doctest::Approx(2.0).epsilon(1e-12));

  // d/dF1 of the band-pass is minus d/dF of a low-pass at F1.
  const auto c = dsp::constrain_cutoffs(p);
  const double f1n = c.f1 / 16000.0;
  for (int n = -50; n <= 50; ++n) {
    const double lowpass_slope = 2.0 * std::cos(2.0 * dsp::kPi * f1n * n);
    CHECK(g.dcoeffs_df1[50 + n] == doctest::Approx(-lowpass_slope).epsilon(1e-12));
  }
}

TEST_CASE("kernel_param_gradients match central differences") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> f_lo(50.0, 3000.0);
  std::uniform_real_distribution<double> width(100.0, 4000.0);
  const auto window = dsp::hamming_window(251);
  for (int seed = 0; seed < 100; ++seed) {
    const double f1 = f_lo(rng);
    const double f2 = std::min(f1 + width(rng), 7900.0);
    dsp::SincFilterParams p{f1 - 30.0, f2 - f1 - 50.0, 16000.0, 251};
    const auto g = dsp::kernel_param_gradients(p, window);
    // Differentiate the kernel in normalized frequency (h = 1e-6 cycles/sample).
    const double h = 1e-6;
    auto kernel = [&](double a, double b) {
      return dsp::kernel_from_cutoffs(a * 16000, b * 16000, 16000, window).coeffs;
    };
    const double F1 = f1 / 16000, F2 = f2 / 16000;
    const auto p1 = kernel(F1 + h, F2), m1 = kernel(F1 - h, F2);
    const auto p2 = kernel(F1, F2 + h), m2 = kernel(F1, F2 - h);
    std::vector<double> fd1(251), fd2(251), an1(251), an2(251);
    for (std::size_t i = 0; i < 251; ++i) {
      fd1[i] = (p1[i] - m1[i]) / (2 * h);
      fd2[i] = (p2[i] - m2[i]) / (2 * h);
      an1[i] = g.dcoeffs_df1[i];
      an2[i] = g.dcoeffs_df2[i];
    }
    CHECK(st::relative_error(an1, fd1) < 1e-5);
    CHECK(st::relative_error(an2, fd2) < 1e-5);
  }
}

TEST_CASE("mel_spaced_init reproduces an independently computed mel grid") {
  for (int n : {1, 4, 16, 32}) {
    const auto bank = dsp::mel_spaced_init(n, 16000.0);
    REQUIRE(bank.size() == static_cast<std::size_t>(n));
    const double lo = 2595.0 * std::log10(1.0 + 30.0 / 700.0);
    const double hi = 2595.0 * std::log10(1.0 + 8000.0 / 700.0);
    double previous_f2 = 30.0;
    for (int i = 0; i < n; ++i) {
      const double m0 = lo + (hi - lo) * i / n;
      const double m1 = lo + (hi - lo) * (i + 1) / n;
      const double e0 = 700.0 * (std::pow(10.0, m0 / 2595.0) - 1.0);
      const double e1 = 700.0 * (std::pow(10.0, m1 / 2595.0) - 1.0);
      const auto c = dsp::constrain_cutoffs(bank[static_cast<std::size_t>(i)]);
      CHECK(c.f1 < c.f2);
      CHECK(std::abs(c.f1 - e0) < 1e-6);
      CHECK(std::abs(c.f2 - e1) < 1e-6);
      CHECK(std::abs(c.f1 - previous_f2) < 1e-6);
      previous_f2 = c.f2;
    }
  }
  // Bands narrower than band_min are widened, breaking adjacency there.
  const auto dense = dsp::mel_spaced_init(40, 16000.0);
  const double lo = 2595.0 * std::log10(1.0 + 30.0 / 700.0);
  const double hi = 2595.0 * std::log10(1.0 + 8000.0 / 700.0);
  for (int i = 0; i < 40; ++i) {
    const double e0 = 700.0 * (std::pow(10.0, (lo + (hi - lo) * i / 40) / 2595.0) - 1.0);
    const double e1 = 700.0 * (std::pow(10.0, (lo + (hi - lo) * (i + 1) / 40) / 2595.0) - 1.0);
    const auto c = dsp::constrain_cutoffs(dense[static_cast<std::size_t>(i)]);
    CHECK(std::abs(c.f1 - e0) < 1e-6);
    CHECK(std::abs(c.f2 - std::max(e1, e0 + 50.0)) < 1e-6);
  }

  const auto one = dsp::mel_spaced_init(1, 16000.0);
  CHECK(dsp::constrain_cutoffs(one[0]).f1 == 30.0);
  CHECK(dsp::constrain_cutoffs(one[0]).f2 == 8000.0);
  CHECK_THROWS_AS(dsp::mel_spaced_init(0, 16000.0), std::invalid_argument);
}

TEST_CASE("mel conversions invert each other") {
  for (double f : {0.0, 30.0, 700.0, 4000.0, 8000.0}) {
    CHECK(dsp::mel_to_hz(dsp::hz_to_mel(f)) == doctest::Approx(f).epsilon(1e-12));
  }
  CHECK(dsp::hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
}

TEST_CASE("band_energy_fraction of a band kernel") {
  const auto k = dsp::kernel_from_cutoffs(1000, 3000, 16000, dsp::hamming_window(257));
  const auto mag = dsp::magnitude_response(k.coeffs, 1024);
  const std::vector<std::pair<double, double>> inside = {{900.0, 3100.0}};
  const std::vector<std::pair<double, double>> outside = {{5000.0, 8000.0}};
  CHECK(dsp::band_energy_fraction(mag, 16000, inside) > 0.99);
  CHECK(dsp::band_energy_fraction(mag, 16000, outside) < 1e-4);
}
