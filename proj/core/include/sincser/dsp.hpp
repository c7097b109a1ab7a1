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

#ifndef SINCSER_DSP_HPP_
#define SINCSER_DSP_HPP_

// Windowed-sinc band-pass kernels parameterized by two cutoff frequencies.
//
// Each filter is the difference of two ideal low-pass prototypes,
//   g[n] = 2 F2 sinc(2 pi F2 n) - 2 F1 sinc(2 pi F1 n),   n = -c..c,
// with F = f / sample_rate (cycles/sample), multiplied by a fixed Hamming
// window. Learnable state per filter is two raw scalars (theta1, theta2)
// that map to valid cutoffs 0 < f1 < f2 <= fs/2 for any real input.
//
// Everything here is a pure function and safe to call concurrently.

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace sincser::dsp {

inline constexpr double kPi = 3.14159265358979323846;

// Lower bounds used by constrain_cutoffs.
struct CutoffLimits {
  double f_min = 30.0;     // Hz, floor for f1
  double band_min = 50.0;  // Hz, minimum f2 - f1 before the Nyquist clamp
};

struct SincFilterParams {
  double theta1 = 0.0;  // raw, unconstrained (Hz)
  double theta2 = 0.0;  // raw, unconstrained (Hz)
  double sample_rate = 16000.0;
  std::size_t length = 251;  // odd
};

struct Cutoffs {
  double f1 = 0.0;  // Hz
  double f2 = 0.0;  // Hz
};

// Partial derivatives of (f1, f2) with respect to (theta1, theta2).
struct CutoffJacobian {
  double df1_dtheta1 = 0.0;
  double df2_dtheta1 = 0.0;
  double df2_dtheta2 = 0.0;
};

struct FilterKernel {
  std::vector<double> coeffs;
  std::size_t center_index = 0;
  double f1 = 0.0;  // Hz
  double f2 = 0.0;  // Hz
};

// Partials of every kernel coefficient with respect to the normalized
// cutoffs F1 = f1/fs and F2 = f2/fs.
struct KernelGradients {
  std::vector<double> dcoeffs_df1;
  std::vector<double> dcoeffs_df2;
};

// sin(x)/x with the continuous extension sinc(0) = 1.
double sinc(double x);

// f1 = f_min + |theta1|; f2 = min(f1 + band_min + |theta2|, fs/2).
Cutoffs constrain_cutoffs(const SincFilterParams& p,
                          const CutoffLimits& limits = {});

// Almost-everywhere derivative of constrain_cutoffs. At theta == 0 the
// subgradient +1 is used so a filter sitting exactly on its floor can still
// move away from it.
CutoffJacobian cutoff_jacobian(const SincFilterParams& p,
                               const CutoffLimits& limits = {});

// Ideal band-pass magnitude rect(f/2f2) - rect(f/2f1); rect edges are 1/2.
double frequency_response(double f1, double f2, double f);

// Symmetric Hamming window 0.54 - 0.46 cos(2 pi i / (N - 1)); N == 1 gives {1}.
std::vector<double> hamming_window(std::size_t length);

// Throws std::invalid_argument for even lengths or a window/length mismatch.
FilterKernel time_domain_kernel(const SincFilterParams& p,
                                std::span<const double> window,
                                const CutoffLimits& limits = {});

// Same as above but from explicit cutoffs in Hz.
FilterKernel kernel_from_cutoffs(double f1, double f2, double sample_rate,
                                 std::span<const double> window);

KernelGradients kernel_param_gradients(const SincFilterParams& p,
                                       std::span<const double> window,
                                       const CutoffLimits& limits = {});

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Mel-equidistant adjacent bands covering (f_min, fs/2). Bands narrower than
// band_min cannot be represented exactly; their f2 is widened to
// f1 + band_min (theta2 = 0) and adjacency holds only for the others.
std::vector<SincFilterParams> mel_spaced_init(int num_filters,
                                              double sample_rate,
                                              std::size_t length = 251,
                                              const CutoffLimits& limits = {});

// |DFT| of coeffs at num_bins frequencies k * fs / (2 num_bins), k = 0..n-1,
// i.e. uniformly over [0, fs/2).
std::vector<double> magnitude_response(std::span<const double> coeffs,
                                       std::size_t num_bins);

// Fraction of sum |H|^2 (over magnitude_response bins) that falls inside any
// of the given [low, high] Hz bands.
double band_energy_fraction(std::span<const double> magnitude,
                            double sample_rate,
                            std::span<const std::pair<double, double>> bands);

}  // namespace sincser::dsp

#endif  // SINCSER_DSP_HPP_
