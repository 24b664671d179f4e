// Copyright 2026 The crspin Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "crspin/dynamics.hpp"
#include "crspin/params.hpp"

namespace crspin {

/// Nodes and weights; sum(w f(x)) approximates the target integral.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::size_t size() const { return nodes.size(); }
};

/// Gauss-Legendre on [-1, 1].
QuadratureRule gauss_legendre(int n);
/// Expectation over a standard normal variable (probabilists' Hermite).
QuadratureRule gauss_hermite_normal(int n);
/// Expectation over a Lorentzian of the given FWHM and center. Nodes are
/// center + HWHM tan(theta) at Gauss-Legendre angles, so the weights are exact
/// for constants.
QuadratureRule lorentzian_rule(int n, double fwhm, double center = 0.0);
/// Same target distribution, but the tan map is centered on `focus` with
/// width `scale`; suited to integrands with a feature of that width at focus.
QuadratureRule lorentzian_rule_focused(int n, double fwhm, double center, double focus, double scale);
/// Seeded Monte Carlo draws from a Lorentzian, equal weights.
QuadratureRule lorentzian_samples(int n, double fwhm, double center, std::uint64_t seed);

enum class Sampling { quadrature, monte_carlo };

struct EnsembleSpec {
  double inhom_fwhm_ms0_GHz = 6.87;
  double inhom_fwhm_ms1_GHz = 3.34;
  double splitting_MHz = 1063.11;
  double spin_fwhm_MHz = 1.32;
  int nodes = 64;
  Sampling sampling = Sampling::quadrature;
  std::uint64_t seed = 1063110;

  static EnsembleSpec from(const DefectParams& p);
  /// Throws ConfigError.
  void validate() const;
  /// Spin-detuning rule: quadrature or Monte Carlo per `sampling`.
  QuadratureRule spin_rule() const;
};

struct Spectrum {
  std::vector<double> axis;
  std::vector<double> signal;
  std::vector<double> sigma;
  std::string axis_label = "frequency";

  std::size_t size() const { return axis.size(); }
  /// Throws DomainError unless the axis is strictly monotone and sigma >= 0.
  void check() const;
  /// Header "axis,value,sigma".
  void write_csv(std::ostream& os) const;
};

/// values[i * y.size() + j] belongs to (x[i], y[j]).
struct Spectrum2D {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> values;
  double at(std::size_t i, std::size_t j) const { return values[i * y.size() + j]; }
  void write_csv(std::ostream& os) const;
};

/// Two Gaussians on a laser axis in GHz measured from the m_s = 0 line; the
/// m_s = +-1 line sits D lower. Areas follow the sublevel populations.
Spectrum ple_spectrum(const DefectParams& p, const EnsembleSpec& e, std::span<const double> laser_GHz,
                      const std::array<double, 3>& populations = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});

/// Shared settings of the CW two-tone and microwave scans.
struct CwScanOptions {
  /// Burn strength W T1; W also drives the sideband.
  double burn_saturation = 0.05;
  double temperature_K = 15.0;
  /// Optical packets in [-span, span] MHz around the primary laser.
  int optical_nodes = 501;
  double optical_span_MHz = 500.0;
  double mw_rabi_MHz = 0.01;
  /// Nodes per microwave line in the spin-detuning average.
  int line_nodes = 128;
};

/// PLE flux per unit pump rate, primary laser on the m_s = 0 line, sideband
/// scanned at the given offsets (MHz) below it.
Spectrum hole_recovery_scan(const DefectParams& p, const EnsembleSpec& e, std::span<const double> sideband_MHz,
                            double B_G, const CwScanOptions& o = {});

/// PLE flux of the resonant packet with the primary laser on, versus MW frequency (MHz).
Spectrum odmr_scan(const DefectParams& p, const EnsembleSpec& e, std::span<const double> mw_MHz, double B_G,
                   const CwScanOptions& o = {});

/// Primary laser, sideband at x (MHz below primary) and MW at y (MHz), all on.
Spectrum2D simultaneous_recovery_map(const DefectParams& p, const EnsembleSpec& e, std::span<const double> sideband_MHz,
                                     std::span<const double> mw_MHz, double B_G, const CwScanOptions& o = {});

/// Percent of the inhomogeneous line inside one hole: 100 hole / inhom.
double addressed_fraction(double hole_fwhm_MHz, double inhom_fwhm_GHz);

/// 1 / (pi T_opt) in kHz.
double lifetime_limited_linewidth(double optical_lifetime_us);

}  // namespace crspin
