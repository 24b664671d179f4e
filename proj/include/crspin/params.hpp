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

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace crspin {

/// Reference constants. Never fit.
struct PhysicalConstants {
  static constexpr double bohr_magneton_over_h_GHz_per_T = 13.996244936;
  static constexpr double boltzmann_over_h_Hz_per_K = 2.083661912e10;
  static constexpr double boltzmann_meV_per_K = 8.617333262e-2;
  /// Gyromagnetic ratio magnitudes, MHz/T.
  static constexpr double gamma_13C_MHz_per_T = 10.7084;
  static constexpr double gamma_29Si_MHz_per_T = 8.465;

  static constexpr double bohr_magneton_over_h_MHz_per_G() { return bohr_magneton_over_h_GHz_per_T * 0.1; }
};

/// How a quoted Zeeman term maps onto the m_s = +-1 levels.
///   separation: f(+-1) = D +- g muB B / h   (lines 2 g muB B / h apart)
///   shift:      f(+-1) = D +- g muB B / 2h  (lines g muB B / h apart)
enum class ZeemanConvention { separation, shift };

struct EseemComponent {
  double amplitude = 0.0;     ///< K_a in [0, 1]
  double frequency_kHz = 0.0; ///< omega_a

  bool operator==(const EseemComponent&) const = default;
};

/// 1/T1 = A exp(-E / kB T)
struct OrbachModel {
  double prefactor_per_s = 0.0;
  double energy_meV = 0.0;
  bool operator==(const OrbachModel&) const = default;
};

/// 1/T1 = A (T - dT)^n, n a fixed odd integer.
struct RamanModel {
  double prefactor_per_s = 0.0;
  double offset_K = 0.0;
  int exponent = 9;
  bool operator==(const RamanModel&) const = default;
};

using T1Model = std::variant<OrbachModel, RamanModel>;

namespace detail {
constexpr double ipow(double x, int n) { return n == 0 ? 1.0 : x * ipow(x, n - 1); }
}  // namespace detail

/// Raman prefactor that puts T1(15 K) at 1.6 s for dT = 3.2 K, n = 9.
inline constexpr double kDefaultRamanPrefactor = 1.0 / (1.6 * detail::ipow(15.0 - 3.2, 9));

struct DefectParams {
  double zero_field_splitting_MHz = 1063.11;
  double g_parallel = 2.0;
  ZeemanConvention zeeman = ZeemanConvention::separation;
  double optical_lifetime_us = 156.3;
  /// Decay probabilities from |e> into (|g0>, |g->, |g+>).
  std::array<double, 3> branching{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  double inhom_fwhm_ms0_GHz = 6.87;
  double inhom_fwhm_ms1_GHz = 3.34;
  double homog_fwhm_MHz = 15.5;
  double odmr_fwhm_MHz = 1.32;
  double t2_star_ns = 307.0;
  double t2_us = 81.0;
  double echo_stretch = 1.9;
  std::vector<EseemComponent> eseem{{0.15, 87.5}, {0.10, 68.0}};
  T1Model t1_model = RamanModel{kDefaultRamanPrefactor, 3.2, 9};
  double rabi_freq_MHz = 2.0;
  /// Gaussian spread of the Rabi amplitude, sigma_Omega / Omega.
  double rabi_amplitude_spread = 0.03;
  /// Peak incoherent pump rate; default gives a resonant CW excited fraction of 0.1.
  double pump_rate_per_us = 1.0 / (9.0 * 156.3);
  /// Pairwise ground-state mixing rate active only while a probe pulse is on.
  double probe_reset_rate_per_us = 0.0051;

  bool operator==(const DefectParams&) const = default;
};

struct DetectionConfig {
  double collection_efficiency = 0.01;
  double dark_rate_cps = 7500.0;
  double gate_window_us = 155.0;
  std::uint64_t repetitions = 1000;
  std::uint64_t rng_seed = 1063110;
  /// Number of emitters in the addressed sub-ensemble.
  double emitter_count = 1.0e5;

  bool operator==(const DetectionConfig&) const = default;
};

enum class ProtocolId {
  rabi,
  ramsey,
  hahn_echo,
  t1_inversion,
  polarization_buildup,
  ple_scan,
  odmr_scan,
  hole_scan,
  optical_lifetime,
};

std::string_view to_string(ProtocolId id);
ProtocolId protocol_from_string(std::string_view name);  // throws ConfigError
std::string_view to_string(ZeemanConvention c);

/// Which time the ESEEM modulation is evaluated at.
enum class EchoTauConvention { half_free_time, full_free_time };

struct ProtocolSettings {
  double polarize_us = 5000.0;
  double probe_us = 50.0;
  bool sideband_pump = true;
  double mw_detuning_MHz = 5.0;
  /// Rabi frequency of the MW pulses; 0 selects DefectParams::rabi_freq_MHz.
  double pulse_rabi_MHz = 0.0;
  double ramsey_pulse_rabi_MHz = 10.0;
  double odmr_rabi_MHz = 0.01;
  /// CW scans: burn strength as pump_rate * T1 (<< 1 is the weak-burning regime).
  double burn_saturation = 0.05;
  double excitation_us = 20.0;
  double sample_dt_us = 1.0;
  EchoTauConvention echo_tau = EchoTauConvention::half_free_time;
  /// 0 selects the per-protocol default.
  int spin_nodes = 0;
  int amplitude_nodes = 12;
  int optical_nodes = 501;
  bool noise = true;

  bool operator==(const ProtocolSettings&) const = default;
};

struct ProtocolSpec {
  ProtocolId id = ProtocolId::rabi;
  /// Sweep values; empty selects the protocol's default grid.
  std::vector<double> grid;
  ProtocolSettings settings;

  bool operator==(const ProtocolSpec&) const = default;
};

struct CalibrationFlags {
  bool pump_rate = true;
  bool amplitude_spread = true;
  bool operator==(const CalibrationFlags&) const = default;
};

struct RunConfig {
  DefectParams defect;
  double field_B_G = 158.0;
  double temperature_K = 15.0;
  DetectionConfig detection;
  ProtocolSpec protocol;
  CalibrationFlags calibrate;

  bool operator==(const RunConfig&) const = default;
};

struct ProvenanceNote {
  std::string_view field;
  std::string_view source;
};

/// Defaults for every defect parameter.
DefectParams default_params();

/// One note per numeric DefectParams field: where its default comes from.
const std::vector<ProvenanceNote>& default_provenance();

/// 1/T1 in 1/s at temperature T (K). Throws DomainError for Raman with T <= dT.
double t1_rate_per_s(const T1Model& model, double temperature_K);

/// Throws ConfigError naming the offending field.
void validate(const DefectParams& p, std::string_view path = "defect");
void validate(const RunConfig& cfg);

/// Parses a JSON configuration document; missing fields take defaults.
/// Throws ParseError (syntax) or ConfigError (invariant breach).
RunConfig load_config(std::string_view text);

/// Loads from a file path. An empty path falls back to $CRSPIN_CONFIG, then to defaults.
RunConfig load_config_file(const std::string& path);

std::string serialize_config(const RunConfig& cfg);

/// Stable 64-bit FNV-1a hash of the serialized configuration.
std::uint64_t config_hash(const RunConfig& cfg);

}  // namespace crspin
