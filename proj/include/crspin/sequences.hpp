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
#include <string>
#include <vector>

#include "crspin/dynamics.hpp"
#include "crspin/fitting.hpp"
#include "crspin/params.hpp"

namespace crspin {

enum class SegmentKind { laser, mw_pulse, wait, readout_gate };

/// One step of a shot. Optical pumping is resonant with the addressed packet:
/// the primary tone drives |g0>, the sideband (when on) drives |g->.
struct Segment {
  SegmentKind kind = SegmentKind::wait;
  double duration_us = 0.0;
  bool primary = false;
  bool sideband = false;
  /// Sideband offset below the primary tone, MHz (the |g-> transition).
  double sideband_detuning_MHz = 0.0;
  /// Probe back-action (ground-state mixing) while this laser is on.
  bool probe = false;
  /// mw_pulse: the drive. wait: rabi 0, detuning sets the rotating frame.
  MicrowaveDrive drive;

  static Segment laser(double duration_us, bool sideband, double sideband_detuning_MHz, bool probe);
  static Segment mw_pulse(const MicrowaveDrive& d, double duration_us);
  static Segment wait(double duration_us, double frame_detuning_MHz = 0.0, MwTransition t = MwTransition::plus);
  static Segment gate(double window_us);
};

/// Each shot starts from the thermal state and ends with its readout gate.
struct Shot {
  std::vector<Segment> segments;
};

/// How the shots of one sweep point form the reported value.
enum class Combine {
  /// one shot, its counts
  single,
  /// shots[0] - shots[1]
  difference,
  /// 100 (shots[0] - shots[1]) / shots[0]
  contrast,
};

struct PulseSequence {
  double sweep_value = 0.0;
  std::vector<Shot> shots;
  Combine combine = Combine::single;

  /// Throws DomainError: laser and gate durations > 0, pulse and wait
  /// durations >= 0, every shot ends in exactly one gate.
  void validate() const;
  std::size_t count(SegmentKind k) const;
};

/// cfg.protocol.grid, or the protocol default when it is empty.
std::vector<double> protocol_grid(const RunConfig& cfg);

/// One sequence per sweep point. CW spectroscopy protocols (ple_scan,
/// odmr_scan, hole_scan) have no pulse form and throw ConfigError.
std::vector<PulseSequence> build_protocol(const RunConfig& cfg);

/// Spin packet of the microwave ensemble.
struct Packet {
  double delta_MHz = 0.0;
  double amplitude = 1.0;
  double weight = 1.0;
};

/// Lorentzian spin detuning (odmr_fwhm) x Gaussian Rabi amplitude spread.
/// spin_nodes == 1 or amplitude_nodes == 1 collapses that axis to its center.
std::vector<Packet> make_packets(const DefectParams& p, int spin_nodes, int amplitude_nodes);
/// Packets a protocol averages over (settings.spin_nodes / amplitude_nodes, or
/// the protocol default).
std::vector<Packet> protocol_packets(const RunConfig& cfg);

struct SweepResult {
  ProtocolId protocol = ProtocolId::rabi;
  std::string sweep_label;
  std::vector<double> sweep_value;
  /// Noiseless, dark-subtracted observable.
  std::vector<double> mean_counts;
  /// Poisson-sampled, dark-subtracted observable (equals mean_counts when
  /// noise is off).
  std::vector<double> sampled_counts;
  std::vector<double> sigma;
  std::uint64_t seed = 0;

  std::size_t size() const { return sweep_value.size(); }
  /// Header "sweep_value,mean_counts,sampled_counts,sigma".
  void write_csv(std::ostream& os) const;
  /// (x, sampled, sigma) for fitting.
  FitData data() const;
  FitData noiseless_data() const;
};

/// Expected counts of every shot of a sequence by direct time stepping of
/// each packet through dynamics::evolve_sequence. Slow; reference path.
std::vector<double> simulate_sequence(const PulseSequence& seq, const RunConfig& cfg, const std::vector<Packet>& packets);

/// Runs the protocol with the per-protocol fast path and the detection chain.
SweepResult run_protocol(const RunConfig& cfg);
/// Same observable through build_protocol + simulate_sequence.
SweepResult run_protocol_reference(const RunConfig& cfg);

/// exp(-(t/T2)^n) prod_a (1 - K_a sin^2(pi w_a tau)), tau = t/2 or t.
double echo_envelope(double t_us, const DefectParams& p,
                     EchoTauConvention c = EchoTauConvention::half_free_time);

/// 1/T1 in 1/s. Throws DomainError for Raman at T <= dT.
double t1_rate_model(double temperature_K, const T1Model& model);

/// Microwave Rabi frequency used by the pulsed protocols.
double pulse_rabi(const RunConfig& cfg);

/// Pump rate that makes the fitted buildup rise time equal target_us.
double calibrate_pump_rate(const RunConfig& cfg, double target_us = 1270.0);
/// Rabi amplitude spread that makes the fitted Rabi decay equal target_us.
double calibrate_amplitude_spread(const RunConfig& cfg, double target_us = 4.76);
/// Applies the calibrations switched on in cfg.calibrate, pump rate first.
RunConfig calibrated(const RunConfig& cfg);

/// Helpers for fitting protocol outputs.
FitResult fit_rabi(const SweepResult& r, bool noiseless = false);
/// 200 |A| / (C + |A|)
double rabi_contrast(const FitResult& f);

struct TemperaturePoint {
  double temperature_K = 0.0;
  FitResult decay;
  double t1_s = 0.0;
  double t1_err_s = 0.0;
};

struct TemperatureStudy {
  std::vector<TemperaturePoint> points;
  FitData rates;  ///< x = T (K), y = 1/T1 (1/s), sigma from the per-T fits
  std::vector<FitResult> fits;  ///< orbach, then raman with n = 3, 5, 7, 9
  std::vector<RankEntry> ranking;
};

/// t1_inversion at each temperature, exponential fit per temperature, then
/// weighted Orbach and fixed-n Raman fits of the rates.
TemperatureStudy temperature_study(const RunConfig& cfg, const std::vector<double>& temperatures_K);
/// Orbach and fixed-n Raman fits of given rates, ranked.
TemperatureStudy fit_rate_models(const FitData& rates);

}  // namespace crspin
