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


#include "crspin/sequences.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <ostream>

#include "crspin/detection.hpp"
#include "crspin/ensemble.hpp"
#include "crspin/errors.hpp"
#include "crspin/expm.hpp"
#include "crspin/kernels.hpp"
#include "crspin/spin_core.hpp"

namespace crspin {
namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = a + (b - a) * i / (n - 1);
  return v;
}

// Sampling rule shared with evolve_sequence: an even number of intervals no
// wider than dt.
std::size_t even_intervals(double duration, double dt) {
  auto n = static_cast<std::size_t>(std::ceil(duration / dt));
  return std::max<std::size_t>(2, n + (n % 2));
}

bool uniform(const std::vector<double>& g) {
  if (g.size() < 3) return g.size() == 2;
  const double h = (g.back() - g.front()) / static_cast<double>(g.size() - 1);
  for (std::size_t k = 0; k < g.size(); ++k)
    if (std::abs(g[k] - (g.front() + h * static_cast<double>(k))) > 1e-9 * std::max(std::abs(h), 1e-300)) return false;
  return h > 0.0;
}

double t1_us(const RunConfig& cfg) { return 1e6 / t1_rate_per_s(cfg.defect.t1_model, cfg.temperature_K); }

Environment packet_env(const RunConfig& cfg) {
  return make_environment(cfg.defect, cfg.temperature_K, DephasingMode::none);
}

double pi_time(double rabi_MHz) { return 0.5 / rabi_MHz; }

std::array<double, 3> laser_pump(const DefectParams& p, const Segment& s) {
  return {s.primary ? p.pump_rate_per_us : 0.0, s.sideband ? p.pump_rate_per_us : 0.0, 0.0};
}

DriveSet to_drive(const DefectParams& p, const Segment& s, const Packet& k) {
  DriveSet d;
  d.duration_us = s.duration_us;
  switch (s.kind) {
    case SegmentKind::laser:
      d.pump = laser_pump(p, s);
      d.probe = s.probe;
      break;
    case SegmentKind::mw_pulse:
    case SegmentKind::wait: {
      MicrowaveDrive m = s.drive;
      m.rabi_MHz *= k.amplitude;
      m.detuning_MHz += k.delta_MHz;
      d.mw.push_back(m);
      break;
    }
    case SegmentKind::readout_gate:
      break;
  }
  return d;
}

Super generator_of(const DefectParams& p, const Segment& s, const Packet& k, const Environment& env) {
  return build_generator(p, to_drive(p, s, k), {0.0, 0.0, 0.0}, env);
}

Vec16c thermal_vec() { return QuantumState::thermal().vec(); }

Row16c excited_row() {
  Row16c r = Row16c::Zero();
  r(vec_index(kExcited, kExcited)) = 1.0;
  return r;
}

// Shared pieces of the fast paths.
class Engine {
 public:
  explicit Engine(const RunConfig& cfg) : cfg_(cfg), p_(cfg.defect), env_(packet_env(cfg)) {
    const auto& st = cfg.protocol.settings;
    probe_ = Segment::laser(st.probe_us, st.sideband_pump, sideband_offset(), true);
    dark_ = dissipative_generator(p_, {0.0, 0.0, 0.0}, false, {0.0, 0.0, 0.0}, env_);
    build_readout();
  }

  const DefectParams& params() const { return p_; }
  const Environment& env() const { return env_; }
  const Super& dark() const { return dark_; }

  double sideband_offset() const { return ground_levels(p_, cfg_.field_B_G).f_minus; }

  Segment pump_segment(double t) const {
    return Segment::laser(t, cfg_.protocol.settings.sideband_pump, sideband_offset(), false);
  }

  Vec16c after_pump(double t) const {
    if (t == 0.0) return thermal_vec();
    return propagator(generator_of(p_, pump_segment(t), Packet{}, env_), t) * thermal_vec();
  }

  // Expected counts of the probe + gate readout for the state at probe start.
  double readout(const Vec16c& v) const {
    std::vector<double> trace(rows_.size());
    for (std::size_t k = 0; k < rows_.size(); ++k) trace[k] = std::max(0.0, (rows_[k] * v)(0).real());
    DetectionConfig det = cfg_.detection;
    return expected_counts(trace, gate_dt_, p_, det);
  }

  Super mw_generator(const MicrowaveDrive& d, const Packet& k) const {
    MicrowaveDrive m = d;
    m.rabi_MHz *= k.amplitude;
    m.detuning_MHz += k.delta_MHz;
    return dark_ + coherent_generator({m});
  }

  // Packet-averaged superoperator of one pulse.
  Super averaged_pulse(const MicrowaveDrive& d, double t, const std::vector<Packet>& packets) const {
    Super acc = Super::Zero();
    for (const auto& k : packets) acc += k.weight * propagator(mw_generator(d, k), t);
    return acc;
  }

 private:
  void build_readout() {
    const double gate = cfg_.detection.gate_window_us;
    const std::size_t n = even_intervals(gate, cfg_.protocol.settings.sample_dt_us);
    gate_dt_ = gate / static_cast<double>(n);
    const Super probe = propagator(generator_of(p_, probe_, Packet{}, env_), probe_.duration_us);
    const Super step = propagator(dark_, gate_dt_);
    // rows_[k] = e_ee^T step^k probe, so rows_[k] v is rho_ee at gate sample k.
    Row16c left = excited_row();
    rows_.clear();
    for (std::size_t k = 0; k <= n; ++k) {
      rows_.push_back(left * probe);
      left = (left * step).eval();
    }
  }

  const RunConfig& cfg_;
  DefectParams p_;
  Environment env_;
  Segment probe_;
  Super dark_;
  std::vector<Row16c> rows_;
  double gate_dt_ = 1.0;
};

MicrowaveDrive drive(MwTransition t, double rabi, double detuning, double phase) {
  return MicrowaveDrive{t, rabi, detuning, phase};
}

std::string sweep_label(ProtocolId id) {
  switch (id) {
    case ProtocolId::rabi: return "pulse_us";
    case ProtocolId::ramsey: return "free_us";
    case ProtocolId::hahn_echo: return "free_us";
    case ProtocolId::t1_inversion: return "wait_us";
    case ProtocolId::polarization_buildup: return "pump_us";
    case ProtocolId::optical_lifetime: return "delay_us";
    case ProtocolId::ple_scan: return "laser_GHz";
    case ProtocolId::odmr_scan: return "mw_MHz";
    case ProtocolId::hole_scan: return "sideband_MHz";
  }
  return "x";
}

Combine combine_of(ProtocolId id) {
  switch (id) {
    case ProtocolId::hahn_echo:
    case ProtocolId::t1_inversion: return Combine::difference;
    case ProtocolId::polarization_buildup: return Combine::contrast;
    default: return Combine::single;
  }
}

// Gate width of each shot: the readout gate, or the bin for optical_lifetime.
double bin_width(const std::vector<double>& grid, std::size_t k) {
  if (grid.size() < 2) return 1.0;
  if (k + 1 < grid.size()) return grid[k + 1] - grid[k];
  return grid[k] - grid[k - 1];
}

// Expected counts per shot -> reported observable, with detection noise.
SweepResult finish(const RunConfig& cfg, const std::vector<double>& grid, const std::vector<std::vector<double>>& shots,
                   const std::vector<double>& gates) {
  const ProtocolId id = cfg.protocol.id;
  const auto& det = cfg.detection;
  const bool noise = cfg.protocol.settings.noise;
  SweepResult r;
  r.protocol = id;
  r.sweep_label = sweep_label(id);
  r.seed = det.rng_seed;
  r.sweep_value = grid;
  const Combine c = combine_of(id);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    std::vector<double> net, sig, mean;
    for (std::size_t a = 0; a < shots[k].size(); ++a) {
      const double e = std::max(0.0, shots[k][a]);
      const CountRecord rec = poissonize(e, det.dark_rate_cps, gates[k], det.repetitions, derive_seed(det.rng_seed, 4 * k + a));
      const NetCounts n = dark_subtract(rec);
      mean.push_back(e);
      if (noise) {
        net.push_back(n.net);
        sig.push_back(n.sigma);
      } else {
        net.push_back(e);
        sig.push_back(std::sqrt(std::max(e + rec.dark_contribution, 1.0)));
      }
    }
    double m = 0.0, s = 0.0, v = 0.0;
    switch (c) {
      case Combine::single:
        m = mean[0];
        v = net[0];
        s = sig[0];
        break;
      case Combine::difference:
        m = mean[0] - mean[1];
        v = net[0] - net[1];
        s = std::hypot(sig[0], sig[1]);
        break;
      case Combine::contrast: {
        if (!(mean[0] > 0.0)) throw DomainError("contrast reference has no counts", k);
        m = 100.0 * (mean[0] - mean[1]) / mean[0];
        const double ref = net[0] > 0.0 ? net[0] : mean[0];
        v = 100.0 * (net[0] - net[1]) / ref;
        s = 100.0 * std::hypot(net[1] / (ref * ref) * sig[0], sig[1] / ref);
        break;
      }
    }
    r.mean_counts.push_back(m);
    r.sampled_counts.push_back(v);
    r.sigma.push_back(s);
  }
  return r;
}

// Hahn arms carry the ideal-spin outcome; the coherent half of the
// difference is scaled by the echo envelope.
void apply_echo_envelope(const RunConfig& cfg, const std::vector<double>& grid, std::vector<std::vector<double>>& shots) {
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double env = echo_envelope(grid[k], cfg.defect, cfg.protocol.settings.echo_tau);
    const double mid = 0.5 * (shots[k][0] + shots[k][1]);
    const double half = 0.5 * (shots[k][0] - shots[k][1]) * env;
    shots[k][0] = mid + half;
    shots[k][1] = mid - half;
  }
}

std::vector<double> gates_for(const RunConfig& cfg, const std::vector<double>& grid) {
  std::vector<double> g(grid.size(), cfg.detection.gate_window_us);
  if (cfg.protocol.id == ProtocolId::optical_lifetime)
    for (std::size_t k = 0; k < grid.size(); ++k) g[k] = bin_width(grid, k);
  return g;
}

void require_grid(const std::vector<double>& g) {
  if (g.empty()) throw ConfigError("protocol.grid", "sweep grid is empty");
  for (std::size_t i = 1; i < g.size(); ++i)
    if (!(g[i] > g[i - 1])) throw ConfigError("protocol.grid", "sweep grid must be strictly increasing");
}

void require_nonnegative(const std::vector<double>& g) {
  if (g.front() < 0.0) throw ConfigError("protocol.grid", "durations must be >= 0");
}

// Per-packet stepping over a uniform grid of one swept duration. prefix maps
// the polarized state into the swept segment; suffix maps its end to the
// probe. Non-uniform grids fall back to one exponential per point.
std::vector<Vec16c> swept_average(const std::vector<double>& grid, const std::vector<Packet>& packets, const Vec16c& v0,
                                  const std::function<Super(const Packet&)>& prefix,
                                  const std::function<Super(const Packet&)>& swept_gen,
                                  const std::function<Super(const Packet&)>& suffix) {
  std::vector<Vec16c> acc(grid.size(), Vec16c::Zero());
  const bool step_mode = uniform(grid);
  const double h = step_mode ? grid[1] - grid[0] : 0.0;
  for (const auto& k : packets) {
    const Super g = swept_gen(k);
    const Super pre = prefix(k), post = suffix(k);
    if (step_mode) {
      Vec16c v = pre * v0;
      if (grid.front() > 0.0) v = propagator(g, grid.front()) * v;
      const Super step = propagator(g, h);
      Vec16c w;
      for (std::size_t i = 0; i < grid.size(); ++i) {
        if (i > 0) {
          kernels::cmatvec(step.data(), v.data(), w.data(), 16);
          v = w;
        }
        acc[i] += k.weight * (post * v);
      }
    } else {
      for (std::size_t i = 0; i < grid.size(); ++i) acc[i] += k.weight * (post * (propagator(g, grid[i]) * (pre * v0)));
    }
  }
  return acc;
}

std::vector<std::vector<double>> fast_rabi(const RunConfig& cfg, const std::vector<double>& grid) {
  const Engine e(cfg);
  const auto packets = protocol_packets(cfg);
  const Vec16c v0 = e.after_pump(cfg.protocol.settings.polarize_us);
  const MicrowaveDrive d = drive(MwTransition::plus, pulse_rabi(cfg), 0.0, 0.0);
  const auto id = [](const Packet&) { return Super(Super::Identity()); };
  const auto acc = swept_average(grid, packets, v0, id, [&](const Packet& k) { return e.mw_generator(d, k); }, id);
  std::vector<std::vector<double>> out;
  for (const auto& v : acc) out.push_back({e.readout(v)});
  return out;
}

std::vector<std::vector<double>> fast_ramsey(const RunConfig& cfg, const std::vector<double>& grid) {
  const Engine e(cfg);
  const auto& st = cfg.protocol.settings;
  const auto packets = protocol_packets(cfg);
  const Vec16c v0 = e.after_pump(st.polarize_us);
  const double t90 = 0.5 * pi_time(st.ramsey_pulse_rabi_MHz);
  const MicrowaveDrive half = drive(MwTransition::plus, st.ramsey_pulse_rabi_MHz, st.mw_detuning_MHz, 0.0);
  const MicrowaveDrive free = drive(MwTransition::plus, 0.0, st.mw_detuning_MHz, 0.0);
  const auto pulse = [&](const Packet& k) { return propagator(e.mw_generator(half, k), t90); };
  const auto acc =
      swept_average(grid, packets, v0, pulse, [&](const Packet& k) { return e.mw_generator(free, k); }, pulse);
  std::vector<std::vector<double>> out;
  for (const auto& v : acc) out.push_back({e.readout(v)});
  return out;
}

std::vector<std::vector<double>> fast_hahn(const RunConfig& cfg, const std::vector<double>& grid) {
  const Engine e(cfg);
  const auto packets = protocol_packets(cfg);
  const Vec16c v0 = e.after_pump(cfg.protocol.settings.polarize_us);
  const double om = pulse_rabi(cfg), tpi = pi_time(om);
  std::vector<std::vector<double>> out(grid.size(), std::vector<double>(2, 0.0));
  for (const auto& k : packets) {
    const Super px = propagator(e.mw_generator(drive(MwTransition::plus, om, 0.0, 0.0), k), 0.5 * tpi);
    const Super mx = propagator(e.mw_generator(drive(MwTransition::plus, om, 0.0, kPi), k), 0.5 * tpi);
    const Super py = propagator(e.mw_generator(drive(MwTransition::plus, om, 0.0, 0.5 * kPi), k), tpi);
    const Super free = e.mw_generator(drive(MwTransition::plus, 0.0, 0.0, 0.0), k);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const Super w = propagator(free, 0.5 * grid[i]);
      const Super core = px * w * py * w;
      out[i][0] += k.weight * e.readout(core * (px * v0));
      out[i][1] += k.weight * e.readout(core * (mx * v0));
    }
  }
  return out;
}

std::vector<std::vector<double>> fast_t1(const RunConfig& cfg, const std::vector<double>& grid) {
  const Engine e(cfg);
  const auto packets = protocol_packets(cfg);
  const Vec16c v0 = e.after_pump(cfg.protocol.settings.polarize_us);
  const double om = pulse_rabi(cfg), tpi = pi_time(om);
  const MicrowaveDrive d = drive(MwTransition::plus, om, 0.0, 0.0);
  const Vec16c a = e.averaged_pulse(d, tpi, packets) * v0;
  const Vec16c b = e.averaged_pulse(d, 2.0 * tpi, packets) * v0;
  std::vector<std::vector<double>> out;
  for (double t : grid) {
    const Super w = propagator(e.dark(), t);
    out.push_back({e.readout(w * a), e.readout(w * b)});
  }
  return out;
}

std::vector<std::vector<double>> fast_buildup(const RunConfig& cfg, const std::vector<double>& grid) {
  const Engine e(cfg);
  const auto packets = protocol_packets(cfg);
  const double om = pulse_rabi(cfg);
  const Super pi = e.averaged_pulse(drive(MwTransition::plus, om, 0.0, 0.0), pi_time(om), packets);
  std::vector<std::vector<double>> out;
  for (double t : grid) {
    const Vec16c v = e.after_pump(t);
    out.push_back({e.readout(pi * v), e.readout(v)});
  }
  return out;
}

std::vector<std::vector<double>> fast_lifetime(const RunConfig& cfg, const std::vector<double>& grid) {
  const Engine e(cfg);
  const auto& st = cfg.protocol.settings;
  const Vec16c v0 = e.after_pump(st.excitation_us);
  const Row16c ee = excited_row();
  std::vector<std::vector<double>> out;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double width = bin_width(grid, k);
    const std::size_t n = even_intervals(width, st.sample_dt_us);
    const double dt = width / static_cast<double>(n);
    const Super step = propagator(e.dark(), dt);
    Vec16c v = propagator(e.dark(), grid[k]) * v0;
    std::vector<double> trace;
    for (std::size_t i = 0; i <= n; ++i) {
      trace.push_back(std::max(0.0, (ee * v)(0).real()));
      v = (step * v).eval();
    }
    DetectionConfig det = cfg.detection;
    det.gate_window_us = width;
    out.push_back({expected_counts(trace, dt, e.params(), det)});
  }
  return out;
}

SweepResult run_cw(const RunConfig& cfg, const std::vector<double>& grid) {
  const auto& p = cfg.defect;
  const auto& st = cfg.protocol.settings;
  const EnsembleSpec es = EnsembleSpec::from(p);
  Spectrum s;
  CwScanOptions o;
  o.burn_saturation = st.burn_saturation;
  o.temperature_K = cfg.temperature_K;
  o.optical_nodes = st.optical_nodes;
  o.mw_rabi_MHz = st.odmr_rabi_MHz;
  EnsembleSpec e2 = es;
  if (st.spin_nodes > 0) e2.nodes = st.spin_nodes;
  switch (cfg.protocol.id) {
    case ProtocolId::ple_scan: s = ple_spectrum(p, e2, grid); break;
    case ProtocolId::odmr_scan: s = odmr_scan(p, e2, grid, cfg.field_B_G, o); break;
    case ProtocolId::hole_scan: s = hole_recovery_scan(p, e2, grid, cfg.field_B_G, o); break;
    default: throw ConfigError("protocol.id", "not a CW protocol");
  }
  // Photons per gate: eta * emitters * reps times the normalized signal.
  const double scale = cfg.detection.collection_efficiency * cfg.detection.emitter_count *
                       static_cast<double>(cfg.detection.repetitions);
  std::vector<std::vector<double>> shots;
  for (double v : s.signal) shots.push_back({scale * v});
  return finish(cfg, grid, shots, gates_for(cfg, grid));
}

}  // namespace

Segment Segment::laser(double duration_us, bool sideband, double sideband_detuning_MHz, bool probe) {
  Segment s;
  s.kind = SegmentKind::laser;
  s.duration_us = duration_us;
  s.primary = true;
  s.sideband = sideband;
  s.sideband_detuning_MHz = sideband ? sideband_detuning_MHz : 0.0;
  s.probe = probe;
  return s;
}

Segment Segment::mw_pulse(const MicrowaveDrive& d, double duration_us) {
  Segment s;
  s.kind = SegmentKind::mw_pulse;
  s.duration_us = duration_us;
  s.drive = d;
  return s;
}

Segment Segment::wait(double duration_us, double frame_detuning_MHz, MwTransition t) {
  Segment s;
  s.kind = SegmentKind::wait;
  s.duration_us = duration_us;
  s.drive = MicrowaveDrive{t, 0.0, frame_detuning_MHz, 0.0};
  return s;
}

Segment Segment::gate(double window_us) {
  Segment s;
  s.kind = SegmentKind::readout_gate;
  s.duration_us = window_us;
  return s;
}

void PulseSequence::validate() const {
  if (shots.empty()) throw DomainError("pulse sequence has no shots");
  const std::size_t need = combine == Combine::single ? 1 : 2;
  if (shots.size() != need) throw DomainError("shot count does not match the combine rule");
  for (std::size_t a = 0; a < shots.size(); ++a) {
    const auto& segs = shots[a].segments;
    if (segs.empty() || segs.back().kind != SegmentKind::readout_gate)
      throw DomainError("shot does not end with a readout gate", a);
    for (std::size_t i = 0; i < segs.size(); ++i) {
      const auto& s = segs[i];
      if (s.kind == SegmentKind::readout_gate && i + 1 != segs.size()) throw DomainError("more than one gate in a shot", a);
      const bool strict = s.kind == SegmentKind::readout_gate || (s.kind == SegmentKind::laser && s.probe);
      if (strict ? !(s.duration_us > 0.0) : !(s.duration_us >= 0.0))
        throw DomainError("segment duration out of range", i);
    }
  }
}

std::size_t PulseSequence::count(SegmentKind k) const {
  std::size_t n = 0;
  for (const auto& sh : shots)
    for (const auto& s : sh.segments) n += s.kind == k ? 1 : 0;
  return n;
}

double pulse_rabi(const RunConfig& cfg) {
  const double om = cfg.protocol.settings.pulse_rabi_MHz > 0.0 ? cfg.protocol.settings.pulse_rabi_MHz
                                                                 : cfg.defect.rabi_freq_MHz;
  if (!(om > 0.0)) throw ConfigError("defect.rabi_freq", "must be > 0");
  return om;
}

std::vector<double> protocol_grid(const RunConfig& cfg) {
  if (!cfg.protocol.grid.empty()) return cfg.protocol.grid;
  const auto& p = cfg.defect;
  switch (cfg.protocol.id) {
    case ProtocolId::rabi: return linspace(0.0, 10.0, 401);
    case ProtocolId::ramsey: return linspace(0.0, 1.5, 301);
    case ProtocolId::hahn_echo: return linspace(0.0, 200.0, 401);
    case ProtocolId::t1_inversion: return linspace(0.0, 4.0 * t1_us(cfg), 41);
    case ProtocolId::polarization_buildup: return linspace(0.0, 8000.0, 41);
    case ProtocolId::optical_lifetime: return linspace(0.0, 600.0, 121);
    case ProtocolId::ple_scan: return linspace(-15.0, 15.0, 301);
    case ProtocolId::hole_scan:
      return linspace(p.zero_field_splitting_MHz - 150.0, p.zero_field_splitting_MHz + 150.0, 151);
    case ProtocolId::odmr_scan: {
      const auto [fm, fp] = mw_transition_frequencies(ground_levels(p, cfg.field_B_G));
      const double lo = std::min(fm, fp), hi = std::max(fm, fp);
      if (hi - lo < 40.0) return linspace(lo - 10.0, hi + 10.0, static_cast<int>(std::lround((hi - lo + 20.0) / 0.1)) + 1);
      return linspace(fp - 10.0, fp + 10.0, 201);
    }
  }
  throw ConfigError("protocol.id", "unknown protocol");
}

std::vector<Packet> make_packets(const DefectParams& p, int spin_nodes, int amplitude_nodes) {
  if (spin_nodes < 1 || amplitude_nodes < 1) throw DomainError("packet counts must be >= 1");
  std::vector<double> d{0.0}, dw{1.0}, a{1.0}, aw{1.0};
  if (spin_nodes > 1) {
    const QuadratureRule q = lorentzian_rule(spin_nodes, p.odmr_fwhm_MHz);
    d = q.nodes;
    dw = q.weights;
  }
  if (amplitude_nodes > 1 && p.rabi_amplitude_spread > 0.0) {
    const QuadratureRule q = gauss_hermite_normal(amplitude_nodes);
    a.clear();
    aw = q.weights;
    for (double z : q.nodes) a.push_back(std::max(0.0, 1.0 + p.rabi_amplitude_spread * z));
  }
  std::vector<Packet> out;
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j) out.push_back({d[i], a[j], dw[i] * aw[j]});
  return out;
}

std::vector<Packet> protocol_packets(const RunConfig& cfg) {
  const auto& st = cfg.protocol.settings;
  int spin = 1, amp = 1;
  switch (cfg.protocol.id) {
    case ProtocolId::rabi: spin = 128; amp = st.amplitude_nodes; break;
    case ProtocolId::ramsey: spin = 1024; break;
    case ProtocolId::t1_inversion:
    case ProtocolId::polarization_buildup: spin = 128; amp = st.amplitude_nodes; break;
    default: break;
  }
  if (st.spin_nodes > 0) spin = st.spin_nodes;
  return make_packets(cfg.defect, spin, amp);
}

std::vector<PulseSequence> build_protocol(const RunConfig& cfg) {
  const auto grid = protocol_grid(cfg);
  require_grid(grid);
  const auto& st = cfg.protocol.settings;
  const double gate = cfg.detection.gate_window_us;
  const double sb = ground_levels(cfg.defect, cfg.field_B_G).f_minus;
  const Segment polarize = Segment::laser(st.polarize_us, st.sideband_pump, sb, false);
  const Segment probe = Segment::laser(st.probe_us, st.sideband_pump, sb, true);
  const ProtocolId id = cfg.protocol.id;
  if (id == ProtocolId::ple_scan || id == ProtocolId::odmr_scan || id == ProtocolId::hole_scan)
    throw ConfigError("protocol.id", std::string(to_string(id)) + " is a CW scan without a pulse form");
  require_nonnegative(grid);

  std::vector<PulseSequence> out;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double x = grid[k];
    PulseSequence s;
    s.sweep_value = x;
    s.combine = combine_of(id);
    switch (id) {
      case ProtocolId::rabi:
        s.shots.push_back({{polarize, Segment::mw_pulse(drive(MwTransition::plus, pulse_rabi(cfg), 0.0, 0.0), x), probe,
                            Segment::gate(gate)}});
        break;
      case ProtocolId::ramsey: {
        const double om = st.ramsey_pulse_rabi_MHz;
        const Segment half = Segment::mw_pulse(drive(MwTransition::plus, om, st.mw_detuning_MHz, 0.0), 0.5 * pi_time(om));
        s.shots.push_back({{polarize, half, Segment::wait(x, st.mw_detuning_MHz), half, probe, Segment::gate(gate)}});
        break;
      }
      case ProtocolId::hahn_echo: {
        const double om = pulse_rabi(cfg), tpi = pi_time(om);
        const Segment py = Segment::mw_pulse(drive(MwTransition::plus, om, 0.0, 0.5 * kPi), tpi);
        const Segment last = Segment::mw_pulse(drive(MwTransition::plus, om, 0.0, 0.0), 0.5 * tpi);
        for (double phase : {0.0, kPi}) {
          const Segment first = Segment::mw_pulse(drive(MwTransition::plus, om, 0.0, phase), 0.5 * tpi);
          s.shots.push_back({{polarize, first, Segment::wait(0.5 * x), py, Segment::wait(0.5 * x), last, probe,
                              Segment::gate(gate)}});
        }
        break;
      }
      case ProtocolId::t1_inversion: {
        const double om = pulse_rabi(cfg), tpi = pi_time(om);
        for (double n : {1.0, 2.0})
          s.shots.push_back({{polarize, Segment::mw_pulse(drive(MwTransition::plus, om, 0.0, 0.0), n * tpi),
                              Segment::wait(x), probe, Segment::gate(gate)}});
        break;
      }
      case ProtocolId::polarization_buildup: {
        const double om = pulse_rabi(cfg);
        const Segment pump = Segment::laser(x, st.sideband_pump, sb, false);
        s.shots.push_back(
            {{pump, Segment::mw_pulse(drive(MwTransition::plus, om, 0.0, 0.0), pi_time(om)), probe, Segment::gate(gate)}});
        s.shots.push_back({{pump, probe, Segment::gate(gate)}});
        break;
      }
      case ProtocolId::optical_lifetime: {
        const Segment excite = Segment::laser(st.excitation_us, st.sideband_pump, sb, false);
        s.shots.push_back({{excite, Segment::wait(x), Segment::gate(bin_width(grid, k))}});
        break;
      }
      default: break;
    }
    s.validate();
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<double> simulate_sequence(const PulseSequence& seq, const RunConfig& cfg, const std::vector<Packet>& packets) {
  seq.validate();
  const Environment env = packet_env(cfg);
  const double dt = cfg.protocol.settings.sample_dt_us;
  std::vector<double> counts;
  for (const auto& shot : seq.shots) {
    double total = 0.0;
    for (const auto& k : packets) {
      std::vector<DriveSet> before;
      for (std::size_t i = 0; i + 1 < shot.segments.size(); ++i)
        if (shot.segments[i].duration_us > 0.0) before.push_back(to_drive(cfg.defect, shot.segments[i], k));
      QuantumState s = QuantumState::thermal();
      if (!before.empty()) {
        // Boundary states are exact; only the gate needs fine samples.
        double longest = 0.0;
        for (const auto& d : before) longest = std::max(longest, d.duration_us);
        s = evolve_sequence(s, before, cfg.defect, env, {0.0, 0.0, 0.0}, std::max(dt, longest)).states.back();
      }
      const Segment& g = shot.segments.back();
      const Trajectory tr = evolve_sequence(s, {to_drive(cfg.defect, g, k)}, cfg.defect, env, {0.0, 0.0, 0.0}, dt);
      DetectionConfig det = cfg.detection;
      det.gate_window_us = g.duration_us;
      total += k.weight * expected_counts(tr.segments.front(), cfg.defect, det);
    }
    counts.push_back(total);
  }
  return counts;
}

SweepResult run_protocol(const RunConfig& cfg) {
  validate(cfg);
  const auto grid = protocol_grid(cfg);
  require_grid(grid);
  const ProtocolId id = cfg.protocol.id;
  if (id == ProtocolId::ple_scan || id == ProtocolId::odmr_scan || id == ProtocolId::hole_scan) return run_cw(cfg, grid);
  require_nonnegative(grid);
  std::vector<std::vector<double>> shots;
  switch (id) {
    case ProtocolId::rabi: shots = fast_rabi(cfg, grid); break;
    case ProtocolId::ramsey: shots = fast_ramsey(cfg, grid); break;
    case ProtocolId::hahn_echo: shots = fast_hahn(cfg, grid); break;
    case ProtocolId::t1_inversion: shots = fast_t1(cfg, grid); break;
    case ProtocolId::polarization_buildup: shots = fast_buildup(cfg, grid); break;
    case ProtocolId::optical_lifetime: shots = fast_lifetime(cfg, grid); break;
    default: throw ConfigError("protocol.id", "unknown protocol");
  }
  if (id == ProtocolId::hahn_echo) apply_echo_envelope(cfg, grid, shots);
  return finish(cfg, grid, shots, gates_for(cfg, grid));
}

SweepResult run_protocol_reference(const RunConfig& cfg) {
  validate(cfg);
  const auto seqs = build_protocol(cfg);
  const auto packets = protocol_packets(cfg);
  std::vector<double> grid;
  std::vector<std::vector<double>> shots;
  for (const auto& s : seqs) {
    grid.push_back(s.sweep_value);
    shots.push_back(simulate_sequence(s, cfg, packets));
  }
  if (cfg.protocol.id == ProtocolId::hahn_echo) apply_echo_envelope(cfg, grid, shots);
  return finish(cfg, grid, shots, gates_for(cfg, grid));
}

void SweepResult::write_csv(std::ostream& os) const {
  os << "sweep_value,mean_counts,sampled_counts,sigma\n";
  os.precision(17);
  for (std::size_t i = 0; i < size(); ++i)
    os << sweep_value[i] << ',' << mean_counts[i] << ',' << sampled_counts[i] << ',' << sigma[i] << '\n';
}

FitData SweepResult::data() const { return FitData{sweep_value, sampled_counts, sigma}; }
FitData SweepResult::noiseless_data() const { return FitData{sweep_value, mean_counts, sigma}; }

double echo_envelope(double t_us, const DefectParams& p, EchoTauConvention c) {
  if (!(t_us >= 0.0)) throw DomainError("free evolution time must be >= 0");
  const double tau = c == EchoTauConvention::half_free_time ? 0.5 * t_us : t_us;
  double f = std::exp(-std::pow(t_us / p.t2_us, p.echo_stretch));
  for (const auto& k : p.eseem) {
    const double s = std::sin(kPi * k.frequency_kHz * 1e-3 * tau);
    f *= 1.0 - k.amplitude * s * s;
  }
  return f;
}

double t1_rate_model(double temperature_K, const T1Model& model) { return t1_rate_per_s(model, temperature_K); }

FitResult fit_rabi(const SweepResult& r, bool noiseless) {
  const FitModel m = make_model(ModelId::rabi_damped_cosine);
  const FitData d = noiseless ? r.noiseless_data() : r.data();
  return fit(m, d, initial_guess(m, d));
}

double rabi_contrast(const FitResult& f) {
  const double a = std::abs(f.value("A")), c = f.value("C");
  return 200.0 * a / (c + a);
}

double calibrate_pump_rate(const RunConfig& cfg, double target_us) {
  RunConfig c = cfg;
  c.protocol.id = ProtocolId::polarization_buildup;
  c.protocol.grid.clear();
  c.protocol.settings.noise = false;
  const FitModel m = make_model(ModelId::exp_rise);
  const auto rise = [&](double w) {
    c.defect.pump_rate_per_us = w;
    const FitData d = run_protocol(c).noiseless_data();
    try {
      return fit(m, d, initial_guess(m, d)).value("tau");
    } catch (const FitError&) {
      // A rise too slow for the window is a straight line; tau is unbounded.
      return std::numeric_limits<double>::infinity();
    }
  };
  // tau falls roughly as 3/W: bracket a decade either side, bisect in log space.
  double lo = 0.3 / target_us, hi = 30.0 / target_us;
  if (rise(lo) < target_us || rise(hi) > target_us) throw FitError("pump-rate calibration target outside the bracket");
  for (int it = 0; it < 60; ++it) {
    const double mid = std::sqrt(lo * hi);
    const double t = rise(mid);
    if (std::abs(t / target_us - 1.0) < 1e-4) return mid;
    (t > target_us ? lo : hi) = mid;
  }
  return std::sqrt(lo * hi);
}

double calibrate_amplitude_spread(const RunConfig& cfg, double target_us) {
  RunConfig c = cfg;
  c.protocol.id = ProtocolId::rabi;
  c.protocol.grid.clear();
  c.protocol.settings.noise = false;
  const auto decay = [&](double s) {
    c.defect.rabi_amplitude_spread = s;
    return fit_rabi(run_protocol(c), true).value("Td");
  };
  double lo = 0.0, hi = 0.2;
  double flo = decay(lo) - target_us, fhi = decay(hi) - target_us;
  if (flo < 0.0) throw FitError("Rabi decay from detuning spread alone is already below the target");
  if (fhi > 0.0) throw FitError("amplitude-spread calibration target outside the bracket");
  // Illinois false position.
  int side = 0;
  double x = lo;
  for (int it = 0; it < 60; ++it) {
    x = (lo * fhi - hi * flo) / (fhi - flo);
    const double f = decay(x) - target_us;
    if (std::abs(f) < 1e-4 * target_us) return x;
    if (f > 0.0) {
      lo = x;
      flo = f;
      if (side == 1) fhi *= 0.5;
      side = 1;
    } else {
      hi = x;
      fhi = f;
      if (side == -1) flo *= 0.5;
      side = -1;
    }
  }
  return x;
}

RunConfig calibrated(const RunConfig& cfg) {
  RunConfig c = cfg;
  if (c.calibrate.pump_rate) c.defect.pump_rate_per_us = calibrate_pump_rate(c);
  if (c.calibrate.amplitude_spread) c.defect.rabi_amplitude_spread = calibrate_amplitude_spread(c);
  c.calibrate.pump_rate = false;
  c.calibrate.amplitude_spread = false;
  return c;
}

TemperatureStudy fit_rate_models(const FitData& rates) {
  TemperatureStudy s;
  s.rates = rates;
  const FitModel orb = make_model(ModelId::orbach);
  s.fits.push_back(fit(orb, rates, initial_guess(orb, rates)));
  for (int n : {3, 5, 7, 9}) {
    const FitModel ram = make_model(ModelId::raman);
    GuessHints h;
    h.raman_exponent = n;
    s.fits.push_back(fit(ram, rates, initial_guess(ram, rates, h)));
  }
  s.ranking = compare_models(s.fits);
  return s;
}

TemperatureStudy temperature_study(const RunConfig& cfg, const std::vector<double>& temperatures_K) {
  std::vector<TemperaturePoint> pts;
  FitData rates;
  const FitModel m = make_model(ModelId::exp_decay);
  for (double T : temperatures_K) {
    RunConfig c = cfg;
    c.protocol.id = ProtocolId::t1_inversion;
    c.protocol.grid.clear();
    c.temperature_K = T;
    c.detection.rng_seed = derive_seed(cfg.detection.rng_seed, static_cast<std::uint64_t>(std::llround(T * 1000.0)));
    const SweepResult r = run_protocol(c);
    const FitData d = r.data();
    TemperaturePoint tp;
    tp.temperature_K = T;
    tp.decay = fit(m, d, initial_guess(m, d));
    tp.t1_s = tp.decay.value("tau") * 1e-6;
    tp.t1_err_s = tp.decay.error("tau") * 1e-6;
    rates.x.push_back(T);
    rates.y.push_back(1.0 / tp.t1_s);
    rates.sigma.push_back(std::max(tp.t1_err_s / (tp.t1_s * tp.t1_s), 1e-12 / tp.t1_s));
    pts.push_back(std::move(tp));
  }
  TemperatureStudy s = fit_rate_models(rates);
  s.points = std::move(pts);
  return s;
}

}  // namespace crspin
