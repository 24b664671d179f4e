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

#include "crspin/params.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "crspin/errors.hpp"

namespace crspin {

using json = nlohmann::json;

namespace {

std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string join(std::string_view a, std::string_view b) {
  if (a.empty()) return std::string(b);
  return std::string(a) + "." + std::string(b);
}

void require_positive(double v, std::string_view path, std::string_view what = "must be > 0") {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(path), std::string(what) + " (got " + fmt_num(v) + ")");
}

void require_nonnegative(double v, std::string_view path) {
  if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string(path), "must be >= 0 (got " + fmt_num(v) + ")");
}

// --- JSON reading --------------------------------------------------------------

class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_, "expected an object");
  }

  template <class T>
  void get(std::string_view key, T& out) {
    auto it = obj_.find(std::string(key));
    seen_.emplace_back(key);
    if (it == obj_.end()) return;
    const std::string p = join(path_, key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError(p, "expected a boolean");
        out = it->template get<bool>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer() && !it->is_number_unsigned()) {
          // Accept integral-valued floats such as 1e3.
          if (!it->is_number_float() || std::floor(it->template get<double>()) != it->template get<double>())
            throw ConfigError(p, "expected an integer");
          out = static_cast<T>(it->template get<double>());
        } else {
          if constexpr (std::is_unsigned_v<T>) {
            if (!it->is_number_unsigned() && it->template get<std::int64_t>() < 0) throw ConfigError(p, "must be >= 0");
          }
          out = it->template get<T>();
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError(p, "expected a number");
        out = it->template get<T>();
      } else {
        out = it->template get<T>();
      }
    } catch (const json::exception& e) {
      throw ConfigError(p, e.what());
    }
  }

  const json* child(std::string_view key) {
    seen_.emplace_back(key);
    auto it = obj_.find(std::string(key));
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string path(std::string_view key) const { return join(path_, key); }

  /// Rejects keys nobody asked for (typos would otherwise be silently ignored).
  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      bool known = false;
      for (auto k : seen_) known = known || k == it.key();
      if (!known) throw ConfigError(join(path_, it.key()), "unknown field");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::vector<std::string_view> seen_;
};

ZeemanConvention zeeman_from_string(const std::string& s, const std::string& path) {
  if (s == "separation") return ZeemanConvention::separation;
  if (s == "shift") return ZeemanConvention::shift;
  throw ConfigError(path, "unknown Zeeman convention '" + s + "'");
}

T1Model read_t1(const json& j, const std::string& path) {
  Reader r(j, path);
  std::string type = "raman";
  r.get("type", type);
  if (type == "raman") {
    RamanModel m{kDefaultRamanPrefactor, 3.2, 9};
    r.get("A", m.prefactor_per_s);
    r.get("delta_T", m.offset_K);
    r.get("n", m.exponent);
    r.finish();
    return m;
  }
  if (type == "orbach") {
    OrbachModel m{};
    r.get("A", m.prefactor_per_s);
    r.get("E", m.energy_meV);
    r.finish();
    return m;
  }
  throw ConfigError(r.path("type"), "unknown T1 model '" + type + "'");
}

DefectParams read_defect(const json& j, const std::string& path) {
  DefectParams p = default_params();
  Reader r(j, path);
  r.get("D", p.zero_field_splitting_MHz);
  r.get("g_parallel", p.g_parallel);
  if (auto* z = r.child("zeeman_convention")) {
    if (!z->is_string()) throw ConfigError(r.path("zeeman_convention"), "expected a string");
    p.zeeman = zeeman_from_string(z->get<std::string>(), r.path("zeeman_convention"));
  }
  r.get("T_opt", p.optical_lifetime_us);
  if (auto* b = r.child("branching")) {
    if (!b->is_array() || b->size() != 3) throw ConfigError(r.path("branching"), "expected 3 numbers (b0, b-, b+)");
    for (std::size_t i = 0; i < 3; ++i) {
      if (!(*b)[i].is_number()) throw ConfigError(r.path("branching"), "expected numbers");
      p.branching[i] = (*b)[i].get<double>();
    }
  }
  r.get("inhom_fwhm_ms0", p.inhom_fwhm_ms0_GHz);
  r.get("inhom_fwhm_ms1", p.inhom_fwhm_ms1_GHz);
  r.get("homog_fwhm", p.homog_fwhm_MHz);
  r.get("odmr_fwhm", p.odmr_fwhm_MHz);
  r.get("T2_star", p.t2_star_ns);
  r.get("T2", p.t2_us);
  r.get("echo_n", p.echo_stretch);
  if (auto* e = r.child("eseem_components")) {
    if (!e->is_array()) throw ConfigError(r.path("eseem_components"), "expected an array");
    p.eseem.clear();
    for (std::size_t i = 0; i < e->size(); ++i) {
      Reader c((*e)[i], r.path("eseem_components") + "[" + std::to_string(i) + "]");
      EseemComponent comp;
      c.get("K", comp.amplitude);
      c.get("omega", comp.frequency_kHz);
      c.finish();
      p.eseem.push_back(comp);
    }
  }
  if (auto* t = r.child("T1_model")) p.t1_model = read_t1(*t, r.path("T1_model"));
  r.get("rabi_freq", p.rabi_freq_MHz);
  r.get("rabi_amplitude_spread", p.rabi_amplitude_spread);
  r.get("pump_rate", p.pump_rate_per_us);
  r.get("probe_reset_rate", p.probe_reset_rate_per_us);
  r.finish();
  return p;
}

DetectionConfig read_detection(const json& j, const std::string& path) {
  DetectionConfig d;
  Reader r(j, path);
  r.get("collection_efficiency", d.collection_efficiency);
  r.get("dark_rate", d.dark_rate_cps);
  r.get("gate_window", d.gate_window_us);
  r.get("repetitions", d.repetitions);
  r.get("rng_seed", d.rng_seed);
  r.get("emitter_count", d.emitter_count);
  r.finish();
  return d;
}

std::vector<double> read_grid(const json& j, const std::string& path) {
  if (j.is_array()) {
    std::vector<double> v;
    for (const auto& x : j) {
      if (!x.is_number()) throw ConfigError(path, "grid values must be numbers");
      v.push_back(x.get<double>());
    }
    return v;
  }
  Reader r(j, path);
  double start = 0, stop = 0;
  int points = 0;
  if (!j.contains("start") || !j.contains("stop") || !j.contains("points"))
    throw ConfigError(path, "grid object needs start, stop and points");
  r.get("start", start);
  r.get("stop", stop);
  r.get("points", points);
  r.finish();
  if (points < 2) throw ConfigError(join(path, "points"), "must be >= 2");
  std::vector<double> v(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) v[static_cast<std::size_t>(i)] = start + (stop - start) * i / (points - 1);
  return v;
}

ProtocolSettings read_settings(const json& j, const std::string& path) {
  ProtocolSettings s;
  Reader r(j, path);
  r.get("polarize_time", s.polarize_us);
  r.get("probe_time", s.probe_us);
  r.get("sideband_pump", s.sideband_pump);
  r.get("mw_detuning", s.mw_detuning_MHz);
  r.get("pulse_rabi", s.pulse_rabi_MHz);
  r.get("ramsey_pulse_rabi", s.ramsey_pulse_rabi_MHz);
  r.get("odmr_rabi", s.odmr_rabi_MHz);
  r.get("burn_saturation", s.burn_saturation);
  r.get("excitation_time", s.excitation_us);
  r.get("sample_dt", s.sample_dt_us);
  if (auto* t = r.child("echo_tau")) {
    const auto v = t->is_string() ? t->get<std::string>() : std::string();
    if (v == "half") s.echo_tau = EchoTauConvention::half_free_time;
    else if (v == "full") s.echo_tau = EchoTauConvention::full_free_time;
    else throw ConfigError(r.path("echo_tau"), "expected \"half\" or \"full\"");
  }
  r.get("spin_nodes", s.spin_nodes);
  r.get("amplitude_nodes", s.amplitude_nodes);
  r.get("optical_nodes", s.optical_nodes);
  r.get("noise", s.noise);
  r.finish();
  return s;
}

ProtocolSpec read_protocol(const json& j, const std::string& path) {
  ProtocolSpec spec;
  Reader r(j, path);
  if (auto* id = r.child("id")) {
    if (!id->is_string()) throw ConfigError(r.path("id"), "expected a string");
    spec.id = protocol_from_string(id->get<std::string>());
  }
  if (auto* g = r.child("grid")) spec.grid = read_grid(*g, r.path("grid"));
  if (auto* s = r.child("settings")) spec.settings = read_settings(*s, r.path("settings"));
  r.finish();
  return spec;
}

// --- JSON writing --------------------------------------------------------------

json t1_to_json(const T1Model& m) {
  if (const auto* r = std::get_if<RamanModel>(&m))
    return {{"type", "raman"}, {"A", r->prefactor_per_s}, {"delta_T", r->offset_K}, {"n", r->exponent}};
  const auto& o = std::get<OrbachModel>(m);
  return {{"type", "orbach"}, {"A", o.prefactor_per_s}, {"E", o.energy_meV}};
}

json defect_to_json(const DefectParams& p) {
  json eseem = json::array();
  for (const auto& c : p.eseem) eseem.push_back({{"K", c.amplitude}, {"omega", c.frequency_kHz}});
  return {
      {"D", p.zero_field_splitting_MHz},
      {"g_parallel", p.g_parallel},
      {"zeeman_convention", std::string(to_string(p.zeeman))},
      {"T_opt", p.optical_lifetime_us},
      {"branching", {p.branching[0], p.branching[1], p.branching[2]}},
      {"inhom_fwhm_ms0", p.inhom_fwhm_ms0_GHz},
      {"inhom_fwhm_ms1", p.inhom_fwhm_ms1_GHz},
      {"homog_fwhm", p.homog_fwhm_MHz},
      {"odmr_fwhm", p.odmr_fwhm_MHz},
      {"T2_star", p.t2_star_ns},
      {"T2", p.t2_us},
      {"echo_n", p.echo_stretch},
      {"eseem_components", eseem},
      {"T1_model", t1_to_json(p.t1_model)},
      {"rabi_freq", p.rabi_freq_MHz},
      {"rabi_amplitude_spread", p.rabi_amplitude_spread},
      {"pump_rate", p.pump_rate_per_us},
      {"probe_reset_rate", p.probe_reset_rate_per_us},
  };
}

json settings_to_json(const ProtocolSettings& s) {
  return {
      {"polarize_time", s.polarize_us},
      {"probe_time", s.probe_us},
      {"sideband_pump", s.sideband_pump},
      {"mw_detuning", s.mw_detuning_MHz},
      {"pulse_rabi", s.pulse_rabi_MHz},
      {"ramsey_pulse_rabi", s.ramsey_pulse_rabi_MHz},
      {"odmr_rabi", s.odmr_rabi_MHz},
      {"burn_saturation", s.burn_saturation},
      {"excitation_time", s.excitation_us},
      {"sample_dt", s.sample_dt_us},
      {"echo_tau", s.echo_tau == EchoTauConvention::half_free_time ? "half" : "full"},
      {"spin_nodes", s.spin_nodes},
      {"amplitude_nodes", s.amplitude_nodes},
      {"optical_nodes", s.optical_nodes},
      {"noise", s.noise},
  };
}

json config_to_json(const RunConfig& c) {
  return {
      {"defect", defect_to_json(c.defect)},
      {"field_B", c.field_B_G},
      {"temperature", c.temperature_K},
      {"detection",
       {{"collection_efficiency", c.detection.collection_efficiency},
        {"dark_rate", c.detection.dark_rate_cps},
        {"gate_window", c.detection.gate_window_us},
        {"repetitions", c.detection.repetitions},
        {"rng_seed", c.detection.rng_seed},
        {"emitter_count", c.detection.emitter_count}}},
      {"protocol",
       {{"id", std::string(to_string(c.protocol.id))},
        {"grid", c.protocol.grid},
        {"settings", settings_to_json(c.protocol.settings)}}},
      {"calibrate", {{"pump_rate", c.calibrate.pump_rate}, {"amplitude_spread", c.calibrate.amplitude_spread}}},
  };
}

}  // namespace

std::string_view to_string(ProtocolId id) {
  switch (id) {
    case ProtocolId::rabi: return "rabi";
    case ProtocolId::ramsey: return "ramsey";
    case ProtocolId::hahn_echo: return "hahn_echo";
    case ProtocolId::t1_inversion: return "t1_inversion";
    case ProtocolId::polarization_buildup: return "polarization_buildup";
    case ProtocolId::ple_scan: return "ple_scan";
    case ProtocolId::odmr_scan: return "odmr_scan";
    case ProtocolId::hole_scan: return "hole_scan";
    case ProtocolId::optical_lifetime: return "optical_lifetime";
  }
  return "?";
}

ProtocolId protocol_from_string(std::string_view name) {
  for (auto id : {ProtocolId::rabi, ProtocolId::ramsey, ProtocolId::hahn_echo, ProtocolId::t1_inversion,
                  ProtocolId::polarization_buildup, ProtocolId::ple_scan, ProtocolId::odmr_scan,
                  ProtocolId::hole_scan, ProtocolId::optical_lifetime}) {
    if (to_string(id) == name) return id;
  }
  throw ConfigError("protocol.id", "unknown protocol id '" + std::string(name) + "'");
}

std::string_view to_string(ZeemanConvention c) {
  return c == ZeemanConvention::separation ? "separation" : "shift";
}

DefectParams default_params() { return DefectParams{}; }

const std::vector<ProvenanceNote>& default_provenance() {
  static const std::vector<ProvenanceNote> notes = {
      {"D", "measured: ODMR center 1063.11(1) MHz"},
      {"g_parallel", "assumed: 2.00 (not reported)"},
      {"T_opt", "measured: resonant transient decay 156.3(5) us"},
      {"branching", "assumed: equal thirds (not reported)"},
      {"inhom_fwhm_ms0", "measured: PLE Gaussian FWHM 6.87(27) GHz"},
      {"inhom_fwhm_ms1", "measured: PLE Gaussian FWHM 3.34(39) GHz"},
      {"homog_fwhm", "derived: half of the 31(2) MHz hole width"},
      {"odmr_fwhm", "measured: ODMR FWHM 1.32(2) MHz"},
      {"T2_star", "measured: Ramsey fit 307(17) ns"},
      {"T2", "measured: Hahn echo fit 81(2) us"},
      {"echo_n", "measured: echo decay power 1.9(1)"},
      {"eseem_components", "omega measured: 87.5(3) kHz and 68.0(1) kHz; K assumed 0.15, 0.10"},
      {"T1_model", "measured: Raman n = 9, dT = 3.2(5) K; A derived from T1(15 K) = 1.6 s"},
      {"rabi_freq", "assumed: 2 MHz (not reported)"},
      {"rabi_amplitude_spread", "assumed: 3 %, recalibrated to the 4.76(7) us Rabi decay"},
      {"pump_rate", "assumed: resonant CW excited fraction 0.1; recalibrated to the 1.27(3) ms rise"},
      {"probe_reset_rate", "tuned: 50 us probe Rabi contrast near 63(1) % after calibration"},
  };
  return notes;
}

double t1_rate_per_s(const T1Model& model, double temperature_K) {
  if (const auto* o = std::get_if<OrbachModel>(&model)) {
    if (!(temperature_K > 0.0)) throw DomainError("Orbach rate needs T > 0");
    return o->prefactor_per_s * std::exp(-o->energy_meV / (PhysicalConstants::boltzmann_meV_per_K * temperature_K));
  }
  const auto& r = std::get<RamanModel>(model);
  if (!(temperature_K > r.offset_K))
    throw DomainError("Raman rate needs T > dT (T = " + fmt_num(temperature_K) + " K, dT = " + fmt_num(r.offset_K) + " K)");
  return r.prefactor_per_s * std::pow(temperature_K - r.offset_K, r.exponent);
}

void validate(const DefectParams& p, std::string_view path) {
  const std::string base(path);
  auto at = [&](std::string_view k) { return join(base, k); };
  require_positive(p.zero_field_splitting_MHz, at("D"));
  require_positive(p.g_parallel, at("g_parallel"));
  require_positive(p.optical_lifetime_us, at("T_opt"));
  double sum = 0.0;
  for (double b : p.branching) {
    if (!(b >= 0.0 && b <= 1.0)) throw ConfigError(at("branching"), "each entry must lie in [0, 1] (got " + fmt_num(b) + ")");
    sum += b;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError(at("branching"), "branching sums to " + fmt_num(sum));
  require_positive(p.inhom_fwhm_ms0_GHz, at("inhom_fwhm_ms0"));
  require_positive(p.inhom_fwhm_ms1_GHz, at("inhom_fwhm_ms1"));
  require_positive(p.homog_fwhm_MHz, at("homog_fwhm"));
  require_positive(p.odmr_fwhm_MHz, at("odmr_fwhm"));
  require_positive(p.t2_star_ns, at("T2_star"));
  require_positive(p.t2_us, at("T2"));
  require_positive(p.echo_stretch, at("echo_n"));
  for (std::size_t i = 0; i < p.eseem.size(); ++i) {
    const auto cp = at("eseem_components") + "[" + std::to_string(i) + "]";
    if (!(p.eseem[i].amplitude >= 0.0 && p.eseem[i].amplitude <= 1.0))
      throw ConfigError(cp + ".K", "must lie in [0, 1] (got " + fmt_num(p.eseem[i].amplitude) + ")");
    require_nonnegative(p.eseem[i].frequency_kHz, cp + ".omega");
  }
  if (const auto* r = std::get_if<RamanModel>(&p.t1_model)) {
    require_positive(r->prefactor_per_s, at("T1_model.A"));
    require_nonnegative(r->offset_K, at("T1_model.delta_T"));
    if (r->exponent < 1 || r->exponent % 2 == 0) throw ConfigError(at("T1_model.n"), "must be a positive odd integer");
  } else {
    const auto& o = std::get<OrbachModel>(p.t1_model);
    require_positive(o.prefactor_per_s, at("T1_model.A"));
    require_nonnegative(o.energy_meV, at("T1_model.E"));
  }
  require_positive(p.rabi_freq_MHz, at("rabi_freq"));
  require_nonnegative(p.rabi_amplitude_spread, at("rabi_amplitude_spread"));
  require_positive(p.pump_rate_per_us, at("pump_rate"));
  require_nonnegative(p.probe_reset_rate_per_us, at("probe_reset_rate"));
}

void validate(const RunConfig& cfg) {
  validate(cfg.defect, "defect");
  require_nonnegative(cfg.field_B_G, "field_B");
  require_positive(cfg.temperature_K, "temperature");
  const auto& d = cfg.detection;
  if (!(d.collection_efficiency > 0.0 && d.collection_efficiency <= 1.0))
    throw ConfigError("detection.collection_efficiency", "must lie in (0, 1]");
  require_nonnegative(d.dark_rate_cps, "detection.dark_rate");
  require_positive(d.gate_window_us, "detection.gate_window");
  if (d.repetitions < 1) throw ConfigError("detection.repetitions", "must be >= 1");
  require_positive(d.emitter_count, "detection.emitter_count");

  const auto& g = cfg.protocol.grid;
  if (g.size() == 1) throw ConfigError("protocol.grid", "needs at least 2 points");
  if (g.size() >= 2) {
    const bool up = g[1] > g[0];
    for (std::size_t i = 1; i < g.size(); ++i) {
      if (!std::isfinite(g[i]) || (up ? !(g[i] > g[i - 1]) : !(g[i] < g[i - 1])))
        throw ConfigError("protocol.grid", "must be strictly monotone (index " + std::to_string(i) + ")");
    }
  }
  const auto& s = cfg.protocol.settings;
  const std::string sp = "protocol.settings";
  require_nonnegative(s.polarize_us, sp + ".polarize_time");
  require_positive(s.probe_us, sp + ".probe_time");
  require_nonnegative(s.pulse_rabi_MHz, sp + ".pulse_rabi");
  require_positive(s.ramsey_pulse_rabi_MHz, sp + ".ramsey_pulse_rabi");
  require_positive(s.odmr_rabi_MHz, sp + ".odmr_rabi");
  require_positive(s.burn_saturation, sp + ".burn_saturation");
  require_positive(s.excitation_us, sp + ".excitation_time");
  require_positive(s.sample_dt_us, sp + ".sample_dt");
  if (s.spin_nodes != 0 && s.spin_nodes < 16) throw ConfigError(sp + ".spin_nodes", "must be 0 (auto) or >= 16");
  if (s.amplitude_nodes < 1) throw ConfigError(sp + ".amplitude_nodes", "must be >= 1");
  if (s.optical_nodes < 16) throw ConfigError(sp + ".optical_nodes", "must be >= 16");
}

RunConfig load_config(std::string_view text) {
  json doc;
  bool blank = true;
  for (char c : text) blank = blank && std::isspace(static_cast<unsigned char>(c));
  if (blank) {
    doc = json::object();
  } else {
    try {
      doc = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("config parse error: ") + e.what());
    }
  }
  RunConfig cfg;
  Reader r(doc, "");
  if (auto* d = r.child("defect")) cfg.defect = read_defect(*d, "defect");
  r.get("field_B", cfg.field_B_G);
  r.get("temperature", cfg.temperature_K);
  if (auto* d = r.child("detection")) cfg.detection = read_detection(*d, "detection");
  if (auto* p = r.child("protocol")) cfg.protocol = read_protocol(*p, "protocol");
  if (auto* c = r.child("calibrate")) {
    Reader cr(*c, "calibrate");
    cr.get("pump_rate", cfg.calibrate.pump_rate);
    cr.get("amplitude_spread", cfg.calibrate.amplitude_spread);
    cr.finish();
  }
  r.finish();
  validate(cfg);
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::string p = path;
  if (p.empty()) {
    if (const char* env = std::getenv("CRSPIN_CONFIG")) p = env;
  }
  if (p.empty()) return load_config("");
  std::ifstream in(p);
  if (!in) throw ConfigError("", "cannot open config file '" + p + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_config(ss.str());
}

std::string serialize_config(const RunConfig& cfg) { return config_to_json(cfg).dump(2); }

std::uint64_t config_hash(const RunConfig& cfg) {
  const std::string s = config_to_json(cfg).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace crspin
