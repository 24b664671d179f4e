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

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "crspin/errors.hpp"
#include "crspin/sequences.hpp"
#include "doctest.h"

using namespace crspin;

namespace {

constexpr double kPi = std::numbers::pi;

RunConfig small(ProtocolId id, std::vector<double> grid) {
  RunConfig c;
  c.protocol.id = id;
  c.protocol.grid = std::move(grid);
  c.protocol.settings.noise = false;
  c.protocol.settings.spin_nodes = 16;
  c.protocol.settings.amplitude_nodes = 3;
  c.protocol.settings.sample_dt_us = 0.5;
  return c;
}

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double scale = 0.0, d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    scale = std::max(scale, std::abs(b[i]));
    d = std::max(d, std::abs(a[i] - b[i]));
  }
  return d / scale;
}

}  // namespace

TEST_SUITE("sequences") {

TEST_CASE("rabi construction") {
  RunConfig c;
  c.protocol.id = ProtocolId::rabi;
  const auto seqs = build_protocol(c);
  CHECK(seqs.size() == 401);
  for (const auto& s : seqs) {
    REQUIRE(s.shots.size() == 1);
    CHECK(s.count(SegmentKind::mw_pulse) == 1);
    CHECK(s.count(SegmentKind::readout_gate) == 1);
    for (const auto& g : s.shots[0].segments)
      if (g.kind == SegmentKind::mw_pulse) CHECK(g.duration_us == s.sweep_value);
    CHECK(s.shots[0].segments.front().duration_us == 5000.0);
    CHECK(s.shots[0].segments.back().duration_us == 155.0);
  }
  CHECK(seqs.front().sweep_value == 0.0);
  CHECK(seqs.back().sweep_value == 10.0);
}

TEST_CASE("ramsey pulses are detuned by 5 MHz") {
  RunConfig c;
  c.protocol.id = ProtocolId::ramsey;
  c.protocol.grid = {0.0, 0.5, 1.0};
  for (const auto& s : build_protocol(c)) {
    CHECK(s.count(SegmentKind::mw_pulse) == 2);
    for (const auto& g : s.shots[0].segments)
      if (g.kind == SegmentKind::mw_pulse) CHECK(g.drive.detuning_MHz == 5.0);
  }
}

TEST_CASE("hahn phases") {
  RunConfig c;
  c.protocol.id = ProtocolId::hahn_echo;
  c.protocol.grid = {10.0};
  const auto s = build_protocol(c).front();
  REQUIRE(s.shots.size() == 2);
  CHECK(s.combine == Combine::difference);
  for (std::size_t a = 0; a < 2; ++a) {
    std::vector<double> phases;
    for (const auto& g : s.shots[a].segments)
      if (g.kind == SegmentKind::mw_pulse) phases.push_back(g.drive.phase_rad);
    REQUIRE(phases.size() == 3);
    CHECK(phases[0] == doctest::Approx(a == 0 ? 0.0 : kPi));
    CHECK(phases[1] == doctest::Approx(kPi / 2));
    CHECK(phases[2] == doctest::Approx(0.0));
  }
}

TEST_CASE("t1 and buildup construction") {
  RunConfig c = small(ProtocolId::t1_inversion, {0.0, 1e5});
  const auto t1 = build_protocol(c).front();
  REQUIRE(t1.shots.size() == 2);
  double d[2] = {};
  for (std::size_t a = 0; a < 2; ++a)
    for (const auto& g : t1.shots[a].segments)
      if (g.kind == SegmentKind::mw_pulse) d[a] = g.duration_us;
  CHECK(d[1] == doctest::Approx(2 * d[0]));
  c = small(ProtocolId::polarization_buildup, {100.0});
  const auto b = build_protocol(c).front();
  CHECK(b.combine == Combine::contrast);
  CHECK(b.shots[0].segments.front().duration_us == 100.0);
}

TEST_CASE("cw scans have no pulse form") {
  RunConfig c;
  c.protocol.id = ProtocolId::hole_scan;
  CHECK_THROWS_AS(build_protocol(c), ConfigError);
}

TEST_CASE("sequence validation") {
  PulseSequence s;
  s.shots.push_back({{Segment::laser(10.0, true, 1000.0, false), Segment::gate(155.0)}});
  CHECK_NOTHROW(s.validate());
  s.shots[0].segments.push_back(Segment::gate(10.0));
  CHECK_THROWS_AS(s.validate(), DomainError);
  s.shots[0].segments = {Segment::laser(10.0, true, 1000.0, false)};
  CHECK_THROWS_AS(s.validate(), DomainError);
  s.shots[0].segments = {Segment::laser(10.0, true, 1000.0, false), Segment::gate(0.0)};
  CHECK_THROWS_AS(s.validate(), DomainError);
  s.shots[0].segments = {Segment::wait(-1.0), Segment::gate(1.0)};
  CHECK_THROWS_AS(s.validate(), DomainError);
}

TEST_CASE("grids") {
  RunConfig c;
  c.protocol.id = ProtocolId::polarization_buildup;
  CHECK(protocol_grid(c).size() == 41);
  c.protocol.id = ProtocolId::odmr_scan;
  c.field_B_G = 0.0;
  const auto g = protocol_grid(c);
  CHECK(g.front() == doctest::Approx(1053.11));
  CHECK(g.back() == doctest::Approx(1073.11));
  c.protocol.grid = {1.0, 0.5};
  c.protocol.id = ProtocolId::rabi;
  CHECK_THROWS_AS(run_protocol(c), ConfigError);
}

TEST_CASE("packets are normalized") {
  for (auto [s, a] : {std::pair{1, 1}, std::pair{16, 1}, std::pair{8, 5}}) {
    double w = 0.0;
    for (const auto& k : make_packets(default_params(), s, a)) w += k.weight;
    CHECK(w == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("fast paths match the reference simulator") {
  const std::vector<std::pair<ProtocolId, std::vector<double>>> cases = {
      {ProtocolId::rabi, {0.0, 0.3, 0.6, 1.7}},
      {ProtocolId::ramsey, {0.0, 0.1, 0.25}},
      {ProtocolId::hahn_echo, {0.0, 20.0, 37.0}},
      {ProtocolId::t1_inversion, {0.0, 4e5, 2e6}},
      {ProtocolId::polarization_buildup, {0.0, 500.0, 3000.0}},
      {ProtocolId::optical_lifetime, {0.0, 5.0, 50.0, 150.0}},
  };
  for (const auto& [id, grid] : cases) {
    CAPTURE(to_string(id));
    const RunConfig c = small(id, grid);
    const auto fast = run_protocol(c);
    const auto ref = run_protocol_reference(c);
    REQUIRE(fast.size() == ref.size());
    CHECK(max_rel_diff(fast.mean_counts, ref.mean_counts) < 1e-6);
  }
}

TEST_CASE("rabi at zero pulse length equals the polarized reference") {
  RunConfig c = small(ProtocolId::rabi, {0.0, 0.25});
  const auto r = run_protocol(c);
  PulseSequence ref;
  const auto seq = build_protocol(c).front();
  for (const auto& g : seq.shots[0].segments)
    if (g.kind != SegmentKind::mw_pulse) ref.shots.resize(1), ref.shots[0].segments.push_back(g);
  const double level = simulate_sequence(ref, c, protocol_packets(c)).front();
  CHECK(r.mean_counts[0] == doctest::Approx(level).epsilon(1e-9));
}

TEST_CASE("2 pi pulse leaves the polarized state alone") {
  RunConfig c = small(ProtocolId::t1_inversion, {0.0});
  const auto seq = build_protocol(c).front();
  PulseSequence none;
  none.shots.push_back({});
  // same timing, pulse replaced by a wait
  for (const auto& g : seq.shots[1].segments)
    none.shots[0].segments.push_back(g.kind == SegmentKind::mw_pulse ? Segment::wait(g.duration_us) : g);
  const std::vector<Packet> packets{{0.0, 1.0, 1.0}};
  const double two_pi = simulate_sequence(PulseSequence{0.0, {seq.shots[1]}, Combine::single}, c, packets).front();
  const double bare = simulate_sequence(none, c, packets).front();
  CHECK(two_pi == doctest::Approx(bare).epsilon(1e-6));
}

TEST_CASE("t1 contrast is largest at zero wait") {
  RunConfig c = small(ProtocolId::t1_inversion, {0.0, 3e5, 1e6, 3e6});
  const auto r = run_protocol(c);
  for (std::size_t k = 1; k < r.size(); ++k) CHECK(std::abs(r.mean_counts[k]) < std::abs(r.mean_counts[0]));
}

TEST_CASE("echo difference flips sign with the first pulse") {
  RunConfig c = small(ProtocolId::hahn_echo, {0.0, 12.0});
  const auto seqs = build_protocol(c);
  const auto packets = protocol_packets(c);
  for (const auto& s : seqs) {
    auto swapped = s;
    std::swap(swapped.shots[0], swapped.shots[1]);
    const auto a = simulate_sequence(s, c, packets), b = simulate_sequence(swapped, c, packets);
    CHECK(a[0] - a[1] == doctest::Approx(-(b[0] - b[1])).epsilon(1e-12));
    // common mode is untouched
    CHECK(a[0] + a[1] == doctest::Approx(b[0] + b[1]).epsilon(1e-12));
  }
  const auto r = run_protocol(c);
  CHECK(std::abs(r.mean_counts[0]) > std::abs(r.mean_counts[1]));
}

TEST_CASE("buildup contrast is monotone in pump time") {
  RunConfig c;
  c.protocol.id = ProtocolId::polarization_buildup;
  c.protocol.settings.noise = false;
  c.protocol.settings.spin_nodes = 16;
  c.protocol.settings.amplitude_nodes = 3;
  const auto r = run_protocol(c);
  for (std::size_t k = 1; k < r.size(); ++k) CHECK(r.mean_counts[k] >= r.mean_counts[k - 1] - 1e-9);
}

TEST_CASE("shorter probe does not lower the contrast") {
  double con[2];
  for (int i = 0; i < 2; ++i) {
    RunConfig c = small(ProtocolId::rabi, {0.0, 0.25});
    // calibrated pump rate: polarization near complete, little residual glow
    c.defect.pump_rate_per_us = 6.18e-3;
    c.protocol.settings.probe_us = i == 0 ? 50.0 : 1.0;
    const auto r = run_protocol(c);
    con[i] = std::abs(100.0 * (r.mean_counts[1] - r.mean_counts[0]) / r.mean_counts[0]);
  }
  CHECK(con[1] >= con[0]);
}

TEST_CASE("noise is seeded") {
  RunConfig c = small(ProtocolId::rabi, {0.0, 0.1, 0.2});
  c.protocol.settings.noise = true;
  const auto a = run_protocol(c), b = run_protocol(c);
  CHECK(a.sampled_counts == b.sampled_counts);
  c.detection.rng_seed += 1;
  CHECK(run_protocol(c).sampled_counts != a.sampled_counts);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a.sigma[k] > 0.0);
}

TEST_CASE("csv output") {
  RunConfig c = small(ProtocolId::optical_lifetime, {0.0, 10.0});
  std::ostringstream os;
  run_protocol(c).write_csv(os);
  const auto s = os.str();
  CHECK(s.rfind("sweep_value,mean_counts,sampled_counts,sigma\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 3);
}

TEST_CASE("echo envelope") {
  auto p = default_params();
  CHECK(echo_envelope(0.0, p) == 1.0);
  CHECK_THROWS_AS(echo_envelope(-1.0, p), DomainError);
  auto bare = p;
  bare.eseem = {{0.0, 87.5}, {0.0, 68.0}};
  CHECK(echo_envelope(81.0, bare) == doctest::Approx(std::exp(-1.0)));
  // tau = 1 / (2 * 87.5 kHz); K1 sin^2(pi / 2) = K1
  auto k = p;
  k.eseem = {{0.1, 87.5}, {0.1, 68.0}};
  k.t2_us = 1e12;
  const double tau = 1e3 / (2 * 87.5);
  const double second = 1.0 - 0.1 * std::pow(std::sin(kPi * 68.0e-3 * tau), 2);
  CHECK(echo_envelope(2 * tau, k) == doctest::Approx(0.9 * second).epsilon(1e-9));
  CHECK(echo_envelope(tau, k, EchoTauConvention::full_free_time) == doctest::Approx(0.9 * second).epsilon(1e-9));
  for (double t = 0.0; t <= 300.0; t += 7.3) CHECK(echo_envelope(t, p) <= 1.0);
}

TEST_CASE("t1 rate models") {
  const RamanModel r{1.0, 3.2, 9};
  CHECK(t1_rate_model(18.2, r) / t1_rate_model(15.0, r) == doctest::Approx(std::pow(15.0 / 11.8, 9)).epsilon(1e-12));
  CHECK(t1_rate_model(18.2, r) / t1_rate_model(15.0, r) == doctest::Approx(8.64).epsilon(5e-3));
  CHECK_THROWS_AS(t1_rate_model(3.2, r), DomainError);
  const OrbachModel o{1e6, 20.0};
  CHECK(t1_rate_model(0.5, o) < 1e-150);
  const double kb = 8.617333262e-2;
  CHECK(t1_rate_model(30.0, o) / t1_rate_model(15.0, o) == doctest::Approx(std::exp(20.0 / kb * (1.0 / 15 - 1.0 / 30))));
  CHECK(std::log(t1_rate_model(30.0, o) / t1_rate_model(15.0, o)) == doctest::Approx(7.74).epsilon(1e-3));
}

TEST_CASE("rate models fit to raman data prefer raman") {
  FitData d;
  for (double t : {15.0, 18.0, 21.0, 24.0, 27.0, 30.0}) {
    d.x.push_back(t);
    d.y.push_back(t1_rate_model(t, default_params().t1_model));
    d.sigma.push_back(0.05 * d.y.back());
  }
  const auto s = fit_rate_models(d);
  REQUIRE(s.fits.size() == 5);
  CHECK(s.ranking.front().model == ModelId::raman);
  CHECK(s.fits[4].value("dT") == doctest::Approx(3.2).epsilon(1e-4));
}

}
