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

#include <string>

#include "crspin/errors.hpp"
#include "crspin/params.hpp"
#include "doctest.h"

using namespace crspin;

TEST_SUITE("params") {

TEST_CASE("defaults") {
  const auto p = default_params();
  CHECK(p.zero_field_splitting_MHz == 1063.11);
  CHECK(p.optical_lifetime_us == 156.3);
  for (double b : p.branching) CHECK(b == doctest::Approx(1.0 / 3.0));
  CHECK(p.inhom_fwhm_ms0_GHz == 6.87);
  CHECK(p.inhom_fwhm_ms1_GHz == 3.34);
  CHECK(p.t2_us == 81.0);
  CHECK(p.echo_stretch == 1.9);
  CHECK_NOTHROW(validate(p));
  CHECK_NOTHROW(validate(RunConfig{}));
}

TEST_CASE("every numeric default carries a provenance note") {
  const auto& notes = default_provenance();
  for (const char* f : {"D", "g_parallel", "T_opt", "branching", "inhom_fwhm_ms0", "inhom_fwhm_ms1", "homog_fwhm",
                        "odmr_fwhm", "T2_star", "T2", "echo_n", "eseem_components", "T1_model", "rabi_freq",
                        "rabi_amplitude_spread", "pump_rate", "probe_reset_rate"}) {
    bool found = false;
    for (const auto& n : notes) found = found || n.field == f;
    CAPTURE(f);
    CHECK(found);
  }
  for (const auto& n : notes) CHECK(!n.source.empty());
}

TEST_CASE("constants are positive") {
  CHECK(PhysicalConstants::bohr_magneton_over_h_GHz_per_T > 0);
  CHECK(PhysicalConstants::boltzmann_over_h_Hz_per_K > 0);
  CHECK(PhysicalConstants::boltzmann_meV_per_K > 0);
  CHECK(PhysicalConstants::gamma_13C_MHz_per_T > 0);
  CHECK(PhysicalConstants::gamma_29Si_MHz_per_T > 0);
}

TEST_CASE("empty document gives the defaults") {
  CHECK(load_config("") == RunConfig{});
  CHECK(load_config("{}") == RunConfig{});
  CHECK(load_config("  \n") == RunConfig{});
}

TEST_CASE("branching must sum to one") {
  try {
    load_config(R"({"defect": {"branching": [0.5, 0.5, 0.1]}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("branching sums to 1.1") != std::string::npos);
    CHECK(e.path() == "defect.branching");
  }
}

TEST_CASE("rabi at 158 G") {
  const auto c = load_config(R"({"field_B": 158, "protocol": {"id": "rabi"}})");
  CHECK(c.field_B_G == 158.0);
  CHECK(c.protocol.id == ProtocolId::rabi);
  CHECK(c.defect == default_params());
}

TEST_CASE("parse and validation errors") {
  CHECK_THROWS_AS(load_config("{"), ParseError);
  CHECK_THROWS_AS(load_config(R"({"defect": {"nope": 1}})"), ConfigError);
  CHECK_THROWS_AS(load_config(R"({"defect": {"optical_lifetime": -1}})"), ConfigError);
  CHECK_THROWS_AS(load_config(R"({"defect": {"echo_n": 0}})"), ConfigError);
  CHECK_THROWS_AS(load_config(R"({"defect": {"eseem_components": [{"K": 1.5, "omega": 10}]}})"), ConfigError);
  CHECK_THROWS_AS(load_config(R"({"detection": {"gate_window": 0}})"), ConfigError);
  CHECK_THROWS_AS(load_config(R"({"detection": {"repetitions": 0}})"), ConfigError);
  CHECK_THROWS_AS(load_config(R"({"protocol": {"id": "cpmg"}})"), ConfigError);
  CHECK_THROWS_AS(load_config(R"({"protocol": {"grid": [1, 3, 2]}})"), ConfigError);
  CHECK_THROWS_AS(load_config(R"({"field_B": "strong"})"), ConfigError);
}

TEST_CASE("serialize round trip") {
  RunConfig c;
  c.defect.branching = {0.5, 0.25, 0.25};
  c.defect.t1_model = OrbachModel{1e6, 20.0};
  c.defect.eseem = {{0.2, 10.0}};
  c.defect.zeeman = ZeemanConvention::shift;
  c.field_B_G = 27.5;
  c.temperature_K = 21.0;
  c.detection.repetitions = 12345;
  c.detection.rng_seed = 0xfeedfacecafebeefULL;
  c.protocol.id = ProtocolId::hahn_echo;
  c.protocol.grid = {0.0, 0.1, 0.30000000000000004, 1.0 / 3.0};
  c.protocol.settings.echo_tau = EchoTauConvention::full_free_time;
  c.protocol.settings.noise = false;
  c.calibrate.pump_rate = false;
  const auto text = serialize_config(c);
  const auto back = load_config(text);
  CHECK(back == c);
  CHECK(serialize_config(back) == text);
  CHECK(config_hash(back) == config_hash(c));
  c.temperature_K = 22.0;
  CHECK(config_hash(back) != config_hash(c));
}

TEST_CASE("t1 rates") {
  CHECK(t1_rate_per_s(default_params().t1_model, 15.0) == doctest::Approx(1.0 / 1.6));
  CHECK_THROWS_AS(t1_rate_per_s(RamanModel{1.0, 3.2, 9}, 3.0), DomainError);
}

TEST_CASE("protocol names round trip") {
  for (auto id : {ProtocolId::rabi, ProtocolId::ramsey, ProtocolId::hahn_echo, ProtocolId::t1_inversion,
                  ProtocolId::polarization_buildup, ProtocolId::ple_scan, ProtocolId::odmr_scan, ProtocolId::hole_scan,
                  ProtocolId::optical_lifetime})
    CHECK(protocol_from_string(to_string(id)) == id);
}

}
