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
#include <functional>
#include <string>
#include <vector>

#include "crspin/fitting.hpp"
#include "crspin/params.hpp"

namespace crspin {

/// Synthetic truth and x grid for the fit round-trip check of one model.
struct RoundTripCase {
  ModelId model = ModelId::constant;
  std::vector<double> truth;
  std::vector<double> x;
};

RoundTripCase round_trip_case(ModelId id);

struct RoundTripStats {
  ModelId model = ModelId::constant;
  int trials = 0;
  /// trials whose every parameter came back within 1e-6 relative
  int recovered = 0;
};

/// Noiseless data from the truth; each free parameter of the start point is
/// scaled by a log-uniform factor in [0.5, 2].
RoundTripStats round_trip(ModelId id, int trials, std::uint64_t seed);

struct CriterionResult {
  int number = 0;
  std::string name;
  bool pass = false;
  /// Fitted values against their targets, one line.
  std::string detail;
  double seconds = 0.0;
};

struct SuiteOptions {
  std::uint64_t seed = 1063110;
  int round_trip_trials = 100;
  int ranking_realizations = 100;
};

/// Calibrated default configuration used by every criterion.
RunConfig suite_config(const SuiteOptions& o);

/// Runs every acceptance criterion; a criterion that throws is recorded as a
/// failure with the message and the rest continue. on_done sees each result
/// as soon as it is available.
std::vector<CriterionResult> run_acceptance(const SuiteOptions& o = {},
                                            const std::function<void(const CriterionResult&)>& on_done = {});

/// "PASS 3 hole recovery: ..." / "FAIL ..."
std::string format_row(const CriterionResult& r);

}  // namespace crspin
