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
#include <span>

#include "crspin/dynamics.hpp"
#include "crspin/params.hpp"

namespace crspin {

struct CountRecord {
  double expected_counts = 0.0;
  std::uint64_t sampled_counts = 0;
  double dark_contribution = 0.0;
  std::uint64_t repetitions = 1;
  double gate_window_us = 0.0;
};

struct NetCounts {
  double net = 0.0;
  double sigma = 0.0;
};

/// Composite Simpson rule on uniform samples. An odd number of intervals
/// closes with one trapezoid.
double simpson(std::span<const double> y, double dt);

/// Photons per unit integrated rho_ee: eta * emitters * reps / T_opt.
double count_scale(const DefectParams& p, const DetectionConfig& cfg);

/// eta * emitters * reps / T_opt * integral of rho_ee over the first gate_window
/// of the samples. Throws DomainError when the samples are shorter than the gate.
double expected_counts(std::span<const double> rho_ee, double dt_us, const DefectParams& p,
                       const DetectionConfig& cfg);
double expected_counts(const SegmentTrace& gate, const DefectParams& p, const DetectionConfig& cfg);

/// dark_rate * gate * reps
double dark_counts(double dark_rate_cps, double gate_us, std::uint64_t reps);

/// sampled ~ Poisson(expected + dark). Deterministic for a fixed seed.
CountRecord poissonize(double expected, double dark_rate_cps, double gate_us, std::uint64_t reps, std::uint64_t seed);

/// net = sampled - dark, sigma = sqrt(max(sampled, 1)).
NetCounts dark_subtract(const CountRecord& r);

enum class ContrastOrientation {
  /// signal below the reference: 100 (ref - signal) / ref
  dip,
  /// signal above the reference: 100 (signal - ref) / ref
  peak,
};

/// Percent contrast. Throws DomainError for reference <= 0.
double contrast(double signal, double reference, ContrastOrientation o = ContrastOrientation::dip);

std::uint64_t splitmix64(std::uint64_t& state);
/// Independent stream seed for item `index` of a run with master seed `master`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace crspin
