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

#include "crspin/detection.hpp"

#include <cmath>
#include <random>

#include "crspin/errors.hpp"

namespace crspin {

double simpson(std::span<const double> y, double dt) {
  const std::size_t n = y.size();
  if (n < 2) return 0.0;
  std::size_t intervals = n - 1;
  double tail = 0.0;
  if (intervals % 2) {
    tail = 0.5 * dt * (y[n - 2] + y[n - 1]);
    --intervals;
  }
  if (intervals == 0) return tail;
  double s = y[0] + y[intervals];
  for (std::size_t i = 1; i < intervals; ++i) s += (i % 2 ? 4.0 : 2.0) * y[i];
  return s * dt / 3.0 + tail;
}

double count_scale(const DefectParams& p, const DetectionConfig& cfg) {
  return cfg.collection_efficiency * cfg.emitter_count * static_cast<double>(cfg.repetitions) /
         p.optical_lifetime_us;
}

double expected_counts(std::span<const double> rho_ee, double dt_us, const DefectParams& p,
                       const DetectionConfig& cfg) {
  if (!(dt_us > 0.0)) throw DomainError("sample spacing must be > 0");
  const double span = dt_us * static_cast<double>(rho_ee.size() ? rho_ee.size() - 1 : 0);
  const double gate = cfg.gate_window_us;
  if (span < gate * (1.0 - 1e-12)) throw DomainError("gate extends past the end of the trajectory");
  const auto full = static_cast<std::size_t>(std::floor(gate / dt_us * (1.0 + 1e-12)));
  double integral = simpson(rho_ee.first(full + 1), dt_us);
  const double rest = gate - dt_us * static_cast<double>(full);
  if (rest > 1e-12 * gate && full + 1 < rho_ee.size()) {
    const double a = rho_ee[full];
    const double b = a + (rho_ee[full + 1] - a) * rest / dt_us;
    integral += 0.5 * rest * (a + b);
  }
  for (double v : rho_ee.first(full + 1))
    if (v < -1e-9) throw DomainError("negative excited population in trajectory");
  return count_scale(p, cfg) * integral;
}

double expected_counts(const SegmentTrace& gate, const DefectParams& p, const DetectionConfig& cfg) {
  return expected_counts(gate.excited, gate.dt_us, p, cfg);
}

double dark_counts(double dark_rate_cps, double gate_us, std::uint64_t reps) {
  return dark_rate_cps * gate_us * 1e-6 * static_cast<double>(reps);
}

CountRecord poissonize(double expected, double dark_rate_cps, double gate_us, std::uint64_t reps, std::uint64_t seed) {
  if (!(expected >= 0.0) || !(dark_rate_cps >= 0.0) || !(gate_us >= 0.0))
    throw DomainError("poissonize inputs must be >= 0");
  CountRecord r;
  r.expected_counts = expected;
  r.dark_contribution = dark_counts(dark_rate_cps, gate_us, reps);
  r.repetitions = reps;
  r.gate_window_us = gate_us;
  const double lambda = expected + r.dark_contribution;
  if (lambda > 0.0) {
    std::mt19937_64 rng(seed);
    std::poisson_distribution<std::uint64_t> dist(lambda);
    r.sampled_counts = dist(rng);
  }
  return r;
}

NetCounts dark_subtract(const CountRecord& r) {
  const double s = static_cast<double>(r.sampled_counts);
  return {s - r.dark_contribution, std::sqrt(std::max(s, 1.0))};
}

double contrast(double signal, double reference, ContrastOrientation o) {
  if (!(reference > 0.0)) throw DomainError("contrast needs a positive reference");
  const double d = o == ContrastOrientation::dip ? reference - signal : signal - reference;
  return 100.0 * d / reference;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t s = master;
  const std::uint64_t a = splitmix64(s);
  std::uint64_t t = a ^ (index * 0xD1B54A32D192ED03ULL);
  return splitmix64(t);
}

}  // namespace crspin
