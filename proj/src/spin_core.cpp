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

#include "crspin/spin_core.hpp"

#include <cmath>

#include "crspin/errors.hpp"

namespace crspin {

SpinOperators spin1_operators() {
  using c = std::complex<double>;
  const double r = 1.0 / std::sqrt(2.0);
  SpinOperators s;
  s.Sx << 0, r, 0,  //
      r, 0, r,      //
      0, r, 0;
  s.Sy << c(0, 0), c(0, -r), c(0, 0),  //
      c(0, r), c(0, 0), c(0, -r),      //
      c(0, 0), c(0, r), c(0, 0);
  s.Sz.setZero();
  s.Sz(0, 0) = 1.0;
  s.Sz(2, 2) = -1.0;
  return s;
}

double LevelDiagram::optical_offset(int sublevel) const {
  // A higher ground level gives a lower optical transition frequency.
  switch (sublevel) {
    case 0: return -f0;
    case 1: return -f_minus;
    case 2: return -f_plus;
    default: throw DomainError("sublevel index out of range");
  }
}

LevelDiagram ground_levels(const DefectParams& p, double B_G, ZeemanConvention convention) {
  const double full = p.g_parallel * PhysicalConstants::bohr_magneton_over_h_MHz_per_G() * B_G;
  const double z = convention == ZeemanConvention::separation ? full : 0.5 * full;
  LevelDiagram d;
  d.f_plus = p.zero_field_splitting_MHz + z;
  d.f_minus = p.zero_field_splitting_MHz - z;
  return d;
}

std::pair<double, double> mw_transition_frequencies(const LevelDiagram& d) {
  return {d.f_minus - d.f0, d.f_plus - d.f0};
}

double nuclear_larmor_kHz(Isotope isotope, double B_G) {
  if (!(B_G >= 0.0)) throw DomainError("nuclear_larmor needs B >= 0");
  const double gamma = isotope == Isotope::c13 ? PhysicalConstants::gamma_13C_MHz_per_T
                                               : PhysicalConstants::gamma_29Si_MHz_per_T;
  // MHz/T * G * 1e-4 T/G * 1e3 kHz/MHz
  return gamma * B_G * 0.1;
}

Isotope isotope_from_string(std::string_view name) {
  if (name == "13C") return Isotope::c13;
  if (name == "29Si") return Isotope::si29;
  throw DomainError("unknown isotope '" + std::string(name) + "'");
}

}  // namespace crspin
