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

#include <Eigen/Core>
#include <complex>
#include <utility>

#include "crspin/params.hpp"

namespace crspin {

using Mat3c = Eigen::Matrix<std::complex<double>, 3, 3>;

/// Spin-1 matrices in the {|+1>, |0>, |-1>} basis.
struct SpinOperators {
  Mat3c Sx, Sy, Sz;
};

SpinOperators spin1_operators();

/// Ground-state level frequencies relative to m_s = 0, in MHz.
struct LevelDiagram {
  double f0 = 0.0;
  double f_minus = 0.0;
  double f_plus = 0.0;
  /// The excited level does not move with B; its optical detunings are
  /// measured from the m_s = 0 line.
  double excited_offset_MHz = 0.0;

  /// Optical transition detuning of sublevel i (0, -, +) from the m_s = 0 line.
  double optical_offset(int sublevel) const;
};

/// f(+-1) = D +- Zeeman term. Negative B swaps the two lines.
LevelDiagram ground_levels(const DefectParams& p, double B_G, ZeemanConvention convention);
inline LevelDiagram ground_levels(const DefectParams& p, double B_G) { return ground_levels(p, B_G, p.zeeman); }

/// (f(0 <-> -1), f(0 <-> +1)) in MHz.
std::pair<double, double> mw_transition_frequencies(const LevelDiagram& d);

enum class Isotope { c13, si29 };

/// |gamma| B in kHz. Throws DomainError for B < 0.
double nuclear_larmor_kHz(Isotope isotope, double B_G);
/// Accepts "13C" / "29Si"; throws DomainError otherwise.
Isotope isotope_from_string(std::string_view name);

}  // namespace crspin
