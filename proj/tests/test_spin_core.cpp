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

#include <complex>

#include "crspin/errors.hpp"
#include "crspin/spin_core.hpp"
#include "doctest.h"

using namespace crspin;

namespace {
double max_abs(const Mat3c& m) { return m.cwiseAbs().maxCoeff(); }
}  // namespace

TEST_SUITE("spin-core") {

TEST_CASE("spin-1 algebra") {
  const auto s = spin1_operators();
  const std::complex<double> i(0.0, 1.0);
  CHECK(max_abs(s.Sz - Mat3c(Eigen::Vector3cd(1.0, 0.0, -1.0).asDiagonal())) < 1e-12);
  CHECK(max_abs(s.Sx * s.Sy - s.Sy * s.Sx - i * s.Sz) < 1e-12);
  CHECK(max_abs(s.Sy * s.Sz - s.Sz * s.Sy - i * s.Sx) < 1e-12);
  CHECK(max_abs(s.Sz * s.Sx - s.Sx * s.Sz - i * s.Sy) < 1e-12);
  CHECK(max_abs(s.Sx * s.Sx + s.Sy * s.Sy + s.Sz * s.Sz - 2.0 * Mat3c::Identity()) < 1e-12);
  for (const auto* m : {&s.Sx, &s.Sy, &s.Sz}) CHECK(max_abs(*m - m->adjoint()) < 1e-12);
}

TEST_CASE("zero field") {
  const auto d = ground_levels(default_params(), 0.0);
  CHECK(d.f0 == 0.0);
  CHECK(d.f_plus == doctest::Approx(1063.11));
  CHECK(d.f_minus == doctest::Approx(1063.11));
  const auto [m, p] = mw_transition_frequencies(d);
  CHECK(m == doctest::Approx(1063.11));
  CHECK(p == doctest::Approx(1063.11));
}

TEST_CASE("Zeeman separation") {
  // 2 g muB B / h with muB/h = 13.996 GHz/T = 1.3996 MHz/G
  const double muB = 13.996244936e3 * 1e-4;
  const auto d = ground_levels(default_params(), 158.0);
  CHECK(d.f_plus - d.f_minus == doctest::Approx(2 * 2.0 * muB * 158.0).epsilon(1e-9));
  CHECK(d.f_plus - d.f_minus == doctest::Approx(884.6).epsilon(1e-4));
  const auto [m, p] = mw_transition_frequencies(ground_levels(default_params(), 27.5));
  CHECK(p - m == doctest::Approx(154.0).epsilon(1e-3));
  const auto s = ground_levels(default_params(), 27.5, ZeemanConvention::shift);
  CHECK(s.f_plus - s.f_minus == doctest::Approx(77.0).epsilon(1e-3));
}

TEST_CASE("stray field splitting of 5 MHz") {
  LevelDiagram d;
  d.f_plus = 1063.11 + 2.5;
  d.f_minus = 1063.11 - 2.5;
  const auto [m, p] = mw_transition_frequencies(d);
  CHECK(p - m == doctest::Approx(5.0));
}

TEST_CASE("levels are linear in B and odd under B -> -B") {
  const auto p = default_params();
  for (auto conv : {ZeemanConvention::separation, ZeemanConvention::shift}) {
    for (double b : {1.7, 27.5, 158.0}) {
      const auto d1 = ground_levels(p, b, conv), d2 = ground_levels(p, 2 * b, conv), dn = ground_levels(p, -b, conv);
      const double D = p.zero_field_splitting_MHz;
      CHECK(d2.f_plus - D == doctest::Approx(2 * (d1.f_plus - D)).epsilon(1e-9));
      CHECK(dn.f_plus == doctest::Approx(d1.f_minus).epsilon(1e-12));
      CHECK(dn.f_minus == doctest::Approx(d1.f_plus).epsilon(1e-12));
      CHECK(d1.excited_offset_MHz == d2.excited_offset_MHz);
    }
  }
}

TEST_CASE("nuclear Larmor frequencies") {
  CHECK(nuclear_larmor_kHz(Isotope::c13, 0.0) == 0.0);
  CHECK(nuclear_larmor_kHz(Isotope::c13, 158.0) == doctest::Approx(10.7084e3 * 0.0158).epsilon(1e-12));
  CHECK(nuclear_larmor_kHz(Isotope::c13, 158.0) == doctest::Approx(169.2).epsilon(1e-3));
  CHECK(nuclear_larmor_kHz(Isotope::si29, 158.0) == doctest::Approx(133.8).epsilon(1e-3));
  CHECK(nuclear_larmor_kHz(Isotope::si29, 316.0) == doctest::Approx(2 * nuclear_larmor_kHz(Isotope::si29, 158.0)));
  CHECK_THROWS_AS(nuclear_larmor_kHz(Isotope::c13, -1.0), DomainError);
  CHECK(isotope_from_string("29Si") == Isotope::si29);
  CHECK_THROWS_AS(isotope_from_string("15N"), DomainError);
}

}
