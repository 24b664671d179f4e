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

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <utility>
#include <vector>

#include "crspin/ensemble.hpp"
#include "crspin/errors.hpp"
#include "crspin/fitting.hpp"
#include "crspin/spin_core.hpp"
#include "doctest.h"

using namespace crspin;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> range(double a, double b, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = a + (b - a) * i / (n - 1);
  return v;
}

FitResult fit_spectrum(ModelId id, const Spectrum& s) {
  const double top = *std::max_element(s.signal.begin(), s.signal.end());
  FitData d{s.axis, s.signal, std::vector<double>(s.size(), 1e-3 * top)};
  const auto m = make_model(id);
  return fit(m, d, initial_guess(m, d));
}

double trapezoid(const Spectrum& s) {
  double a = 0.0;
  for (std::size_t i = 1; i < s.size(); ++i) a += 0.5 * (s.signal[i] + s.signal[i - 1]) * (s.axis[i] - s.axis[i - 1]);
  return a;
}

bool non_negative(const Spectrum& s) {
  return std::all_of(s.signal.begin(), s.signal.end(), [](double v) { return v >= 0.0; });
}

double odmr_center(const DefectParams& p, const EnsembleSpec& e, double B, double f0, const CwScanOptions& o = {}) {
  return fit_spectrum(ModelId::lorentzian, odmr_scan(p, e, range(f0 - 4.0, f0 + 4.0, 81), B, o)).value("center");
}

double per_gauss(const DefectParams& p) { return ground_levels(p, 1.0).f_plus - ground_levels(p, 1.0).f_minus; }

}  // namespace

TEST_SUITE("ensemble") {

TEST_CASE("quadrature rules") {
  const auto gl = gauss_legendre(12);
  double s = 0.0, x4 = 0.0;
  for (std::size_t i = 0; i < gl.size(); ++i) {
    s += gl.weights[i];
    x4 += gl.weights[i] * std::pow(gl.nodes[i], 22);
  }
  CHECK(s == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(x4 == doctest::Approx(2.0 / 23.0).epsilon(1e-12));

  const auto gh = gauss_hermite_normal(10);
  double m0 = 0, m2 = 0, m4 = 0;
  for (std::size_t i = 0; i < gh.size(); ++i) {
    m0 += gh.weights[i];
    m2 += gh.weights[i] * gh.nodes[i] * gh.nodes[i];
    m4 += gh.weights[i] * std::pow(gh.nodes[i], 4);
  }
  CHECK(m0 == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(m2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m4 == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("Lorentzian rule integrates a second Lorentzian") {
  // density of width a against a unit-peak line of width b: hw_b / (hw_a + hw_b)
  const double a = 1.32, b = 0.7;
  for (int n : {16, 64}) {
    const auto r = lorentzian_rule(n, a, 0.0);
    double w = 0.0, v = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      w += r.weights[i];
      v += r.weights[i] * (0.25 * b * b) / (r.nodes[i] * r.nodes[i] + 0.25 * b * b);
    }
    CHECK(w == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(v == doctest::Approx(b / (a + b)).epsilon(n == 64 ? 1e-6 : 1e-2));
  }
  // convolution of the two Lorentzians evaluated 5 away
  const double hw = 0.5 * (a + b);
  const double exact = 0.5 * b * hw / (25.0 + hw * hw);
  for (auto [n, tol] : {std::pair{128, 1e-3}, std::pair{256, 1e-5}, std::pair{512, 1e-10}}) {
    const auto f = lorentzian_rule_focused(n, a, 0.0, 5.0, 0.5);
    double v = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i)
      v += f.weights[i] * (0.25 * b * b) / ((f.nodes[i] - 5.0) * (f.nodes[i] - 5.0) + 0.25 * b * b);
    CHECK(v == doctest::Approx(exact).epsilon(tol));
  }
}

TEST_CASE("Monte Carlo samples are seeded") {
  const auto a = lorentzian_samples(64, 1.32, 0.0, 9), b = lorentzian_samples(64, 1.32, 0.0, 9);
  CHECK(a.nodes == b.nodes);
  CHECK(lorentzian_samples(64, 1.32, 0.0, 10).nodes != a.nodes);
  std::vector<double> s = lorentzian_samples(4001, 1.32, 2.0, 3).nodes;
  std::nth_element(s.begin(), s.begin() + 2000, s.end());
  CHECK(s[2000] == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("ensemble spec validation") {
  auto e = EnsembleSpec::from(default_params());
  CHECK_NOTHROW(e.validate());
  e.nodes = 15;
  CHECK_THROWS_AS(e.validate(), ConfigError);
  e = EnsembleSpec::from(default_params());
  e.spin_fwhm_MHz = 0.0;
  CHECK_THROWS_AS(e.validate(), ConfigError);
}

TEST_CASE("PLE spectrum") {
  const auto p = default_params();
  const auto e = EnsembleSpec::from(p);
  const auto s = ple_spectrum(p, e, range(-25.0, 25.0, 5001));
  CHECK(trapezoid(s) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(non_negative(s));
  const auto f = fit_spectrum(ModelId::gaussian_two_peak, ple_spectrum(p, e, range(-15.0, 15.0, 301)));
  CHECK(f.value("fwhm0") == doctest::Approx(6.87).epsilon(0.03));
  CHECK(f.value("fwhm1") == doctest::Approx(3.34).epsilon(0.03));
  CHECK(0.5 * (f.value("fwhm0") + f.value("fwhm1")) == doctest::Approx(5.1).epsilon(0.4 / 5.1));
  CHECK_THROWS_AS(ple_spectrum(p, e, std::vector<double>{60.0}), DomainError);
}

TEST_CASE("PLE with equal widths and weights is symmetric") {
  auto p = default_params();
  auto e = EnsembleSpec::from(p);
  e.inhom_fwhm_ms1_GHz = e.inhom_fwhm_ms0_GHz;
  const double mid = -0.5e-3 * p.zero_field_splitting_MHz;
  std::vector<double> x;
  for (int i = -50; i <= 50; ++i) x.push_back(mid + 0.2 * i);
  const auto s = ple_spectrum(p, e, x, {0.5, 0.25, 0.25});
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(s.signal[i] == doctest::Approx(s.signal[s.size() - 1 - i]).epsilon(1e-12));
}

TEST_CASE("hole recovery") {
  const auto p = default_params();
  const auto e = EnsembleSpec::from(p);
  const double D = p.zero_field_splitting_MHz;
  const auto h = hole_recovery_scan(p, e, range(D - 150.0, D + 150.0, 151), 0.0);
  CHECK(non_negative(h));
  const auto f = fit_spectrum(ModelId::lorentzian, h);
  CHECK(f.value("center") == doctest::Approx(D).epsilon(1.0 / D));
  CHECK(f.value("fwhm") == doctest::Approx(31.0).epsilon(0.10));

  SUBCASE("far detuned sideband sits on the floor") {
    const auto far = hole_recovery_scan(p, e, std::vector<double>{D - 2000.0, D + 2000.0}, 0.0);
    CHECK(h.signal.front() == doctest::Approx(far.signal[0]).epsilon(1e-3));
    CHECK(far.signal[0] == doctest::Approx(far.signal[1]).epsilon(1e-4));
    CHECK(*std::min_element(h.signal.begin(), h.signal.end()) >= far.signal[0] * (1 - 1e-4));
  }
  SUBCASE("halving the homogeneous width halves the hole") {
    auto p2 = p;
    p2.homog_fwhm_MHz *= 0.5;
    const auto h2 = hole_recovery_scan(p2, e, range(D - 75.0, D + 75.0, 151), 0.0);
    CHECK(fit_spectrum(ModelId::lorentzian, h2).value("fwhm") / f.value("fwhm") == doctest::Approx(0.5).epsilon(0.05));
  }
  SUBCASE("center is converged in the sampling density") {
    auto e2 = e;
    e2.nodes *= 2;
    CwScanOptions o;
    o.optical_nodes = 1001;
    o.line_nodes *= 2;
    const auto f2 = fit_spectrum(ModelId::lorentzian, hole_recovery_scan(p, e2, h.axis, 0.0, o));
    CHECK(std::abs(f2.value("center") - f.value("center")) <= 0.005 * f.value("fwhm"));
  }
}

TEST_CASE("ODMR") {
  const auto p = default_params();
  const auto e = EnsembleSpec::from(p);
  const double D = p.zero_field_splitting_MHz;
  const double B = 5.0 / per_gauss(p);
  const auto s = odmr_scan(p, e, range(D - 8.0, D + 8.0, 161), B);
  CHECK(non_negative(s));
  const auto f = fit_spectrum(ModelId::lorentzian_pair, s);
  CHECK(f.value("fwhm") == doctest::Approx(1.32).epsilon(0.10));
  CHECK(std::abs(f.value("center2") - f.value("center1")) == doctest::Approx(5.0).epsilon(1e-3));
  // ODMR width against 1 / (pi T2*) = 1.04 MHz
  CHECK(std::abs(f.value("fwhm") / (1e3 / (kPi * p.t2_star_ns)) - 1.0) < 0.4);

  SUBCASE("zero field gives one line at D") {
    const auto z = fit_spectrum(ModelId::lorentzian, odmr_scan(p, e, range(D - 5.0, D + 5.0, 101), 0.0));
    CHECK(z.value("center") == doctest::Approx(D).epsilon(1e-6));
  }
  SUBCASE("line separation doubles with B") {
    const double b = 80.0 / per_gauss(p);
    double split[2];
    for (int k = 0; k < 2; ++k) {
      const auto [fm, fp] = mw_transition_frequencies(ground_levels(p, (k + 1) * b));
      split[k] = odmr_center(p, e, (k + 1) * b, fp) - odmr_center(p, e, (k + 1) * b, fm);
    }
    CHECK(std::abs(split[1] / split[0] / 2.0 - 1.0) < 1e-6);
  }
  SUBCASE("center is converged in the sampling density") {
    auto e2 = e;
    e2.nodes *= 2;
    CwScanOptions o;
    o.line_nodes *= 2;
    const double fp = mw_transition_frequencies(ground_levels(p, B)).second;
    CHECK(std::abs(odmr_center(p, e2, B, fp, o) - odmr_center(p, e, B, fp)) <= 0.005 * 1.32);
  }
}

TEST_CASE("simultaneous recovery map") {
  const auto p = default_params();
  const auto e = EnsembleSpec::from(p);
  const double B = 27.5;
  const auto lv = ground_levels(p, B);
  const std::vector<double> sb{lv.f_minus - 10.0, lv.f_minus, lv.f_minus + 10.0};
  const std::vector<double> mw{lv.f_plus - 0.5, lv.f_plus, lv.f_plus + 0.5};
  const auto m = simultaneous_recovery_map(p, e, sb, mw, B);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      if (i != 1 || j != 1) CHECK(m.at(1, 1) > m.at(i, j));

  // -1 <-> +1 relabeling
  const auto swapped = simultaneous_recovery_map(p, e, std::vector<double>{lv.f_plus}, std::vector<double>{lv.f_minus}, B);
  CHECK(swapped.values[0] == doctest::Approx(m.at(1, 1)).epsilon(1e-4));

  // both tones far away: close to the floor wherever they are
  const auto off = simultaneous_recovery_map(p, e, std::vector<double>{lv.f_minus - 900.0, lv.f_minus - 600.0},
                                             std::vector<double>{lv.f_plus + 300.0, lv.f_plus + 400.0}, B);
  for (double v : off.values) CHECK(v == doctest::Approx(off.values[0]).epsilon(2e-2));
  CHECK(m.at(1, 1) > *std::max_element(off.values.begin(), off.values.end()));
  CHECK_THROWS_AS(simultaneous_recovery_map(p, e, sb, mw, 0.0), DomainError);
}

TEST_CASE("spectra serialize") {
  Spectrum s{{1.0, 2.0}, {0.5, 0.25}, {0.0, 0.1}};
  std::ostringstream os;
  s.write_csv(os);
  CHECK(os.str().rfind("axis,value,sigma\n", 0) == 0);
  s.axis = {2.0, 1.0};
  CHECK_THROWS_AS(s.check(), DomainError);
}

TEST_CASE("derived scalars") {
  // quoted values are rounded
  CHECK(lifetime_limited_linewidth(156.3) == doctest::Approx(2.04).epsilon(5e-3));
  CHECK(lifetime_limited_linewidth(78.15) == doctest::Approx(4.07).epsilon(5e-3));
  CHECK(lifetime_limited_linewidth(1e12) < 1e-9);
  CHECK(addressed_fraction(31.0, 5.1) == doctest::Approx(0.608).epsilon(1e-3));
  CHECK(addressed_fraction(31.0, 3.1) == doctest::Approx(1.0));
  CHECK(addressed_fraction(3100.0, 3.1) == doctest::Approx(100.0));
  CHECK_THROWS_AS(addressed_fraction(0.0, 1.0), DomainError);
}

}
