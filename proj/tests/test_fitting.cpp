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

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>
#include <vector>

#include "crspin/detection.hpp"
#include "crspin/errors.hpp"
#include "crspin/fitting.hpp"
#include "crspin/suite.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace crspin;

namespace {

std::vector<double> range(double a, double b, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = a + (b - a) * i / (n - 1);
  return v;
}

FitData synth(ModelId id, const std::vector<double>& x, const std::vector<double>& theta, double noise = 0.0,
              std::uint64_t seed = 1) {
  FitData d;
  d.x = x;
  d.y = eval_model(id, x, theta);
  d.sigma.assign(x.size(), 1.0);
  if (noise > 0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    for (std::size_t i = 0; i < x.size(); ++i) {
      d.sigma[i] = noise * std::abs(d.y[i]);
      d.y[i] += d.sigma[i] * g(rng);
    }
  }
  return d;
}

}  // namespace

TEST_SUITE("fitting") {

TEST_CASE("model evaluation") {
  const std::vector<double> es{1000.0, 81.0, 1.9, 0.15, 87.5, 0.10, 68.0, 50.0};
  CHECK(eval_model(ModelId::eseem_model, 0.0, es) == doctest::Approx(1050.0));
  // E / kB = 20 meV / 0.08617 meV/K = 232.1 K
  CHECK(eval_model(ModelId::orbach, 20.0, std::vector<double>{3.0, 20.0}) ==
        doctest::Approx(3.0 * std::exp(-232.09 / 20.0)).epsilon(1e-4));
  CHECK(eval_model(ModelId::exp_rise, 1270.0, std::vector<double>{64.0, 1270.0, 0.0}) ==
        doctest::Approx(64.0 * (1 - std::exp(-1.0))));
  CHECK(eval_model(ModelId::exp_decay, 156.3, std::vector<double>{2.0, 156.3, 1.0}) ==
        doctest::Approx(2.0 * std::exp(-1.0) + 1.0));
  CHECK(eval_model(ModelId::raman, 15.0, std::vector<double>{1.0, 3.2, 9.0}) == doctest::Approx(std::pow(11.8, 9)));
  CHECK(eval_model(ModelId::linear, 2.0, std::vector<double>{1.0, 0.5}) == 2.0);
  // eseem dip: K1 sin^2(pi w1 tau) = K1 at tau = 1 / (2 w1); t = 2 tau
  const std::vector<double> dip{1.0, 1e12, 1.0, 0.1, 87.5, 0.0, 68.0, 0.0};  // envelope ~ 1
  CHECK(eval_model(ModelId::eseem_model, 2.0 / (2 * 0.0875), dip) == doctest::Approx(0.9).epsilon(1e-9));
}

TEST_CASE("domain errors carry the row") {
  const auto m = make_model(ModelId::raman);
  try {
    m.eval(std::vector<double>{15.0, 10.0, 3.0}, std::vector<double>{1.0, 3.2, 9.0});
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(e.index() == 2);
  }
}

TEST_CASE("every model has parameters and a name") {
  for (auto id : all_models()) {
    const auto m = make_model(id);
    CHECK(m.size() >= 1);
    CHECK(model_from_string(to_string(id)) == id);
  }
  CHECK_THROWS_AS(model_from_string("voigt"), FitError);
}

TEST_CASE("exp_decay recovers T_opt") {
  const auto d = synth(ModelId::exp_decay, range(0.0, 600.0, 121), {1e4, 156.3, 20.0});
  const auto r = fit(make_model(ModelId::exp_decay), d, {2e4, 90.0, 10.0});
  CHECK(r.value("tau") == doctest::Approx(156.3).epsilon(1e-6));
  CHECK(r.converged);
}

TEST_CASE("constant model gives the weighted mean") {
  FitData d{{0, 1, 2, 3, 4}, {1.0, 2.0, 3.0, 2.5, 1.5}, {1, 1, 1, 1, 1}};
  const auto r = fit(make_model(ModelId::constant), d, {0.0});
  CHECK(r.theta[0] == doctest::Approx(2.0));
  // sum of squared deviations / (N - 1)
  CHECK(r.reduced_chi2 == doctest::Approx(2.5 / 4.0));
  CHECK(r.errors[0] == doctest::Approx(std::sqrt(r.reduced_chi2 / 5.0)));
}

TEST_CASE("linear model has the closed-form solution") {
  FitData d{{0, 1, 2, 3}, {1.0, 2.9, 5.2, 6.9}, {1, 1, 1, 1}};
  const auto r = fit(make_model(ModelId::linear), d, {0.0, 0.0});
  // normal equations by hand: b = Sxy / Sxx about the means
  const double xm = 1.5, ym = (1.0 + 2.9 + 5.2 + 6.9) / 4;
  double sxy = 0, sxx = 0;
  for (int i = 0; i < 4; ++i) {
    sxy += (d.x[i] - xm) * (d.y[i] - ym);
    sxx += (d.x[i] - xm) * (d.x[i] - xm);
  }
  CHECK(r.theta[1] == doctest::Approx(sxy / sxx).epsilon(1e-12));
  CHECK(r.theta[0] == doctest::Approx(ym - sxy / sxx * xm).epsilon(1e-12));
}

TEST_CASE("sigma rescaling leaves the estimate unchanged") {
  auto d = synth(ModelId::rabi_damped_cosine, range(0.0, 10.0, 201), {300.0, 4.76, 0.9, 500.0}, 0.02, 3);
  const auto m = make_model(ModelId::rabi_damped_cosine);
  const std::vector<double> t0{250.0, 4.0, 0.92, 480.0};
  const auto r1 = fit(m, d, t0);
  for (auto& s : d.sigma) s *= 3.0;
  const auto r2 = fit(m, d, t0);
  for (std::size_t k = 0; k < r1.theta.size(); ++k)
    CHECK(r2.theta[k] == doctest::Approx(r1.theta[k]).epsilon(1e-9));
  CHECK(r2.reduced_chi2 == doctest::Approx(r1.reduced_chi2 / 9.0).epsilon(1e-9));
  for (std::size_t k = 0; k < r1.errors.size(); ++k) CHECK(r2.errors[k] == doctest::Approx(r1.errors[k]).epsilon(1e-6));
}

TEST_CASE("chi2 never increases") {
  const auto d = synth(ModelId::ramsey_model, range(0.0, 1.5, 301), {100.0, 0.307, 5.0, 0.3, 200.0}, 0.01, 9);
  FitOptions o;
  o.initialize = false;
  const auto r = fit(make_model(ModelId::ramsey_model), d, {80.0, 0.25, 5.05, 0.2, 190.0}, o);
  REQUIRE(r.chi2_history.size() >= 2);
  for (std::size_t k = 1; k < r.chi2_history.size(); ++k) CHECK(r.chi2_history[k] <= r.chi2_history[k - 1]);
}

TEST_CASE("covariance is symmetric and positive semidefinite") {
  const auto d = synth(ModelId::lorentzian_pair, range(1055.0, 1070.0, 151), {100.0, 1060.6, 90.0, 1065.6, 1.32, 10.0},
                       0.02, 5);
  const auto r = fit(make_model(ModelId::lorentzian_pair), d, {90.0, 1060.5, 90.0, 1065.5, 1.5, 8.0});
  CHECK((r.covariance - r.covariance.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * r.covariance.cwiseAbs().maxCoeff());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r.covariance);
  CHECK(es.eigenvalues().minCoeff() >= -1e-12 * es.eigenvalues().maxCoeff());
  for (std::size_t k = 0; k < r.errors.size(); ++k)
    CHECK(r.errors[k] == doctest::Approx(std::sqrt(r.covariance(static_cast<long>(k), static_cast<long>(k)))));
  CHECK(r.reduced_chi2 >= 0.0);
}

TEST_CASE("fit input errors") {
  const auto m = make_model(ModelId::exp_decay);
  FitData few{{0, 1, 2}, {3, 2, 1}, {1, 1, 1}};
  CHECK_THROWS_AS(fit(m, few, {3, 1, 0}), FitError);
  FitData bad{{0, 1, 2, 3, 4}, {5, 3, 2, 1.5, 1.2}, {1, 1, 0, 1, 1}};
  try {
    fit(m, bad, {4, 1, 1});
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(e.index() == 2);
  }
  CHECK_THROWS_AS(fit(m, few, {1, 2}), FitError);
}

TEST_CASE("two-peak fit recovers the splitting when it is free") {
  const std::vector<double> truth{1.0, 0.5, 6.87, 2.0, 3.34, 1.06311, 0.0};
  auto d = synth(ModelId::gaussian_two_peak, range(-15.0, 15.0, 301), truth, 0.01, 21);
  for (auto& s : d.sigma) s = std::max(s, 1e-3);
  auto m = make_model(ModelId::gaussian_two_peak);
  m.params[5].fixed = false;
  const auto r = fit(m, d, {0.8, 0.3, 6.0, 1.8, 3.0, 1.0, 0.0});
  CHECK(std::abs(r.value("separation") - 1.06311) < 3 * r.error("separation"));
  CHECK(r.value("fwhm0") == doctest::Approx(6.87).epsilon(0.02));
  CHECK(r.value("fwhm1") == doctest::Approx(3.34).epsilon(0.02));
}

TEST_CASE("model comparison") {
  // raman data with 10 % noise
  const std::vector<double> temps{15, 18, 21, 24, 27, 30};
  auto d = synth(ModelId::raman, temps, {kDefaultRamanPrefactor, 3.2, 9.0}, 0.10, 77);
  const auto ram = fit(make_model(ModelId::raman), d, initial_guess(make_model(ModelId::raman), d));
  const auto orb = fit(make_model(ModelId::orbach), d, initial_guess(make_model(ModelId::orbach), d));
  const auto rank = compare_models({orb, ram});
  REQUIRE(rank.size() == 2);
  CHECK(rank[0].model == ModelId::raman);
  CHECK(rank[0].delta == 0.0);
  CHECK(rank[1].delta > 0.0);
  CHECK(compare_models({ram}).size() == 1);
  const auto tie = compare_models({ram, ram, ram});
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(tie[i].input_index == i);
    CHECK(tie[i].delta == 0.0);
  }
  auto d2 = d;
  d2.y[0] *= 1.01;
  const auto other = fit(make_model(ModelId::raman), d2, ram.theta);
  CHECK_THROWS_AS(compare_models({ram, other}), FitError);
}

TEST_CASE("jacobian checks") {
  CHECK(jacobian_check(make_model(ModelId::exp_decay), range(0.0, 600.0, 61), std::vector<double>{1e4, 156.3, 20.0}) <
        1e-5);
  CHECK(jacobian_check(make_model(ModelId::linear), range(-3.0, 3.0, 13), std::vector<double>{1.5, 0.25}) < 1e-10);
  // three periods of the 87.5 kHz component with tau = t / 2
  CHECK(jacobian_check(make_model(ModelId::eseem_model), range(0.0, 3 * 2 / 0.0875, 200),
                       std::vector<double>{1000.0, 81.0, 1.9, 0.15, 87.5, 0.10, 68.0, 50.0}) < 1e-4);
  for (auto id : all_models()) {
    const auto c = round_trip_case(id);
    CAPTURE(to_string(id));
    CHECK(jacobian_check(make_model(id), c.x, c.truth) < 1e-4);
  }
}

TEST_CASE("noiseless round trip for every model") {
  for (auto id : all_models()) {
    const int trials = id == ModelId::eseem_model ? 30 : 100;
    const auto s = round_trip(id, trials, derive_seed(20261018, static_cast<std::uint64_t>(id)));
    CAPTURE(to_string(id));
    CHECK(s.recovered >= (95 * trials + 99) / 100);
  }
}

TEST_CASE("dominant frequency") {
  const auto x = range(0.0, 1.5, 301);
  std::vector<double> y;
  for (double t : x) y.push_back(3.0 + std::cos(2 * 3.14159265358979 * 5.0 * t + 0.4));
  CHECK(dominant_frequency(x, y) == doctest::Approx(5.0).epsilon(0.02));
}

TEST_CASE("report is JSON with every parameter") {
  const auto d = synth(ModelId::exp_decay, range(0.0, 600.0, 61), {1e4, 156.3, 20.0}, 0.01, 2);
  const auto r = fit(make_model(ModelId::exp_decay), d, {1e4, 150.0, 10.0});
  const auto j = nlohmann::json::parse(fit_report_json(r));
  CHECK(j.at("model") == "exp_decay");
  CHECK(j.dump().find("tau") != std::string::npos);
  CHECK(j.dump().find("reduced_chi2") != std::string::npos);
}

}
