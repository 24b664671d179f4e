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
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace crspin {

enum class ModelId {
  gaussian_two_peak,
  lorentzian,
  lorentzian_pair,
  exp_decay,
  exp_rise,
  rabi_damped_cosine,
  ramsey_model,
  eseem_model,
  orbach,
  raman,
  constant,
  linear,
};

std::string_view to_string(ModelId id);
/// Throws FitError for an unknown name.
ModelId model_from_string(std::string_view name);
std::vector<ModelId> all_models();

/// How the initializer treats a parameter before the LM iterations.
enum class ParamRole {
  nonlinear,
  /// enters the model linearly; re-solved by weighted linear least squares
  linear,
  /// peak position; scanned across the data range
  location,
  /// oscillation frequency; scanned on a log grid around the guess
  frequency,
};

struct ParamInfo {
  std::string name;
  std::string unit;
  ParamRole role = ParamRole::nonlinear;
  bool fixed = false;
};

/// Parameter layouts (x units in brackets):
///   gaussian_two_peak [GHz]: amp0 center0 fwhm0 amp1 fwhm1 separation offset;
///                            second peak at center0 - separation, separation fixed
///   lorentzian [MHz]:       amp center fwhm offset
///   lorentzian_pair [MHz]:  amp1 center1 amp2 center2 fwhm offset (shared width)
///   exp_decay [us]:         A tau C                 A e^{-t/tau} + C
///   exp_rise [us]:          P tau C                 P (1 - e^{-t/tau}) + C
///   rabi_damped_cosine [us]: A Td f C              A e^{-t/Td} cos(2 pi f t) + C
///   ramsey_model [us]:      A T2s delta phi C       A e^{-t/T2s} cos(2 pi delta t + phi) + C
///   eseem_model [us]:       A T2 n K1 w1 K2 w2 C    A e^{-(t/T2)^n} prod(1 - K sin^2(pi w tau)) + C,
///                           w in kHz, tau = tau_factor * t
///   orbach [K]:             A E                     A e^{-E / kB T}, A in 1/s, E in meV
///   raman [K]:              A dT n                  A (T - dT)^n, n fixed
///   constant:               c
///   linear:                 a b                     a + b x
struct FitModel {
  ModelId id = ModelId::constant;
  std::vector<ParamInfo> params;
  /// eseem_model only: tau = tau_factor * t (0.5 when t is the total free evolution).
  double tau_factor = 0.5;

  std::size_t size() const { return params.size(); }
  std::size_t free_count() const;
  std::size_t index_of(std::string_view name) const;
  /// Throws DomainError (with the sample index) outside the model domain.
  void eval(std::span<const double> x, std::span<const double> theta, std::span<double> y) const;
  std::vector<double> eval(std::span<const double> x, std::span<const double> theta) const;
};

FitModel make_model(ModelId id);

std::vector<double> eval_model(ModelId id, std::span<const double> x, std::span<const double> theta);
double eval_model(ModelId id, double x, std::span<const double> theta);

struct FitData {
  std::vector<double> x, y, sigma;
  std::size_t size() const { return x.size(); }
};

/// FNV-1a over the raw bytes of x, y and sigma.
std::uint64_t data_fingerprint(const FitData& d);

struct FitOptions {
  int max_iterations = 200;
  double relative_tolerance = 1e-10;
  double lambda0 = 1e-3;
  /// Re-solve linear parameters and scan location/frequency parameters before
  /// the LM iterations.
  bool initialize = true;
  int scan_points = 241;
};

struct FitResult {
  ModelId model = ModelId::constant;
  std::vector<std::string> names;
  std::vector<std::string> units;
  std::vector<bool> fixed;
  std::vector<double> theta;
  std::vector<double> errors;
  Eigen::MatrixXd covariance;
  double chi2 = 0.0;
  double reduced_chi2 = 0.0;
  std::size_t points = 0;
  std::size_t dof = 0;
  int iterations = 0;
  bool converged = false;
  std::string message;
  /// chi^2 after the initializer and after every accepted step.
  std::vector<double> chi2_history;
  std::uint64_t fingerprint = 0;

  double value(std::string_view name) const;
  double error(std::string_view name) const;
};

/// Levenberg-Marquardt on weighted residuals (y - f) / sigma.
/// Throws FitError for too few points, sigma <= 0, or a singular normal matrix.
FitResult fit(const FitModel& model, const FitData& data, std::vector<double> theta0, const FitOptions& opt = {});

struct RankEntry {
  std::size_t input_index = 0;
  ModelId model = ModelId::constant;
  double reduced_chi2 = 0.0;
  /// reduced chi^2 minus the best one
  double delta = 0.0;
};

/// Ascending reduced chi^2; ties keep input order. Throws FitError when the fits
/// were made on different data.
std::vector<RankEntry> compare_models(const std::vector<FitResult>& fits);

/// Max over parameters of |J_forward - J_central| / max|J_central| per column.
double jacobian_check(const FitModel& model, std::span<const double> x, std::span<const double> theta);

/// Data-driven starting point for each model.
struct GuessHints {
  double separation = 1.063;  ///< gaussian_two_peak, GHz
  int raman_exponent = 9;
};
std::vector<double> initial_guess(const FitModel& model, const FitData& data, const GuessHints& hints = {});

/// Dominant frequency of y(x) on a uniform grid (mean removed), by periodogram.
double dominant_frequency(std::span<const double> x, std::span<const double> y);

/// Structured report (JSON text).
std::string fit_report_json(const FitResult& r);

}  // namespace crspin
