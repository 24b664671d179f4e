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
#include <array>
#include <complex>
#include <limits>
#include <vector>

#include "crspin/params.hpp"

namespace crspin {

using cplx = std::complex<double>;
using Mat4c = Eigen::Matrix<cplx, 4, 4>;
using Super = Eigen::Matrix<cplx, 16, 16>;
using Vec16c = Eigen::Matrix<cplx, 16, 1>;
using Row16c = Eigen::Matrix<cplx, 1, 16>;

/// Basis order of every 4x4 operator.
enum Level : int { kG0 = 0, kGMinus = 1, kGPlus = 2, kExcited = 3 };

inline constexpr int vec_index(int row, int col) { return row + 4 * col; }

struct QuantumState {
  Mat4c rho = Mat4c::Zero();

  static QuantumState thermal();  ///< equal ground populations
  static QuantumState basis(Level level);

  double population(Level level) const { return rho(level, level).real(); }
  double trace() const { return rho.trace().real(); }
  double hermiticity_error() const;
  double min_eigenvalue() const;
  double purity() const;
  void hermitize();

  Vec16c vec() const;
  static QuantumState from_vec(const Vec16c& v);
};

enum class MwTransition { minus, plus };

/// Rotating-frame drive on |g0> <-> |target>. Detuning is (level - tone), MHz.
struct MicrowaveDrive {
  MwTransition target = MwTransition::plus;
  double rabi_MHz = 0.0;
  double detuning_MHz = 0.0;
  double phase_rad = 0.0;
};

struct DriveSet {
  /// Peak incoherent pump rate out of each ground sublevel (1/us), before the
  /// optical-detuning Lorentzian.
  std::array<double, 3> pump{0.0, 0.0, 0.0};
  std::vector<MicrowaveDrive> mw;
  double duration_us = 0.0;
  /// Switches on the probe back-action (ground-state mixing) for this segment.
  bool probe = false;
};

enum class DephasingMode {
  /// Pure dephasing chosen so free ground coherences decay at 1/T2*.
  from_t2_star,
  /// Only population processes dephase (ensemble packets).
  none,
};

struct Environment {
  double t1_us = std::numeric_limits<double>::infinity();
  DephasingMode dephasing = DephasingMode::from_t2_star;
};

/// T1 from the defect's relaxation model at temperature T.
Environment make_environment(const DefectParams& p, double temperature_K,
                             DephasingMode mode = DephasingMode::from_t2_star);

/// Optical detuning of the pump acting on each ground sublevel, MHz.
using OpticalDetunings = std::array<double, 3>;

/// Lindblad generator on column-major vec(rho). Time in us.
/// Throws ConfigError when T2* is shorter than the T1 limit allows.
Super build_generator(const DefectParams& p, const DriveSet& d, const OpticalDetunings& detunings,
                      const Environment& env);

/// The two halves of build_generator: everything except the microwave
/// Hamiltonian, and the Hamiltonian term -i[H, .] alone.
Super dissipative_generator(const DefectParams& p, const std::array<double, 3>& pump, bool probe,
                            const OpticalDetunings& detunings, const Environment& env);
Super coherent_generator(const std::vector<MicrowaveDrive>& mw);

/// Unit-peak Lorentzian pump factor for detuning delta (MHz) and FWHM.
double pump_lineshape(double delta_MHz, double fwhm_MHz);

/// expm(G t)
Super propagator(const Super& g, double t_us);
QuantumState propagate_segment(const QuantumState& s, const Super& g, double t_us);
/// P * vec(rho), re-Hermitized.
QuantumState apply(const Super& p, const QuantumState& s);

struct SegmentTrace {
  double t_start_us = 0.0;
  double dt_us = 0.0;
  /// rho_ee at t_start + k dt, k = 0..n-1; n - 1 is even.
  std::vector<double> excited;
};

struct Trajectory {
  /// State at every segment boundary (size = segments + 1).
  std::vector<QuantumState> states;
  std::vector<SegmentTrace> segments;
};

/// Applies the segments in order. Every segment is sampled with an even
/// number of intervals no wider than sample_dt.
Trajectory evolve_sequence(const QuantumState& s0, const std::vector<DriveSet>& segments, const DefectParams& p,
                           const Environment& env, const OpticalDetunings& detunings = {0.0, 0.0, 0.0},
                           double sample_dt_us = 1.0);

/// Unique stationary state. Throws DegenerateSteadyState otherwise.
QuantumState steady_state(const Super& g);
/// steady_state, falling back to propagating s0 for t_us when degenerate.
QuantumState steady_state_or_relax(const Super& g, const QuantumState& s0, double t_us);

/// Population-only version of the generator (no coherent drive), d p / dt = M p.
Eigen::Matrix4d rate_matrix(const DefectParams& p, const std::array<double, 3>& effective_pump, const Environment& env,
                            bool probe);
Eigen::Vector4d steady_populations(const Eigen::Matrix4d& m);

/// Trace functional: row r with r * vec(rho) = tr(rho).
Row16c trace_row();

}  // namespace crspin
