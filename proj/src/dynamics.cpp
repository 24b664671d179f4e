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

#include "crspin/dynamics.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <cmath>
#include <numbers>

#include "crspin/errors.hpp"
#include "crspin/expm.hpp"
#include "crspin/kernels.hpp"

namespace crspin {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Mat4c ket_bra(int i, int j) {
  Mat4c m = Mat4c::Zero();
  m(i, j) = 1.0;
  return m;
}

// vec(A X B) = (B^T kron A) vec(X)
Super kron(const Mat4c& bt, const Mat4c& a) {
  Super s;
  for (int cb = 0; cb < 4; ++cb)
    for (int rb = 0; rb < 4; ++rb) s.block<4, 4>(4 * rb, 4 * cb) = bt(rb, cb) * a;
  return s;
}

void add_dissipator(Super& g, const Mat4c& l, double rate) {
  if (rate <= 0.0) return;
  const Mat4c id = Mat4c::Identity();
  const Mat4c ldl = l.adjoint() * l;
  g += rate * (kron(l.conjugate(), l) - 0.5 * kron(id, ldl) - 0.5 * kron(ldl.transpose(), id));
}

// Ground-ground jump |g_j><g_i| at the same rate for every ordered pair.
void add_pairwise_mixing(Super& g, double rate) {
  if (rate <= 0.0) return;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) add_dissipator(g, ket_bra(j, i), rate);
}

double thermal_rate(const Environment& env) { return std::isfinite(env.t1_us) ? 1.0 / (3.0 * env.t1_us) : 0.0; }

}  // namespace

QuantumState QuantumState::thermal() {
  QuantumState s;
  for (int i = 0; i < 3; ++i) s.rho(i, i) = 1.0 / 3.0;
  return s;
}

QuantumState QuantumState::basis(Level level) {
  QuantumState s;
  s.rho(level, level) = 1.0;
  return s;
}

double QuantumState::hermiticity_error() const { return (rho - rho.adjoint()).cwiseAbs().maxCoeff(); }

double QuantumState::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Mat4c> es(0.5 * (rho + rho.adjoint()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double QuantumState::purity() const { return (rho * rho).trace().real(); }

void QuantumState::hermitize() { rho = 0.5 * (rho + rho.adjoint()).eval(); }

Vec16c QuantumState::vec() const { return Eigen::Map<const Vec16c>(rho.data()); }

QuantumState QuantumState::from_vec(const Vec16c& v) {
  QuantumState s;
  s.rho = Eigen::Map<const Mat4c>(v.data());
  return s;
}

Environment make_environment(const DefectParams& p, double temperature_K, DephasingMode mode) {
  Environment env;
  env.t1_us = 1e6 / t1_rate_per_s(p.t1_model, temperature_K);
  env.dephasing = mode;
  return env;
}

double pump_lineshape(double delta_MHz, double fwhm_MHz) {
  const double hw = 0.5 * fwhm_MHz;
  return hw * hw / (delta_MHz * delta_MHz + hw * hw);
}

Super coherent_generator(const std::vector<MicrowaveDrive>& mw) {
  Mat4c h = Mat4c::Zero();
  for (const auto& d : mw) {
    const int t = d.target == MwTransition::plus ? kGPlus : kGMinus;
    h(t, t) += kTwoPi * d.detuning_MHz;
    const cplx c = kTwoPi * 0.5 * d.rabi_MHz * std::polar(1.0, d.phase_rad);
    h(kG0, t) += c;
    h(t, kG0) += std::conj(c);
  }
  // -i (I kron H - H^T kron I), written out entrywise.
  Super g = Super::Zero();
  const cplx mi(0.0, -1.0);
  for (int col = 0; col < 4; ++col)
    for (int row = 0; row < 4; ++row) {
      const int p = vec_index(row, col);
      for (int k = 0; k < 4; ++k) {
        g(p, vec_index(k, col)) += mi * h(row, k);
        g(p, vec_index(row, k)) -= mi * h(k, col);
      }
    }
  return g;
}

Super dissipative_generator(const DefectParams& p, const std::array<double, 3>& pump, bool probe,
                            const OpticalDetunings& detunings, const Environment& env) {
  Super g = Super::Zero();
  for (int i = 0; i < 3; ++i) {
    const double w = pump[static_cast<std::size_t>(i)];
    if (w < 0.0) throw DomainError("pump rate must be >= 0");
    add_dissipator(g, ket_bra(kExcited, i), w * pump_lineshape(detunings[static_cast<std::size_t>(i)], p.homog_fwhm_MHz));
  }
  for (int j = 0; j < 3; ++j)
    add_dissipator(g, ket_bra(j, kExcited), p.branching[static_cast<std::size_t>(j)] / p.optical_lifetime_us);

  const double gamma = thermal_rate(env);
  add_pairwise_mixing(g, gamma);
  if (probe) add_pairwise_mixing(g, p.probe_reset_rate_per_us);

  if (env.dephasing == DephasingMode::from_t2_star) {
    const double kappa = 1e3 / p.t2_star_ns - 2.0 * gamma;
    if (kappa < 0.0)
      throw ConfigError("defect.T2_star", "1/T2* is below the T1 limit 2/(3 T1); dephasing rate would be negative");
    for (int j = 0; j < 3; ++j) add_dissipator(g, ket_bra(j, j), kappa);
  }
  return g;
}

Super build_generator(const DefectParams& p, const DriveSet& d, const OpticalDetunings& detunings,
                      const Environment& env) {
  return dissipative_generator(p, d.pump, d.probe, detunings, env) + coherent_generator(d.mw);
}

Super propagator(const Super& g, double t_us) {
  if (!(t_us >= 0.0)) throw DomainError("propagation time must be >= 0");
  if (t_us == 0.0) return Super::Identity();
  return Super(expm(MatXc(g * t_us)));
}

QuantumState apply(const Super& p, const QuantumState& s) {
  Vec16c out;
  const Vec16c in = s.vec();
  kernels::cmatvec(p.data(), in.data(), out.data(), 16);
  QuantumState r = QuantumState::from_vec(out);
  r.hermitize();
  return r;
}

QuantumState propagate_segment(const QuantumState& s, const Super& g, double t_us) {
  return crspin::apply(propagator(g, t_us), s);
}

Trajectory evolve_sequence(const QuantumState& s0, const std::vector<DriveSet>& segments, const DefectParams& p,
                           const Environment& env, const OpticalDetunings& detunings, double sample_dt_us) {
  if (segments.empty()) throw DomainError("evolve_sequence needs at least one segment");
  if (!(sample_dt_us > 0.0)) throw DomainError("sample_dt must be > 0");
  Trajectory tr;
  tr.states.push_back(s0);
  double t = 0.0;
  QuantumState s = s0;
  for (const auto& seg : segments) {
    if (!(seg.duration_us > 0.0)) throw DomainError("segment duration must be > 0");
    const Super g = build_generator(p, seg, detunings, env);
    auto intervals = static_cast<std::size_t>(std::ceil(seg.duration_us / sample_dt_us));
    intervals = std::max<std::size_t>(2, intervals + (intervals % 2));
    const double dt = seg.duration_us / static_cast<double>(intervals);
    const Super step = propagator(g, dt);
    SegmentTrace st;
    st.t_start_us = t;
    st.dt_us = dt;
    st.excited.reserve(intervals + 1);
    st.excited.push_back(s.population(kExcited));
    Vec16c v = s.vec(), w;
    for (std::size_t k = 0; k < intervals; ++k) {
      kernels::cmatvec(step.data(), v.data(), w.data(), 16);
      v = w;
      st.excited.push_back(v(vec_index(kExcited, kExcited)).real());
    }
    // Boundary state from one exponential of the whole segment, not the product of steps.
    s = propagate_segment(s, g, seg.duration_us);
    tr.states.push_back(s);
    tr.segments.push_back(std::move(st));
    t += seg.duration_us;
  }
  return tr;
}

Row16c trace_row() {
  Row16c r = Row16c::Zero();
  for (int i = 0; i < 4; ++i) r(vec_index(i, i)) = 1.0;
  return r;
}

QuantumState steady_state(const Super& g) {
  Super a = g;
  a.row(0) = trace_row();
  Vec16c rhs = Vec16c::Zero();
  rhs(0) = 1.0;
  Eigen::FullPivLU<Super> lu(a);
  const double scale = g.cwiseAbs().maxCoeff();
  lu.setThreshold(1e-13);
  if (!lu.isInvertible()) {
    Eigen::FullPivLU<Super> glu(g);
    glu.setThreshold(1e-13 * std::max(scale, 1.0) / std::max(glu.maxPivot(), 1e-300));
    throw DegenerateSteadyState(static_cast<std::size_t>(glu.dimensionOfKernel()));
  }
  QuantumState s = QuantumState::from_vec(lu.solve(rhs));
  s.hermitize();
  return s;
}

QuantumState steady_state_or_relax(const Super& g, const QuantumState& s0, double t_us) {
  try {
    return steady_state(g);
  } catch (const DegenerateSteadyState&) {
    return propagate_segment(s0, g, t_us);
  }
}

Eigen::Matrix4d rate_matrix(const DefectParams& p, const std::array<double, 3>& effective_pump, const Environment& env,
                            bool probe) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  for (int i = 0; i < 3; ++i) {
    const double w = effective_pump[static_cast<std::size_t>(i)];
    m(kExcited, i) += w;
    m(i, i) -= w;
  }
  for (int j = 0; j < 3; ++j) {
    const double r = p.branching[static_cast<std::size_t>(j)] / p.optical_lifetime_us;
    m(j, kExcited) += r;
    m(kExcited, kExcited) -= r;
  }
  const double mix = thermal_rate(env) + (probe ? p.probe_reset_rate_per_us : 0.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) {
        m(j, i) += mix;
        m(i, i) -= mix;
      }
  return m;
}

Eigen::Vector4d steady_populations(const Eigen::Matrix4d& m) {
  Eigen::Matrix4d a = m;
  a.row(0).setOnes();
  // Fast closed-form inverse; rank-revealing LU only when it looks singular.
  const double scale = a.cwiseAbs().rowwise().sum().prod();
  const double det = a.determinant();
  if (std::abs(det) > 1e-13 * scale) return a.inverse().col(0);
  Eigen::FullPivLU<Eigen::Matrix4d> lu(a);
  lu.setThreshold(1e-15);
  if (!lu.isInvertible()) throw DegenerateSteadyState(static_cast<std::size_t>(5 - lu.rank()));
  return lu.solve(Eigen::Vector4d::UnitX());
}

}  // namespace crspin
