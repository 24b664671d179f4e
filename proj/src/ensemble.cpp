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


#include "crspin/ensemble.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>

#include "crspin/detection.hpp"
#include "crspin/errors.hpp"
#include "crspin/kernels.hpp"
#include "crspin/spin_core.hpp"

namespace crspin {
namespace {

constexpr double kPi = std::numbers::pi;

double lorentz_density(double x, double fwhm, double center) {
  const double hw = 0.5 * fwhm;
  const double d = x - center;
  return hw / (kPi * (d * d + hw * hw));
}

void require_nodes(int n) {
  if (n < 1) throw DomainError("quadrature needs at least one node");
}

}  // namespace

QuadratureRule gauss_legendre(int n) {
  require_nodes(n);
  QuadratureRule r;
  r.nodes.resize(static_cast<std::size_t>(n));
  r.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    const auto lo = static_cast<std::size_t>(i);
    const auto hi = static_cast<std::size_t>(n - 1 - i);
    r.nodes[lo] = -x;
    r.nodes[hi] = x;
    r.weights[lo] = w;
    r.weights[hi] = w;
  }
  if (n % 2 == 1) r.nodes[static_cast<std::size_t>(n / 2)] = 0.0;
  return r;
}

QuadratureRule gauss_hermite_normal(int n) {
  require_nodes(n);
  // Golub-Welsch on the Jacobi matrix of the He_k recurrence.
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(std::max(n - 1, 0));
  for (int k = 1; k < n; ++k) sub(k - 1) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  QuadratureRule r;
  for (int i = 0; i < n; ++i) {
    r.nodes.push_back(es.eigenvalues()(i));
    const double v = es.eigenvectors()(0, i);
    r.weights.push_back(v * v);
  }
  return r;
}

QuadratureRule lorentzian_rule_focused(int n, double fwhm, double center, double focus, double scale) {
  if (!(fwhm > 0.0) || !(scale > 0.0)) throw DomainError("Lorentzian rule needs positive widths");
  const QuadratureRule gl = gauss_legendre(n);
  QuadratureRule r;
  for (std::size_t i = 0; i < gl.size(); ++i) {
    const double theta = 0.5 * kPi * gl.nodes[i];
    const double c = std::cos(theta);
    const double x = focus + scale * std::tan(theta);
    r.nodes.push_back(x);
    r.weights.push_back(0.5 * kPi * gl.weights[i] * scale / (c * c) * lorentz_density(x, fwhm, center));
  }
  return r;
}

QuadratureRule lorentzian_rule(int n, double fwhm, double center) {
  QuadratureRule r = lorentzian_rule_focused(n, fwhm, center, center, 0.5 * fwhm);
  // Exact in closed form: 0.5 * pi * w_i * (1 / pi).
  const QuadratureRule gl = gauss_legendre(n);
  for (std::size_t i = 0; i < r.size(); ++i) r.weights[i] = 0.5 * gl.weights[i];
  return r;
}

QuadratureRule lorentzian_samples(int n, double fwhm, double center, std::uint64_t seed) {
  require_nodes(n);
  if (!(fwhm > 0.0)) throw DomainError("Lorentzian samples need a positive width");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  QuadratureRule r;
  for (int i = 0; i < n; ++i) {
    r.nodes.push_back(center + 0.5 * fwhm * std::tan(kPi * (u(rng) - 0.5)));
    r.weights.push_back(1.0 / n);
  }
  return r;
}

EnsembleSpec EnsembleSpec::from(const DefectParams& p) {
  EnsembleSpec e;
  e.inhom_fwhm_ms0_GHz = p.inhom_fwhm_ms0_GHz;
  e.inhom_fwhm_ms1_GHz = p.inhom_fwhm_ms1_GHz;
  e.splitting_MHz = p.zero_field_splitting_MHz;
  e.spin_fwhm_MHz = p.odmr_fwhm_MHz;
  return e;
}

void EnsembleSpec::validate() const {
  if (!(inhom_fwhm_ms0_GHz > 0.0)) throw ConfigError("ensemble.inhom_fwhm_ms0", "must be > 0");
  if (!(inhom_fwhm_ms1_GHz > 0.0)) throw ConfigError("ensemble.inhom_fwhm_ms1", "must be > 0");
  if (!(spin_fwhm_MHz > 0.0)) throw ConfigError("ensemble.spin_fwhm", "must be > 0");
  if (nodes < 16) throw ConfigError("ensemble.nodes", "must be >= 16");
}

QuadratureRule EnsembleSpec::spin_rule() const {
  validate();
  if (sampling == Sampling::monte_carlo) return lorentzian_samples(nodes, spin_fwhm_MHz, 0.0, derive_seed(seed, 0));
  return lorentzian_rule(nodes, spin_fwhm_MHz);
}

void Spectrum::check() const {
  if (signal.size() != axis.size() || sigma.size() != axis.size()) throw DomainError("spectrum columns differ in length");
  for (std::size_t i = 1; i < axis.size(); ++i)
    if (!(axis[i] > axis[i - 1])) throw DomainError("spectrum axis is not strictly increasing", i);
  for (std::size_t i = 0; i < sigma.size(); ++i)
    if (!(sigma[i] >= 0.0)) throw DomainError("negative sigma", i);
}

void Spectrum::write_csv(std::ostream& os) const {
  check();
  os << "axis,value,sigma\n";
  os.precision(17);
  for (std::size_t i = 0; i < axis.size(); ++i) os << axis[i] << ',' << signal[i] << ',' << sigma[i] << '\n';
}

void Spectrum2D::write_csv(std::ostream& os) const {
  os << "sideband,mw,value\n";
  os.precision(17);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j) os << x[i] << ',' << y[j] << ',' << at(i, j) << '\n';
}

Spectrum ple_spectrum(const DefectParams& p, const EnsembleSpec& e, std::span<const double> laser_GHz,
                      const std::array<double, 3>& populations) {
  e.validate();
  const double f0 = e.inhom_fwhm_ms0_GHz, f1 = e.inhom_fwhm_ms1_GHz;
  const double c0 = 0.0, c1 = -1e-3 * p.zero_field_splitting_MHz;
  const double mid = 0.5 * (c0 + c1), reach = 5.0 * (f0 + f1);
  for (std::size_t i = 0; i < laser_GHz.size(); ++i)
    if (std::abs(laser_GHz[i] - mid) > reach) throw DomainError("laser detuning outside +-5 total FWHM", i);
  // Unit-area Gaussian peak height: 2 sqrt(ln 2 / pi) / FWHM.
  const double unit = 2.0 * std::sqrt(std::log(2.0) / kPi);
  Spectrum s;
  s.axis.assign(laser_GHz.begin(), laser_GHz.end());
  s.signal.assign(s.axis.size(), 0.0);
  s.sigma.assign(s.axis.size(), 0.0);
  s.axis_label = "laser_GHz";
  kernels::add_gaussian(s.axis.data(), s.size(), populations[0] * unit / f0, c0, f0, s.signal.data());
  kernels::add_gaussian(s.axis.data(), s.size(), (populations[1] + populations[2]) * unit / f1, c1, f1,
                        s.signal.data());
  s.check();
  return s;
}

namespace {

// Steady-state flux of one packet under CW light, per unit pump rate.
class CwPacket {
 public:
  CwPacket(const DefectParams& p, double B_G, const CwScanOptions& o)
      : p_(p), levels_(ground_levels(p, B_G)), o_(o) {
    env_ = make_environment(p, o.temperature_K, DephasingMode::none);
    if (!(o.burn_saturation > 0.0)) throw DomainError("burn_saturation must be > 0");
    w_ = o.burn_saturation / env_.t1_us;
  }

  // Effective pump per sublevel for a packet at optical offset x (MHz) and
  // spin detuning delta; sideband at `s` MHz below the primary when on.
  std::array<double, 3> pumps(double x, double delta, bool sideband, double s) const {
    const double f[3] = {0.0, levels_.f_minus + delta, levels_.f_plus + delta};
    std::array<double, 3> r{};
    for (int i = 0; i < 3; ++i) {
      const double nu = x - f[i];
      double l = pump_lineshape(nu, p_.homog_fwhm_MHz);
      if (sideband) l += pump_lineshape(nu + s, p_.homog_fwhm_MHz);
      r[static_cast<std::size_t>(i)] = w_ * l;
    }
    return r;
  }

  double rate_signal(const std::array<double, 3>& pump) const {
    const Eigen::Vector4d pop = steady_populations(rate_matrix(p_, pump, env_, false));
    return (pump[0] * pop(0) + pump[1] * pop(1) + pump[2] * pop(2)) / w_;
  }

  double mw_signal(const std::array<double, 3>& pump, double delta, double f_mw) const {
    std::vector<MicrowaveDrive> mw{
        {MwTransition::minus, o_.mw_rabi_MHz, levels_.f_minus + delta - f_mw, 0.0},
        {MwTransition::plus, o_.mw_rabi_MHz, levels_.f_plus + delta - f_mw, 0.0},
    };
    const Super g = dissipative_generator(p_, pump, false, {0.0, 0.0, 0.0}, env_) + coherent_generator(mw);
    const QuantumState s = steady_state(g);
    return (pump[0] * s.population(kG0) + pump[1] * s.population(kGMinus) + pump[2] * s.population(kGPlus)) / w_;
  }

  // Spin-detuning average of the microwave-induced change, split over the two
  // line resonances with a partition of unity so each gets a focused rule.
  double mw_excess(const EnsembleSpec& e, double x, bool sideband, double s, double f_mw) const {
    const double centers[2] = {f_mw - levels_.f_minus, f_mw - levels_.f_plus};
    const double scale = std::max(2.0 * o_.mw_rabi_MHz, 1e-3);
    double total = 0.0;
    for (int k = 0; k < 2; ++k) {
      const QuadratureRule q = lorentzian_rule_focused(o_.line_nodes, e.spin_fwhm_MHz, 0.0, centers[k], scale);
      for (std::size_t i = 0; i < q.size(); ++i) {
        const double d = q.nodes[i];
        double qs[2];
        for (int j = 0; j < 2; ++j) qs[j] = 1.0 / ((d - centers[j]) * (d - centers[j]) + scale * scale);
        const double part = qs[k] / (qs[0] + qs[1]);
        if (q.weights[i] * part == 0.0) continue;
        const auto pump = pumps(x, d, sideband, s);
        total += q.weights[i] * part * (mw_signal(pump, d, f_mw) - rate_signal(pump));
      }
    }
    return total;
  }

  double sideband_only(const QuadratureRule& spin, double x, double s) const {
    double t = 0.0;
    for (std::size_t i = 0; i < spin.size(); ++i) {
      const double d = spin.nodes[i];
      const double f[3] = {0.0, levels_.f_minus + d, levels_.f_plus + d};
      std::array<double, 3> pump{};
      for (int j = 0; j < 3; ++j) pump[static_cast<std::size_t>(j)] = w_ * pump_lineshape(x - f[j] + s, p_.homog_fwhm_MHz);
      t += spin.weights[i] * rate_signal(pump);
    }
    return t;
  }

  double floor(const QuadratureRule& spin, double x, bool sideband, double s) const {
    double t = 0.0;
    for (std::size_t i = 0; i < spin.size(); ++i) t += spin.weights[i] * rate_signal(pumps(x, spin.nodes[i], sideband, s));
    return t;
  }

 private:
  const DefectParams& p_;
  LevelDiagram levels_;
  CwScanOptions o_;
  Environment env_;
  double w_ = 0.0;
};

void require_axis(std::span<const double> a, const char* what) {
  if (a.empty()) throw DomainError(std::string(what) + " grid is empty");
  for (std::size_t i = 1; i < a.size(); ++i)
    if (!(a[i] > a[i - 1])) throw DomainError(std::string(what) + " grid is not strictly increasing", i);
}

}  // namespace

Spectrum hole_recovery_scan(const DefectParams& p, const EnsembleSpec& e, std::span<const double> sideband_MHz,
                            double B_G, const CwScanOptions& o) {
  e.validate();
  require_axis(sideband_MHz, "sideband");
  if (o.optical_nodes < 3) throw DomainError("optical_nodes must be >= 3");
  const CwPacket packet(p, B_G, o);
  const QuadratureRule spin = e.spin_rule();

  // Packets on a uniform optical grid, weighted by the m_s = 0 inhomogeneous line.
  const int nx = o.optical_nodes;
  const double dx = 2.0 * o.optical_span_MHz / (nx - 1);
  const double fwhm = 1e3 * e.inhom_fwhm_ms0_GHz;
  const double k = 4.0 * std::log(2.0) / (fwhm * fwhm);
  const double norm = 2.0 * std::sqrt(std::log(2.0) / kPi) / fwhm;
  std::vector<double> xs, wx;
  for (int i = 0; i < nx; ++i) {
    const double x = -o.optical_span_MHz + i * dx;
    xs.push_back(x);
    wx.push_back(((i == 0 || i == nx - 1) ? 0.5 : 1.0) * dx * norm * std::exp(-k * x * x));
  }

  // Only packets within the window are simulated, so the sideband's own
  // single-tone flux is swapped for the primary's: on a flat line both are the
  // same constant, and the truncated window would otherwise add a slope.
  double primary = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) primary += wx[i] * packet.floor(spin, xs[i], false, 0.0);
  Spectrum out;
  out.axis.assign(sideband_MHz.begin(), sideband_MHz.end());
  out.axis_label = "sideband_MHz";
  for (double s : sideband_MHz) {
    double v = primary;
    for (std::size_t i = 0; i < xs.size(); ++i)
      v += wx[i] * (packet.floor(spin, xs[i], true, s) - packet.sideband_only(spin, xs[i], s));
    out.signal.push_back(v);
  }
  out.sigma.assign(out.size(), 0.0);
  return out;
}

Spectrum odmr_scan(const DefectParams& p, const EnsembleSpec& e, std::span<const double> mw_MHz, double B_G,
                   const CwScanOptions& o) {
  e.validate();
  require_axis(mw_MHz, "microwave");
  const CwPacket packet(p, B_G, o);
  const double base = packet.floor(e.spin_rule(), 0.0, false, 0.0);
  Spectrum out;
  out.axis.assign(mw_MHz.begin(), mw_MHz.end());
  out.axis_label = "mw_MHz";
  for (double f : mw_MHz) out.signal.push_back(base + packet.mw_excess(e, 0.0, false, 0.0, f));
  out.sigma.assign(out.size(), 0.0);
  return out;
}

Spectrum2D simultaneous_recovery_map(const DefectParams& p, const EnsembleSpec& e, std::span<const double> sideband_MHz,
                                     std::span<const double> mw_MHz, double B_G, const CwScanOptions& o) {
  e.validate();
  if (!(B_G > 0.0)) throw DomainError("simultaneous map needs B > 0");
  require_axis(sideband_MHz, "sideband");
  require_axis(mw_MHz, "microwave");
  const CwPacket packet(p, B_G, o);
  const QuadratureRule spin = e.spin_rule();
  Spectrum2D m;
  m.x.assign(sideband_MHz.begin(), sideband_MHz.end());
  m.y.assign(mw_MHz.begin(), mw_MHz.end());
  for (double s : sideband_MHz) {
    const double base = packet.floor(spin, 0.0, true, s);
    for (double f : mw_MHz) m.values.push_back(base + packet.mw_excess(e, 0.0, true, s, f));
  }
  return m;
}

double addressed_fraction(double hole_fwhm_MHz, double inhom_fwhm_GHz) {
  if (!(hole_fwhm_MHz > 0.0) || !(inhom_fwhm_GHz > 0.0)) throw DomainError("widths must be > 0");
  return 100.0 * hole_fwhm_MHz / (1e3 * inhom_fwhm_GHz);
}

double lifetime_limited_linewidth(double optical_lifetime_us) {
  if (!(optical_lifetime_us > 0.0)) throw DomainError("optical lifetime must be > 0");
  return 1e3 / (kPi * optical_lifetime_us);
}

}  // namespace crspin
