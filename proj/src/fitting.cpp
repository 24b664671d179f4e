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

#include "crspin/fitting.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <functional>
#include <numeric>

#include <json.hpp>

#include "crspin/errors.hpp"
#include "crspin/kernels.hpp"
#include "crspin/params.hpp"

namespace crspin {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct ModelSpec {
  ModelId id;
  std::string_view name;
  std::vector<ParamInfo> params;
};

const std::vector<ModelSpec>& specs() {
  using R = ParamRole;
  static const std::vector<ModelSpec> s = {
      {ModelId::gaussian_two_peak,
       "gaussian_two_peak",
       {{"amp0", "counts", R::linear},
        {"center0", "GHz", R::location},
        {"fwhm0", "GHz", R::nonlinear},
        {"amp1", "counts", R::linear},
        {"fwhm1", "GHz", R::nonlinear},
        {"separation", "GHz", R::nonlinear, true},
        {"offset", "counts", R::linear}}},
      {ModelId::lorentzian,
       "lorentzian",
       {{"amp", "counts", R::linear},
        {"center", "MHz", R::location},
        {"fwhm", "MHz", R::nonlinear},
        {"offset", "counts", R::linear}}},
      {ModelId::lorentzian_pair,
       "lorentzian_pair",
       {{"amp1", "counts", R::linear},
        {"center1", "MHz", R::location},
        {"amp2", "counts", R::linear},
        {"center2", "MHz", R::location},
        {"fwhm", "MHz", R::nonlinear},
        {"offset", "counts", R::linear}}},
      {ModelId::exp_decay, "exp_decay", {{"A", "counts", R::linear}, {"tau", "us", R::nonlinear}, {"C", "counts", R::linear}}},
      {ModelId::exp_rise, "exp_rise", {{"P", "", R::linear}, {"tau", "us", R::nonlinear}, {"C", "", R::linear}}},
      {ModelId::rabi_damped_cosine,
       "rabi_damped_cosine",
       {{"A", "counts", R::linear}, {"Td", "us", R::nonlinear}, {"f", "MHz", R::frequency}, {"C", "counts", R::linear}}},
      {ModelId::ramsey_model,
       "ramsey_model",
       {{"A", "counts", R::linear},
        {"T2s", "us", R::nonlinear},
        {"delta", "MHz", R::frequency},
        {"phi", "rad", R::nonlinear},
        {"C", "counts", R::linear}}},
      {ModelId::eseem_model,
       "eseem_model",
       {{"A", "counts", R::linear},
        {"T2", "us", R::nonlinear},
        {"n", "", R::nonlinear},
        {"K1", "", R::nonlinear},
        {"w1", "kHz", R::frequency},
        {"K2", "", R::nonlinear},
        {"w2", "kHz", R::frequency},
        {"C", "counts", R::linear}}},
      {ModelId::orbach, "orbach", {{"A", "1/s", R::linear}, {"E", "meV", R::nonlinear}}},
      {ModelId::raman, "raman", {{"A", "1/s", R::linear}, {"dT", "K", R::nonlinear}, {"n", "", R::nonlinear, true}}},
      {ModelId::constant, "constant", {{"c", "", R::linear}}},
      {ModelId::linear, "linear", {{"a", "", R::linear}, {"b", "", R::linear}}},
  };
  return s;
}

const ModelSpec& spec(ModelId id) {
  for (const auto& s : specs())
    if (s.id == id) return s;
  throw FitError("unknown model");
}

double wrap_phase(double phi) {
  phi = std::fmod(phi + kPi, 2.0 * kPi);
  if (phi <= 0.0) phi += 2.0 * kPi;
  return phi - kPi;
}

std::vector<std::size_t> free_indices(const FitModel& m) {
  std::vector<std::size_t> f;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (!m.params[i].fixed) f.push_back(i);
  return f;
}

// Model values, or empty when the parameters leave the domain or overflow.
bool try_eval(const FitModel& m, const FitData& d, std::span<const double> theta, std::vector<double>& out) {
  out.resize(d.size());
  try {
    m.eval(d.x, theta, out);
  } catch (const DomainError&) {
    return false;
  }
  for (double v : out)
    if (!std::isfinite(v)) return false;
  return true;
}

double chi2_of(const FitModel& m, const FitData& d, std::span<const double> theta, std::vector<double>& scratch) {
  if (!try_eval(m, d, theta, scratch)) return kInf;
  return kernels::weighted_sse(d.y.data(), scratch.data(), d.sigma.data(), d.size());
}

// Weighted Jacobian columns d f / d theta_j / sigma for the free parameters.
bool jacobian(const FitModel& m, const FitData& d, const std::vector<double>& theta, const std::vector<double>& f0,
              const std::vector<std::size_t>& free, Eigen::MatrixXd& j) {
  const double root_eps = std::sqrt(std::numeric_limits<double>::epsilon());
  j.resize(static_cast<Eigen::Index>(d.size()), static_cast<Eigen::Index>(free.size()));
  std::vector<double> tp = theta, fp;
  for (std::size_t c = 0; c < free.size(); ++c) {
    const std::size_t k = free[c];
    double h = root_eps * std::max(std::abs(theta[k]), 1.0);
    tp[k] = theta[k] + h;
    h = tp[k] - theta[k];
    if (!try_eval(m, d, tp, fp)) {
      tp[k] = theta[k] - h;
      h = -(theta[k] - tp[k]);
      if (!try_eval(m, d, tp, fp)) return false;
    }
    for (std::size_t i = 0; i < d.size(); ++i)
      j(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = (fp[i] - f0[i]) / h / d.sigma[i];
    tp[k] = theta[k];
  }
  return true;
}

// Weighted linear least squares for the free linear parameters at fixed others.
bool solve_linear(const FitModel& m, const FitData& d, std::vector<double>& theta) {
  std::vector<std::size_t> lin;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (!m.params[i].fixed && m.params[i].role == ParamRole::linear) lin.push_back(i);
  if (lin.empty()) return true;
  std::vector<double> t = theta;
  for (auto i : lin) t[i] = 0.0;
  std::vector<double> f0, fl;
  if (!try_eval(m, d, t, f0)) return false;
  const auto n = static_cast<Eigen::Index>(d.size());
  Eigen::MatrixXd a(n, static_cast<Eigen::Index>(lin.size()));
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) b(i) = (d.y[static_cast<std::size_t>(i)] - f0[static_cast<std::size_t>(i)]) / d.sigma[static_cast<std::size_t>(i)];
  for (std::size_t c = 0; c < lin.size(); ++c) {
    t[lin[c]] = 1.0;
    if (!try_eval(m, d, t, fl)) return false;
    t[lin[c]] = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto si = static_cast<std::size_t>(i);
      a(i, static_cast<Eigen::Index>(c)) = (fl[si] - f0[si]) / d.sigma[si];
    }
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < a.cols()) return false;
  const Eigen::VectorXd c = qr.solve(b);
  for (std::size_t k = 0; k < lin.size(); ++k) {
    if (!std::isfinite(c(static_cast<Eigen::Index>(k)))) return false;
    theta[lin[k]] = c(static_cast<Eigen::Index>(k));
  }
  return true;
}

struct LmState {
  std::vector<double> history;
  bool converged = false;
  std::string message;
  int iterations = 0;
};

// Evaluator: fills model values for theta, false outside the domain.
using Evaluator = std::function<bool(std::span<const double>, std::vector<double>&)>;

double chi2_with(const Evaluator& ev, const FitData& d, std::span<const double> theta, std::vector<double>& out) {
  if (!ev(theta, out)) return kInf;
  for (double v : out)
    if (!std::isfinite(v)) return kInf;
  return kernels::weighted_sse(d.y.data(), out.data(), d.sigma.data(), d.size());
}

bool jacobian_with(const Evaluator& ev, const FitData& d, const std::vector<double>& theta, const std::vector<double>& f0,
                   const std::vector<std::size_t>& free, Eigen::MatrixXd& j) {
  const double root_eps = std::sqrt(std::numeric_limits<double>::epsilon());
  j.resize(static_cast<Eigen::Index>(d.size()), static_cast<Eigen::Index>(free.size()));
  std::vector<double> tp = theta, fp;
  for (std::size_t c = 0; c < free.size(); ++c) {
    const std::size_t k = free[c];
    double h = root_eps * std::max(std::abs(theta[k]), 1.0);
    tp[k] = theta[k] + h;
    h = tp[k] - theta[k];
    if (!std::isfinite(chi2_with(ev, d, tp, fp))) {
      tp[k] = theta[k] - h;
      h = tp[k] - theta[k];
      if (!std::isfinite(chi2_with(ev, d, tp, fp))) return false;
    }
    for (std::size_t i = 0; i < d.size(); ++i)
      j(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = (fp[i] - f0[i]) / h / d.sigma[i];
    tp[k] = theta[k];
  }
  return true;
}

LmState run_lm(const Evaluator& ev, const std::vector<std::size_t>& free, const FitData& data,
               std::vector<double>& theta, const FitOptions& opt);

LmState run_lm(const FitModel& model, const FitData& data, std::vector<double>& theta, const FitOptions& opt) {
  const Evaluator ev = [&](std::span<const double> t, std::vector<double>& out) { return try_eval(model, data, t, out); };
  return run_lm(ev, free_indices(model), data, theta, opt);
}

LmState run_lm(const Evaluator& ev, const std::vector<std::size_t>& free, const FitData& data,
               std::vector<double>& theta, const FitOptions& opt) {
  LmState st;
  std::vector<double> f, ftrial;
  double chi2 = chi2_with(ev, data, theta, f);
  if (!std::isfinite(chi2)) throw FitError("model is not finite at the initial guess");
  st.history.push_back(chi2);
  const auto k = static_cast<Eigen::Index>(free.size());
  const auto n = static_cast<Eigen::Index>(data.size());
  double lambda = opt.lambda0;
  Eigen::MatrixXd j;
  Eigen::VectorXd res(n);
  bool done = chi2 == 0.0;
  st.converged = done;
  int it = 0;
  for (; it < opt.max_iterations && !done; ++it) {
    if (!jacobian_with(ev, data, theta, f, free, j)) throw FitError("Jacobian left the model domain");
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto si = static_cast<std::size_t>(i);
      res(i) = (data.y[si] - f[si]) / data.sigma[si];
    }
    const Eigen::MatrixXd a = j.transpose() * j;
    const Eigen::VectorXd g = j.transpose() * res;
    while (true) {
      Eigen::MatrixXd m = a;
      for (Eigen::Index c = 0; c < k; ++c) m(c, c) += lambda * (a(c, c) > 0 ? a(c, c) : 1.0);
      const Eigen::VectorXd delta = m.ldlt().solve(g);
      std::vector<double> trial = theta;
      for (Eigen::Index c = 0; c < k; ++c) trial[free[static_cast<std::size_t>(c)]] += delta(c);
      const double c2 = delta.allFinite() ? chi2_with(ev, data, trial, ftrial) : kInf;
      if (c2 < chi2) {
        const double rel = (chi2 - c2) / chi2;
        theta = std::move(trial);
        f.swap(ftrial);
        chi2 = c2;
        st.history.push_back(chi2);
        lambda = std::max(lambda / 10.0, 1e-15);
        if (rel < opt.relative_tolerance || chi2 == 0.0) {
          done = true;
          st.converged = true;
          st.message = "relative chi2 change below tolerance";
        }
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e16) {
        done = true;
        st.converged = true;
        st.message = "chi2 stationary (no decreasing step)";
        break;
      }
    }
  }
  st.iterations = it;
  if (!st.converged) st.message = "iteration limit reached; best parameters returned";
  return st;
}

// eseem: with everything but (A, K_k-1, C) fixed the model is
// A b - A K b s + C, linear in (A, A K, C). b is the model at A = 1, C = 0,
// K = 0. Fills theta's A, K and C; false if the solve fails.
bool depth_profile(const FitModel& m, const FitData& d, const std::vector<double>& b, std::size_t k, double w,
                   std::vector<double>& theta, double& chi2) {
  if (b.size() != d.size()) return false;
  auto t = theta;
  t[0] = 1.0;
  t[7] = 0.0;
  t[k - 1] = 1.0;
  t[k] = w;
  std::vector<double> full;
  if (!try_eval(m, d, t, full)) return false;
  const auto n = static_cast<Eigen::Index>(d.size());
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    const double iw = 1.0 / d.sigma[si];
    a(i, 0) = b[si] * iw;
    a(i, 1) = (full[si] - b[si]) * iw;  // -b s
    a(i, 2) = iw;
    y(i) = d.y[si] * iw;
  }
  const Eigen::Matrix3d ata = a.transpose() * a;
  const Eigen::Vector3d aty = a.transpose() * y;
  const Eigen::LDLT<Eigen::Matrix3d> ldlt(ata);
  if (ldlt.info() != Eigen::Success) return false;
  const Eigen::Vector3d c = ldlt.solve(aty);
  if (!c.allFinite() || c(0) == 0.0) return false;
  const double depth = c(1) / c(0);
  theta[k] = w;
  if (depth >= 0.0 && depth <= 1.0) {
    theta[0] = c(0);
    theta[k - 1] = depth;
    theta[7] = c(2);
    chi2 = (y - a * c).squaredNorm();
    return true;
  }
  theta[k - 1] = std::clamp(depth, 0.0, 1.0);
  if (!solve_linear(m, d, theta)) return false;
  std::vector<double> scratch;
  chi2 = chi2_of(m, d, theta, scratch);
  return true;
}

bool is_scanned(ParamRole r) { return r == ParamRole::location || r == ParamRole::frequency; }

// LM over the free nonlinear parameters (minus `skip`), with the linear ones
// re-solved at every evaluation.
void projected_lm(const FitModel& m, const FitData& d, std::vector<double>& theta, bool skip_scanned, int iterations) {
  std::vector<std::size_t> free;
  for (std::size_t k = 0; k < m.size(); ++k) {
    const auto& p = m.params[k];
    if (p.fixed || p.role == ParamRole::linear || (skip_scanned && is_scanned(p.role))) continue;
    free.push_back(k);
  }
  if (free.empty()) return;
  const Evaluator ev = [&](std::span<const double> t, std::vector<double>& out) {
    std::vector<double> tt(t.begin(), t.end());
    return solve_linear(m, d, tt) && try_eval(m, d, tt, out);
  };
  FitOptions o;
  o.max_iterations = iterations;
  auto t = theta;
  try {
    run_lm(ev, free, d, t, o);
  } catch (const FitError&) {
    return;
  }
  if (solve_linear(m, d, t)) {
    std::vector<double> scratch;
    if (chi2_of(m, d, t, scratch) <= chi2_of(m, d, theta, scratch)) theta = t;
  }
}

// prefit: fit the non-scanned nonlinear parameters before each scan pass and
// finish with a projected LM over all of them.
void initialize(const FitModel& m, const FitData& d, std::vector<double>& theta, const FitOptions& opt, bool prefit) {
  const std::vector<double> anchor = theta;
  std::vector<double> scratch;
  {
    auto t = theta;
    if (solve_linear(m, d, t) && chi2_of(m, d, t, scratch) <= chi2_of(m, d, theta, scratch)) theta = t;
  }
  const auto [xmin_it, xmax_it] = std::minmax_element(d.x.begin(), d.x.end());
  const double xmin = *xmin_it, xmax = *xmax_it;
  double nyquist = kInf;
  if (d.size() > 2) nyquist = 0.5 * static_cast<double>(d.size() - 1) / (xmax - xmin);
  bool any_scan = false;
  for (const auto& p : m.params) any_scan = any_scan || (!p.fixed && is_scanned(p.role));
  for (int pass = 0; pass < 2 && any_scan; ++pass) {
    if (prefit) projected_lm(m, d, theta, true, 50);
    for (std::size_t k = 0; k < m.size(); ++k) {
      const auto& info = m.params[k];
      if (info.fixed || !is_scanned(info.role)) continue;
      double best = chi2_of(m, d, theta, scratch);
      std::vector<double> best_t = theta;
      // An eseem frequency is only visible through its depth, so the depth
      // is solved for alongside the linear parameters at every candidate.
      const bool profile = m.id == ModelId::eseem_model && info.role == ParamRole::frequency && k > 0 &&
                           !m.params[k - 1].fixed && !m.params[0].fixed && !m.params[7].fixed;
      std::vector<double> base;
      if (profile) {
        auto t = theta;
        t[0] = 1.0;
        t[7] = 0.0;
        t[k - 1] = 0.0;
        if (!try_eval(m, d, t, base)) base.clear();
      }
      const int np = std::max(opt.scan_points, 3);
      for (int s = 0; s < np; ++s) {
        const double u = static_cast<double>(s) / (np - 1);
        double v;
        if (info.role == ParamRole::location) {
          v = xmin + u * (xmax - xmin);
        } else {
          // Frequencies in kHz for eseem, x in us: convert the Nyquist limit.
          const double scale = m.id == ModelId::eseem_model ? 1e3 / m.tau_factor : 1.0;
          const double centre = std::abs(anchor[k]) > 0 ? std::abs(anchor[k]) : 0.25 * nyquist * scale;
          const double hi = std::min(3.0 * centre, nyquist * scale);
          const double lo = std::min(centre / 3.0, 0.5 * hi);
          v = lo * std::pow(hi / lo, u);
        }
        auto t = theta;
        t[k] = v;
        double c;
        if (profile) {
          if (!depth_profile(m, d, base, k, v, t, c)) continue;
        } else {
          if (!solve_linear(m, d, t)) continue;
          c = chi2_of(m, d, t, scratch);
        }
        if (c < best) {
          best = c;
          best_t = t;
        }
      }
      theta = best_t;
    }
    if (!prefit) {
      // LM on everything except the scanned parameters.
      FitModel inner = m;
      for (auto& p : inner.params)
        if (is_scanned(p.role)) p.fixed = true;
      if (inner.free_count() > 0) {
        FitOptions io = opt;
        io.max_iterations = 50;
        auto t = theta;
        try {
          run_lm(inner, d, t, io);
          theta = t;
        } catch (const FitError&) {
        }
      }
    }
  }
  if (prefit) projected_lm(m, d, theta, false, 100);
}

void canonicalize(const FitModel& m, std::vector<double>& t) {
  switch (m.id) {
    case ModelId::gaussian_two_peak:
      t[2] = std::abs(t[2]);
      t[4] = std::abs(t[4]);
      break;
    case ModelId::lorentzian: t[2] = std::abs(t[2]); break;
    case ModelId::lorentzian_pair:
      t[4] = std::abs(t[4]);
      if (t[1] > t[3]) {
        std::swap(t[0], t[2]);
        std::swap(t[1], t[3]);
      }
      break;
    case ModelId::rabi_damped_cosine: t[2] = std::abs(t[2]); break;
    case ModelId::ramsey_model:
      if (t[2] < 0) {
        t[2] = -t[2];
        t[3] = -t[3];
      }
      if (t[0] < 0) {
        t[0] = -t[0];
        t[3] += kPi;
      }
      t[3] = wrap_phase(t[3]);
      break;
    case ModelId::eseem_model:
      t[4] = std::abs(t[4]);
      t[6] = std::abs(t[6]);
      if (t[4] < t[6]) {
        std::swap(t[3], t[5]);
        std::swap(t[4], t[6]);
      }
      break;
    default: break;
  }
}

}  // namespace

std::string_view to_string(ModelId id) { return spec(id).name; }

ModelId model_from_string(std::string_view name) {
  for (const auto& s : specs())
    if (s.name == name) return s.id;
  throw FitError("unknown model '" + std::string(name) + "'");
}

std::vector<ModelId> all_models() {
  std::vector<ModelId> v;
  for (const auto& s : specs()) v.push_back(s.id);
  return v;
}

FitModel make_model(ModelId id) {
  FitModel m;
  m.id = id;
  m.params = spec(id).params;
  return m;
}

std::size_t FitModel::free_count() const {
  return static_cast<std::size_t>(std::count_if(params.begin(), params.end(), [](const auto& p) { return !p.fixed; }));
}

std::size_t FitModel::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].name == name) return i;
  throw FitError("model " + std::string(to_string(id)) + " has no parameter '" + std::string(name) + "'");
}

void FitModel::eval(std::span<const double> x, std::span<const double> th, std::span<double> y) const {
  if (th.size() != params.size())
    throw FitError("model " + std::string(to_string(id)) + " expects " + std::to_string(params.size()) +
                   " parameters, got " + std::to_string(th.size()));
  const std::size_t n = x.size();
  switch (id) {
    case ModelId::gaussian_two_peak:
      std::fill(y.begin(), y.end(), th[6]);
      kernels::add_gaussian(x.data(), n, th[0], th[1], th[2], y.data());
      kernels::add_gaussian(x.data(), n, th[3], th[1] - th[5], th[4], y.data());
      return;
    case ModelId::lorentzian:
      std::fill(y.begin(), y.end(), th[3]);
      kernels::add_lorentzian(x.data(), n, th[0], th[1], th[2], y.data());
      return;
    case ModelId::lorentzian_pair:
      std::fill(y.begin(), y.end(), th[5]);
      kernels::add_lorentzian(x.data(), n, th[0], th[1], th[4], y.data());
      kernels::add_lorentzian(x.data(), n, th[2], th[3], th[4], y.data());
      return;
    case ModelId::exp_decay:
      for (std::size_t i = 0; i < n; ++i) y[i] = th[0] * std::exp(-x[i] / th[1]) + th[2];
      return;
    case ModelId::exp_rise:
      for (std::size_t i = 0; i < n; ++i) y[i] = th[0] * -std::expm1(-x[i] / th[1]) + th[2];
      return;
    case ModelId::rabi_damped_cosine:
      for (std::size_t i = 0; i < n; ++i)
        y[i] = th[0] * std::exp(-x[i] / th[1]) * std::cos(2.0 * kPi * th[2] * x[i]) + th[3];
      return;
    case ModelId::ramsey_model:
      for (std::size_t i = 0; i < n; ++i)
        y[i] = th[0] * std::exp(-x[i] / th[1]) * std::cos(2.0 * kPi * th[2] * x[i] + th[3]) + th[4];
      return;
    case ModelId::eseem_model:
      for (std::size_t i = 0; i < n; ++i) {
        if (x[i] < 0.0) throw DomainError("eseem_model needs t >= 0", i);
        const double tau = tau_factor * x[i];
        const double s1 = std::sin(kPi * th[4] * 1e-3 * tau);
        const double s2 = std::sin(kPi * th[6] * 1e-3 * tau);
        y[i] = th[0] * std::exp(-std::pow(x[i] / th[1], th[2])) * (1.0 - th[3] * s1 * s1) * (1.0 - th[5] * s2 * s2) +
               th[7];
      }
      return;
    case ModelId::orbach:
      for (std::size_t i = 0; i < n; ++i) {
        if (!(x[i] > 0.0)) throw DomainError("orbach needs T > 0", i);
        y[i] = th[0] * std::exp(-th[1] / (PhysicalConstants::boltzmann_meV_per_K * x[i]));
      }
      return;
    case ModelId::raman:
      for (std::size_t i = 0; i < n; ++i) {
        if (!(x[i] > th[1])) throw DomainError("raman needs T > dT", i);
        y[i] = th[0] * std::pow(x[i] - th[1], th[2]);
      }
      return;
    case ModelId::constant: std::fill(y.begin(), y.end(), th[0]); return;
    case ModelId::linear:
      for (std::size_t i = 0; i < n; ++i) y[i] = th[0] + th[1] * x[i];
      return;
  }
}

std::vector<double> FitModel::eval(std::span<const double> x, std::span<const double> theta) const {
  std::vector<double> y(x.size());
  eval(x, theta, y);
  return y;
}

std::vector<double> eval_model(ModelId id, std::span<const double> x, std::span<const double> theta) {
  return make_model(id).eval(x, theta);
}

double eval_model(ModelId id, double x, std::span<const double> theta) {
  return eval_model(id, std::span<const double>(&x, 1), theta)[0];
}

std::uint64_t data_fingerprint(const FitData& d) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&](const std::vector<double>& v) {
    const auto* p = reinterpret_cast<const unsigned char*>(v.data());
    for (std::size_t i = 0; i < v.size() * sizeof(double); ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
    h ^= v.size();
    h *= 1099511628211ULL;
  };
  feed(d.x);
  feed(d.y);
  feed(d.sigma);
  return h;
}

double FitResult::value(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return theta[i];
  throw FitError("no parameter '" + std::string(name) + "'");
}

double FitResult::error(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return errors[i];
  throw FitError("no parameter '" + std::string(name) + "'");
}

FitResult fit(const FitModel& model, const FitData& data, std::vector<double> theta, const FitOptions& opt) {
  if (theta.size() != model.size())
    throw FitError("initial guess has " + std::to_string(theta.size()) + " values, model " +
                   std::string(to_string(model.id)) + " needs " + std::to_string(model.size()));
  if (data.y.size() != data.size() || data.sigma.size() != data.size()) throw FitError("x, y, sigma lengths differ");
  const auto free = free_indices(model);
  if (free.empty()) throw FitError("no free parameters");
  if (data.size() < free.size() + 1)
    throw FitError("need at least " + std::to_string(free.size() + 1) + " points, got " + std::to_string(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!(data.sigma[i] > 0.0) || !std::isfinite(data.sigma[i])) throw DomainError("sigma must be > 0", i);
    if (!std::isfinite(data.x[i]) || !std::isfinite(data.y[i])) throw DomainError("non-finite data value", i);
  }
  // Surface domain violations of the starting point with their row numbers.
  {
    std::vector<double> probe(data.size());
    model.eval(data.x, theta, probe);
  }

  FitResult r;
  r.model = model.id;
  r.points = data.size();
  r.dof = data.size() - free.size();
  r.fingerprint = data_fingerprint(data);
  for (const auto& p : model.params) {
    r.names.push_back(p.name);
    r.units.push_back(p.unit);
    r.fixed.push_back(p.fixed);
  }

  LmState st;
  if (opt.initialize) {
    // Two initializer orderings; keep whichever ends with the lower chi^2.
    std::vector<double> best_theta;
    double best = kInf;
    std::vector<double> scratch;
    for (bool prefit : {false, true}) {
      auto t = theta;
      initialize(model, data, t, opt, prefit);
      LmState s;
      try {
        s = run_lm(model, data, t, opt);
      } catch (const FitError&) {
        continue;
      }
      const double c = chi2_of(model, data, t, scratch);
      if (c < best) {
        best = c;
        best_theta = t;
        st = std::move(s);
      }
    }
    if (best_theta.empty()) throw FitError("model is not finite at the initial guess");
    theta = best_theta;
  } else {
    st = run_lm(model, data, theta, opt);
  }
  r.chi2_history = std::move(st.history);
  r.converged = st.converged;
  r.message = st.message;
  r.iterations = st.iterations;

  canonicalize(model, theta);
  std::vector<double> f;
  const double chi2 = chi2_of(model, data, theta, f);
  r.theta = theta;
  r.chi2 = chi2;
  r.reduced_chi2 = chi2 / static_cast<double>(r.dof);

  Eigen::MatrixXd j;
  const auto k = static_cast<Eigen::Index>(free.size());
  if (!jacobian(model, data, theta, f, free, j)) throw FitError("Jacobian left the model domain");
  const Eigen::MatrixXd a = j.transpose() * j;
  Eigen::VectorXd dscale(k);
  for (Eigen::Index c = 0; c < k; ++c) dscale(c) = a(c, c) > 0 ? 1.0 / std::sqrt(a(c, c)) : 1.0;
  const Eigen::MatrixXd as = dscale.asDiagonal() * a * dscale.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(as);
  const double emax = es.eigenvalues().maxCoeff();
  const double emin = es.eigenvalues().minCoeff();
  if (!(emin > 1e-14 * emax)) {
    throw FitError("singular normal matrix (scaled condition number " +
                   std::to_string(emin > 0 ? emax / emin : kInf) + ")");
  }
  const Eigen::MatrixXd inv = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                              es.eigenvectors().transpose();
  const Eigen::MatrixXd cov_free = r.reduced_chi2 * (dscale.asDiagonal() * inv * dscale.asDiagonal());
  const auto np = static_cast<Eigen::Index>(model.size());
  r.covariance = Eigen::MatrixXd::Zero(np, np);
  for (Eigen::Index a1 = 0; a1 < k; ++a1)
    for (Eigen::Index b1 = 0; b1 < k; ++b1)
      r.covariance(static_cast<Eigen::Index>(free[static_cast<std::size_t>(a1)]),
                   static_cast<Eigen::Index>(free[static_cast<std::size_t>(b1)])) = cov_free(a1, b1);
  r.errors.resize(model.size());
  for (std::size_t i = 0; i < model.size(); ++i)
    r.errors[i] = std::sqrt(std::max(0.0, r.covariance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i))));
  return r;
}

std::vector<RankEntry> compare_models(const std::vector<FitResult>& fits) {
  std::vector<RankEntry> out;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    if (fits[i].fingerprint != fits.front().fingerprint)
      throw FitError("compare_models: fit " + std::to_string(i) + " was made on different data");
    out.push_back({i, fits[i].model, fits[i].reduced_chi2, 0.0});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.reduced_chi2 < b.reduced_chi2; });
  for (auto& e : out) e.delta = e.reduced_chi2 - out.front().reduced_chi2;
  return out;
}

double jacobian_check(const FitModel& model, std::span<const double> x, std::span<const double> theta) {
  const double root_eps = std::sqrt(std::numeric_limits<double>::epsilon());
  const std::vector<double> f0 = model.eval(x, theta);
  double worst = 0.0;
  std::vector<double> tp(theta.begin(), theta.end()), tm = tp;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    double h = root_eps * std::max(std::abs(theta[k]), 1.0);
    tp[k] = theta[k] + h;
    h = tp[k] - theta[k];
    tm[k] = theta[k] - h;
    const auto fp = model.eval(x, tp);
    const auto fm = model.eval(x, tm);
    double scale = 0.0, dev = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double fwd = (fp[i] - f0[i]) / h;
      const double cen = (fp[i] - fm[i]) / (2.0 * h);
      scale = std::max(scale, std::abs(cen));
      dev = std::max(dev, std::abs(fwd - cen));
    }
    if (scale > 0.0) worst = std::max(worst, dev / scale);
    else worst = std::max(worst, dev);
    tp[k] = tm[k] = theta[k];
  }
  return worst;
}

double dominant_frequency(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 4) throw FitError("need at least 4 points for a frequency estimate");
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  const double span = *hi - *lo;
  const double nyq = 0.5 * static_cast<double>(n - 1) / span;
  const double df = 0.25 / span;
  double best_f = df, best_p = -1.0;
  for (double fr = 0.5 / span; fr <= nyq; fr += df) {
    double c = 0.0, s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double ph = 2.0 * kPi * fr * x[i];
      c += (y[i] - mean) * std::cos(ph);
      s += (y[i] - mean) * std::sin(ph);
    }
    const double p = c * c + s * s;
    if (p > best_p) {
      best_p = p;
      best_f = fr;
    }
  }
  return best_f;
}

namespace {

struct Peak {
  double amp, center, fwhm, offset;
};

double edge_level(const FitData& d) {
  const std::size_t m = std::max<std::size_t>(1, d.size() / 10);
  std::vector<double> edge(d.y.begin(), d.y.begin() + static_cast<std::ptrdiff_t>(m));
  edge.insert(edge.end(), d.y.end() - static_cast<std::ptrdiff_t>(m), d.y.end());
  std::nth_element(edge.begin(), edge.begin() + static_cast<std::ptrdiff_t>(edge.size() / 2), edge.end());
  return edge[edge.size() / 2];
}

Peak pick_peak(const FitData& d, double offset, const std::vector<bool>* mask = nullptr) {
  std::size_t best = 0;
  double bv = -kInf;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (mask && (*mask)[i]) continue;
    const double v = std::abs(d.y[i] - offset);
    if (v > bv) {
      bv = v;
      best = i;
    }
  }
  const double amp = d.y[best] - offset;
  std::size_t l = best, r = best;
  while (l > 0 && std::abs(d.y[l] - offset) > 0.5 * std::abs(amp)) --l;
  while (r + 1 < d.size() && std::abs(d.y[r] - offset) > 0.5 * std::abs(amp)) ++r;
  double fwhm = std::abs(d.x[r] - d.x[l]);
  if (fwhm <= 0) fwhm = std::abs(d.x.back() - d.x.front()) / 10.0;
  return {amp, d.x[best], fwhm, offset};
}

double tail_mean(const FitData& d) {
  const std::size_t m = std::max<std::size_t>(1, d.size() / 10);
  return std::accumulate(d.y.end() - static_cast<std::ptrdiff_t>(m), d.y.end(), 0.0) / static_cast<double>(m);
}

// Decay constant from log-linear regression of |y - c| above 10% of its start.
double loglinear_tau(const FitData& d, double c, double fallback) {
  const double a0 = d.y.front() - c;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double v = (d.y[i] - c) / a0;
    if (v > 0.1) {
      const double lv = std::log(v);
      sx += d.x[i];
      sy += lv;
      sxx += d.x[i] * d.x[i];
      sxy += d.x[i] * lv;
      ++cnt;
    }
  }
  if (cnt < 2) return fallback;
  const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  return slope < 0 && std::isfinite(slope) ? -1.0 / slope : fallback;
}

}  // namespace

std::vector<double> initial_guess(const FitModel& model, const FitData& d, const GuessHints& hints) {
  if (d.size() < 2) throw FitError("no data rows");
  const double span = d.x.back() - d.x.front();
  const double mean = std::accumulate(d.y.begin(), d.y.end(), 0.0) / static_cast<double>(d.size());
  switch (model.id) {
    case ModelId::constant: return {mean};
    case ModelId::linear: {
      const double b = (d.y.back() - d.y.front()) / span;
      return {d.y.front() - b * d.x.front(), b};
    }
    case ModelId::lorentzian: {
      const auto p = pick_peak(d, edge_level(d));
      return {p.amp, p.center, p.fwhm, p.offset};
    }
    case ModelId::lorentzian_pair: {
      const double off = edge_level(d);
      const auto p1 = pick_peak(d, off);
      std::vector<bool> mask(d.size());
      for (std::size_t i = 0; i < d.size(); ++i) mask[i] = std::abs(d.x[i] - p1.center) < p1.fwhm;
      const auto p2 = pick_peak(d, off, &mask);
      const double w = std::min(p1.fwhm, std::abs(p1.center - p2.center));
      if (p1.center < p2.center) return {p1.amp, p1.center, p2.amp, p2.center, w, off};
      return {p2.amp, p2.center, p1.amp, p1.center, w, off};
    }
    case ModelId::gaussian_two_peak: {
      const double off = std::min(d.y.front(), d.y.back());
      const auto p = pick_peak(d, off);
      return {0.5 * p.amp, p.center, p.fwhm, 0.5 * p.amp, 0.5 * p.fwhm, hints.separation, off};
    }
    case ModelId::exp_decay: {
      const double c = tail_mean(d);
      return {d.y.front() - c, loglinear_tau(d, c, span / 3.0), c};
    }
    case ModelId::exp_rise: {
      const double c = d.y.front();
      const double plateau = tail_mean(d);
      FitData flipped = d;
      for (auto& v : flipped.y) v = plateau - v;
      return {plateau - c, loglinear_tau(flipped, 0.0, span / 3.0), c};
    }
    case ModelId::rabi_damped_cosine: {
      return {d.y.front() - mean, span / 2.0, dominant_frequency(d.x, d.y), mean};
    }
    case ModelId::ramsey_model: {
      const double a = d.y.front() - mean;
      return {std::abs(a), span / 4.0, dominant_frequency(d.x, d.y), a < 0 ? kPi : 0.0, mean};
    }
    case ModelId::eseem_model: {
      double c = tail_mean(d);
      double a = d.y.front() - c;
      // 1/e point of the running envelope
      double t2 = span / 2.0, run = 0.0;
      for (std::size_t i = d.size(); i-- > 0;) {
        run = std::max(run, (d.y[i] - c) / a);
        if (run > std::exp(-1.0)) {
          t2 = std::max(d.x[i], span / 50.0);
          break;
        }
      }
      // Unmodulated envelope fit, then the spectrum of the relative residual.
      std::vector<double> env_theta = {a, t2, 2.0, 0.0, 1.0, 0.0, 1.0, c};
      {
        FitModel bare = model;
        for (std::size_t k = 3; k <= 6; ++k) bare.params[k].fixed = true;
        FitOptions o;
        o.initialize = false;
        o.max_iterations = 100;
        try {
          env_theta = fit(bare, d, env_theta, o).theta;
        } catch (const std::exception&) {
        }
      }
      const auto env_y = model.eval(d.x, env_theta);
      std::vector<double> xs, ys;
      for (std::size_t i = 0; i < d.size(); ++i) {
        const double env = env_y[i] - env_theta[7];
        if (std::abs(env) < 0.05 * std::abs(env_theta[0])) break;
        xs.push_back(d.x[i]);
        ys.push_back((d.y[i] - env_theta[7]) / env);
      }
      a = env_theta[0];
      c = env_theta[7];
      t2 = env_theta[1];
      const double n_guess = env_theta[2];
      double f1 = 0.25 * static_cast<double>(d.size() - 1) / span, f2 = 0.8 * f1;
      if (xs.size() >= 8) {
        f1 = dominant_frequency(xs, ys);
        // Remove the first line by least squares, then look again.
        double cc = 0, ss = 0, cs = 0, yc = 0, ys2 = 0;
        const double ym = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
        for (std::size_t i = 0; i < xs.size(); ++i) {
          const double c1 = std::cos(2 * kPi * f1 * xs[i]), s1 = std::sin(2 * kPi * f1 * xs[i]);
          cc += c1 * c1;
          ss += s1 * s1;
          cs += c1 * s1;
          yc += (ys[i] - ym) * c1;
          ys2 += (ys[i] - ym) * s1;
        }
        const double det = cc * ss - cs * cs;
        const double ac = (yc * ss - ys2 * cs) / det, as = (ys2 * cc - yc * cs) / det;
        std::vector<double> rest(ys.size());
        for (std::size_t i = 0; i < xs.size(); ++i)
          rest[i] = ys[i] - ym - ac * std::cos(2 * kPi * f1 * xs[i]) - as * std::sin(2 * kPi * f1 * xs[i]);
        f2 = dominant_frequency(xs, rest);
      }
      const double w1 = f1 * 1e3 / model.tau_factor, w2 = f2 * 1e3 / model.tau_factor;
      return {a, t2, n_guess, 0.1, std::max(w1, w2), 0.1, std::min(w1, w2), c};
    }
    case ModelId::orbach: {
      // ln y = ln A - E / (kB T)
      double sx = 0, sy = 0, sxx = 0, sxy = 0;
      int cnt = 0;
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (d.y[i] <= 0 || d.x[i] <= 0) continue;
        const double u = -1.0 / (PhysicalConstants::boltzmann_meV_per_K * d.x[i]);
        const double v = std::log(d.y[i]);
        sx += u;
        sy += v;
        sxx += u * u;
        sxy += u * v;
        ++cnt;
      }
      if (cnt < 2) throw FitError("orbach guess needs two positive rates");
      const double e = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
      const double la = (sy - e * sx) / cnt;
      return {std::exp(la), e};
    }
    case ModelId::raman: {
      const double xmin = *std::min_element(d.x.begin(), d.x.end());
      const double dt = 0.2 * xmin;
      const double n = hints.raman_exponent;
      double s = 0;
      int cnt = 0;
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (d.y[i] <= 0) continue;
        s += std::log(d.y[i]) - n * std::log(d.x[i] - dt);
        ++cnt;
      }
      if (cnt < 1) throw FitError("raman guess needs a positive rate");
      return {std::exp(s / cnt), dt, n};
    }
  }
  return {};
}

std::string fit_report_json(const FitResult& r) {
  using nlohmann::json;
  json params = json::array();
  for (std::size_t i = 0; i < r.theta.size(); ++i) {
    params.push_back({{"name", r.names[i]},
                      {"unit", r.units[i]},
                      {"value", r.theta[i]},
                      {"error", r.errors[i]},
                      {"fixed", static_cast<bool>(r.fixed[i])}});
  }
  json cov = json::array();
  for (Eigen::Index i = 0; i < r.covariance.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < r.covariance.cols(); ++j) row.push_back(r.covariance(i, j));
    cov.push_back(row);
  }
  json doc = {{"model", std::string(to_string(r.model))},
              {"parameters", params},
              {"covariance", cov},
              {"chi2", r.chi2},
              {"reduced_chi2", r.reduced_chi2},
              {"points", r.points},
              {"dof", r.dof},
              {"iterations", r.iterations},
              {"converged", r.converged},
              {"message", r.message},
              {"chi2_history", r.chi2_history}};
  return doc.dump(2);
}

}  // namespace crspin
