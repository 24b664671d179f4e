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
#include <random>
#include <vector>

#include "crspin/kernels.hpp"
#include "doctest.h"

using namespace crspin;
using kernels::cplx;

namespace {

std::vector<cplx> random_matrix(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<cplx> m(n * n);
  for (auto& v : m) v = {g(rng), g(rng)};
  return m;
}

double max_diff(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("scalar table is always available") {
  CHECK(kernels::isa_available(kernels::Isa::scalar));
  CHECK(kernels::isa_name(kernels::Isa::scalar) == "scalar");
}

TEST_CASE("cmatmul and cmatvec agree between scalar and avx2") {
  if (!kernels::isa_available(kernels::Isa::avx2)) return;
  const auto& s = kernels::scalar_table();
  const auto& v = kernels::avx2_table();
  std::mt19937_64 rng(7);
  for (std::size_t n : {1u, 3u, 4u, 5u, 16u, 17u}) {
    CAPTURE(n);
    const auto a = random_matrix(n, rng), b = random_matrix(n, rng);
    std::vector<cplx> c1(n * n), c2(n * n);
    s.cmatmul(a.data(), b.data(), c1.data(), n);
    v.cmatmul(a.data(), b.data(), c2.data(), n);
    CHECK(max_diff(c1, c2) < 1e-12 * static_cast<double>(n));
    std::vector<cplx> x(b.begin(), b.begin() + static_cast<long>(n)), y1(n), y2(n);
    s.cmatvec(a.data(), x.data(), y1.data(), n);
    v.cmatvec(a.data(), x.data(), y2.data(), n);
    CHECK(max_diff(y1, y2) < 1e-12 * static_cast<double>(n));
  }
}

TEST_CASE("cmatmul matches a naive triple loop") {
  std::mt19937_64 rng(11);
  const std::size_t n = 6;
  const auto a = random_matrix(n, rng), b = random_matrix(n, rng);
  // column-major: c[i + j n]
  std::vector<cplx> ref(n * n, 0.0), c(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) ref[i + j * n] += a[i + k * n] * b[k + j * n];
  kernels::scalar_table().cmatmul(a.data(), b.data(), c.data(), n);
  CHECK(max_diff(ref, c) < 1e-12);
}

TEST_CASE("line shapes and weighted_sse agree between scalar and avx2") {
  if (!kernels::isa_available(kernels::Isa::avx2)) return;
  const auto& s = kernels::scalar_table();
  const auto& v = kernels::avx2_table();
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 101u}) {
    CAPTURE(n);
    std::vector<double> x(n), g1(n, 0.5), g2(n, 0.5), l1(n, 0.0), l2(n, 0.0), sig(n), m(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = -20.0 + 0.37 * static_cast<double>(i);
      sig[i] = 1.0 + 0.01 * static_cast<double>(i);
      m[i] = std::sin(x[i]);
    }
    s.add_gaussian(x.data(), n, 2.0, 1.5, 6.87, g1.data());
    v.add_gaussian(x.data(), n, 2.0, 1.5, 6.87, g2.data());
    s.add_lorentzian(x.data(), n, 3.0, -0.5, 31.0, l1.data());
    v.add_lorentzian(x.data(), n, 3.0, -0.5, 31.0, l2.data());
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(g1[i] == doctest::Approx(g2[i]).epsilon(1e-13));
      CHECK(l1[i] == doctest::Approx(l2[i]).epsilon(1e-13));
    }
    const double e1 = s.weighted_sse(g1.data(), m.data(), sig.data(), n);
    const double e2 = v.weighted_sse(g1.data(), m.data(), sig.data(), n);
    CHECK(e1 == doctest::Approx(e2).epsilon(1e-13));
  }
}

TEST_CASE("gaussian and lorentzian are half height at half width") {
  const double x[] = {0.0, 3.0, -3.0};
  double g[3] = {}, l[3] = {};
  kernels::scalar_table().add_gaussian(x, 3, 1.0, 0.0, 6.0, g);
  kernels::scalar_table().add_lorentzian(x, 3, 1.0, 0.0, 6.0, l);
  CHECK(g[0] == doctest::Approx(1.0));
  CHECK(g[1] == doctest::Approx(0.5));
  CHECK(g[2] == doctest::Approx(0.5));
  CHECK(l[1] == doctest::Approx(0.5));
}

TEST_CASE("active isa can be switched") {
  const auto before = kernels::active_isa();
  kernels::set_active_isa(kernels::Isa::scalar);
  CHECK(kernels::active_isa() == kernels::Isa::scalar);
  kernels::set_active_isa(before);
  CHECK(kernels::active_isa() == before);
}

}
