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

#include <cmath>

#include "crspin/kernels.hpp"

namespace crspin::kernels {
namespace scalar_impl {

void cmatmul(const cplx* a, const cplx* b, cplx* c, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    cplx* cj = c + j * n;
    for (std::size_t i = 0; i < n; ++i) cj[i] = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const cplx bkj = b[k + j * n];
      const cplx* ak = a + k * n;
      for (std::size_t i = 0; i < n; ++i) cj[i] += ak[i] * bkj;
    }
  }
}

void cmatvec(const cplx* a, const cplx* x, cplx* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const cplx xk = x[k];
    const cplx* ak = a + k * n;
    for (std::size_t i = 0; i < n; ++i) y[i] += ak[i] * xk;
  }
}

void add_gaussian(const double* x, std::size_t n, double amp, double center, double fwhm, double* out) {
  const double k = 4.0 * std::log(2.0) / (fwhm * fwhm);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - center;
    out[i] += amp * std::exp(-k * d * d);
  }
}

void add_lorentzian(const double* x, std::size_t n, double amp, double center, double fwhm, double* out) {
  const double hw2 = 0.25 * fwhm * fwhm;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - center;
    out[i] += amp * hw2 / (d * d + hw2);
  }
}

double weighted_sse(const double* y, const double* m, const double* sigma, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = (y[i] - m[i]) / sigma[i];
    s += r * r;
  }
  return s;
}

}  // namespace scalar_impl

const Table& scalar_table() {
  static const Table t{scalar_impl::cmatmul, scalar_impl::cmatvec, scalar_impl::add_gaussian, scalar_impl::add_lorentzian, scalar_impl::weighted_sse};
  return t;
}

}  // namespace crspin::kernels
