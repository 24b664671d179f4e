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

#include <complex>
#include <cstddef>
#include <string_view>

namespace crspin::kernels {

using cplx = std::complex<double>;

enum class Isa { scalar, avx2 };

/// Inner loops with one implementation per instruction set.
/// Matrices are square, column-major, n x n.
struct Table {
  /// C = A * B. C must not alias A or B.
  void (*cmatmul)(const cplx* a, const cplx* b, cplx* c, std::size_t n);
  /// y = A * x. y must not alias x.
  void (*cmatvec)(const cplx* a, const cplx* x, cplx* y, std::size_t n);
  /// out[i] += amp * exp(-4 ln2 (x[i] - center)^2 / fwhm^2)
  void (*add_gaussian)(const double* x, std::size_t n, double amp, double center, double fwhm, double* out);
  /// out[i] += amp * hw^2 / ((x[i] - center)^2 + hw^2), hw = fwhm / 2
  void (*add_lorentzian)(const double* x, std::size_t n, double amp, double center, double fwhm, double* out);
  /// sum ((y[i] - m[i]) / sigma[i])^2
  double (*weighted_sse)(const double* y, const double* m, const double* sigma, std::size_t n);
};

const Table& scalar_table();
/// Only callable when isa_available(Isa::avx2).
const Table& avx2_table();

bool isa_available(Isa isa);
const Table& table(Isa isa);

/// Best available ISA, unless CRSPIN_SIMD=scalar is set.
Isa active_isa();
/// Overrides the dispatch choice; throws std::invalid_argument if unavailable.
void set_active_isa(Isa isa);
std::string_view isa_name(Isa isa);

const Table& active();

inline void cmatmul(const cplx* a, const cplx* b, cplx* c, std::size_t n) { active().cmatmul(a, b, c, n); }
inline void cmatvec(const cplx* a, const cplx* x, cplx* y, std::size_t n) { active().cmatvec(a, x, y, n); }
inline void add_gaussian(const double* x, std::size_t n, double amp, double center, double fwhm, double* out) {
  active().add_gaussian(x, n, amp, center, fwhm, out);
}
inline void add_lorentzian(const double* x, std::size_t n, double amp, double center, double fwhm, double* out) {
  active().add_lorentzian(x, n, amp, center, fwhm, out);
}
inline double weighted_sse(const double* y, const double* m, const double* sigma, std::size_t n) {
  return active().weighted_sse(y, m, sigma, n);
}

}  // namespace crspin::kernels
