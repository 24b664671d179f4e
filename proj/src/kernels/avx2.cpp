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

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>
#define CRSPIN_HAVE_X86 1
#endif

namespace crspin::kernels {

#ifdef CRSPIN_HAVE_X86
namespace avx2_impl {

#define CRSPIN_AVX2 __attribute__((target("avx2,fma")))

// acc += a * (br + i bi) for two packed complex values in a.
CRSPIN_AVX2 inline __m256d cfma(__m256d acc, __m256d a, __m256d br, __m256d bi) {
  const __m256d swapped = _mm256_permute_pd(a, 0b0101);
  const __m256d t = _mm256_mul_pd(swapped, bi);
  return _mm256_add_pd(acc, _mm256_fmaddsub_pd(a, br, t));
}

CRSPIN_AVX2 void axpy_columns(const cplx* a, const cplx* coef, std::size_t stride, cplx* y, std::size_t n) {
  // y = sum_k A(:,k) * coef[k * stride]
  const std::size_t pairs = n / 2;
  const double* ad = reinterpret_cast<const double*>(a);
  double* yd = reinterpret_cast<double*>(y);
  if (n == 16) {
    __m256d acc[8];
    for (auto& v : acc) v = _mm256_setzero_pd();
    for (std::size_t k = 0; k < 16; ++k) {
      const cplx c = coef[k * stride];
      const __m256d br = _mm256_set1_pd(c.real());
      const __m256d bi = _mm256_set1_pd(c.imag());
      const double* col = ad + 32 * k;
      for (int p = 0; p < 8; ++p) acc[p] = cfma(acc[p], _mm256_loadu_pd(col + 4 * p), br, bi);
    }
    for (int p = 0; p < 8; ++p) _mm256_storeu_pd(yd + 4 * p, acc[p]);
    return;
  }
  for (std::size_t i = 0; i < n; ++i) y[i] = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const cplx c = coef[k * stride];
    const __m256d br = _mm256_set1_pd(c.real());
    const __m256d bi = _mm256_set1_pd(c.imag());
    const double* col = ad + 2 * n * k;
    for (std::size_t p = 0; p < pairs; ++p) {
      __m256d acc = _mm256_loadu_pd(yd + 4 * p);
      acc = cfma(acc, _mm256_loadu_pd(col + 4 * p), br, bi);
      _mm256_storeu_pd(yd + 4 * p, acc);
    }
    if (n % 2) y[n - 1] += a[k * n + n - 1] * c;
  }
}

CRSPIN_AVX2 void cmatmul(const cplx* a, const cplx* b, cplx* c, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) axpy_columns(a, b + j * n, 1, c + j * n, n);
}

CRSPIN_AVX2 void cmatvec(const cplx* a, const cplx* x, cplx* y, std::size_t n) { axpy_columns(a, x, 1, y, n); }

// exp(x) for x <= 0: Cody-Waite reduction x = k ln2 + r, degree-12 Taylor in r.
CRSPIN_AVX2 inline __m256d exp_nonpositive(__m256d x) {
  const __m256d lo = _mm256_set1_pd(-708.0);
  const __m256d underflow = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
  x = _mm256_max_pd(x, lo);
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634);
  const __m256d ln2_hi = _mm256_set1_pd(6.93145751953125e-1);
  const __m256d ln2_lo = _mm256_set1_pd(1.42860682030941723212e-6);
  const __m256d k = _mm256_round_pd(_mm256_mul_pd(x, log2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(k, ln2_hi, x);
  r = _mm256_fnmadd_pd(k, ln2_lo, r);
  static constexpr double c[] = {1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0, 1.0 / 362880.0,
                                 1.0 / 40320.0,     1.0 / 5040.0,     1.0 / 720.0,     1.0 / 120.0,
                                 1.0 / 24.0,        1.0 / 6.0,        0.5,             1.0,
                                 1.0};
  __m256d p = _mm256_set1_pd(c[0]);
  for (int i = 1; i < 13; ++i) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(c[i]));
  // 2^k through the exponent field; k >= -1022 here.
  const __m128i ki = _mm256_cvtpd_epi32(k);
  const __m256i kl = _mm256_cvtepi32_epi64(ki);
  const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(kl, _mm256_set1_epi64x(1023)), 52);
  const __m256d scale = _mm256_castsi256_pd(bits);
  return _mm256_andnot_pd(underflow, _mm256_mul_pd(p, scale));
}

CRSPIN_AVX2 void add_gaussian(const double* x, std::size_t n, double amp, double center, double fwhm, double* out) {
  const double kc = 4.0 * std::log(2.0) / (fwhm * fwhm);
  const __m256d vk = _mm256_set1_pd(-kc);
  const __m256d vc = _mm256_set1_pd(center);
  const __m256d va = _mm256_set1_pd(amp);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), vc);
    const __m256d e = exp_nonpositive(_mm256_mul_pd(vk, _mm256_mul_pd(d, d)));
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(va, e, _mm256_loadu_pd(out + i)));
  }
  for (; i < n; ++i) {
    const double d = x[i] - center;
    out[i] += amp * std::exp(-kc * d * d);
  }
}

CRSPIN_AVX2 void add_lorentzian(const double* x, std::size_t n, double amp, double center, double fwhm, double* out) {
  const double hw2 = 0.25 * fwhm * fwhm;
  const __m256d vh = _mm256_set1_pd(hw2);
  const __m256d vc = _mm256_set1_pd(center);
  const __m256d vn = _mm256_set1_pd(amp * hw2);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), vc);
    const __m256d den = _mm256_fmadd_pd(d, d, vh);
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(out + i), _mm256_div_pd(vn, den)));
  }
  for (; i < n; ++i) {
    const double d = x[i] - center;
    out[i] += amp * hw2 / (d * d + hw2);
  }
}

CRSPIN_AVX2 double weighted_sse(const double* y, const double* m, const double* sigma, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d r = _mm256_div_pd(_mm256_sub_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(m + i)),
                                    _mm256_loadu_pd(sigma + i));
    acc = _mm256_fmadd_pd(r, r, acc);
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) {
    const double r = (y[i] - m[i]) / sigma[i];
    s += r * r;
  }
  return s;
}

}  // namespace avx2_impl

const Table& avx2_table() {
  static const Table t{avx2_impl::cmatmul, avx2_impl::cmatvec, avx2_impl::add_gaussian, avx2_impl::add_lorentzian, avx2_impl::weighted_sse};
  return t;
}

#else

const Table& avx2_table() { return scalar_table(); }

#endif

}  // namespace crspin::kernels
