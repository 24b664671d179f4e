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

#include "crspin/expm.hpp"

#include <Eigen/LU>
#include <array>
#include <cmath>

#include "crspin/kernels.hpp"

namespace crspin {
namespace {

constexpr std::array<double, 5> kTheta = {1.495585217958292e-2, 2.539398330063230e-1, 9.504178996162932e-1,
                                          2.097847961257068e0, 5.371920351148152e0};
constexpr std::array<int, 5> kDegree = {3, 5, 7, 9, 13};

MatXc mul(const MatXc& a, const MatXc& b) {
  MatXc c(a.rows(), b.cols());
  kernels::cmatmul(a.data(), b.data(), c.data(), static_cast<std::size_t>(a.rows()));
  return c;
}

// Pade numerator coefficients b_0..b_m for each degree.
const double* pade_coefficients(int m) {
  static const double b3[] = {120, 60, 12, 1};
  static const double b5[] = {30240, 15120, 3360, 420, 30, 1};
  static const double b7[] = {17297280, 8648640, 1995840, 277200, 25200, 1512, 56, 1};
  static const double b9[] = {17643225600, 8821612800, 2075673600, 302702400, 30270240,
                              2162160,     110880,     3960,       90,        1};
  static const double b13[] = {64764752532480000, 32382376266240000, 7771770303897600, 1187353796428800,
                               129060195264000,   10559470521600,    670442572800,     33522128640,
                               1323241920,        40840800,          960960,           16380,
                               182,               1};
  switch (m) {
    case 3: return b3;
    case 5: return b5;
    case 7: return b7;
    case 9: return b9;
    default: return b13;
  }
}

}  // namespace

ExpmPlan expm_plan(const MatXc& a) {
  const double norm = a.cwiseAbs().colwise().sum().maxCoeff();
  for (std::size_t i = 0; i + 1 < kTheta.size(); ++i) {
    if (norm <= kTheta[i]) return {kDegree[i], 0};
  }
  int s = 0;
  if (norm > kTheta.back()) s = static_cast<int>(std::ceil(std::log2(norm / kTheta.back())));
  return {13, s};
}

MatXc expm(const MatXc& a) {
  const Eigen::Index n = a.rows();
  const ExpmPlan plan = expm_plan(a);
  const MatXc x = a * std::ldexp(1.0, -plan.squarings);
  const MatXc id = MatXc::Identity(n, n);
  const double* b = pade_coefficients(plan.degree);

  MatXc u, v;
  const MatXc x2 = mul(x, x);
  if (plan.degree < 13) {
    // Even powers up to x^(m-1).
    std::array<MatXc, 5> pw;
    pw[0] = id;
    pw[1] = x2;
    const int half = (plan.degree - 1) / 2;
    for (int k = 2; k <= half; ++k) pw[static_cast<std::size_t>(k)] = mul(pw[static_cast<std::size_t>(k - 1)], x2);
    MatXc us = MatXc::Zero(n, n);
    v = MatXc::Zero(n, n);
    for (int k = 0; k <= half; ++k) {
      us += b[2 * k + 1] * pw[static_cast<std::size_t>(k)];
      v += b[2 * k] * pw[static_cast<std::size_t>(k)];
    }
    u = mul(x, us);
  } else {
    const MatXc x4 = mul(x2, x2);
    const MatXc x6 = mul(x4, x2);
    const MatXc uw = b[13] * x6 + b[11] * x4 + b[9] * x2;
    MatXc ut = mul(x6, uw);
    ut += b[7] * x6 + b[5] * x4 + b[3] * x2 + b[1] * id;
    u = mul(x, ut);
    const MatXc vw = b[12] * x6 + b[10] * x4 + b[8] * x2;
    v = mul(x6, vw);
    v += b[6] * x6 + b[4] * x4 + b[2] * x2 + b[0] * id;
  }
  MatXc r = Eigen::PartialPivLU<MatXc>(v - u).solve(v + u);
  for (int k = 0; k < plan.squarings; ++k) r = mul(r, r);
  return r;
}

}  // namespace crspin
