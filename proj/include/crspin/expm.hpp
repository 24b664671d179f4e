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
#include <complex>

namespace crspin {

using MatXc = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic>;

/// Matrix exponential by scaling and squaring with a diagonal Pade approximant
/// (degree 3..13 picked from the 1-norm). Backward error at unit roundoff.
MatXc expm(const MatXc& a);

/// Pade degree and number of squarings expm would use for this matrix.
struct ExpmPlan {
  int degree = 0;
  int squarings = 0;
};
ExpmPlan expm_plan(const MatXc& a);

}  // namespace crspin
