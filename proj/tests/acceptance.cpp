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


// Runs every acceptance criterion and prints one line per criterion.
// Exit status is the number of failed criteria.

#include <cstdio>

#include "crspin/suite.hpp"

int main() {
  int failed = 0;
  crspin::run_acceptance({}, [&](const crspin::CriterionResult& r) {
    std::printf("%s\n", crspin::format_row(r).c_str());
    std::fflush(stdout);
    failed += r.pass ? 0 : 1;
  });
  std::printf("%d of 11 criteria failed\n", failed);
  return failed;
}
