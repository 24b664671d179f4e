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

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <stdexcept>

#include "crspin/kernels.hpp"

namespace crspin::kernels {
namespace {

Isa detect() {
  if (const char* env = std::getenv("CRSPIN_SIMD"); env && std::strcmp(env, "scalar") == 0) return Isa::scalar;
  return isa_available(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

std::atomic<const Table*>& current() {
  static std::atomic<const Table*> t{&table(detect())};
  return t;
}

std::atomic<Isa>& current_isa() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

bool isa_available(Isa isa) {
  if (isa == Isa::scalar) return true;
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const Table& table(Isa isa) { return isa == Isa::avx2 ? avx2_table() : scalar_table(); }

Isa active_isa() { return current_isa().load(); }

void set_active_isa(Isa isa) {
  if (!isa_available(isa)) throw std::invalid_argument("instruction set not available: " + std::string(isa_name(isa)));
  current_isa().store(isa);
  current().store(&table(isa));
}

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

const Table& active() { return *current().load(std::memory_order_relaxed); }

}  // namespace crspin::kernels
