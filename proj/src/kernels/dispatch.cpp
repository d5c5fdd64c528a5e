// Copyright 2026 The GGViT Authors
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
#include <stdexcept>
#include <string>

#include "ggvit/kernels.hpp"

namespace ggvit::kernels {

#ifndef GGVIT_HAVE_AVX2
namespace avx2 {
template <typename T>
const KernelTable<T>* table() {
    return nullptr;
}
template const KernelTable<float>* table<float>();
template const KernelTable<double>* table<double>();
}  // namespace avx2
#endif

bool cpu_supports(Isa isa) {
    switch (isa) {
        case Isa::kScalar:
            return true;
        case Isa::kAvx2:
#if defined(GGVIT_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
            __builtin_cpu_init();
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
    }
    return false;
}

namespace {

Isa detect() {
    if (const char* env = std::getenv("GGVIT_SIMD")) {
        const std::string v(env);
        if (v == "scalar") return Isa::kScalar;
        if (v == "avx2" && cpu_supports(Isa::kAvx2)) return Isa::kAvx2;
    }
    return cpu_supports(Isa::kAvx2) ? Isa::kAvx2 : Isa::kScalar;
}

std::atomic<Isa>& current() {
    static std::atomic<Isa> isa{detect()};
    return isa;
}

}  // namespace

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
    if (!cpu_supports(isa)) {
        throw std::runtime_error("kernel family '" + std::string(isa_name(isa)) +
                                 "' is not available on this host");
    }
    current().store(isa, std::memory_order_relaxed);
}

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::kScalar:
            return "scalar";
        case Isa::kAvx2:
            return "avx2";
    }
    return "unknown";
}

template <typename T>
const KernelTable<T>& active() {
    if (active_isa() == Isa::kAvx2) return *avx2::table<T>();
    return scalar::table<T>();
}

template const KernelTable<float>& active<float>();
template const KernelTable<double>& active<double>();

}  // namespace ggvit::kernels
