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

#pragma once

#include <cstddef>
#include <string_view>

// Dense inner loops used by the tape ops. Every kernel has a scalar
// reference implementation; SIMD variants are selected once at startup
// from the host CPU and can be overridden with GGVIT_SIMD=scalar|avx2.

namespace ggvit::kernels {

enum class Isa { kScalar, kAvx2 };

template <typename T>
struct KernelTable {
    // c[m,n] (+)= a[m,k] * b[k,n], all row-major and contiguous.
    void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
                 bool accumulate);
    // y += alpha * x
    void (*axpy)(std::size_t n, T alpha, const T* x, T* y);
    T (*dot)(std::size_t n, const T* x, const T* y);
    void (*add)(std::size_t n, const T* x, const T* y, T* out);
    void (*mul)(std::size_t n, const T* x, const T* y, T* out);
    void (*scale)(std::size_t n, T alpha, const T* x, T* out);
    // out = e^x element-wise; in-place allowed. SIMD variants stay within a
    // few ulp of std::exp, return 0 below the normal range and +inf above it.
    void (*exp)(std::size_t n, const T* x, T* out);
};

namespace scalar {
template <typename T>
const KernelTable<T>& table();
}  // namespace scalar

namespace avx2 {
// nullptr when the build has no AVX2 variant.
template <typename T>
const KernelTable<T>* table();
}  // namespace avx2

bool cpu_supports(Isa isa);

Isa active_isa();

// Forces a kernel family; throws if the host or build cannot run it.
void set_isa(Isa isa);

std::string_view isa_name(Isa isa);

template <typename T>
const KernelTable<T>& active();

}  // namespace ggvit::kernels
