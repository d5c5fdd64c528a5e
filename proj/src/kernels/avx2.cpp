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

// This translation unit is compiled with -mavx2 -mfma. Nothing here may run
// before dispatch.cpp has confirmed CPU support.

#include <immintrin.h>

#include "ggvit/kernels.hpp"

namespace ggvit::kernels::avx2 {

namespace {

template <typename T>
struct Vec;

template <>
struct Vec<float> {
    using reg = __m256;
    static constexpr std::size_t kLanes = 8;
    static reg zero() { return _mm256_setzero_ps(); }
    static reg load(const float* p) { return _mm256_loadu_ps(p); }
    static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
    static reg set1(float v) { return _mm256_set1_ps(v); }
    static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
    static reg add(reg a, reg b) { return _mm256_add_ps(a, b); }
    static reg mul(reg a, reg b) { return _mm256_mul_ps(a, b); }
    static __m256i mask(std::size_t count) {
        return _mm256_cmpgt_epi32(_mm256_set1_epi32(int(count)), _mm256_setr_epi32(0, 1, 2, 3, 4, 5, 6, 7));
    }
    static reg maskload(const float* p, __m256i m) { return _mm256_maskload_ps(p, m); }
    static void maskstore(float* p, __m256i m, reg v) { _mm256_maskstore_ps(p, m, v); }
    static float hsum(reg v) {
        __m128 lo = _mm256_castps256_ps128(v);
        __m128 hi = _mm256_extractf128_ps(v, 1);
        lo = _mm_add_ps(lo, hi);
        __m128 sh = _mm_movehdup_ps(lo);
        __m128 s = _mm_add_ps(lo, sh);
        sh = _mm_movehl_ps(sh, s);
        s = _mm_add_ss(s, sh);
        return _mm_cvtss_f32(s);
    }
};

template <>
struct Vec<double> {
    using reg = __m256d;
    static constexpr std::size_t kLanes = 4;
    static reg zero() { return _mm256_setzero_pd(); }
    static reg load(const double* p) { return _mm256_loadu_pd(p); }
    static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
    static reg set1(double v) { return _mm256_set1_pd(v); }
    static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
    static reg add(reg a, reg b) { return _mm256_add_pd(a, b); }
    static reg mul(reg a, reg b) { return _mm256_mul_pd(a, b); }
    static __m256i mask(std::size_t count) {
        return _mm256_cmpgt_epi64(_mm256_set1_epi64x(static_cast<long long>(count)), _mm256_setr_epi64x(0, 1, 2, 3));
    }
    static reg maskload(const double* p, __m256i m) { return _mm256_maskload_pd(p, m); }
    static void maskstore(double* p, __m256i m, reg v) { _mm256_maskstore_pd(p, m, v); }
    static double hsum(reg v) {
        __m128d lo = _mm256_castpd256_pd128(v);
        __m128d hi = _mm256_extractf128_pd(v, 1);
        lo = _mm_add_pd(lo, hi);
        __m128d h = _mm_unpackhi_pd(lo, lo);
        return _mm_cvtsd_f64(_mm_add_sd(lo, h));
    }
};

// 4 rows x 2 registers register-blocked micro kernel over the full k extent.
template <typename T, std::size_t Rows>
inline void gemm_block(std::size_t n, std::size_t k, const T* a, const T* b, T* c, std::size_t j) {
    using V = Vec<T>;
    constexpr std::size_t L = V::kLanes;
    typename V::reg acc0[Rows];
    typename V::reg acc1[Rows];
    for (std::size_t r = 0; r < Rows; ++r) {
        acc0[r] = V::load(c + r * n + j);
        acc1[r] = V::load(c + r * n + j + L);
    }
    for (std::size_t p = 0; p < k; ++p) {
        const typename V::reg b0 = V::load(b + p * n + j);
        const typename V::reg b1 = V::load(b + p * n + j + L);
        for (std::size_t r = 0; r < Rows; ++r) {
            const typename V::reg av = V::set1(a[r * k + p]);
            acc0[r] = V::fmadd(av, b0, acc0[r]);
            acc1[r] = V::fmadd(av, b1, acc1[r]);
        }
    }
    for (std::size_t r = 0; r < Rows; ++r) {
        V::store(c + r * n + j, acc0[r]);
        V::store(c + r * n + j + L, acc1[r]);
    }
}

template <typename T, std::size_t Rows>
inline void gemm_block_single(std::size_t n, std::size_t k, const T* a, const T* b, T* c,
                              std::size_t j) {
    using V = Vec<T>;
    typename V::reg acc[Rows];
    for (std::size_t r = 0; r < Rows; ++r) acc[r] = V::load(c + r * n + j);
    for (std::size_t p = 0; p < k; ++p) {
        const typename V::reg bv = V::load(b + p * n + j);
        for (std::size_t r = 0; r < Rows; ++r) acc[r] = V::fmadd(V::set1(a[r * k + p]), bv, acc[r]);
    }
    for (std::size_t r = 0; r < Rows; ++r) V::store(c + r * n + j, acc[r]);
}

template <typename T, std::size_t Rows>
inline void gemm_rows(std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    constexpr std::size_t L = Vec<T>::kLanes;
    std::size_t j = 0;
    for (; j + 2 * L <= n; j += 2 * L) gemm_block<T, Rows>(n, k, a, b, c, j);
    for (; j + L <= n; j += L) gemm_block_single<T, Rows>(n, k, a, b, c, j);
    if (j < n) {
        using V = Vec<T>;
        const __m256i m = V::mask(n - j);
        typename V::reg acc[Rows];
        for (std::size_t r = 0; r < Rows; ++r) acc[r] = V::maskload(c + r * n + j, m);
        for (std::size_t p = 0; p < k; ++p) {
            const typename V::reg bv = V::maskload(b + p * n + j, m);
            for (std::size_t r = 0; r < Rows; ++r) acc[r] = V::fmadd(V::set1(a[r * k + p]), bv, acc[r]);
        }
        for (std::size_t r = 0; r < Rows; ++r) V::maskstore(c + r * n + j, m, acc[r]);
    }
}

template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
          bool accumulate) {
    if (!accumulate) {
        for (std::size_t i = 0; i < m * n; ++i) c[i] = T(0);
    }
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) gemm_rows<T, 4>(n, k, a + i * k, b, c + i * n);
    for (; i < m; ++i) gemm_rows<T, 1>(n, k, a + i * k, b, c + i * n);
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
    using V = Vec<T>;
    const typename V::reg av = V::set1(alpha);
    std::size_t i = 0;
    for (; i + V::kLanes <= n; i += V::kLanes) V::store(y + i, V::fmadd(av, V::load(x + i), V::load(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
T dot(std::size_t n, const T* x, const T* y) {
    using V = Vec<T>;
    typename V::reg acc = V::zero();
    std::size_t i = 0;
    for (; i + V::kLanes <= n; i += V::kLanes) acc = V::fmadd(V::load(x + i), V::load(y + i), acc);
    T s = V::hsum(acc);
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

template <typename T>
void add(std::size_t n, const T* x, const T* y, T* out) {
    using V = Vec<T>;
    std::size_t i = 0;
    for (; i + V::kLanes <= n; i += V::kLanes) V::store(out + i, V::add(V::load(x + i), V::load(y + i)));
    for (; i < n; ++i) out[i] = x[i] + y[i];
}

template <typename T>
void mul(std::size_t n, const T* x, const T* y, T* out) {
    using V = Vec<T>;
    std::size_t i = 0;
    for (; i + V::kLanes <= n; i += V::kLanes) V::store(out + i, V::mul(V::load(x + i), V::load(y + i)));
    for (; i < n; ++i) out[i] = x[i] * y[i];
}

template <typename T>
void scale(std::size_t n, T alpha, const T* x, T* out) {
    using V = Vec<T>;
    const typename V::reg av = V::set1(alpha);
    std::size_t i = 0;
    for (; i + V::kLanes <= n; i += V::kLanes) V::store(out + i, V::mul(av, V::load(x + i)));
    for (; i < n; ++i) out[i] = alpha * x[i];
}

}  // namespace


// e^x = 2^n * e^r with n = round(x / ln2), |r| <= ln2 / 2, and e^r from a
// Taylor polynomial (degree 13 for double, 7 for float). 2^n is applied as
// two factors so the extreme n stay representable.
inline __m256d exp_pd(__m256d x) {
    const __m256d hi = _mm256_set1_pd(709.78);
    const __m256d lo = _mm256_set1_pd(-708.39);
    const __m256d nan = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);
    const __m256d over = _mm256_cmp_pd(x, hi, _CMP_GT_OQ);
    const __m256d under = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
    const __m256d xc = _mm256_min_pd(_mm256_max_pd(x, lo), hi);
    const __m256d n = _mm256_round_pd(_mm256_mul_pd(xc, _mm256_set1_pd(1.4426950408889634)),
                                      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93147180369123816490e-01), xc);
    r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.90821492927058770002e-10), r);
    static constexpr double kInvFact[14] = {1.0,
                                            1.0,
                                            0.5,
                                            1.0 / 6.0,
                                            1.0 / 24.0,
                                            1.0 / 120.0,
                                            1.0 / 720.0,
                                            1.0 / 5040.0,
                                            1.0 / 40320.0,
                                            1.0 / 362880.0,
                                            1.0 / 3628800.0,
                                            1.0 / 39916800.0,
                                            1.0 / 479001600.0,
                                            1.0 / 6227020800.0};
    __m256d p = _mm256_set1_pd(kInvFact[13]);
    for (int k = 12; k >= 0; --k) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(kInvFact[k]));
    const __m256d magic = _mm256_set1_pd(0x1.8p52);
    const __m256i ni = _mm256_sub_epi64(_mm256_castpd_si256(_mm256_add_pd(n, magic)), _mm256_castpd_si256(magic));
    const __m256i a = _mm256_srai_epi32(ni, 1);
    const __m256i b = _mm256_sub_epi64(ni, a);
    const __m256i bias = _mm256_set1_epi64x(1023);
    const __m256d pa = _mm256_castsi256_pd(_mm256_slli_epi64(_mm256_add_epi64(a, bias), 52));
    const __m256d pb = _mm256_castsi256_pd(_mm256_slli_epi64(_mm256_add_epi64(b, bias), 52));
    __m256d y = _mm256_mul_pd(_mm256_mul_pd(p, pa), pb);
    y = _mm256_blendv_pd(y, _mm256_set1_pd(__builtin_inf()), over);
    y = _mm256_blendv_pd(y, _mm256_setzero_pd(), under);
    return _mm256_blendv_pd(y, x, nan);
}

inline __m256 exp_ps(__m256 x) {
    const __m256 hi = _mm256_set1_ps(88.72f);
    const __m256 lo = _mm256_set1_ps(-87.33f);
    const __m256 nan = _mm256_cmp_ps(x, x, _CMP_UNORD_Q);
    const __m256 over = _mm256_cmp_ps(x, hi, _CMP_GT_OQ);
    const __m256 under = _mm256_cmp_ps(x, lo, _CMP_LT_OQ);
    const __m256 xc = _mm256_min_ps(_mm256_max_ps(x, lo), hi);
    const __m256 n = _mm256_round_ps(_mm256_mul_ps(xc, _mm256_set1_ps(1.44269504f)),
                                     _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256 r = _mm256_fnmadd_ps(n, _mm256_set1_ps(0.693359375f), xc);
    r = _mm256_fnmadd_ps(n, _mm256_set1_ps(-2.12194440e-4f), r);
    static constexpr float kInvFact[8] = {1.0f,         1.0f,          0.5f,           1.0f / 6.0f,
                                          1.0f / 24.0f, 1.0f / 120.0f, 1.0f / 720.0f, 1.0f / 5040.0f};
    __m256 p = _mm256_set1_ps(kInvFact[7]);
    for (int k = 6; k >= 0; --k) p = _mm256_fmadd_ps(p, r, _mm256_set1_ps(kInvFact[k]));
    const __m256i ni = _mm256_cvtps_epi32(n);
    const __m256i a = _mm256_srai_epi32(ni, 1);
    const __m256i b = _mm256_sub_epi32(ni, a);
    const __m256i bias = _mm256_set1_epi32(127);
    const __m256 pa = _mm256_castsi256_ps(_mm256_slli_epi32(_mm256_add_epi32(a, bias), 23));
    const __m256 pb = _mm256_castsi256_ps(_mm256_slli_epi32(_mm256_add_epi32(b, bias), 23));
    __m256 y = _mm256_mul_ps(_mm256_mul_ps(p, pa), pb);
    y = _mm256_blendv_ps(y, _mm256_set1_ps(__builtin_inff()), over);
    y = _mm256_blendv_ps(y, _mm256_setzero_ps(), under);
    return _mm256_blendv_ps(y, x, nan);
}

__m256d vexp(__m256d x) { return exp_pd(x); }
__m256 vexp(__m256 x) { return exp_ps(x); }

template <typename T>
void exp(std::size_t n, const T* x, T* out) {
    using V = Vec<T>;
    constexpr std::size_t L = V::kLanes;
    std::size_t i = 0;
    for (; i + 4 * L <= n; i += 4 * L) {
        const auto a0 = vexp(V::load(x + i));
        const auto a1 = vexp(V::load(x + i + L));
        const auto a2 = vexp(V::load(x + i + 2 * L));
        const auto a3 = vexp(V::load(x + i + 3 * L));
        V::store(out + i, a0);
        V::store(out + i + L, a1);
        V::store(out + i + 2 * L, a2);
        V::store(out + i + 3 * L, a3);
    }
    for (; i + L <= n; i += L) V::store(out + i, vexp(V::load(x + i)));
    if (i < n) {
        const __m256i m = V::mask(n - i);
        V::maskstore(out + i, m, vexp(V::maskload(x + i, m)));
    }
}

template <typename T>
const KernelTable<T>* table() {
    static const KernelTable<T> t{&gemm<T>, &axpy<T>, &dot<T>, &add<T>, &mul<T>, &scale<T>, &exp<T>};
    return &t;
}

template const KernelTable<float>* table<float>();
template const KernelTable<double>* table<double>();

}  // namespace ggvit::kernels::avx2
