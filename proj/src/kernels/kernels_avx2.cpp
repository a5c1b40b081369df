// AVX2 variants of the elementwise kernels. Per-lane semantics match the
// scalar reference exactly: plain vaddpd/vsubpd/vmulpd/vdivpd, min/max with
// vminpd/vmaxpd ((a<b)?a:b ordering), abs/neg by sign-bit masking, and the
// accumulate kernels round multiply-then-add like the scalar loops (no FMA).
// Compiled with -mavx2 in its own translation unit; callers only reach these
// through the dispatch table after a CPU check.

#include "fblab/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64) || defined(__i386__)
#define FBLAB_X86 1
#include <immintrin.h>
#endif

namespace fblab::kernels {

#if defined(FBLAB_X86) && defined(__AVX2__)

namespace {

void v_add(const double* a, const double* b, double* o, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(o + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) o[i] = a[i] + b[i];
}
void v_sub(const double* a, const double* b, double* o, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(o + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) o[i] = a[i] - b[i];
}
void v_mul(const double* a, const double* b, double* o, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(o + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) o[i] = a[i] * b[i];
}
void v_div(const double* a, const double* b, double* o, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(o + i, _mm256_div_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) o[i] = a[i] / b[i];
}
void v_min(const double* a, const double* b, double* o, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(o + i, _mm256_min_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) o[i] = a[i] < b[i] ? a[i] : b[i];
}
void v_max(const double* a, const double* b, double* o, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(o + i, _mm256_max_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) o[i] = a[i] > b[i] ? a[i] : b[i];
}
void v_neg(const double* a, double* o, std::size_t n) {
    const __m256d sign = _mm256_set1_pd(-0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(o + i, _mm256_xor_pd(_mm256_loadu_pd(a + i), sign));
    for (; i < n; ++i) o[i] = -a[i];
}
void v_abs(const double* a, double* o, std::size_t n) {
    const __m256d mask = _mm256_castsi256_pd(_mm256_srli_epi64(_mm256_set1_epi64x(-1), 1));
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(o + i, _mm256_and_pd(_mm256_loadu_pd(a + i), mask));
    for (; i < n; ++i) o[i] = __builtin_fabs(a[i]);
}
void v_acc_scaled(double* o, const double* a, double s, std::size_t n) {
    const __m256d vs = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d prod = _mm256_mul_pd(_mm256_loadu_pd(a + i), vs);
        _mm256_storeu_pd(o + i, _mm256_add_pd(_mm256_loadu_pd(o + i), prod));
    }
    for (; i < n; ++i) o[i] = o[i] + a[i] * s;
}
void v_acc_prod(double* o, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d prod = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        _mm256_storeu_pd(o + i, _mm256_add_pd(_mm256_loadu_pd(o + i), prod));
    }
    for (; i < n; ++i) o[i] = o[i] + a[i] * b[i];
}
void v_fill(double* o, double v, std::size_t n) {
    const __m256d vv = _mm256_set1_pd(v);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(o + i, vv);
    for (; i < n; ++i) o[i] = v;
}
void v_copy(const double* a, double* o, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(o + i, _mm256_loadu_pd(a + i));
    for (; i < n; ++i) o[i] = a[i];
}
void v_affine(const double* a, double s, double c, double* o, std::size_t n) {
    const __m256d vs = _mm256_set1_pd(s);
    const __m256d vc = _mm256_set1_pd(c);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(o + i, _mm256_add_pd(_mm256_mul_pd(_mm256_loadu_pd(a + i), vs), vc));
    for (; i < n; ++i) o[i] = a[i] * s + c;
}

const KernelTable avx2_impl = {
    "avx2", v_add, v_sub, v_mul, v_div, v_min, v_max,
    v_neg,  v_abs, v_acc_scaled, v_acc_prod, v_fill, v_copy, v_affine,
};

} // namespace

const KernelTable* avx2_table() {
    return __builtin_cpu_supports("avx2") ? &avx2_impl : nullptr;
}

#else

const KernelTable* avx2_table() { return nullptr; }

#endif

} // namespace fblab::kernels
