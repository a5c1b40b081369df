#include "fblab/kernels.hpp"

#include <cmath>
#include <cstring>

namespace fblab::kernels {

namespace {

void s_add(const double* a, const double* b, double* o, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) o[i] = a[i] + b[i];
}
void s_sub(const double* a, const double* b, double* o, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) o[i] = a[i] - b[i];
}
void s_mul(const double* a, const double* b, double* o, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) o[i] = a[i] * b[i];
}
void s_div(const double* a, const double* b, double* o, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) o[i] = a[i] / b[i];
}
void s_min(const double* a, const double* b, double* o, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) o[i] = a[i] < b[i] ? a[i] : b[i];
}
void s_max(const double* a, const double* b, double* o, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) o[i] = a[i] > b[i] ? a[i] : b[i];
}
void s_neg(const double* a, double* o, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) o[i] = -a[i];
}
void s_abs(const double* a, double* o, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) o[i] = std::fabs(a[i]);
}
void s_acc_scaled(double* o, const double* a, double s, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) o[i] = o[i] + a[i] * s;
}
void s_acc_prod(double* o, const double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) o[i] = o[i] + a[i] * b[i];
}
void s_fill(double* o, double v, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) o[i] = v;
}
// Ranges must not overlap (all call sites use disjoint buffers).
void s_copy(const double* a, double* o, std::size_t n) {
    if (n) std::memcpy(o, a, n * sizeof(double));
}
void s_affine(const double* a, double s, double c, double* o, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) o[i] = a[i] * s + c;
}

const KernelTable scalar_impl = {
    "scalar", s_add, s_sub, s_mul, s_div, s_min, s_max,
    s_neg,    s_abs, s_acc_scaled, s_acc_prod, s_fill, s_copy, s_affine,
};

const KernelTable* g_active = nullptr;
Backend g_backend = Backend::auto_detect;

void select(Backend b) {
    const KernelTable* v = avx2_table();
    switch (b) {
    case Backend::scalar:
        g_active = &scalar_impl;
        g_backend = Backend::scalar;
        break;
    case Backend::avx2:
    case Backend::auto_detect:
        g_active = v ? v : &scalar_impl;
        g_backend = v ? Backend::avx2 : Backend::scalar;
        break;
    }
}

} // namespace

const KernelTable& scalar_table() { return scalar_impl; }

const KernelTable& active() {
    if (!g_active) select(Backend::auto_detect);
    return *g_active;
}

void force_backend(Backend b) { select(b); }

Backend active_backend() {
    active();
    return g_backend;
}

double pairwise_fold(std::vector<double>& scratch) {
    std::size_t n = scratch.size();
    if (n == 0) return 0.0;
    const KernelTable& k = active();
    while (n > 1) {
        const std::size_t m = (n + 1) / 2;
        k.add(scratch.data(), scratch.data() + m, scratch.data(), n - m);
        n = m;
    }
    return scratch[0];
}

double pairwise_sum(std::span<const double> a) {
    thread_local std::vector<double> scratch;
    scratch.assign(a.begin(), a.end());
    return pairwise_fold(scratch);
}

double pairwise_dot(std::span<const double> a, std::span<const double> b) {
    thread_local std::vector<double> scratch;
    scratch.resize(a.size());
    active().mul(a.data(), b.data(), scratch.data(), a.size());
    return pairwise_fold(scratch);
}

} // namespace fblab::kernels
