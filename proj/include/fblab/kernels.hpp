#pragma once

#include <cstddef>
#include <span>
#include <vector>

// Elementwise array kernels with a scalar reference implementation and an
// AVX2 variant selected at runtime. Both variants are required to produce
// bit-identical results: every lane performs the same IEEE-754 double
// operation as the scalar loop (no fused multiply-add, no reassociation),
// and reductions use a fixed pairwise folding tree that depends only on the
// input length. Transcendentals stay scalar libm calls in both variants.

namespace fblab::kernels {

enum class Backend { auto_detect, scalar, avx2 };

struct KernelTable {
    const char* name;
    void (*add)(const double*, const double*, double*, std::size_t);
    void (*sub)(const double*, const double*, double*, std::size_t);
    void (*mul)(const double*, const double*, double*, std::size_t);
    void (*div)(const double*, const double*, double*, std::size_t);
    // (a < b) ? a : b per lane, i.e. vminpd sign conventions, not fmin.
    void (*min)(const double*, const double*, double*, std::size_t);
    void (*max)(const double*, const double*, double*, std::size_t);
    void (*neg)(const double*, double*, std::size_t);
    void (*abs)(const double*, double*, std::size_t);
    // out[i] += a[i] * s, rounded as multiply then add (two roundings).
    void (*acc_scaled)(double*, const double*, double, std::size_t);
    // out[i] += a[i] * b[i], same rounding contract.
    void (*acc_prod)(double*, const double*, const double*, std::size_t);
    void (*fill)(double*, double, std::size_t);
    void (*copy)(const double*, double*, std::size_t);
    // out[i] = a[i] * s + c, multiply then add.
    void (*affine)(const double*, double, double, double*, std::size_t);
};

const KernelTable& scalar_table();
/// Null when this build or CPU cannot run AVX2.
const KernelTable* avx2_table();

/// The table used by the convenience wrappers below.
const KernelTable& active();
/// Select a backend explicitly; auto_detect re-probes the CPU.
/// Requesting avx2 on a CPU without it falls back to scalar.
void force_backend(Backend b);
Backend active_backend();

inline void add(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    active().add(a.data(), b.data(), out.data(), out.size());
}
inline void sub(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    active().sub(a.data(), b.data(), out.data(), out.size());
}
inline void mul(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    active().mul(a.data(), b.data(), out.data(), out.size());
}
inline void div(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    active().div(a.data(), b.data(), out.data(), out.size());
}
inline void min(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    active().min(a.data(), b.data(), out.data(), out.size());
}
inline void max(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    active().max(a.data(), b.data(), out.data(), out.size());
}
inline void neg(std::span<const double> a, std::span<double> out) {
    active().neg(a.data(), out.data(), out.size());
}
inline void abs(std::span<const double> a, std::span<double> out) {
    active().abs(a.data(), out.data(), out.size());
}
inline void acc_scaled(std::span<double> out, std::span<const double> a, double s) {
    active().acc_scaled(out.data(), a.data(), s, out.size());
}
inline void acc_prod(std::span<double> out, std::span<const double> a, std::span<const double> b) {
    active().acc_prod(out.data(), a.data(), b.data(), out.size());
}
inline void fill(std::span<double> out, double v) { active().fill(out.data(), v, out.size()); }
inline void copy(std::span<const double> a, std::span<double> out) {
    active().copy(a.data(), out.data(), out.size());
}
inline void affine(std::span<const double> a, double s, double c, std::span<double> out) {
    active().affine(a.data(), s, c, out.data(), out.size());
}

/// Sum with a fixed pairwise folding tree: repeatedly add the back half onto
/// the front half. The tree depends only on the length, so the result is
/// identical for every backend and thread count.
double pairwise_sum(std::span<const double> a);
/// Dot product via elementwise multiply followed by pairwise_sum.
double pairwise_dot(std::span<const double> a, std::span<const double> b);
/// In-place fold of a scratch buffer (consumed); used by the two above.
double pairwise_fold(std::vector<double>& scratch);

} // namespace fblab::kernels
