#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fblab/kernels.hpp"
#include "fblab/parallel.hpp"
#include "fblab/rng.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace k = fblab::kernels;

namespace {

// Inputs salted with every awkward IEEE value: the equivalence contract has
// to hold on NaN payloads, signed zeros, infinities and denormals too.
std::vector<double> awkward_input(std::size_t len, std::uint64_t seed) {
    fblab::rng::Stream s(seed, 17);
    const double specials[] = {
        0.0,
        -0.0,
        std::numeric_limits<double>::infinity(),
        -std::numeric_limits<double>::infinity(),
        std::numeric_limits<double>::quiet_NaN(),
        std::numeric_limits<double>::denorm_min(),
        -std::numeric_limits<double>::denorm_min(),
        std::numeric_limits<double>::max(),
        -std::numeric_limits<double>::max(),
        std::numeric_limits<double>::min(),
        1.0,
        -1.0,
        1e-300,
        -1e300,
        0.1,
    };
    std::vector<double> v(len);
    for (auto& x : v) {
        if (s.next_uniform() < 0.25)
            x = specials[s.next_u64() % (sizeof(specials) / sizeof(specials[0]))];
        else
            x = (s.next_uniform() * 2.0 - 1.0) * 1e3;
    }
    return v;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i]))
            return false;
    return true;
}

const std::vector<std::size_t>& test_lengths() {
    static const std::vector<std::size_t> lens = [] {
        std::vector<std::size_t> v;
        for (std::size_t l = 0; l <= 33; ++l) v.push_back(l);
        v.push_back(1000);
        return v;
    }();
    return lens;
}

} // namespace

TEST_CASE("scalar and avx2 binary kernels are bit-identical on awkward inputs") {
    const k::KernelTable* vec = k::avx2_table();
    if (!vec) {
        MESSAGE("no AVX2 on this host, equivalence vacuous");
        return;
    }
    const k::KernelTable& ref = k::scalar_table();

    using BinFn = void (*)(const double*, const double*, double*, std::size_t);
    struct Pair {
        const char* name;
        BinFn r;
        BinFn v;
    };
    const Pair ops[] = {
        {"add", ref.add, vec->add}, {"sub", ref.sub, vec->sub},
        {"mul", ref.mul, vec->mul}, {"div", ref.div, vec->div},
        {"min", ref.min, vec->min}, {"max", ref.max, vec->max},
    };

    for (std::size_t len : test_lengths()) {
        const auto a = awkward_input(len, 100 + len);
        const auto b = awkward_input(len, 900 + len);
        for (const auto& op : ops) {
            std::vector<double> out_r(len, -7.0), out_v(len, 7.0);
            op.r(a.data(), b.data(), out_r.data(), len);
            op.v(a.data(), b.data(), out_v.data(), len);
            INFO(op.name << " at length " << len);
            CHECK(bits_equal(out_r, out_v));
        }
    }
}

TEST_CASE("scalar and avx2 unary and fused-free accumulation kernels match") {
    const k::KernelTable* vec = k::avx2_table();
    if (!vec) return;
    const k::KernelTable& ref = k::scalar_table();

    for (std::size_t len : test_lengths()) {
        const auto a = awkward_input(len, 300 + len);
        const auto b = awkward_input(len, 301 + len);

        std::vector<double> out_r(len), out_v(len);
        ref.neg(a.data(), out_r.data(), len);
        vec->neg(a.data(), out_v.data(), len);
        INFO("neg at length " << len);
        CHECK(bits_equal(out_r, out_v));

        ref.abs(a.data(), out_r.data(), len);
        vec->abs(a.data(), out_v.data(), len);
        INFO("abs at length " << len);
        CHECK(bits_equal(out_r, out_v));

        auto acc_r = awkward_input(len, 302 + len);
        auto acc_v = acc_r;
        ref.acc_scaled(acc_r.data(), a.data(), 1.7, len);
        vec->acc_scaled(acc_v.data(), a.data(), 1.7, len);
        INFO("acc_scaled at length " << len);
        CHECK(bits_equal(acc_r, acc_v));

        acc_r = awkward_input(len, 303 + len);
        acc_v = acc_r;
        ref.acc_prod(acc_r.data(), a.data(), b.data(), len);
        vec->acc_prod(acc_v.data(), a.data(), b.data(), len);
        INFO("acc_prod at length " << len);
        CHECK(bits_equal(acc_r, acc_v));

        ref.affine(a.data(), -0.3, 11.5, out_r.data(), len);
        vec->affine(a.data(), -0.3, 11.5, out_v.data(), len);
        INFO("affine at length " << len);
        CHECK(bits_equal(out_r, out_v));

        ref.fill(out_r.data(), -0.0, len);
        vec->fill(out_v.data(), -0.0, len);
        CHECK(bits_equal(out_r, out_v));

        ref.copy(a.data(), out_r.data(), len);
        vec->copy(a.data(), out_v.data(), len);
        CHECK(bits_equal(out_r, out_v));
    }
}

TEST_CASE("acc_scaled rounds multiply then add, no fused contraction") {
    // With an FMA, 1e16 + (1 + 2^-60) would see the tiny term; with two
    // roundings the product rounds to 1.0 first and then vanishes into 1e16.
    std::vector<double> out{1e16};
    const std::vector<double> a{1.0};
    k::scalar_table().acc_scaled(out.data(), a.data(), 1.0 + 0x1.0p-60, 1);
    CHECK(out[0] == 1e16);
}

TEST_CASE("pairwise sums are exact on integers and close on random data") {
    for (std::size_t n : {1u, 2u, 7u, 64u, 1000u, 4097u}) {
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(i + 1);
        const double want = 0.5 * static_cast<double>(n) * static_cast<double>(n + 1);
        CHECK(k::pairwise_sum(v) == want);
    }

    fblab::rng::Stream s(5, 5);
    std::vector<double> v(10000);
    long double acc = 0.0L;
    for (auto& x : v) {
        x = s.next_normal();
        acc += static_cast<long double>(x);
    }
    CHECK(k::pairwise_sum(v) == doctest::Approx(static_cast<double>(acc)).epsilon(1e-12));

    std::vector<double> b(v.size(), 0.5);
    CHECK(k::pairwise_dot(v, b) ==
          doctest::Approx(0.5 * static_cast<double>(acc)).epsilon(1e-12));

    CHECK(k::pairwise_sum(std::span<const double>{}) == 0.0);
}

TEST_CASE("reductions and kernels ignore the thread count and the backend") {
    fblab::rng::Stream s(9, 2);
    std::vector<double> v(8193);
    for (auto& x : v) x = s.next_normal() * 1e6;

    fblab::set_thread_count(1);
    const double s1 = k::pairwise_sum(v);
    fblab::set_thread_count(8);
    const double s8 = k::pairwise_sum(v);
    fblab::set_thread_count(1);
    CHECK(std::bit_cast<std::uint64_t>(s1) == std::bit_cast<std::uint64_t>(s8));

    if (k::avx2_table()) {
        k::force_backend(k::Backend::scalar);
        const double ss = k::pairwise_sum(v);
        k::force_backend(k::Backend::avx2);
        const double sv = k::pairwise_sum(v);
        k::force_backend(k::Backend::auto_detect);
        CHECK(std::bit_cast<std::uint64_t>(ss) == std::bit_cast<std::uint64_t>(sv));
    }
}

TEST_CASE("backend selection reports what it selected") {
    k::force_backend(k::Backend::scalar);
    CHECK(k::active_backend() == k::Backend::scalar);
    CHECK(std::string(k::active().name) == "scalar");

    if (k::avx2_table()) {
        k::force_backend(k::Backend::avx2);
        CHECK(k::active_backend() == k::Backend::avx2);
        CHECK(std::string(k::active().name) == "avx2");
    }

    k::force_backend(k::Backend::auto_detect);
    CHECK((k::active_backend() == k::Backend::scalar ||
           k::active_backend() == k::Backend::avx2));
}
