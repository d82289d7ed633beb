#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "gridcast/kernels.hpp"
#include "gridcast/rng.hpp"

using namespace gridcast;
namespace k = gridcast::kernels;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-10.0, 10.0);
    return v;
}

struct BackendGuard {
    k::Backend saved = k::active_backend();
    ~BackendGuard() { k::set_backend(k::Backend::Auto); }
};

bool have_simd() {
    try {
        k::set_backend(k::Backend::Avx2);
        return true;
    } catch (const std::exception&) {
        try {
            k::set_backend(k::Backend::Neon);
            return true;
        } catch (const std::exception&) {
            return false;
        }
    }
}

}  // namespace

TEST_CASE("scalar reference kernels compute the obvious values") {
    k::set_backend(k::Backend::Scalar);
    std::vector<double> a{1, 2, 3}, b{4, 5, 6}, out(3);
    k::add(a.data(), b.data(), out.data(), 3);
    CHECK(out == std::vector<double>{5, 7, 9});
    k::mul(a.data(), b.data(), out.data(), 3);
    CHECK(out == std::vector<double>{4, 10, 18});
    k::mul_add(a.data(), b.data(), out.data(), 3);
    CHECK(out == std::vector<double>{8, 20, 36});
    k::axpy(2.0, a.data(), out.data(), 3);
    CHECK(out == std::vector<double>{10, 24, 42});
    k::scale(-1.0, a.data(), out.data(), 3);
    CHECK(out == std::vector<double>{-1, -2, -3});
    k::set_backend(k::Backend::Auto);
}

TEST_CASE("vector backends are bit-identical to the scalar reference") {
    BackendGuard guard;
    if (!have_simd()) {
        MESSAGE("no SIMD backend on this CPU; skipping");
        return;
    }
    Rng rng(7);
    // odd lengths exercise the scalar tails
    for (std::size_t n : {1u, 3u, 4u, 7u, 8u, 31u, 257u, 1000u}) {
        auto a = random_vec(rng, n);
        auto b = random_vec(rng, n);
        auto acc0 = random_vec(rng, n);
        double s = rng.uniform(-2.0, 2.0);

        std::vector<double> r_scalar(n), r_simd(n);
        auto run = [&](k::Backend backend, std::vector<double>& add_out,
                       std::vector<double>& mul_out,
                       std::vector<double>& fma_out,
                       std::vector<double>& axpy_out,
                       std::vector<double>& scale_out) {
            k::set_backend(backend);
            k::add(a.data(), b.data(), add_out.data(), n);
            k::mul(a.data(), b.data(), mul_out.data(), n);
            fma_out = acc0;
            k::mul_add(a.data(), b.data(), fma_out.data(), n);
            axpy_out = acc0;
            k::axpy(s, a.data(), axpy_out.data(), n);
            k::scale(s, a.data(), scale_out.data(), n);
        };
        std::vector<double> add_s(n), mul_s(n), fma_s, axpy_s, scale_s(n);
        std::vector<double> add_v(n), mul_v(n), fma_v, axpy_v, scale_v(n);
        run(k::Backend::Scalar, add_s, mul_s, fma_s, axpy_s, scale_s);
        run(k::Backend::Auto, add_v, mul_v, fma_v, axpy_v, scale_v);
        CHECK(add_s == add_v);
        CHECK(mul_s == mul_v);
        CHECK(fma_s == fma_v);
        CHECK(axpy_s == axpy_v);
        CHECK(scale_s == scale_v);
    }
}

TEST_CASE("backend selection") {
    BackendGuard guard;
    k::set_backend(k::Backend::Scalar);
    CHECK(k::backend_name() == "scalar");
    CHECK(k::parse_backend("auto") == k::Backend::Auto);
    CHECK(k::parse_backend("scalar") == k::Backend::Scalar);
    CHECK_THROWS(k::parse_backend("sse9"));
}
