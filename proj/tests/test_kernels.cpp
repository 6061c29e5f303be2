#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gti/kernels.hpp"
#include "gti/rng.hpp"

#include <cmath>
#include <string>
#include <vector>

using namespace gti;

namespace {

std::vector<double> random_vec(std::size_t n, Rng rng) {
    std::vector<double> v(n);
    rng.fill_gaussian(v.data(), n, 1.0);
    return v;
}

bool close_rel(double a, double b, double tol) {
    double scale = std::max({1.0, std::abs(a), std::abs(b)});
    return std::abs(a - b) <= tol * scale;
}

} // namespace

TEST_CASE("scalar reference values on small inputs") {
    const auto& ops = kernels::scalar_ops();
    double a[] = {1.0, 2.0, 3.0};
    double b[] = {4.0, -5.0, 6.0};
    CHECK(ops.dot(a, b, 3) == doctest::Approx(12.0));
    CHECK(ops.sum(a, 3) == doctest::Approx(6.0));
    CHECK(ops.sumsq(a, 3) == doctest::Approx(14.0));
    CHECK(ops.sqdist(a, b, 3) == doctest::Approx(9.0 + 49.0 + 9.0));
    double y[] = {1.0, 1.0, 1.0};
    ops.axpy(2.0, a, y, 3);
    CHECK(y[0] == doctest::Approx(3.0));
    CHECK(y[2] == doctest::Approx(7.0));
    ops.scale(y, 3, 0.5);
    CHECK(y[0] == doctest::Approx(1.5));
    CHECK(ops.dot(a, b, 0) == 0.0);
    CHECK(ops.sum(a, 0) == 0.0);
}

TEST_CASE("every available variant agrees with the scalar reference") {
    const auto& ref = kernels::scalar_ops();
    for (const std::string& name : kernels::available()) {
        CAPTURE(name);
        kernels::select(name);
        const auto& ops = kernels::active();
        Rng rng(2024);
        // Sizes straddling the vector width boundaries.
        for (std::size_t n : {std::size_t{0}, std::size_t{1}, std::size_t{3}, std::size_t{4},
                              std::size_t{7}, std::size_t{8}, std::size_t{16}, std::size_t{33},
                              std::size_t{67}, std::size_t{128}}) {
            auto a = random_vec(n, rng.derive("a").derive(n));
            auto b = random_vec(n, rng.derive("b").derive(n));
            CHECK(close_rel(ops.dot(a.data(), b.data(), n), ref.dot(a.data(), b.data(), n), 1e-13));
            CHECK(close_rel(ops.sum(a.data(), n), ref.sum(a.data(), n), 1e-13));
            CHECK(close_rel(ops.sumsq(a.data(), n), ref.sumsq(a.data(), n), 1e-13));
            CHECK(close_rel(ops.sqdist(a.data(), b.data(), n), ref.sqdist(a.data(), b.data(), n),
                            1e-13));

            auto y1 = b, y2 = b;
            ops.axpy(0.37, a.data(), y1.data(), n);
            ref.axpy(0.37, a.data(), y2.data(), n);
            for (std::size_t i = 0; i < n; ++i) CHECK(close_rel(y1[i], y2[i], 1e-13));

            auto s1 = a, s2 = a;
            ops.scale(s1.data(), n, -1.75);
            ref.scale(s2.data(), n, -1.75);
            for (std::size_t i = 0; i < n; ++i) CHECK(s1[i] == s2[i]); // exact: elementwise
        }
    }
    kernels::select(kernels::available().back());
}

TEST_CASE("select rejects unknown variants") {
    CHECK_THROWS_AS(kernels::select("vliw"), std::invalid_argument);
    CHECK(kernels::available().front() == "scalar");
}
