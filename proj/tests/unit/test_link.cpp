#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>

#include "slicesim/link.hpp"

using namespace slicesim::env;

namespace {

// Simpson integration of the standard normal density on [x, x + 12].
double q_by_integration(double x) {
    const int n = 200000;
    const double a = x, b = x + 12.0, h = (b - a) / n;
    auto phi = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); };
    double s = phi(a) + phi(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * phi(a + i * h);
    return s * h / 3.0;
}

}  // namespace

TEST_CASE("sample_arrivals degenerate and deterministic") {
    Rng rng(7);
    for (int i = 0; i < 100; ++i) CHECK(sample_arrivals(0.0, rng) == 0);
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(sample_arrivals(4.0, a) == sample_arrivals(4.0, b));
    CHECK_THROWS(sample_arrivals(-1.0, rng));
}

TEST_CASE("sample_arrivals mean within three sigma") {
    Rng rng(123);
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += double(sample_arrivals(4.0, rng));
    const double sigma = 2.0 / std::sqrt(double(n));
    CHECK(std::abs(sum / n - 4.0) < 3.0 * sigma);
}

TEST_CASE("throughput identities and oracle") {
    // SNR = 1 on a single PRB gives one PRB-unit of rate.
    CHECK(spectral_rate(1.0, 1.0, 1.0, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(achieved_throughput_mbps(10.0, 0.0, 1.0, 0.01, 360e3) == 0.0);
    CHECK(achieved_throughput_mbps(0.0, 1.0, 1.0, 0.01, 360e3) == 0.0);
    const long double oracle = 10.0L * std::log2(1.0L + 10.0L);
    CHECK(std::abs(spectral_rate(10.0, 1.0, 1.0, 0.01) - double(oracle)) < 1e-12);
    CHECK(std::abs(achieved_throughput_mbps(10.0, 1.0, 1.0, 0.01, 1e6) - double(oracle)) < 1e-12);
}

TEST_CASE("throughput monotone in power and PRBs") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.01, 20.0);
    for (int i = 0; i < 500; ++i) {
        const double b = u(rng), p = u(rng), g = u(rng) / 10.0, i_w = u(rng) / 100.0;
        const double t = achieved_throughput_mbps(b, p, g, 1e-3, 360e3, i_w);
        CHECK(achieved_throughput_mbps(b, p * 1.1, g, 1e-3, 360e3, i_w) >= t);
        CHECK(achieved_throughput_mbps(b * 1.1, p, g, 1e-3, 360e3, i_w) >= t);
    }
}

TEST_CASE("latency relation") {
    CHECK(achieved_latency_ms(1e4, 1e7, 1.0, 1e4) == doctest::Approx(1.1).epsilon(1e-12));
    CHECK(std::isinf(achieved_latency_ms(1e4, 1e7, 0.0, 1e4)));
    CHECK(std::isinf(achieved_latency_ms(1e4, 0.0, 1.0, 1e4)));
    const double l = achieved_latency_ms(3e4, 2e7, 0.3, 500.0);
    CHECK(achieved_latency_ms(3e4, 4e7, 0.6, 500.0) == doctest::Approx(l / 2.0).epsilon(1e-14));
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.1, 10.0);
    for (int i = 0; i < 200; ++i) {
        const double t = u(rng) * 1e6, c = u(rng) / 10.0;
        const double base = achieved_latency_ms(1e4, t, c, 100.0);
        CHECK(achieved_latency_ms(1e4, t * 1.5, c, 100.0) <= base);
        CHECK(achieved_latency_ms(1e4, t, c * 1.5, 100.0) <= base);
    }
}

TEST_CASE("q_function") {
    CHECK(q_function(0.0) == 0.5);
    CHECK(std::abs(q_function(1.0) - q_by_integration(1.0)) < 1e-6);
    CHECK(std::abs(q_function(1.0) - 0.158655) < 1e-6);
    for (double x : {0.5, 1.0, 2.0}) CHECK(q_function(x) + q_function(-x) == doctest::Approx(1.0).epsilon(1e-15));
    for (double x = -4.0; x < 4.0; x += 0.1) CHECK(q_function(x + 0.1) < q_function(x));
}

TEST_CASE("reliability relation") {
    CHECK(achieved_reliability(1e6, 1000.0) == doctest::Approx(1.0));
    CHECK(achieved_reliability(0.0, 10.0) == doctest::Approx(std::pow(2.0, -10.0)).epsilon(1e-14));
    const long double ber = 0.5L * std::erfc(std::sqrt(8.0L) / std::sqrt(2.0L));
    const long double oracle = std::exp(100.0L * std::log1p(-ber));
    CHECK(std::abs(achieved_reliability(4.0, 100.0) - double(oracle)) < 1e-10);
    double prev = 0.0;
    for (double snr = 0.0; snr < 20.0; snr += 0.25) {
        const double r = achieved_reliability(snr, 500.0);
        CHECK(r >= prev);
        CHECK(achieved_reliability(snr, 1000.0) <= r);
        prev = r;
    }
}
