#include "slicesim/link.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace slicesim::env {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::int64_t sample_arrivals(double rate, Rng& rng) {
    if (rate < 0.0 || !std::isfinite(rate)) throw std::invalid_argument("sample_arrivals: rate must be finite and >= 0");
    if (rate == 0.0) return 0;
    std::poisson_distribution<std::int64_t> d(rate);
    return d(rng);
}

double sinr(double prb, double power_w, double gain, double n0, double interference_w) {
    const double denom = n0 * prb + interference_w;
    if (power_w <= 0.0) return 0.0;
    if (denom <= 0.0) return std::numeric_limits<double>::infinity();
    return power_w * gain / denom;
}

double spectral_rate(double prb, double power_w, double gain, double n0, double interference_w) {
    if (prb <= 0.0 || power_w <= 0.0) return 0.0;
    return prb * std::log2(1.0 + sinr(prb, power_w, gain, n0, interference_w));
}

double achieved_throughput_mbps(double prb, double power_w, double gain, double n0, double prb_bandwidth_hz,
                                double interference_w) {
    return spectral_rate(prb, power_w, gain, n0, interference_w) * prb_bandwidth_hz * 1e-6;
}

double achieved_latency_ms(double packet_bits, double throughput_bps, double compute, double service_rate) {
    if (throughput_bps <= 0.0 || compute <= 0.0 || service_rate <= 0.0)
        return std::numeric_limits<double>::infinity();
    return 1e3 * (packet_bits / throughput_bps + 1.0 / (service_rate * compute));
}

double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

double achieved_reliability(double snr, double packet_bits) {
    const double ber = q_function(std::sqrt(2.0 * std::max(0.0, snr)));
    return std::exp(packet_bits * std::log1p(-ber));
}

}  // namespace slicesim::env
