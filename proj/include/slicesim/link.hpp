#pragma once

#include <cstdint>
#include <random>

namespace slicesim::env {

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a base seed and a stream index (splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Poisson draw with the given mean; rate 0 yields 0.
std::int64_t sample_arrivals(double rate, Rng& rng);

/// SINR of an aggregate allocation: p*g / (N0*b + I).
double sinr(double prb, double power_w, double gain, double n0, double interference_w = 0.0);

/// b * log2(1 + SINR), in PRB-units of rate (multiply by per-PRB bandwidth for bit/s).
/// Zero PRBs or zero power give exactly 0.
double spectral_rate(double prb, double power_w, double gain, double n0, double interference_w = 0.0);

double achieved_throughput_mbps(double prb, double power_w, double gain, double n0, double prb_bandwidth_hz,
                                double interference_w = 0.0);

/// Transmission plus processing delay in ms. Returns +inf when throughput or compute is zero.
double achieved_latency_ms(double packet_bits, double throughput_bps, double compute, double service_rate);

/// Gaussian tail probability Q(x) = P[N(0,1) > x].
double q_function(double x);

/// (1 - Q(sqrt(2*SNR)))^L evaluated in log space.
double achieved_reliability(double snr, double packet_bits);

}  // namespace slicesim::env
