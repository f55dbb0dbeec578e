#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>

namespace bcrn {

/// Derives an independent 64-bit seed for a named sub-stream.
///
/// All randomness in an experiment flows from one user seed; each consumer
/// (environment, exploration, replay sampling, ...) gets its own stream
/// keyed by name and an optional index such as the episode number.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0);

/// Seeded random stream with portable samplers.
///
/// The standard distributions are implementation-defined, so every sampler
/// here is written against the raw 64-bit engine output. A given seed yields
/// the same draws with any conforming standard library.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform();

    /// Uniform on {0, ..., n-1}; unbiased (rejection sampling). n must be > 0.
    std::size_t uniform_index(std::size_t n);

    bool bernoulli(double p) { return uniform() < p; }

    /// Binomial(trials, p) by CDF inversion; consumes exactly one uniform
    /// draw unless p is 0 or 1.
    int binomial(int trials, double p);

    /// Index drawn from a probability mass function by inversion.
    std::size_t categorical(std::span<const double> pmf);

    /// Standard normal via Box-Muller (no cached second variate).
    double normal();

    std::string save_state() const;
    void restore_state(const std::string& text);

private:
    std::mt19937_64 engine_;
};

} // namespace bcrn
