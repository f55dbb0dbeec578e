#include "bcrn/random.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace bcrn {

namespace {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index)
{
    // FNV-1a over the stream name, then mixed with the seed and index.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : stream) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(splitmix64(seed ^ h) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

double RandomStream::uniform()
{
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t RandomStream::uniform_index(std::size_t n)
{
    if (n == 0) {
        throw std::invalid_argument("uniform_index: empty range");
    }
    const std::uint64_t range = n;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t x = engine_();
    while (x >= limit) {
        x = engine_();
    }
    return static_cast<std::size_t>(x % range);
}

int RandomStream::binomial(int trials, double p)
{
    if (trials <= 0 || p <= 0.0) {
        return 0;
    }
    if (p >= 1.0) {
        return trials;
    }
    const double u = uniform();
    const double ratio = p / (1.0 - p);
    double pk = std::pow(1.0 - p, trials);
    double cdf = pk;
    int k = 0;
    while (u >= cdf && k < trials) {
        pk *= ratio * static_cast<double>(trials - k) / static_cast<double>(k + 1);
        ++k;
        cdf += pk;
    }
    return k;
}

std::size_t RandomStream::categorical(std::span<const double> pmf)
{
    const double u = uniform();
    double cdf = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < pmf.size(); ++i) {
        if (pmf[i] <= 0.0) {
            continue;
        }
        last_positive = i;
        cdf += pmf[i];
        if (u < cdf) {
            return i;
        }
    }
    // Rounding left u above the accumulated mass.
    return last_positive;
}

double RandomStream::normal()
{
    double u1 = uniform();
    while (u1 <= 0.0) {
        u1 = uniform();
    }
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string RandomStream::save_state() const
{
    std::ostringstream out;
    out << engine_;
    return out.str();
}

void RandomStream::restore_state(const std::string& text)
{
    std::istringstream in(text);
    in >> engine_;
    if (!in) {
        throw std::runtime_error("random stream: malformed saved state");
    }
}

} // namespace bcrn
