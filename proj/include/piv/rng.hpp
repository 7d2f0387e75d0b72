#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace piv {

/// Keyed random stream: stream (seed, i) is a xoshiro256** generator whose
/// state is expanded from both keys with splitmix64. Cheap to construct, so
/// every Monte Carlo path owns one and results do not depend on scheduling.
class RngStream {
public:
    using result_type = std::uint64_t;

    RngStream(std::uint64_t seed, std::uint64_t stream)
    {
        std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
        x = splitmix(x) ^ stream;
        for (auto& s : state_) {
            s = splitmix(x);
        }
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()()
    {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    double normal() { return normal_(*this); }

    /// Uniform on the open interval (0, 1).
    double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static std::uint64_t splitmix(std::uint64_t& x)
    {
        std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_[4]{};
    std::normal_distribution<double> normal_{};
};

/// Derives a child seed from a base seed and an index (dates, contracts, groups).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index)
{
    RngStream s(base, index);
    return s();
}

}  // namespace piv
