#pragma once

#include <cmath>
#include <cstdint>

namespace rhbsde {

// Counter-based random numbers.  Every draw is a pure function of
// (root seed, path index, step index, component index), so path blocks can
// be simulated on any number of shards in any order and still produce the
// same streams bit for bit.

namespace detail {

// SplitMix64 finalizer; full-period 64-bit mixer.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Uniform in (0,1]; the offset keeps log() finite.
inline double to_unit(std::uint64_t h) {
    return static_cast<double>(h >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

}  // namespace detail

// Keyed counter stream.  Distinct (path, step, component) triples never
// collide for the sizes this library handles (indices stay far below 2^32).
class CounterRng {
  public:
    explicit CounterRng(std::uint64_t root_seed)
        : key_(detail::mix64(root_seed ^ 0x8f1bbcdcbfa53e0bULL)) {}

    // Standard normal via Box-Muller on two decorrelated hashes.
    double normal(std::uint64_t path, std::uint64_t step, std::uint64_t comp) const {
        const std::uint64_t h =
            detail::mix64(key_ ^ detail::mix64(path + 1) ^
                          detail::mix64((step + 1) * 0x9e3779b97f4a7c15ULL) ^
                          detail::mix64((comp + 1) * 0xd1b54a32d192ed03ULL));
        const double u1 = detail::to_unit(detail::mix64(h ^ 0x2545f4914f6cdd1dULL));
        const double u2 = detail::to_unit(detail::mix64(h ^ 0x6c62272e07bb0142ULL));
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    double uniform(std::uint64_t path, std::uint64_t step, std::uint64_t comp) const {
        return detail::to_unit(
            detail::mix64(key_ ^ detail::mix64(path + 1) ^
                          detail::mix64((step + 1) * 0x9e3779b97f4a7c15ULL) ^
                          detail::mix64((comp + 1) * 0xd1b54a32d192ed03ULL)));
    }

    // Derived root seed for an independent sub-experiment (e.g. one member
    // of a volatility family that must not share draws with another).
    static std::uint64_t derive(std::uint64_t root_seed, std::uint64_t stream) {
        return detail::mix64(root_seed ^ detail::mix64(stream + 0x51ed270b9d1aa3dULL));
    }

  private:
    std::uint64_t key_;
};

}  // namespace rhbsde
