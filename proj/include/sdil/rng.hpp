#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace sdil {

// Deterministic random stream. All draws are derived from raw mt19937_64
// output with fixed arithmetic, so sequences are identical across platforms
// and standard-library versions (std distributions are implementation
// defined and must not be used here).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on (0,1): 53-bit mantissa, never exactly 0 or 1.
    double uniform01() {
        return (static_cast<double>(engine_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n);

    int index(std::size_t n) { return static_cast<int>(below(static_cast<std::uint64_t>(n))); }

    bool bernoulli(double p) { return uniform01() < p; }

    // Standard Gumbel(0,1) via -log(-log(U)); U clamped into
    // [1e-12, 1-1e-12] so the result is always finite.
    double gumbel();

    // Fisher-Yates shuffle with this stream.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent child stream (for per-episode / per-thread use).
    Rng fork(std::uint64_t stream_id) {
        return Rng(next_u64() ^ (0x9e3779b97f4a7c15ULL * (stream_id + 1)));
    }

private:
    std::mt19937_64 engine_;
};

} // namespace sdil
