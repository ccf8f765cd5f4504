#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>

namespace regroup {

/// SplitMix64 generator. Small state, and streams are derived from
/// (seed, stream id) so per-sample work stays reproducible under any
/// scheduling. Floating-point draws are built from raw bits, so sequences are
/// identical across standard library implementations.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

    /// Independent stream for `stream` under `seed`.
    static Rng stream(std::uint64_t seed, std::uint64_t stream) noexcept;

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    result_type operator()() noexcept { return next(); }
    std::uint64_t next() noexcept;

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    /// Uniform on [lo, hi).
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    /// Uniform integer on [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) noexcept;
    /// +1 or -1 with equal probability.
    double rademacher() noexcept { return (next() >> 63) != 0 ? 1.0 : -1.0; }

private:
    std::uint64_t state_;
};

/// Fisher-Yates shuffle driven by Rng::below (portable, unlike std::shuffle).
template <typename Container>
void shuffle(Container& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        using std::swap;
        swap(items[i - 1], items[j]);
    }
}

} // namespace regroup
