#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "voxflow/array.hpp"
#include "voxflow/common.hpp"

namespace voxflow {

// xoshiro256++ seeded through SplitMix64. Child streams are derived from the
// original seed and a stream index, so the draw history of a parent never
// leaks into its children. Algorithm and test vectors are listed in the
// README so other implementations can reproduce the streams.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {
        std::uint64_t sm = seed;
        for (auto& w : state_) w = splitmix64(sm);
    }

    std::uint64_t seed() const { return seed_; }

    Rng child(std::uint64_t index) const { return Rng(derive_seed(seed_, index)); }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform on [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Index in [0, n).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw NumericError("Rng::below: n must be positive");
        // Rejection sampling over the smallest covering power of two.
        std::uint64_t mask = n - 1;
        mask |= mask >> 1;
        mask |= mask >> 2;
        mask |= mask >> 4;
        mask |= mask >> 8;
        mask |= mask >> 16;
        mask |= mask >> 32;
        std::uint64_t r;
        do {
            r = next_u64() & mask;
        } while (r >= n);
        return r;
    }

    // Standard normal via the Marsaglia polar method (one spare cached).
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double scale = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * scale;
        has_spare_ = true;
        return u * scale;
    }

    NdArray gaussian(std::vector<int> shape) {
        NdArray a{std::move(shape)};
        for (std::int64_t i = 0; i < a.numel(); ++i) a[i] = gaussian();
        return a;
    }

    NdArray uniform_array(std::vector<int> shape, double lo = 0.0, double hi = 1.0) {
        NdArray a{std::move(shape)};
        for (std::int64_t i = 0; i < a.numel(); ++i) a[i] = uniform(lo, hi);
        return a;
    }

    // Inverse-CDF draw; probabilities need not be normalized. The final bucket
    // absorbs any rounding slack.
    int categorical(std::span<const double> probs) {
        if (probs.empty()) throw NumericError("Rng::categorical: empty probability vector");
        double total = 0.0;
        for (double p : probs) {
            if (p < 0.0 || !std::isfinite(p))
                throw NumericError("Rng::categorical: invalid probability");
            total += p;
        }
        if (total <= 0.0) throw NumericError("Rng::categorical: probabilities sum to zero");
        const double r = uniform() * total;
        double cum = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            cum += probs[i];
            if (r < cum) return static_cast<int>(i);
        }
        return static_cast<int>(probs.size() - 1);
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t seed_ = 0;
    std::uint64_t state_[4] = {};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace voxflow
