#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "zip/tensor.hpp"

namespace zip {

// Deterministic Gaussian/uniform source. Every draw is a pure function of
// (seed, counter), so identical seeds replay identical sequences regardless
// of platform or standard-library version. Words come from a splitmix64
// finalizer over the counter; normals use Box-Muller on those words.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_word() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        // u1 in (0, 1] keeps the log finite.
        double u1 = static_cast<double>((next_word() >> 11) + 1) * 0x1.0p-53;
        double u2 = static_cast<double>(next_word() >> 11) * 0x1.0p-53;
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    Tensor gaussian_tensor(int h, int w, int c) {
        Tensor out(h, w, c);
        for (double& v : out.data) v = gaussian();
        return out;
    }

    // Unbiased integer in [0, n); rejection sampling removes modulo bias.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("RngStream::below: n must be positive");
        std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % n;
        std::uint64_t w = next_word();
        while (w >= limit) w = next_word();
        return w % n;
    }

    // Child-stream seed for independent parallel work items.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t index) {
        return finalize(finalize(seed) ^ finalize(index + 0x9E3779B97F4A7C15ULL));
    }

private:
    std::uint64_t next_word() { return finalize(seed_ + 0x9E3779B97F4A7C15ULL * ++counter_); }

    static std::uint64_t finalize(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_ = 0;
    std::uint64_t counter_ = 0;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace zip
