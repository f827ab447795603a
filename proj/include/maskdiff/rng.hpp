#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "maskdiff/errors.hpp"

namespace maskdiff {

// splitmix64 finalizer; used to derive independent streams from (master, counter)
// pairs so per-sample / per-step randomness is reproducible regardless of
// evaluation order.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t master, uint64_t stream, uint64_t salt = 0) {
    return mix64(mix64(master) ^ mix64(stream * 0x2545f4914f6cdd1dULL + salt));
}

class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    double uniform() {
        return std::uniform_real_distribution<double>(0.0, 1.0)(gen_);
    }

    // inclusive bounds
    int uniform_int(int lo, int hi) {
        return std::uniform_int_distribution<int>(lo, hi)(gen_);
    }

    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(gen_);
    }

    // One draw from an unnormalized nonnegative weight vector.
    int categorical(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        if (total <= 0.0) throw NumericError("categorical draw from all-zero weights");
        double r = uniform() * total;
        double acc = 0.0;
        for (size_t i = 0; i < weights.size(); ++i) {
            acc += weights[i];
            if (r < acc) return static_cast<int>(i);
        }
        return static_cast<int>(weights.size()) - 1;
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace maskdiff
