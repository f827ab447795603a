#pragma once

#include <string>
#include <vector>

#include "maskdiff/rng.hpp"
#include "maskdiff/tensor.hpp"

namespace maskdiff {

// Clean tokens are 0..size-1; the absorbing mask symbol is the extra index.
struct Vocab {
    int size = 0;

    int mask_id() const { return size; }
    explicit Vocab(int v);
};

using TokenSeq = std::vector<int>;

struct LatentSeq {
    TokenSeq tokens;  // ids in [0, V]; V denotes mask
    int t = 0;
};

// Per-position distribution over clean tokens, or the null placeholder used
// when no previous estimate exists (first sampling step, first training pass).
struct CleanStateEstimate {
    Tensor probs;  // L x V, rows on the simplex
    bool is_null = true;

    static CleanStateEstimate null() { return CleanStateEstimate{}; }
    static CleanStateEstimate from_probs(Tensor p);
};

// Monotone alpha_0=1 .. alpha_T=0 survival schedule for the absorbing
// corruption process.
struct NoiseSchedule {
    std::vector<double> alphas;  // size T+1

    int steps() const { return static_cast<int>(alphas.size()) - 1; }
    double alpha(int t) const { return alphas[t]; }

    static NoiseSchedule linear(int T);
    // Survival decays on a log grid: alpha_t = (e^{-lam t/T} - e^{-lam}) / (1 - e^{-lam}).
    static NoiseSchedule loglinear(int T, double lambda = 5.0);
    static NoiseSchedule make(const std::string& family, int T);

    void validate() const;
};

// alpha_t / alpha_{t-1}, the per-step survival probability.
double alpha_ratio(const NoiseSchedule& schedule, int t);

// Closed-form marginal of the forward process: keep each token with
// probability alpha_t, else absorb to mask.
LatentSeq corrupt_marginal(const TokenSeq& x0, int t, const Vocab& vocab,
                           const NoiseSchedule& schedule, Rng& rng);

// One forward step t-1 -> t. Masked positions stay masked.
LatentSeq corrupt_stepwise(const LatentSeq& x_prev, int t, const Vocab& vocab,
                           const NoiseSchedule& schedule, Rng& rng);

// Per-position categorical over V+1 symbols (clean tokens then mask).
struct ReverseDistribution {
    Tensor probs;  // L x (V+1)
};

ReverseDistribution reverse_distribution(const LatentSeq& x_t, int t,
                                         const CleanStateEstimate& clean_est,
                                         const Vocab& vocab,
                                         const NoiseSchedule& schedule);

// One ancestral draw per masked position, in position order. Unmasked tokens
// carry over unchanged.
LatentSeq reverse_sample(const LatentSeq& x_t, int t,
                         const CleanStateEstimate& clean_est, const Vocab& vocab,
                         const NoiseSchedule& schedule, Rng& rng);

}  // namespace maskdiff
