#pragma once

#include <memory>
#include <string>
#include <vector>

#include "maskdiff/diffusion.hpp"
#include "maskdiff/rng.hpp"

namespace maskdiff {

// Order-k Markov chain over V clean tokens with exactly computable
// statistics. Rows of `transition` are indexed by the base-V encoding of the
// previous `order` tokens (most recent token in the lowest digit).
class MarkovSource {
  public:
    MarkovSource(int order, int vocab, std::vector<std::vector<double>> transition);

    int order() const { return order_; }
    int vocab() const { return vocab_; }
    int state_count() const { return static_cast<int>(transition_.size()); }
    const std::vector<std::vector<double>>& transition() const { return transition_; }
    const std::vector<double>& stationary() const { return stationary_; }
    double entropy_rate() const { return entropy_rate_; }  // nats per token

    std::vector<TokenSeq> generate(int n, int len, Rng& rng) const;

    // Exact log-likelihood of a sequence started from the stationary chain.
    double log_prob(const TokenSeq& seq) const;

    // Exact probability of each k-mer (k >= order) under the stationary chain.
    std::vector<double> exact_kmer_probs(int k) const;

    // Exact per-position posterior p(x0^i | revealed tokens of x_t) by
    // enumerating all V^L clean sequences. Feasible only at toy sizes.
    CleanStateEstimate posterior(const LatentSeq& x_t) const;

  private:
    int state_of(const TokenSeq& seq, int end_exclusive) const;

    int order_;
    int vocab_;
    std::vector<std::vector<double>> transition_;
    std::vector<double> stationary_;  // over the V^order tuple states
    double entropy_rate_ = 0.0;
};

// Balanced brackets over `pairs` symbol pairs: open_i = 2i, close_i = 2i+1.
// Generation is a stack-guided random construction that always emits valid
// sequences; the checker is a plain stack automaton.
struct BracketSource {
    int pairs = 2;
    int max_depth = 4;
    int len = 16;  // even

    BracketSource(int pairs_, int max_depth_, int len_);

    int vocab() const { return 2 * pairs; }
    std::vector<TokenSeq> generate(int n, Rng& rng) const;
};

bool bracket_check(const TokenSeq& seq, int pairs);

// The fixed transition matrix shipped with the repo: V=4, strongly diagonal,
// doubly stochastic (uniform stationary), entropy rate ~0.708 nats/token.
MarkovSource default_markov_source();

// Tiny V=2 chain used for brute-force oracle verification. Correlation kept
// weak: with few reverse steps, positions unmasked in the same step are drawn
// independently, which biases the terminal distribution of any sampler built
// on the per-position reverse kernel; this chain keeps that intrinsic bias
// near 0.011 TV at T=4, L=4.
MarkovSource tiny_markov_source();

struct NamedSource {
    std::string name;
    // exactly one of these is set
    std::unique_ptr<MarkovSource> markov;
    std::unique_ptr<BracketSource> bracket;
};

// Resolve the builtin source descriptors used in dataset headers and on the
// CLI: "markov-default", "markov-tiny", "bracket".
NamedSource make_source(const std::string& name, int len);

}  // namespace maskdiff
