#include "maskdiff/sources.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "maskdiff/errors.hpp"

namespace maskdiff {

namespace {

constexpr double kRowSumTol = 1e-12;
constexpr long kEnumerationCap = 4096;  // max V^L for brute-force posteriors

long ipow(int base, int exp) {
    long r = 1;
    for (int i = 0; i < exp; ++i) r *= base;
    return r;
}

// Strong connectivity of the positive-probability transition graph via
// forward/backward reachability from state 0.
bool irreducible(const std::vector<std::vector<double>>& P, int vocab, int order) {
    const int n = static_cast<int>(P.size());
    std::vector<std::vector<int>> fwd(n), rev(n);
    for (int s = 0; s < n; ++s) {
        for (int x = 0; x < vocab; ++x) {
            if (P[s][x] <= 0.0) continue;
            const int nxt = (order == 1)
                                ? x
                                : static_cast<int>((static_cast<long>(s) * vocab + x) %
                                                   ipow(vocab, order));
            fwd[s].push_back(nxt);
            rev[nxt].push_back(s);
        }
    }
    auto full_reach = [n](const std::vector<std::vector<int>>& adj) {
        std::vector<char> seen(n, 0);
        std::queue<int> q;
        q.push(0);
        seen[0] = 1;
        while (!q.empty()) {
            const int s = q.front();
            q.pop();
            for (int nxt : adj[s]) {
                if (!seen[nxt]) {
                    seen[nxt] = 1;
                    q.push(nxt);
                }
            }
        }
        return std::count(seen.begin(), seen.end(), 1) == n;
    };
    return full_reach(fwd) && full_reach(rev);
}

}  // namespace

MarkovSource::MarkovSource(int order, int vocab,
                           std::vector<std::vector<double>> transition)
    : order_(order), vocab_(vocab), transition_(std::move(transition)) {
    if (order_ < 1) throw ConfigError("markov source: order must be >= 1");
    if (vocab_ < 2) throw ConfigError("markov source: vocab must be >= 2");
    const long states = ipow(vocab_, order_);
    if (static_cast<long>(transition_.size()) != states) {
        throw ConfigError("markov source: transition needs V^order rows");
    }
    for (const auto& row : transition_) {
        if (static_cast<int>(row.size()) != vocab_) {
            throw ConfigError("markov source: transition rows need V entries");
        }
        double s = 0.0;
        for (double p : row) {
            if (p < 0.0) throw ConfigError("markov source: negative transition probability");
            s += p;
        }
        if (std::abs(s - 1.0) > kRowSumTol) {
            throw ConfigError("markov source: transition row does not sum to 1");
        }
    }
    if (!irreducible(transition_, vocab_, order_)) {
        throw ConfigError("markov source: chain is not irreducible");
    }

    // Stationary distribution over tuple states by power iteration to 1e-12.
    const int n = static_cast<int>(states);
    stationary_.assign(n, 1.0 / n);
    std::vector<double> next(n, 0.0);
    for (int iter = 0; iter < 100000; ++iter) {
        std::fill(next.begin(), next.end(), 0.0);
        for (int s = 0; s < n; ++s) {
            for (int x = 0; x < vocab_; ++x) {
                const double p = transition_[s][x];
                if (p <= 0.0) continue;
                const int nxt = (order_ == 1)
                                    ? x
                                    : static_cast<int>((static_cast<long>(s) * vocab_ + x) % states);
                next[nxt] += stationary_[s] * p;
            }
        }
        double diff = 0.0;
        for (int s = 0; s < n; ++s) diff += std::abs(next[s] - stationary_[s]);
        stationary_.swap(next);
        if (diff < 1e-14) break;
    }

    entropy_rate_ = 0.0;
    for (int s = 0; s < n; ++s) {
        for (double p : transition_[s]) {
            if (p > 0.0) entropy_rate_ -= stationary_[s] * p * std::log(p);
        }
    }
}

int MarkovSource::state_of(const TokenSeq& seq, int end_exclusive) const {
    int s = 0;
    for (int i = end_exclusive - order_; i < end_exclusive; ++i) s = s * vocab_ + seq[i];
    return s;
}

std::vector<TokenSeq> MarkovSource::generate(int n, int len, Rng& rng) const {
    if (len < order_) throw UsageError("markov generate: length shorter than order");
    std::vector<TokenSeq> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        TokenSeq seq;
        seq.reserve(len);
        // initial tuple from the exact stationary distribution
        int state = rng.categorical(stationary_);
        for (int d = order_ - 1; d >= 0; --d) {
            seq.push_back((state / static_cast<int>(ipow(vocab_, d))) % vocab_);
        }
        while (static_cast<int>(seq.size()) < len) {
            const int s = state_of(seq, static_cast<int>(seq.size()));
            seq.push_back(rng.categorical(transition_[s]));
        }
        out.push_back(std::move(seq));
    }
    return out;
}

double MarkovSource::log_prob(const TokenSeq& seq) const {
    if (static_cast<int>(seq.size()) < order_) {
        throw UsageError("markov log_prob: sequence shorter than order");
    }
    double lp = std::log(stationary_[state_of(seq, order_)]);
    for (int i = order_; i < static_cast<int>(seq.size()); ++i) {
        const double p = transition_[state_of(seq, i)][seq[i]];
        if (p <= 0.0) return -std::numeric_limits<double>::infinity();
        lp += std::log(p);
    }
    return lp;
}

std::vector<double> MarkovSource::exact_kmer_probs(int k) const {
    if (k < order_) throw UsageError("exact_kmer_probs requires k >= order");
    const long total = ipow(vocab_, k);
    if (total > 1000000) throw UsageError("exact_kmer_probs: k too large to enumerate");
    std::vector<double> probs(total, 0.0);
    TokenSeq w(k, 0);
    for (long code = 0; code < total; ++code) {
        long c = code;
        for (int i = k - 1; i >= 0; --i) {
            w[i] = static_cast<int>(c % vocab_);
            c /= vocab_;
        }
        double p = stationary_[state_of(w, order_)];
        for (int i = order_; i < k; ++i) p *= transition_[state_of(w, i)][w[i]];
        probs[code] = p;
    }
    return probs;
}

CleanStateEstimate MarkovSource::posterior(const LatentSeq& x_t) const {
    const int L = static_cast<int>(x_t.tokens.size());
    const long total = ipow(vocab_, L);
    if (total > kEnumerationCap) {
        throw UsageError("posterior enumeration cap exceeded (V^L too large)");
    }
    Tensor post = Tensor::zeros(L, vocab_);
    TokenSeq seq(L, 0);
    double evidence = 0.0;
    for (long code = 0; code < total; ++code) {
        long c = code;
        for (int i = L - 1; i >= 0; --i) {
            seq[i] = static_cast<int>(c % vocab_);
            c /= vocab_;
        }
        bool consistent = true;
        for (int i = 0; i < L; ++i) {
            if (x_t.tokens[i] != vocab_ && x_t.tokens[i] != seq[i]) {
                consistent = false;
                break;
            }
        }
        if (!consistent) continue;
        const double p = std::exp(log_prob(seq));
        evidence += p;
        for (int i = 0; i < L; ++i) post.at(i, seq[i]) += p;
    }
    if (evidence <= 0.0) throw NumericError("posterior: zero evidence for observed tokens");
    for (int i = 0; i < L; ++i) {
        for (int v = 0; v < vocab_; ++v) post.at(i, v) /= evidence;
    }
    return CleanStateEstimate::from_probs(std::move(post));
}

BracketSource::BracketSource(int pairs_, int max_depth_, int len_)
    : pairs(pairs_), max_depth(max_depth_), len(len_) {
    if (pairs < 1) throw ConfigError("bracket source: need at least one pair");
    if (len < 2 || len % 2 != 0) throw ConfigError("bracket source: length must be even and >= 2");
    if (max_depth < 1) throw ConfigError("bracket source: max depth must be >= 1");
}

std::vector<TokenSeq> BracketSource::generate(int n, Rng& rng) const {
    std::vector<TokenSeq> out;
    out.reserve(n);
    for (int s = 0; s < n; ++s) {
        TokenSeq seq;
        seq.reserve(len);
        std::vector<int> stack;  // open pair types
        for (int i = 0; i < len; ++i) {
            const int remaining = len - i;
            const int depth = static_cast<int>(stack.size());
            const bool can_push = depth < max_depth && remaining >= depth + 2;
            const bool can_pop = depth > 0;
            bool push;
            if (can_push && can_pop) {
                push = rng.uniform() < 0.5;
            } else if (can_push) {
                push = true;
            } else {
                push = false;
            }
            if (push) {
                const int type = rng.uniform_int(0, pairs - 1);
                stack.push_back(type);
                seq.push_back(2 * type);
            } else {
                seq.push_back(2 * stack.back() + 1);
                stack.pop_back();
            }
        }
        out.push_back(std::move(seq));
    }
    return out;
}

bool bracket_check(const TokenSeq& seq, int pairs) {
    std::vector<int> stack;
    for (int tok : seq) {
        if (tok < 0 || tok >= 2 * pairs) return false;
        if (tok % 2 == 0) {
            stack.push_back(tok / 2);
        } else {
            if (stack.empty() || stack.back() != tok / 2) return false;
            stack.pop_back();
        }
    }
    return stack.empty();
}

MarkovSource default_markov_source() {
    return MarkovSource(1, 4,
                        {{0.80, 0.10, 0.05, 0.05},
                         {0.05, 0.80, 0.10, 0.05},
                         {0.05, 0.05, 0.80, 0.10},
                         {0.10, 0.05, 0.05, 0.80}});
}

MarkovSource tiny_markov_source() {
    return MarkovSource(1, 2, {{0.52, 0.48}, {0.46, 0.54}});
}

NamedSource make_source(const std::string& name, int len) {
    NamedSource s;
    s.name = name;
    if (name == "markov-default") {
        s.markov = std::make_unique<MarkovSource>(default_markov_source());
    } else if (name == "markov-tiny") {
        s.markov = std::make_unique<MarkovSource>(tiny_markov_source());
    } else if (name == "bracket") {
        s.bracket = std::make_unique<BracketSource>(2, 4, len);
    } else {
        throw UsageError("unknown source '" + name + "'");
    }
    return s;
}

}  // namespace maskdiff
