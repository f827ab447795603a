#pragma once

#include <map>
#include <string>
#include <vector>

#include "maskdiff/denoiser.hpp"
#include "maskdiff/diffusion.hpp"
#include "maskdiff/sampler.hpp"
#include "maskdiff/sources.hpp"

namespace maskdiff {

// Overlapping k-mer counts over clean tokens; windows never cross sequence
// boundaries and nothing is padded. Counts are doubles so exact reference
// distributions can be expressed directly.
struct KmerHistogram {
    int k = 0;
    int vocab = 0;
    std::vector<double> counts;  // size vocab^k
    double total = 0.0;

    static KmerHistogram from_sequences(const std::vector<TokenSeq>& seqs, int k,
                                        int vocab);
    static KmerHistogram from_probs(const std::vector<double>& probs, int k, int vocab);
};

// Entropy in nats of the empirical token distribution of one sequence.
double token_entropy(const TokenSeq& x);

// Fraction of newly unmasked positions whose left neighbor was already
// unmasked before their step began; position 0 continues a virtual start.
double local_ar_at_1(const SamplerTrace& trace, int len);

// Fraction of newly unmasked positions that were among the k lowest-index
// still-masked positions at the start of their step.
double global_ar_at_k(const SamplerTrace& trace, int len, int k = 4);

// Jensen-Shannon divergence, base-2 logs, in [0,1].
double kmer_js(const KmerHistogram& generated, const KmerHistogram& reference);

struct NllEstimate {
    double nats_per_token = 0.0;
    double std_error = 0.0;
    int sequences = 0;
    int draws = 0;
};

// Monte-Carlo NELBO per token over a dataset. With sc_emulation, each draw
// mirrors two-pass training (null first pass, conditioned second pass).
// Per-sequence rng streams are derived from the sequence content, so the
// estimate is invariant to dataset order.
NllEstimate nll_upper_bound(DenoiserFn& denoiser, const Vocab& vocab,
                            const std::vector<TokenSeq>& data,
                            const NoiseSchedule& schedule, int mc_draws, uint64_t seed,
                            bool sc_emulation);

NllEstimate nll_upper_bound(const DenoiserModel& model, const std::vector<TokenSeq>& data,
                            const NoiseSchedule& schedule, int mc_draws, uint64_t seed,
                            bool sc_emulation);

struct GenPplResult {
    double ppl = 0.0;
    double nats_per_token = 0.0;
    uint64_t floor_violations = 0;  // tokens hit the 1e-12 likelihood floor
};

GenPplResult gen_ppl_under_source(const std::vector<TokenSeq>& samples,
                                  const MarkovSource& source);

struct VunCounts {
    int valid = 0;
    int unique = 0;
    int novel = 0;
};

// Validity / uniqueness / novelty under the bracket grammar.
VunCounts grammar_vun(const std::vector<TokenSeq>& samples, int pairs,
                      const std::vector<TokenSeq>& train_set);

struct MetricValue {
    double value = 0.0;
    double std_error = 0.0;
    long n = 0;
};

// Flat named metric set. Serialized both as "key value [se] [n]" text and as
// a JSON record; entropy is reported in nats and JS in bits, noted in the
// metadata keys.
struct MetricReport {
    std::map<std::string, MetricValue> metrics;

    void set(const std::string& name, double value, double se = 0.0, long n = 0);
    void write_kv(const std::string& path) const;
    void write_json(const std::string& path) const;
    static MetricReport read_kv(const std::string& path);
};

}  // namespace maskdiff
