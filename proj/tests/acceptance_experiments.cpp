// Acceptance experiment suite: directional desk-scale comparisons
// (criteria 8-11). Trains a base model, post-trains three arms per seed
// (vanilla-continue, full self-conditioning, partial self-conditioning),
// and checks the comparative orderings. Prints one PASS/FAIL line per
// criterion and exits nonzero on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "maskdiff/denoiser.hpp"
#include "maskdiff/diffusion.hpp"
#include "maskdiff/metrics.hpp"
#include "maskdiff/sampler.hpp"
#include "maskdiff/sources.hpp"
#include "maskdiff/trainer.hpp"

using namespace maskdiff;

namespace {

constexpr int kSeeds = 5;

constexpr uint64_t kBaseTokensMarkov = 5'000'000;
constexpr uint64_t kPostTokensMarkov = 1'250'000;  // the ~1/4 post-training ratio
constexpr uint64_t kBaseTokensBracket = 2'000'000;
constexpr uint64_t kPostTokensBracket = 500'000;

// Sample sizes: criterion 10 fixes 1000 samples per bracket arm; the Markov
// JS/gen-PPL comparisons use more because the arm differences (~0.002 bits)
// need the extra histogram resolution to clear seed-level noise.
constexpr int kSamplesMarkov = 8000;
constexpr int kSamplesBracket = 1000;
constexpr int kHeldOut = 200;
constexpr int kMcDraws = 8;

// Post-training uses a smaller batch and hotter learning rate than base
// training: the token budget is fixed at ~1/4 of base, and the retrofit
// self-conditioning pathway needs the optimizer steps (1.25M/12/16 = 6510)
// more than it needs large batches.
constexpr int kPostBatch = 12;
constexpr double kPostLr = 1.75e-3;

struct Arm {
    DenoiserModel model;
    bool sample_sc = false;
};

TrainConfig base_train_config(uint64_t max_tokens, ScMode mode, uint64_t seed) {
    TrainConfig cfg;
    cfg.sc_mode = mode;
    cfg.partial_rate = 0.5;
    cfg.fusion = FusionMode::Concat;
    cfg.lr = 1e-3;
    cfg.batch_size = 32;
    cfg.seed = seed;
    cfg.max_tokens = max_tokens;
    return cfg;
}

DenoiserModel train_base(const std::vector<TokenSeq>& data, int vocab, int seq_len,
                         const NoiseSchedule& schedule, uint64_t tokens) {
    ModelConfig mc;
    mc.vocab = vocab;
    mc.seq_len = seq_len;
    mc.hidden = 32;
    mc.blocks = 2;
    mc.steps = schedule.steps();
    mc.has_sc = false;
    DenoiserModel model = make_model(mc, 1);
    OptimizerState opt = OptimizerState::init_for(model);
    const TrainConfig cfg = base_train_config(tokens, ScMode::Off, 1);
    train_run(model, opt, cfg, schedule, data);
    return model;
}

Arm posttrain_arm(const DenoiserModel& base, const std::vector<TokenSeq>& data,
                  const NoiseSchedule& schedule, ScMode mode, uint64_t seed,
                  uint64_t extra_tokens) {
    Arm arm;
    if (mode == ScMode::Off) {
        arm.model = base;
        arm.model.trained_steps = 0;
        arm.sample_sc = false;
    } else {
        arm.model = attach_self_conditioning(base, FusionMode::Concat, seed);
        arm.sample_sc = true;
    }
    OptimizerState opt = OptimizerState::init_for(arm.model);
    TrainConfig cfg =
        base_train_config(arm.model.trained_tokens + extra_tokens, mode, seed);
    cfg.batch_size = kPostBatch;
    cfg.lr = kPostLr;
    train_run(arm.model, opt, cfg, schedule, data);
    return arm;
}

std::vector<TokenSeq> draw_samples(const Arm& arm, int T, uint64_t seed, int n) {
    ModelDenoiser denoiser(arm.model);
    const Vocab vocab(arm.model.cfg.vocab);
    const NoiseSchedule s = NoiseSchedule::linear(T);
    std::vector<TokenSeq> rows;
    rows.reserve(n);
    for (const SampleResult& r : batch_sample(denoiser, vocab, s,
                                              arm.model.cfg.seq_len, n, seed,
                                              arm.sample_sc)) {
        rows.push_back(r.tokens);
    }
    return rows;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", x);
    return buf;
}

void report(int number, const char* title, bool ok, const std::string& detail,
            double secs, int& failures) {
    std::printf("%s criterion %d: %s — %s (%.0fs)\n", ok ? "PASS" : "FAIL", number, title,
                detail.c_str(), secs);
    std::fflush(stdout);
    if (!ok) ++failures;
}

}  // namespace

int main() {
    int failures = 0;
    const auto t0 = std::chrono::steady_clock::now();
    const auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    // ------------------------------------------------- Markov runs (8, 9, 11)
    const MarkovSource source = default_markov_source();
    const int L = 16;
    const NoiseSchedule train_schedule = NoiseSchedule::linear(32);

    Rng data_rng(2024);
    const std::vector<TokenSeq> train_data = source.generate(20000, L, data_rng);
    const std::vector<TokenSeq> held_out = source.generate(kHeldOut, L, data_rng);

    std::printf("# training base model (%llu tokens on the order-1 Markov source)\n",
                static_cast<unsigned long long>(kBaseTokensMarkov));
    std::fflush(stdout);
    const DenoiserModel base =
        train_base(train_data, source.vocab(), L, train_schedule, kBaseTokensMarkov);

    const KmerHistogram exact_3mer =
        KmerHistogram::from_probs(source.exact_kmer_probs(3), 3, source.vocab());

    // per seed x arm results; arms: 0 = vanilla-continue, 1 = full, 2 = partial
    std::vector<std::vector<double>> js8(3), js32(3), ppl32(3), nll(3), nll_se(3);
    for (int seed_idx = 0; seed_idx < kSeeds; ++seed_idx) {
        const uint64_t seed = 101 + seed_idx;
        std::printf("# seed %llu: post-training vanilla / full / partial arms\n",
                    static_cast<unsigned long long>(seed));
        std::fflush(stdout);
        const Arm arms[3] = {
            posttrain_arm(base, train_data, train_schedule, ScMode::Off, seed,
                          kPostTokensMarkov),
            posttrain_arm(base, train_data, train_schedule, ScMode::Full, seed,
                          kPostTokensMarkov),
            posttrain_arm(base, train_data, train_schedule, ScMode::Partial, seed,
                          kPostTokensMarkov),
        };
        // Common random numbers across arms: each arm samples from the same
        // rng streams and the NLL estimator draws the same (t, mask) pairs,
        // so arm comparisons are paired and estimator noise cancels.
        for (int a = 0; a < 3; ++a) {
            const auto s8 = draw_samples(arms[a], 8, derive_seed(seed, 7, 8),
                                         kSamplesMarkov);
            const auto s32 = draw_samples(arms[a], 32, derive_seed(seed, 7, 32),
                                          kSamplesMarkov);
            js8[a].push_back(kmer_js(
                KmerHistogram::from_sequences(s8, 3, source.vocab()), exact_3mer));
            js32[a].push_back(kmer_js(
                KmerHistogram::from_sequences(s32, 3, source.vocab()), exact_3mer));
            ppl32[a].push_back(gen_ppl_under_source(s32, source).ppl);
            const NllEstimate e =
                nll_upper_bound(arms[a].model, held_out, train_schedule, kMcDraws,
                                derive_seed(seed, 0, 99), /*sc_emulation=*/a != 0);
            nll[a].push_back(e.nats_per_token);
            nll_se[a].push_back(e.std_error);
            std::printf("  arm %d: js8=%.4f js32=%.4f ppl32=%.3f nll=%.4f\n", a,
                        js8[a].back(), js32[a].back(), ppl32[a].back(), nll[a].back());
            std::fflush(stdout);
        }
    }

    // criterion 8: full beats vanilla on JS 3-mer at T in {8, 32}; full <= partial
    {
        const auto start = elapsed();
        bool ok = true;
        std::string detail;
        for (const auto* js : {&js8, &js32}) {
            const int T = (js == &js8) ? 8 : 32;
            int wins = 0;
            for (int i = 0; i < kSeeds; ++i) {
                if ((*js)[1][i] < (*js)[0][i]) ++wins;
            }
            const double mv = median((*js)[0]), mf = median((*js)[1]),
                         mp = median((*js)[2]);
            detail += "T=" + std::to_string(T) + ": vanilla " + fmt(mv) + ", full " +
                      fmt(mf) + ", partial " + fmt(mp) + ", full<vanilla in " +
                      std::to_string(wins) + "/5 seeds; ";
            if (!(mf < mv) || wins < 4 || !(mf <= mp)) ok = false;
        }
        report(8, "full self-conditioning improves JS 3-mer over vanilla", ok, detail,
               elapsed() - start, failures);
    }

    // criterion 9: generative perplexity direction at T=32
    {
        const double mv = median(ppl32[0]), mf = median(ppl32[1]);
        report(9, "full self-conditioning matches or lowers generative perplexity at T=32",
               mf <= mv,
               "median gen-PPL: vanilla " + fmt(mv) + ", full " + fmt(mf) +
                   " (source floor " + fmt(std::exp(source.entropy_rate())) + ")",
               0.0, failures);
    }

    // criterion 11: held-out NELBO ordering and entropy-rate sanity
    {
        const double mv = median(nll[0]), mf = median(nll[1]);
        const double se_v = median(nll_se[0]), se_f = median(nll_se[1]);
        const double er = source.entropy_rate();
        const bool ordering = mf <= mv;
        const bool sane = mv >= er - 2.0 * se_v && mf >= er - 2.0 * se_f;
        report(11, "held-out NLL bound: self-conditioned <= vanilla, both above entropy rate",
               ordering && sane,
               "median nats/token: vanilla " + fmt(mv) + ", full " + fmt(mf) +
                   "; source entropy rate " + fmt(er),
               0.0, failures);
    }

    // ---------------------------------------------------- bracket runs (10)
    {
        const auto start = elapsed();
        const BracketSource grammar(2, 4, L);
        Rng brng(4048);
        const std::vector<TokenSeq> btrain = grammar.generate(20000, brng);
        std::printf("# training bracket base model (%llu tokens)\n",
                    static_cast<unsigned long long>(kBaseTokensBracket));
        std::fflush(stdout);
        const DenoiserModel bbase =
            train_base(btrain, grammar.vocab(), L, train_schedule, kBaseTokensBracket);

        std::vector<double> valid[2], unique_[2], novel[2];
        for (int seed_idx = 0; seed_idx < kSeeds; ++seed_idx) {
            const uint64_t seed = 301 + seed_idx;
            const Arm arms[2] = {
                posttrain_arm(bbase, btrain, train_schedule, ScMode::Off, seed,
                              kPostTokensBracket),
                posttrain_arm(bbase, btrain, train_schedule, ScMode::Full, seed,
                              kPostTokensBracket),
            };
            for (int a = 0; a < 2; ++a) {
                const auto samples =
                    draw_samples(arms[a], 32, derive_seed(seed, 7, 10), kSamplesBracket);
                const VunCounts c = grammar_vun(samples, grammar.pairs, btrain);
                valid[a].push_back(c.valid);
                unique_[a].push_back(c.unique);
                novel[a].push_back(c.novel);
            }
            std::printf("# bracket seed %llu: vanilla V/U/N %.0f/%.0f/%.0f, full %.0f/%.0f/%.0f\n",
                        static_cast<unsigned long long>(seed), valid[0].back(),
                        unique_[0].back(), novel[0].back(), valid[1].back(),
                        unique_[1].back(), novel[1].back());
            std::fflush(stdout);
        }
        const double v0 = median(valid[0]), v1 = median(valid[1]);
        const double u0 = median(unique_[0]), u1 = median(unique_[1]);
        const double n0 = median(novel[0]), n1 = median(novel[1]);
        report(10, "bracket validity: self-conditioned >= vanilla on valid and unique",
               v1 >= v0 && u1 >= u0,
               "median valid " + fmt(v0) + " -> " + fmt(v1) + ", unique " + fmt(u0) +
                   " -> " + fmt(u1) + ", novel (reported, ungated) " + fmt(n0) + " -> " +
                   fmt(n1),
               elapsed() - start, failures);
    }

    std::printf("# total runtime %.0fs\n", elapsed());
    return failures == 0 ? 0 : 1;
}
