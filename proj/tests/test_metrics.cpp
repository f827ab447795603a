#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "maskdiff/errors.hpp"
#include "maskdiff/metrics.hpp"

using namespace maskdiff;

namespace {

SamplerTrace left_to_right(int L, int T0) {
    SamplerTrace tr;
    for (int i = 0; i < L; ++i) {
        TraceStep step;
        step.t = T0 - i;
        step.unmasked = {i};
        tr.steps.push_back(step);
    }
    tr.denoiser_calls = T0;
    return tr;
}

}  // namespace

TEST_CASE("token entropy closed forms") {
    CHECK(token_entropy({2, 2, 2, 2}) == 0.0);
    CHECK(token_entropy({0, 1, 2, 3}) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(token_entropy({0, 0, 1, 1}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("local AR@1: canonical traces") {
    const int L = 8;
    CHECK(local_ar_at_1(left_to_right(L, L), L) == 1.0);

    SamplerTrace right_to_left;
    for (int i = L - 1; i >= 0; --i) {
        TraceStep step;
        step.t = i + 1;
        step.unmasked = {i};
        right_to_left.steps.push_back(step);
    }
    CHECK(local_ar_at_1(right_to_left, L) == doctest::Approx(1.0 / L).epsilon(1e-12));

    SamplerTrace one_shot;
    TraceStep all;
    all.t = 1;
    for (int i = 0; i < L; ++i) all.unmasked.push_back(i);
    one_shot.steps.push_back(all);
    CHECK(local_ar_at_1(one_shot, L) == doctest::Approx(1.0 / L).epsilon(1e-12));

    SamplerTrace empty;
    CHECK_THROWS_AS(local_ar_at_1(empty, L), UsageError);
}

TEST_CASE("global AR@k: canonical traces") {
    const int L = 10;
    CHECK(global_ar_at_k(left_to_right(L, L), L, 4) == 1.0);
    CHECK(global_ar_at_k(left_to_right(L, L), L, L) == 1.0);

    // one-per-step, always unmasking the highest-index masked position:
    // qualifies only once <= k positions remain, so the fraction is k/L —
    // counted here independently against the step-start definition
    SamplerTrace last_first;
    for (int i = L - 1; i >= 0; --i) {
        TraceStep step;
        step.t = i + 1;
        step.unmasked = {i};
        last_first.steps.push_back(step);
    }
    int qualifying = 0;
    for (int s = 0; s < L; ++s) {
        const int chosen = L - 1 - s;   // masked set at step start is {0..L-1-s}
        if (chosen <= 3) ++qualifying;  // among the first 4 still-masked
    }
    CHECK(global_ar_at_k(last_first, L, 4) ==
          doctest::Approx(static_cast<double>(qualifying) / L).epsilon(1e-12));
    CHECK(qualifying == 4);

    // a trace covering nothing scores 0
    SamplerTrace idle;
    TraceStep none;
    none.t = 1;
    idle.steps.push_back(none);
    CHECK(global_ar_at_k(idle, L, 4) == 0.0);
}

TEST_CASE("k-mer histograms count overlapping windows within sequences only") {
    const std::vector<TokenSeq> seqs = {{0, 1, 0}, {1, 1, 1}};
    const KmerHistogram h = KmerHistogram::from_sequences(seqs, 2, 2);
    CHECK(h.total == 4.0);             // two windows per length-3 sequence
    CHECK(h.counts[0 * 2 + 1] == 1.0); // "01"
    CHECK(h.counts[1 * 2 + 0] == 1.0); // "10"
    CHECK(h.counts[1 * 2 + 1] == 2.0); // "11" twice, never "0...1" across rows
    CHECK(h.counts[0] == 0.0);
    CHECK_THROWS_AS(KmerHistogram::from_sequences({{0, 2}}, 1, 2), UsageError);
}

TEST_CASE("JS divergence: identity, disjoint supports, and a frozen value") {
    const KmerHistogram p = KmerHistogram::from_probs({0.5, 0.5}, 1, 2);
    const KmerHistogram q = KmerHistogram::from_probs({1.0, 0.0}, 1, 2);
    const KmerHistogram r = KmerHistogram::from_probs({0.0, 1.0}, 1, 2);
    CHECK(kmer_js(p, p) == 0.0);
    CHECK(kmer_js(q, r) == doctest::Approx(1.0).epsilon(1e-12));
    // JS((0.5,0.5),(1,0)) in bits, from an independent evaluation
    CHECK(kmer_js(p, q) == doctest::Approx(0.31127812445913283).epsilon(1e-12));
    CHECK(kmer_js(q, p) == doctest::Approx(kmer_js(p, q)).epsilon(1e-15));  // symmetry
    const KmerHistogram empty = KmerHistogram::from_probs({0.0, 0.0}, 1, 2);
    CHECK_THROWS_AS(kmer_js(p, empty), UsageError);
    const KmerHistogram other_k = KmerHistogram::from_probs({0.25, 0.25, 0.25, 0.25}, 2, 2);
    CHECK_THROWS_AS(kmer_js(p, other_k), UsageError);
}

TEST_CASE("NLL bound of a uniform-output model is ln V") {
    ModelConfig cfg;
    cfg.vocab = 4;
    cfg.seq_len = 8;
    cfg.hidden = 4;
    cfg.blocks = 1;
    cfg.steps = 8;
    DenoiserModel model = make_model(cfg, 1);
    for (Tensor& t : model.params.tensors) {
        std::fill(t.data.begin(), t.data.end(), 0.0);  // uniform head output
    }
    Rng rng(5);
    const auto data = default_markov_source().generate(256, cfg.seq_len, rng);
    const NoiseSchedule s = NoiseSchedule::linear(cfg.steps);
    const NllEstimate e = nll_upper_bound(model, data, s, 64, 17, false);
    CHECK(std::abs(e.nats_per_token / std::log(4.0) - 1.0) < 0.05);
    CHECK(e.std_error > 0.0);
    CHECK(e.sequences == 256);
}

TEST_CASE("NLL bound is invariant to dataset order") {
    ModelConfig cfg;
    cfg.vocab = 2;
    cfg.seq_len = 4;
    cfg.hidden = 4;
    cfg.blocks = 1;
    cfg.steps = 4;
    const DenoiserModel model = make_model(cfg, 2);
    Rng rng(6);
    auto data = tiny_markov_source().generate(32, cfg.seq_len, rng);
    const NoiseSchedule s = NoiseSchedule::linear(cfg.steps);
    const double forward = nll_upper_bound(model, data, s, 8, 3, false).nats_per_token;
    std::reverse(data.begin(), data.end());
    const double reversed = nll_upper_bound(model, data, s, 8, 3, false).nats_per_token;
    // identical per-sequence draws; only the accumulation order differs
    CHECK(forward == doctest::Approx(reversed).epsilon(1e-13));
}

TEST_CASE("NLL bound with a point-mass oracle on a deterministic source is zero") {
    struct PointMass : DenoiserFn {
        TokenSeq target;
        CleanStateEstimate estimate(const LatentSeq&, int,
                                    const CleanStateEstimate&) override {
            Tensor p = Tensor::zeros(static_cast<int>(target.size()), 2);
            for (size_t i = 0; i < target.size(); ++i) p.at(static_cast<int>(i), target[i]) = 1.0;
            return CleanStateEstimate::from_probs(std::move(p));
        }
    };
    PointMass oracle;
    oracle.target = {0, 1, 1, 0};
    const NoiseSchedule s = NoiseSchedule::linear(4);
    const NllEstimate e =
        nll_upper_bound(oracle, Vocab(2), {oracle.target}, s, 16, 9, false);
    CHECK(e.nats_per_token == 0.0);
}

TEST_CASE("NLL bound exceeds the source entropy rate and sc emulation runs") {
    ModelConfig cfg;
    cfg.vocab = 4;
    cfg.seq_len = 8;
    cfg.hidden = 8;
    cfg.blocks = 1;
    cfg.steps = 8;
    cfg.has_sc = true;
    const DenoiserModel model = make_model(cfg, 21);
    Rng rng(31);
    const MarkovSource source = default_markov_source();
    const auto data = source.generate(64, cfg.seq_len, rng);
    const NoiseSchedule s = NoiseSchedule::linear(cfg.steps);
    const NllEstimate plain = nll_upper_bound(model, data, s, 8, 4, false);
    const NllEstimate sc = nll_upper_bound(model, data, s, 8, 4, true);
    CHECK(plain.nats_per_token > source.entropy_rate() - 2.0 * plain.std_error);
    CHECK(sc.nats_per_token > source.entropy_rate() - 2.0 * sc.std_error);
}

TEST_CASE("generative perplexity of source samples approaches exp(entropy rate)") {
    const MarkovSource source = default_markov_source();
    Rng rng(77);
    const auto samples = source.generate(10000, 32, rng);
    const GenPplResult r = gen_ppl_under_source(samples, source);
    CHECK(r.floor_violations == 0);
    CHECK(std::abs(r.ppl / std::exp(source.entropy_rate()) - 1.0) < 0.05);
}

TEST_CASE("uniform-random samples under a skewed source score worse than the source") {
    const MarkovSource source = default_markov_source();
    Rng rng(88);
    std::vector<TokenSeq> uniform_samples;
    for (int i = 0; i < 2000; ++i) {
        TokenSeq s;
        for (int j = 0; j < 32; ++j) s.push_back(rng.uniform_int(0, 3));
        uniform_samples.push_back(std::move(s));
    }
    const GenPplResult r = gen_ppl_under_source(uniform_samples, source);
    CHECK(r.ppl > std::exp(source.entropy_rate()));
}

TEST_CASE("impossible transitions hit the likelihood floor and are counted") {
    const MarkovSource ring(1, 3, {{0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}, {0.5, 0.0, 0.5}});
    const GenPplResult r = gen_ppl_under_source({{0, 2, 2}, {0, 1, 2}}, ring);
    CHECK(r.floor_violations == 1);
    CHECK(std::isfinite(r.ppl));
}

TEST_CASE("grammar validity / uniqueness / novelty counting") {
    const std::vector<TokenSeq> train = {{0, 1, 0, 1}, {0, 0, 1, 1}};
    const std::vector<TokenSeq> samples = {
        {0, 1, 0, 1},  // valid, duplicate of train
        {0, 1, 0, 1},  // repeat of the above
        {0, 0, 1, 1},  // valid, in train
        {2, 3, 2, 3},  // valid, novel
        {2, 2, 3, 3},  // valid, novel
        {2, 3, 2, 3},  // repeat
        {1, 0, 1, 0},  // invalid (close before open)
        {0, 2, 1, 3},  // invalid (crossing pairs)
        {0, 1, 0, 0},  // invalid (unbalanced)
        {0, 1, 2, 3},  // valid, novel
    };
    const VunCounts c = grammar_vun(samples, 2, train);
    CHECK(c.valid == 7);
    CHECK(c.unique == 5);
    CHECK(c.novel == 3);

    const VunCounts none = grammar_vun({{1, 0}}, 2, train);
    CHECK(none.valid == 0);
    CHECK(none.unique == 0);
    CHECK(none.novel == 0);

    const VunCounts copied = grammar_vun({{0, 1, 0, 1}}, 2, train);
    CHECK(copied.valid == 1);
    CHECK(copied.novel == 0);
}

TEST_CASE("metric report round trips through the key-value format") {
    MetricReport r;
    r.set("js_3mer_bits", 0.123456789, 0.001, 500);
    r.set("token_entropy_nats", 1.25);
    const std::string path = "metrics_test_report.txt";
    r.write_kv(path);
    const MetricReport back = MetricReport::read_kv(path);
    std::remove(path.c_str());
    CHECK(back.metrics.at("js_3mer_bits").value == doctest::Approx(0.123456789));
    CHECK(back.metrics.at("js_3mer_bits").std_error == doctest::Approx(0.001));
    CHECK(back.metrics.at("js_3mer_bits").n == 500);
    CHECK(back.metrics.at("token_entropy_nats").value == doctest::Approx(1.25));
}
