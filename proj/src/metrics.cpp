#include "maskdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "maskdiff/errors.hpp"
#include "maskdiff/trainer.hpp"

namespace maskdiff {

namespace {

long ipow(int base, int exp) {
    long r = 1;
    for (int i = 0; i < exp; ++i) r *= base;
    return r;
}

}  // namespace

KmerHistogram KmerHistogram::from_sequences(const std::vector<TokenSeq>& seqs, int k,
                                            int vocab) {
    if (k < 1) throw UsageError("kmer histogram: k must be >= 1");
    KmerHistogram h;
    h.k = k;
    h.vocab = vocab;
    h.counts.assign(ipow(vocab, k), 0.0);
    for (const TokenSeq& seq : seqs) {
        if (static_cast<int>(seq.size()) < k) continue;
        for (size_t i = 0; i + k <= seq.size(); ++i) {
            long code = 0;
            for (int j = 0; j < k; ++j) {
                const int tok = seq[i + j];
                if (tok < 0 || tok >= vocab) {
                    throw UsageError("kmer histogram: non-clean token in sequence");
                }
                code = code * vocab + tok;
            }
            h.counts[code] += 1.0;
            h.total += 1.0;
        }
    }
    return h;
}

KmerHistogram KmerHistogram::from_probs(const std::vector<double>& probs, int k,
                                        int vocab) {
    if (static_cast<long>(probs.size()) != ipow(vocab, k)) {
        throw UsageError("kmer histogram: probability vector has wrong size");
    }
    KmerHistogram h;
    h.k = k;
    h.vocab = vocab;
    h.counts = probs;
    h.total = 0.0;
    for (double p : probs) h.total += p;
    return h;
}

double token_entropy(const TokenSeq& x) {
    if (x.empty()) return 0.0;
    std::map<int, long> counts;
    for (int tok : x) ++counts[tok];
    const double L = static_cast<double>(x.size());
    double h = 0.0;
    for (const auto& [tok, c] : counts) {
        const double p = c / L;
        h -= p * std::log(p);
    }
    return h;
}

double local_ar_at_1(const SamplerTrace& trace, int len) {
    if (trace.steps.empty()) throw UsageError("local_ar_at_1: empty trace");
    std::vector<char> unmasked(len, 0);
    long hits = 0, total = 0;
    for (const TraceStep& step : trace.steps) {
        // judged against the step-start state, so same-step neighbors don't count
        for (int p : step.unmasked) {
            ++total;
            if (p == 0 || unmasked[p - 1]) ++hits;
        }
        for (int p : step.unmasked) unmasked[p] = 1;
    }
    if (total == 0) throw UsageError("local_ar_at_1: trace unmasked nothing");
    return static_cast<double>(hits) / total;
}

double global_ar_at_k(const SamplerTrace& trace, int len, int k) {
    std::vector<char> unmasked(len, 0);
    long hits = 0, total = 0;
    for (const TraceStep& step : trace.steps) {
        // first k still-masked positions, frozen at step start
        std::set<int> earliest;
        for (int i = 0; i < len && static_cast<int>(earliest.size()) < k; ++i) {
            if (!unmasked[i]) earliest.insert(i);
        }
        for (int p : step.unmasked) {
            ++total;
            if (earliest.count(p)) ++hits;
        }
        for (int p : step.unmasked) unmasked[p] = 1;
    }
    if (total == 0) return 0.0;
    return static_cast<double>(hits) / total;
}

double kmer_js(const KmerHistogram& generated, const KmerHistogram& reference) {
    if (generated.k != reference.k || generated.vocab != reference.vocab) {
        throw UsageError("kmer_js: histograms must share k and vocabulary");
    }
    if (generated.total <= 0.0 || reference.total <= 0.0) {
        throw UsageError("kmer_js: empty histogram");
    }
    double js = 0.0;
    for (size_t i = 0; i < generated.counts.size(); ++i) {
        const double p = generated.counts[i] / generated.total;
        const double q = reference.counts[i] / reference.total;
        const double m = 0.5 * (p + q);
        if (p > 0.0) js += 0.5 * p * std::log2(p / m);
        if (q > 0.0) js += 0.5 * q * std::log2(q / m);
    }
    return std::clamp(js, 0.0, 1.0);
}

NllEstimate nll_upper_bound(DenoiserFn& denoiser, const Vocab& vocab,
                            const std::vector<TokenSeq>& data,
                            const NoiseSchedule& schedule, int mc_draws, uint64_t seed,
                            bool sc_emulation) {
    if (mc_draws < 1) throw UsageError("nll_upper_bound: mc_draws must be >= 1");
    if (data.empty()) throw UsageError("nll_upper_bound: empty dataset");
    const int T = schedule.steps();
    double sum = 0.0, sumsq = 0.0;
    long n = 0;
    for (const TokenSeq& x0 : data) {
        // content-derived stream: the estimate does not depend on dataset order
        uint64_t h = 0x9E3779B97F4A7C15ULL;
        for (int tok : x0) h = mix64(h ^ static_cast<uint64_t>(tok + 1));
        Rng rng(derive_seed(seed, h, /*salt=*/0xE7A1));
        for (int d = 0; d < mc_draws; ++d) {
            const int t = rng.uniform_int(1, T);
            const LatentSeq x_t = corrupt_marginal(x0, t, vocab, schedule, rng);
            CleanStateEstimate est;
            if (sc_emulation) {
                const CleanStateEstimate first =
                    denoiser.estimate(x_t, t, CleanStateEstimate::null());
                est = denoiser.estimate(x_t, t, first);
            } else {
                est = denoiser.estimate(x_t, t, CleanStateEstimate::null());
            }
            const double per_token =
                mdm_loss(est, x0, x_t, t, schedule) / static_cast<double>(x0.size());
            sum += per_token;
            sumsq += per_token * per_token;
            ++n;
        }
    }
    NllEstimate e;
    e.nats_per_token = sum / n;
    const double var = std::max(0.0, sumsq / n - e.nats_per_token * e.nats_per_token);
    e.std_error = std::sqrt(var / n);
    e.sequences = static_cast<int>(data.size());
    e.draws = mc_draws;
    return e;
}

NllEstimate nll_upper_bound(const DenoiserModel& model, const std::vector<TokenSeq>& data,
                            const NoiseSchedule& schedule, int mc_draws, uint64_t seed,
                            bool sc_emulation) {
    ModelDenoiser denoiser(model);
    return nll_upper_bound(denoiser, Vocab(model.cfg.vocab), data, schedule, mc_draws,
                           seed, sc_emulation);
}

GenPplResult gen_ppl_under_source(const std::vector<TokenSeq>& samples,
                                  const MarkovSource& source) {
    if (samples.empty()) throw UsageError("gen_ppl_under_source: no samples");
    GenPplResult r;
    double total_nll = 0.0;
    long total_tokens = 0;
    for (const TokenSeq& seq : samples) {
        double lp = source.log_prob(seq);
        if (!std::isfinite(lp)) {
            // floor impossible sequences at 1e-12 per token
            lp = static_cast<double>(seq.size()) * std::log(1e-12);
            ++r.floor_violations;
        }
        total_nll -= lp;
        total_tokens += static_cast<long>(seq.size());
    }
    r.nats_per_token = total_nll / total_tokens;
    r.ppl = std::exp(r.nats_per_token);
    return r;
}

VunCounts grammar_vun(const std::vector<TokenSeq>& samples, int pairs,
                      const std::vector<TokenSeq>& train_set) {
    VunCounts c;
    std::set<TokenSeq> train(train_set.begin(), train_set.end());
    std::set<TokenSeq> seen;
    for (const TokenSeq& s : samples) {
        if (!bracket_check(s, pairs)) continue;
        ++c.valid;
        if (seen.insert(s).second) {
            ++c.unique;
            if (!train.count(s)) ++c.novel;
        }
    }
    return c;
}

void MetricReport::set(const std::string& name, double value, double se, long n) {
    metrics[name] = MetricValue{value, se, n};
}

void MetricReport::write_kv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.precision(12);
    for (const auto& [name, m] : metrics) {
        out << name << ' ' << m.value;
        if (m.n > 0) out << " se=" << m.std_error << " n=" << m.n;
        out << '\n';
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

void MetricReport::write_json(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.precision(12);
    out << "{\n";
    bool first = true;
    for (const auto& [name, m] : metrics) {
        if (!first) out << ",\n";
        first = false;
        out << "  \"" << name << "\": {\"value\": " << m.value << ", \"se\": " << m.std_error
            << ", \"n\": " << m.n << "}";
    }
    out << "\n}\n";
    if (!out) throw IoError("write failed for '" + path + "'");
}

MetricReport MetricReport::read_kv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    MetricReport report;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string name;
        MetricValue m;
        if (!(ls >> name >> m.value)) throw IoError(path + ": malformed report line");
        std::string field;
        while (ls >> field) {
            if (field.rfind("se=", 0) == 0) m.std_error = std::stod(field.substr(3));
            if (field.rfind("n=", 0) == 0) m.n = std::stol(field.substr(2));
        }
        report.metrics[name] = m;
    }
    return report;
}

}  // namespace maskdiff
