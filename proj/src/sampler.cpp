#include "maskdiff/sampler.hpp"

#include <fstream>
#include <sstream>

#include "maskdiff/errors.hpp"

namespace maskdiff {

SampleResult sample(DenoiserFn& denoiser, const Vocab& vocab,
                    const NoiseSchedule& schedule, int len, Rng& rng,
                    bool sc_enabled) {
    if (len < 1) throw UsageError("sample: length must be >= 1");
    const int T = schedule.steps();
    LatentSeq x;
    x.t = T;
    x.tokens.assign(len, vocab.mask_id());

    SampleResult out;
    out.trace.steps.reserve(T);
    CleanStateEstimate carried = CleanStateEstimate::null();
    for (int t = T; t >= 1; --t) {
        const CleanStateEstimate est =
            denoiser.estimate(x, t, sc_enabled ? carried : CleanStateEstimate::null());
        ++out.trace.denoiser_calls;
        const LatentSeq next = reverse_sample(x, t, est, vocab, schedule, rng);
        TraceStep step;
        step.t = t;
        for (int i = 0; i < len; ++i) {
            if (x.tokens[i] == vocab.mask_id() && next.tokens[i] != vocab.mask_id()) {
                step.unmasked.push_back(i);
            }
        }
        out.trace.steps.push_back(std::move(step));
        carried = est;  // reused at step t-1; costs no extra denoiser call
        x = next;
    }
    for (int tok : x.tokens) {
        if (tok == vocab.mask_id()) {
            throw NumericError("sample: terminal sequence still contains a mask");
        }
    }
    out.tokens = std::move(x.tokens);
    return out;
}

std::vector<SampleResult> batch_sample(DenoiserFn& denoiser, const Vocab& vocab,
                                       const NoiseSchedule& schedule, int len, int n,
                                       uint64_t master_seed, bool sc_enabled) {
    if (n < 1) throw UsageError("batch_sample: n must be >= 1");
    std::vector<SampleResult> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        const uint64_t seed = derive_seed(master_seed, static_cast<uint64_t>(i));
        Rng rng(seed);
        SampleResult s = sample(denoiser, vocab, schedule, len, rng, sc_enabled);
        s.trace.seed = seed;
        out.push_back(std::move(s));
    }
    return out;
}

void write_traces(const std::vector<SampleResult>& samples, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    for (size_t s = 0; s < samples.size(); ++s) {
        const SamplerTrace& tr = samples[s].trace;
        out << "sample " << s << " seed=" << tr.seed << " calls=" << tr.denoiser_calls
            << '\n';
        for (const TraceStep& step : tr.steps) {
            if (step.unmasked.empty()) continue;
            out << step.t;
            for (int p : step.unmasked) out << ' ' << p;
            out << '\n';
        }
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

std::vector<SamplerTrace> read_traces(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<SamplerTrace> traces;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        if (line.rfind("sample ", 0) == 0) {
            std::string word;
            size_t idx;
            ls >> word >> idx;
            SamplerTrace tr;
            std::string field;
            while (ls >> field) {
                if (field.rfind("seed=", 0) == 0) tr.seed = std::stoull(field.substr(5));
                if (field.rfind("calls=", 0) == 0) tr.denoiser_calls = std::stoi(field.substr(6));
            }
            traces.push_back(std::move(tr));
        } else {
            if (traces.empty()) {
                throw IoError(path + ":" + std::to_string(lineno) +
                              ": step record before any sample header");
            }
            TraceStep step;
            if (!(ls >> step.t)) {
                throw IoError(path + ":" + std::to_string(lineno) + ": malformed step record");
            }
            int pos;
            while (ls >> pos) step.unmasked.push_back(pos);
            traces.back().steps.push_back(std::move(step));
        }
    }
    return traces;
}

}  // namespace maskdiff
