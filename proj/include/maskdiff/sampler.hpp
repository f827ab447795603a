#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maskdiff/denoiser.hpp"
#include "maskdiff/diffusion.hpp"
#include "maskdiff/sources.hpp"

namespace maskdiff {

struct TraceStep {
    int t = 0;
    std::vector<int> unmasked;  // positions newly unmasked at this step
};

struct SamplerTrace {
    std::vector<TraceStep> steps;
    int denoiser_calls = 0;
    uint64_t seed = 0;
};

// Anything that can produce a clean-state estimate for a latent.
class DenoiserFn {
  public:
    virtual ~DenoiserFn() = default;
    virtual CleanStateEstimate estimate(const LatentSeq& x_t, int t,
                                        const CleanStateEstimate& sc) = 0;
};

class ModelDenoiser : public DenoiserFn {
  public:
    explicit ModelDenoiser(const DenoiserModel& model) : model_(model) {}
    CleanStateEstimate estimate(const LatentSeq& x_t, int t,
                                const CleanStateEstimate& sc) override {
        return denoise(model_, x_t, t, sc);
    }

  private:
    const DenoiserModel& model_;
};

// Exact Bayesian posterior under a known source; ignores the sc input.
// Enumeration-based, so only feasible at toy sizes.
class OracleDenoiser : public DenoiserFn {
  public:
    explicit OracleDenoiser(const MarkovSource& source) : source_(source) {}
    CleanStateEstimate estimate(const LatentSeq& x_t, int /*t*/,
                                const CleanStateEstimate& /*sc*/) override {
        return source_.posterior(x_t);
    }

  private:
    const MarkovSource& source_;
};

struct SampleResult {
    TokenSeq tokens;
    SamplerTrace trace;
};

// Ancestral sampling from the fully masked sequence. With sc_enabled, the
// previous step's clean-state estimate is fed back into the denoiser; the
// number of denoiser calls is T either way.
SampleResult sample(DenoiserFn& denoiser, const Vocab& vocab,
                    const NoiseSchedule& schedule, int len, Rng& rng,
                    bool sc_enabled);

// n independent samples with counter-derived per-sample streams.
std::vector<SampleResult> batch_sample(DenoiserFn& denoiser, const Vocab& vocab,
                                       const NoiseSchedule& schedule, int len, int n,
                                       uint64_t master_seed, bool sc_enabled);

// Trace sidecar: one "sample <idx> seed=<s> calls=<n>" line per sample,
// followed by one "<t> <pos...>" line per step that unmasked something.
void write_traces(const std::vector<SampleResult>& samples, const std::string& path);
std::vector<SamplerTrace> read_traces(const std::string& path);

}  // namespace maskdiff
