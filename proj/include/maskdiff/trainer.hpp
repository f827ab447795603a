#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "maskdiff/denoiser.hpp"
#include "maskdiff/diffusion.hpp"

namespace maskdiff {

enum class ScMode { Off, Full, Partial };

std::string sc_mode_name(ScMode mode);
ScMode sc_mode_from_name(const std::string& name);

struct TrainConfig {
    ScMode sc_mode = ScMode::Off;
    double partial_rate = 0.5;  // probability of an unconditioned single pass
    FusionMode fusion = FusionMode::Concat;
    double lr = 1e-3;
    int batch_size = 32;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 1.0;  // global-norm gradient clip
    int warmup_steps = 0;    // linear warmup to lr, then constant
    uint64_t seed = 1;
    uint64_t max_tokens = 0;

    void validate() const;
};

struct OptimizerState {
    std::vector<Tensor> m;  // first moments, ParamStore order
    std::vector<Tensor> v;  // second moments
    uint64_t step = 0;

    static OptimizerState init_for(const DenoiserModel& model);
};

struct LossRecord {
    double loss = 0.0;
    double mean_t = 0.0;
    int masked_count = 0;
    int pass_count = 1;  // 1 = single pass, 2 = two-pass self-conditioned
    double wall_ms = 0.0;
};

// Discrete-time NELBO term for one sequence at one timestep:
//   T * w_t * sum_{i masked} -log probs[i][x0^i],  w_t = (a_{t-1}-a_t)/(1-a_t)
// Probabilities are floored at 1e-12; `clamp_count`, when given, counts floor
// hits.
double mdm_loss(const CleanStateEstimate& clean_est, const TokenSeq& x0,
                const LatentSeq& x_t, int t, const NoiseSchedule& schedule,
                uint64_t* clamp_count = nullptr);

// One optimizer step over the batch. sc_mode must not be Off. step_index
// seeds the per-step RNG streams, so a run can resume mid-stream.
LossRecord train_step_scmdm(const std::vector<TokenSeq>& batch, DenoiserModel& model,
                            OptimizerState& opt, const TrainConfig& cfg,
                            const NoiseSchedule& schedule, uint64_t step_index);

// Single unconditioned pass (the standard masked-diffusion step).
LossRecord train_step_vanilla(const std::vector<TokenSeq>& batch, DenoiserModel& model,
                              OptimizerState& opt, const TrainConfig& cfg,
                              const NoiseSchedule& schedule, uint64_t step_index);

// Adam with bias correction. Grads are in ParamStore order.
void adam_step(DenoiserModel& model, const std::vector<Tensor>& grads,
               OptimizerState& opt, double lr, double beta1, double beta2,
               double eps = 1e-8);

struct TrainRunResult {
    uint64_t steps = 0;
    uint64_t tokens = 0;
    double final_loss = 0.0;
};

// Step callback: invoked after every optimizer step with the step index and
// its LossRecord (metrics logging, periodic checkpoints).
using StepHook = std::function<void(uint64_t, const LossRecord&)>;

// Runs until max_tokens is consumed. Batches are drawn from `data` with a
// per-step derived stream. Resumes from model.trained_steps.
TrainRunResult train_run(DenoiserModel& model, OptimizerState& opt,
                         const TrainConfig& cfg, const NoiseSchedule& schedule,
                         const std::vector<TokenSeq>& data,
                         const StepHook& hook = nullptr);

}  // namespace maskdiff
