#include "maskdiff/trainer.hpp"

#include <chrono>
#include <cmath>

#include "maskdiff/errors.hpp"
#include "maskdiff/rng.hpp"

namespace maskdiff {

namespace {

// Derived-stream salts. The coin that picks one- vs two-pass lives on its own
// stream so partial mode consumes exactly the same data draws as full/vanilla.
constexpr uint64_t kSaltData = 0;
constexpr uint64_t kSaltCoin = 1;
constexpr uint64_t kSaltBatch = 2;

}  // namespace

std::string sc_mode_name(ScMode mode) {
    switch (mode) {
        case ScMode::Off: return "off";
        case ScMode::Full: return "full";
        case ScMode::Partial: return "partial";
    }
    return "?";
}

ScMode sc_mode_from_name(const std::string& name) {
    if (name == "off" || name == "vanilla") return ScMode::Off;
    if (name == "full" || name == "sc_full") return ScMode::Full;
    if (name == "partial" || name == "sc_partial") return ScMode::Partial;
    throw ConfigError("unknown sc mode '" + name + "'");
}

void TrainConfig::validate() const {
    if (sc_mode == ScMode::Partial && !(partial_rate > 0.0 && partial_rate < 1.0)) {
        throw ConfigError("partial self-conditioning rate must lie in (0,1)");
    }
    if (lr <= 0.0) throw ConfigError("learning rate must be positive");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw ConfigError("adam betas must lie in [0,1)");
    }
    if (warmup_steps < 0) throw ConfigError("warmup steps must be >= 0");
}

OptimizerState OptimizerState::init_for(const DenoiserModel& model) {
    OptimizerState s;
    s.m.reserve(model.params.count());
    s.v.reserve(model.params.count());
    for (const Tensor& p : model.params.tensors) {
        s.m.push_back(Tensor::zeros(p.rows, p.cols));
        s.v.push_back(Tensor::zeros(p.rows, p.cols));
    }
    return s;
}

double mdm_loss(const CleanStateEstimate& clean_est, const TokenSeq& x0,
                const LatentSeq& x_t, int t, const NoiseSchedule& schedule,
                uint64_t* clamp_count) {
    if (clean_est.is_null) throw UsageError("mdm_loss: clean estimate is null");
    if (t < 1 || t > schedule.steps()) throw UsageError("mdm_loss: t out of range");
    const int L = static_cast<int>(x0.size());
    if (static_cast<int>(x_t.tokens.size()) != L || clean_est.probs.rows != L) {
        throw UsageError("mdm_loss: length mismatch");
    }
    const int V = clean_est.probs.cols;
    const double w = (schedule.alpha(t - 1) - schedule.alpha(t)) / (1.0 - schedule.alpha(t));
    double nll = 0.0;
    for (int i = 0; i < L; ++i) {
        if (x_t.tokens[i] != V) continue;  // only masked positions contribute
        double p = clean_est.probs.at(i, x0[i]);
        if (p < 1e-12) {
            p = 1e-12;
            if (clamp_count) ++*clamp_count;
        }
        nll -= std::log(p);
    }
    return schedule.steps() * w * nll;
}

void adam_step(DenoiserModel& model, const std::vector<Tensor>& grads,
               OptimizerState& opt, double lr, double beta1, double beta2,
               double eps) {
    if (grads.size() != model.params.count()) {
        throw UsageError("adam_step: gradient count mismatch");
    }
    ++opt.step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(opt.step));
    for (size_t k = 0; k < grads.size(); ++k) {
        Tensor& p = model.params.tensors[k];
        const Tensor& g = grads[k];
        Tensor& m = opt.m[k];
        Tensor& v = opt.v[k];
        for (size_t i = 0; i < p.size(); ++i) {
            m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * g.data[i];
            v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * g.data[i] * g.data[i];
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            p.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

namespace {

LossRecord step_impl(const std::vector<TokenSeq>& batch, DenoiserModel& model,
                     OptimizerState& opt, const TrainConfig& cfg,
                     const NoiseSchedule& schedule, uint64_t step_index, int passes) {
    const auto start = std::chrono::steady_clock::now();
    const Vocab vocab(model.cfg.vocab);
    const int T = schedule.steps();
    const int batch_n = static_cast<int>(batch.size());
    if (batch_n == 0) throw UsageError("train step: empty batch");

    Rng data_rng(derive_seed(cfg.seed, step_index, kSaltData));

    std::vector<Tensor> grads;
    grads.reserve(model.params.count());
    for (const Tensor& p : model.params.tensors) grads.push_back(Tensor::zeros(p.rows, p.cols));

    LossRecord rec;
    rec.pass_count = passes;
    double t_sum = 0.0;
    for (const TokenSeq& x0 : batch) {
        const int t = data_rng.uniform_int(1, T);
        t_sum += t;
        const LatentSeq x_t = corrupt_marginal(x0, t, vocab, schedule, data_rng);
        std::vector<uint8_t> row_mask(x0.size(), 0);
        for (size_t i = 0; i < x0.size(); ++i) {
            if (x_t.tokens[i] == vocab.mask_id()) {
                row_mask[i] = 1;
                ++rec.masked_count;
            }
        }
        const double w = (schedule.alpha(t - 1) - schedule.alpha(t)) / (1.0 - schedule.alpha(t));
        const double weight = static_cast<double>(T) * w / batch_n;

        Tape tape;
        const std::vector<Tape::NodeId> leaves = add_param_leaves(tape, model);
        ForwardNodes fwd;
        if (passes == 2) {
            const ForwardNodes first = denoiser_forward(tape, leaves, model, x_t, t, -1);
            const Tape::NodeId detached = tape.stop_gradient(first.probs);
            fwd = denoiser_forward(tape, leaves, model, x_t, t, detached);
        } else {
            fwd = denoiser_forward(tape, leaves, model, x_t, t, -1);
        }
        const Tape::NodeId loss = tape.masked_cross_entropy(fwd.logits, x0, row_mask, weight);
        tape.backward(loss);
        rec.loss += tape.value(loss).data[0];
        for (size_t k = 0; k < leaves.size(); ++k) {
            const Tensor g = tape.gradient(leaves[k]);
            for (size_t i = 0; i < g.size(); ++i) grads[k].data[i] += g.data[i];
        }
    }
    rec.mean_t = t_sum / batch_n;
    if (!std::isfinite(rec.loss)) {
        throw NumericError("train step " + std::to_string(step_index) + ": non-finite loss");
    }

    if (cfg.clip_norm > 0.0) {
        double sq = 0.0;
        for (const Tensor& g : grads)
            for (double v : g.data) sq += v * v;
        const double norm = std::sqrt(sq);
        if (norm > cfg.clip_norm) {
            const double s = cfg.clip_norm / norm;
            for (Tensor& g : grads)
                for (double& v : g.data) v *= s;
        }
    }

    double lr = cfg.lr;
    if (cfg.warmup_steps > 0) {
        lr *= std::min(1.0, static_cast<double>(opt.step + 1) / cfg.warmup_steps);
    }
    adam_step(model, grads, opt, lr, cfg.beta1, cfg.beta2, cfg.adam_eps);

    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - start)
                      .count();
    return rec;
}

}  // namespace

LossRecord train_step_scmdm(const std::vector<TokenSeq>& batch, DenoiserModel& model,
                            OptimizerState& opt, const TrainConfig& cfg,
                            const NoiseSchedule& schedule, uint64_t step_index) {
    if (cfg.sc_mode == ScMode::Off) {
        throw UsageError("train_step_scmdm requires sc_mode full or partial");
    }
    if (!model.cfg.has_sc) {
        throw UsageError("train_step_scmdm: model has no self-conditioning pathway");
    }
    int passes = 2;
    if (cfg.sc_mode == ScMode::Partial) {
        Rng coin(derive_seed(cfg.seed, step_index, kSaltCoin));
        if (coin.uniform() < cfg.partial_rate) passes = 1;
    }
    return step_impl(batch, model, opt, cfg, schedule, step_index, passes);
}

LossRecord train_step_vanilla(const std::vector<TokenSeq>& batch, DenoiserModel& model,
                              OptimizerState& opt, const TrainConfig& cfg,
                              const NoiseSchedule& schedule, uint64_t step_index) {
    return step_impl(batch, model, opt, cfg, schedule, step_index, 1);
}

TrainRunResult train_run(DenoiserModel& model, OptimizerState& opt,
                         const TrainConfig& cfg, const NoiseSchedule& schedule,
                         const std::vector<TokenSeq>& data, const StepHook& hook) {
    cfg.validate();
    if (data.empty()) throw UsageError("train_run: empty dataset");
    for (const TokenSeq& row : data) {
        if (static_cast<int>(row.size()) != model.cfg.seq_len) {
            throw ConfigError("train_run: dataset row length != model seq_len");
        }
    }
    const uint64_t tokens_per_step =
        static_cast<uint64_t>(cfg.batch_size) * model.cfg.seq_len;
    TrainRunResult result;
    while (model.trained_tokens < cfg.max_tokens) {
        const uint64_t step = model.trained_steps;
        Rng pick(derive_seed(cfg.seed, step, kSaltBatch));
        std::vector<TokenSeq> batch;
        batch.reserve(cfg.batch_size);
        for (int i = 0; i < cfg.batch_size; ++i) {
            batch.push_back(data[pick.uniform_int(0, static_cast<int>(data.size()) - 1)]);
        }
        const LossRecord rec = (cfg.sc_mode == ScMode::Off)
                                   ? train_step_vanilla(batch, model, opt, cfg, schedule, step)
                                   : train_step_scmdm(batch, model, opt, cfg, schedule, step);
        model.trained_steps += 1;
        model.trained_tokens += tokens_per_step;
        result.final_loss = rec.loss;
        ++result.steps;
        result.tokens += tokens_per_step;
        if (hook) hook(step, rec);
    }
    return result;
}

}  // namespace maskdiff
