#pragma once

#include <string>
#include <vector>

#include "maskdiff/diffusion.hpp"
#include "maskdiff/tape.hpp"

namespace maskdiff {

enum class FusionMode { Add, Concat };

std::string fusion_name(FusionMode mode);
FusionMode fusion_from_name(const std::string& name);

struct ModelConfig {
    int vocab = 4;      // V clean tokens; alphabet is V+1 with the mask
    int seq_len = 16;   // L
    int hidden = 32;    // H
    int blocks = 2;     // B mixing blocks
    int steps = 32;     // T, for the optional time embedding table
    bool time_embed = false;
    FusionMode fusion = FusionMode::Concat;
    bool has_sc = false;  // whether the self-conditioning pathway exists

    void validate() const;
};

// Ordered, name-addressed parameter tensors. Order is canonical so optimizer
// state and checkpoints line up positionally.
struct ParamStore {
    std::vector<std::string> names;
    std::vector<Tensor> tensors;

    int add(std::string name, Tensor t);
    int index(const std::string& name) const;  // -1 if absent
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    size_t count() const { return tensors.size(); }
};

struct DenoiserModel {
    ModelConfig cfg;
    ParamStore params;
    uint64_t trained_tokens = 0;
    uint64_t trained_steps = 0;
};

// Random initialization (std 0.08). With cfg.has_sc the self-conditioning
// layers are small-random too (fresh, non-retrofit training).
DenoiserModel make_model(const ModelConfig& cfg, uint64_t seed);

// Retrofit a pretrained model that lacks the SC pathway. Initialization is
// SC-neutral: outputs stay bit-identical to the base model for any sc input
// until training moves the new weights.
//   Add mode:    proj_sc = 0
//   Concat mode: fuse = [I | 0] with zero bias (proj_sc small random; it is
//                multiplied by the zero block, so neutrality still holds)
DenoiserModel attach_self_conditioning(const DenoiserModel& base, FusionMode fusion,
                                       uint64_t seed);

struct ForwardNodes {
    Tape::NodeId logits;
    Tape::NodeId probs;
};

// Adds one leaf per parameter, in ParamStore order.
std::vector<Tape::NodeId> add_param_leaves(Tape& tape, const DenoiserModel& model);

// Builds the denoiser graph on the given tape. `sc_node` must be an L x V
// node (detached first-pass estimate, previous-step estimate, or a zero
// constant); pass -1 for the null input, which becomes a zero constant.
ForwardNodes denoiser_forward(Tape& tape, const std::vector<Tape::NodeId>& param_nodes,
                              const DenoiserModel& model, const LatentSeq& x_t, int t,
                              Tape::NodeId sc_node = -1);

// Inference-only forward pass.
CleanStateEstimate denoise(const DenoiserModel& model, const LatentSeq& x_t, int t,
                           const CleanStateEstimate& sc);

}  // namespace maskdiff
