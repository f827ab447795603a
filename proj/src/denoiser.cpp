#include "maskdiff/denoiser.hpp"

#include "maskdiff/errors.hpp"
#include "maskdiff/rng.hpp"

namespace maskdiff {

std::string fusion_name(FusionMode mode) {
    return mode == FusionMode::Add ? "add" : "concat";
}

FusionMode fusion_from_name(const std::string& name) {
    if (name == "add") return FusionMode::Add;
    if (name == "concat") return FusionMode::Concat;
    throw ConfigError("unknown fusion mode '" + name + "'");
}

void ModelConfig::validate() const {
    if (vocab < 2) throw ConfigError("model: vocab must be >= 2");
    if (seq_len < 1) throw ConfigError("model: seq_len must be >= 1");
    if (hidden < 2) throw ConfigError("model: hidden must be >= 2");
    if (blocks < 1) throw ConfigError("model: blocks must be >= 1");
    if (steps < 1) throw ConfigError("model: steps must be >= 1");
}

int ParamStore::add(std::string name, Tensor t) {
    names.push_back(std::move(name));
    tensors.push_back(std::move(t));
    return static_cast<int>(tensors.size()) - 1;
}

int ParamStore::index(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<int>(i);
    }
    return -1;
}

Tensor& ParamStore::at(const std::string& name) {
    const int i = index(name);
    if (i < 0) throw UsageError("parameter '" + name + "' not found");
    return tensors[i];
}

const Tensor& ParamStore::at(const std::string& name) const {
    const int i = index(name);
    if (i < 0) throw UsageError("parameter '" + name + "' not found");
    return tensors[i];
}

namespace {

constexpr double kInitStd = 0.08;

Tensor randn(int r, int c, Rng& rng, double std = kInitStd) {
    Tensor t(r, c);
    for (double& v : t.data) v = rng.normal(0.0, std);
    return t;
}

// Canonical parameter order. Keeping this in one place so make_model and
// attach_self_conditioning produce identical layouts.
void build_params(DenoiserModel& m, Rng& rng, const ParamStore* copy_from,
                  bool neutral_sc) {
    const ModelConfig& c = m.cfg;
    auto take = [&](const std::string& name, int r, int cc, double std) {
        if (copy_from && copy_from->index(name) >= 0) {
            m.params.add(name, copy_from->at(name));
        } else {
            m.params.add(name, randn(r, cc, rng, std));
        }
    };
    take("embed", c.vocab + 1, c.hidden, kInitStd);
    if (c.time_embed) take("time_embed", c.steps + 1, c.hidden, kInitStd);
    if (c.has_sc) {
        take("proj_sc", c.vocab, c.hidden, kInitStd);
        if (neutral_sc && c.fusion == FusionMode::Add) {
            m.params.at("proj_sc") = Tensor::zeros(c.vocab, c.hidden);
        }
        if (c.fusion == FusionMode::Concat) {
            if (neutral_sc) {
                m.params.add("fuse_embed", Tensor::identity(c.hidden));
                m.params.add("fuse_sc", Tensor::zeros(c.hidden, c.hidden));
                m.params.add("fuse_bias", Tensor::zeros(1, c.hidden));
            } else {
                take("fuse_embed", c.hidden, c.hidden, kInitStd);
                take("fuse_sc", c.hidden, c.hidden, kInitStd);
                take("fuse_bias", 1, c.hidden, kInitStd);
            }
        }
    }
    for (int b = 0; b < c.blocks; ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        take(p + "pos_mix", c.seq_len, c.seq_len, kInitStd);
        take(p + "chan", c.hidden, c.hidden, kInitStd);
        take(p + "chan_bias", 1, c.hidden, kInitStd);
    }
    take("head", c.hidden, c.vocab, kInitStd);
    take("head_bias", 1, c.vocab, kInitStd);
}

}  // namespace

DenoiserModel make_model(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    DenoiserModel m;
    m.cfg = cfg;
    Rng rng(derive_seed(seed, 0, /*salt=*/0xC0DE));
    build_params(m, rng, nullptr, /*neutral_sc=*/false);
    return m;
}

DenoiserModel attach_self_conditioning(const DenoiserModel& base, FusionMode fusion,
                                       uint64_t seed) {
    if (base.cfg.has_sc) {
        throw UsageError("attach_self_conditioning: model already has the SC pathway");
    }
    DenoiserModel m;
    m.cfg = base.cfg;
    m.cfg.has_sc = true;
    m.cfg.fusion = fusion;
    m.trained_tokens = base.trained_tokens;
    m.trained_steps = 0;
    Rng rng(derive_seed(seed, 1, /*salt=*/0xC0DE));
    build_params(m, rng, &base.params, /*neutral_sc=*/true);
    return m;
}

std::vector<Tape::NodeId> add_param_leaves(Tape& tape, const DenoiserModel& model) {
    std::vector<Tape::NodeId> ids;
    ids.reserve(model.params.count());
    for (size_t i = 0; i < model.params.count(); ++i) {
        ids.push_back(tape.leaf(model.params.tensors[i], model.params.names[i]));
    }
    return ids;
}

ForwardNodes denoiser_forward(Tape& tape, const std::vector<Tape::NodeId>& param_nodes,
                              const DenoiserModel& model, const LatentSeq& x_t, int t,
                              Tape::NodeId sc_node) {
    const ModelConfig& c = model.cfg;
    if (static_cast<int>(x_t.tokens.size()) != c.seq_len) {
        throw ConfigError("denoiser_forward: sequence length mismatch");
    }
    for (int tok : x_t.tokens) {
        if (tok < 0 || tok > c.vocab) throw ConfigError("denoiser_forward: token id out of range");
    }
    auto node = [&](const std::string& name) {
        const int i = model.params.index(name);
        if (i < 0) throw UsageError("denoiser_forward: missing parameter '" + name + "'");
        return param_nodes[i];
    };

    Tape::NodeId h = tape.gather_rows(node("embed"), x_t.tokens);
    if (c.time_embed) {
        if (t < 0 || t > c.steps) throw ConfigError("denoiser_forward: t out of range");
        Tape::NodeId te = tape.gather_rows(node("time_embed"), std::vector<int>{t});
        h = tape.add_row(h, te);
    }
    if (c.has_sc) {
        if (sc_node < 0) {
            sc_node = tape.constant(Tensor::zeros(c.seq_len, c.vocab), "sc_null");
        }
        const Tensor& sc = tape.value(sc_node);
        if (sc.rows != c.seq_len || sc.cols != c.vocab) {
            throw ConfigError("denoiser_forward: sc input must be L x V");
        }
        Tape::NodeId sc_h = tape.matmul(sc_node, node("proj_sc"));
        if (c.fusion == FusionMode::Add) {
            h = tape.add(h, sc_h);
        } else {
            // [embed | sc] through the 2H->H fusion, written as two H x H blocks
            Tape::NodeId fused = tape.add(tape.matmul(h, node("fuse_embed")),
                                          tape.matmul(sc_h, node("fuse_sc")));
            h = tape.add_row(fused, node("fuse_bias"));
        }
    }
    for (int b = 0; b < c.blocks; ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        Tape::NodeId mixed = tape.matmul(node(p + "pos_mix"), h);
        Tape::NodeId chan = tape.add_row(tape.matmul(mixed, node(p + "chan")),
                                         node(p + "chan_bias"));
        h = tape.add(h, tape.tanh_op(chan));
    }
    ForwardNodes out;
    out.logits = tape.add_row(tape.matmul(h, node("head")), node("head_bias"));
    out.probs = tape.row_softmax(out.logits);
    return out;
}

CleanStateEstimate denoise(const DenoiserModel& model, const LatentSeq& x_t, int t,
                           const CleanStateEstimate& sc) {
    Tape tape;
    std::vector<Tape::NodeId> params = add_param_leaves(tape, model);
    Tape::NodeId sc_node = -1;
    if (!sc.is_null) sc_node = tape.constant(sc.probs, "sc");
    ForwardNodes fwd = denoiser_forward(tape, params, model, x_t, t, sc_node);
    return CleanStateEstimate::from_probs(tape.value(fwd.probs));
}

}  // namespace maskdiff
