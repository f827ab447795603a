#include "maskdiff/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "maskdiff/errors.hpp"

namespace maskdiff {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::string& where,
                    const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw ConfigError("config: unknown key '" + where + it.key() + "'");
        }
    }
}

template <typename T>
void read_field(const json& obj, const std::string& where, const std::string& key,
                T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: bad value for '" + where + key + "'");
    }
}

void apply_override(json& root, const std::string& spec) {
    const size_t eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw UsageError("--set expects key.path=value, got '" + spec + "'");
    }
    const std::string path = spec.substr(0, eq);
    const std::string value = spec.substr(eq + 1);

    json* node = &root;
    std::istringstream ps(path);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ps, part, '.')) parts.push_back(part);
    for (size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->is_object() || !node->contains(parts[i])) {
            throw ConfigError("--set: no such config section '" + parts[i] + "' in '" +
                              path + "'");
        }
        node = &(*node)[parts[i]];
    }
    if (!node->is_object() || !node->contains(parts.back())) {
        throw ConfigError("--set: no such config key '" + path + "'");
    }
    json& slot = (*node)[parts.back()];
    if (slot.is_object() || slot.is_array()) {
        throw ConfigError("--set: '" + path + "' is not a scalar");
    }
    // retype the override to match the existing value
    try {
        if (slot.is_boolean()) {
            if (value == "true") slot = true;
            else if (value == "false") slot = false;
            else throw ConfigError("--set: '" + path + "' expects true/false");
        } else if (slot.is_number_unsigned()) {
            slot = static_cast<uint64_t>(std::stoull(value));
        } else if (slot.is_number_integer()) {
            slot = static_cast<int64_t>(std::stoll(value));
        } else if (slot.is_number_float()) {
            slot = std::stod(value);
        } else {
            slot = value;
        }
    } catch (const std::logic_error&) {
        throw ConfigError("--set: cannot parse '" + value + "' for '" + path + "'");
    }
}

}  // namespace

void RunConfig::validate() const {
    model.validate();
    train.validate();
    if (schedule_family != "linear" && schedule_family != "loglinear") {
        throw ConfigError("config: schedule.family must be linear or loglinear");
    }
    if (out_dir.empty()) throw ConfigError("config: out_dir must be non-empty");
}

RunConfig parse_run_config(const std::string& json_text,
                           const std::vector<std::string>& overrides,
                           const std::string& origin) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    if (!root.is_object()) throw ConfigError(origin + ": top level must be an object");

    for (const std::string& spec : overrides) apply_override(root, spec);

    reject_unknown(root, "", {"model", "schedule", "train", "data", "out_dir",
                              "checkpoint_every", "log_every"});

    RunConfig cfg;
    if (root.contains("model")) {
        const json& m = root["model"];
        reject_unknown(m, "model.", {"vocab", "seq_len", "hidden", "blocks", "steps",
                                     "time_embed", "fusion"});
        read_field(m, "model.", "vocab", cfg.model.vocab);
        read_field(m, "model.", "seq_len", cfg.model.seq_len);
        read_field(m, "model.", "hidden", cfg.model.hidden);
        read_field(m, "model.", "blocks", cfg.model.blocks);
        read_field(m, "model.", "steps", cfg.model.steps);
        read_field(m, "model.", "time_embed", cfg.model.time_embed);
        if (m.contains("fusion")) {
            cfg.model.fusion = fusion_from_name(m.at("fusion").get<std::string>());
        }
    }
    if (root.contains("schedule")) {
        const json& s = root["schedule"];
        reject_unknown(s, "schedule.", {"family"});
        read_field(s, "schedule.", "family", cfg.schedule_family);
    }
    if (root.contains("train")) {
        const json& t = root["train"];
        reject_unknown(t, "train.",
                       {"sc_mode", "partial_rate", "lr", "batch_size", "beta1", "beta2",
                        "adam_eps", "clip_norm", "warmup_steps", "seed", "max_tokens"});
        if (t.contains("sc_mode")) {
            cfg.train.sc_mode = sc_mode_from_name(t.at("sc_mode").get<std::string>());
        }
        read_field(t, "train.", "partial_rate", cfg.train.partial_rate);
        read_field(t, "train.", "lr", cfg.train.lr);
        read_field(t, "train.", "batch_size", cfg.train.batch_size);
        read_field(t, "train.", "beta1", cfg.train.beta1);
        read_field(t, "train.", "beta2", cfg.train.beta2);
        read_field(t, "train.", "adam_eps", cfg.train.adam_eps);
        read_field(t, "train.", "clip_norm", cfg.train.clip_norm);
        read_field(t, "train.", "warmup_steps", cfg.train.warmup_steps);
        read_field(t, "train.", "seed", cfg.train.seed);
        read_field(t, "train.", "max_tokens", cfg.train.max_tokens);
    }
    if (root.contains("data")) {
        const json& d = root["data"];
        reject_unknown(d, "data.", {"train", "eval"});
        read_field(d, "data.", "train", cfg.train_data);
        read_field(d, "data.", "eval", cfg.eval_data);
    }
    read_field(root, "", "out_dir", cfg.out_dir);
    read_field(root, "", "checkpoint_every", cfg.checkpoint_every);
    read_field(root, "", "log_every", cfg.log_every);

    cfg.train.fusion = cfg.model.fusion;
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str(), overrides, path);
}

std::string run_config_to_json(const RunConfig& cfg) {
    json root;
    root["model"] = {{"vocab", cfg.model.vocab},     {"seq_len", cfg.model.seq_len},
                     {"hidden", cfg.model.hidden},   {"blocks", cfg.model.blocks},
                     {"steps", cfg.model.steps},     {"time_embed", cfg.model.time_embed},
                     {"fusion", fusion_name(cfg.model.fusion)}};
    root["schedule"] = {{"family", cfg.schedule_family}};
    root["train"] = {{"sc_mode", sc_mode_name(cfg.train.sc_mode)},
                     {"partial_rate", cfg.train.partial_rate},
                     {"lr", cfg.train.lr},
                     {"batch_size", cfg.train.batch_size},
                     {"beta1", cfg.train.beta1},
                     {"beta2", cfg.train.beta2},
                     {"adam_eps", cfg.train.adam_eps},
                     {"clip_norm", cfg.train.clip_norm},
                     {"warmup_steps", cfg.train.warmup_steps},
                     {"seed", cfg.train.seed},
                     {"max_tokens", cfg.train.max_tokens}};
    root["data"] = {{"train", cfg.train_data}, {"eval", cfg.eval_data}};
    root["out_dir"] = cfg.out_dir;
    root["checkpoint_every"] = cfg.checkpoint_every;
    root["log_every"] = cfg.log_every;
    return root.dump(2) + "\n";
}

}  // namespace maskdiff
