#pragma once

#include <string>
#include <vector>

#include "maskdiff/denoiser.hpp"
#include "maskdiff/trainer.hpp"

namespace maskdiff {

// One run, one file. The JSON schema is closed: unknown keys anywhere are a
// ConfigError, so typos cannot silently fall back to defaults.
struct RunConfig {
    ModelConfig model;
    std::string schedule_family = "linear";
    TrainConfig train;
    std::string train_data;
    std::string eval_data;
    std::string out_dir = "run";
    uint64_t checkpoint_every = 0;  // steps; 0 = final only
    uint64_t log_every = 50;        // steps between metrics-log lines

    void validate() const;
};

// Parses the file, applies `key.path=value` overrides (scalars only), then
// validates. Overrides must name existing keys.
RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides);

RunConfig parse_run_config(const std::string& json_text,
                           const std::vector<std::string>& overrides,
                           const std::string& origin);

std::string run_config_to_json(const RunConfig& cfg);

}  // namespace maskdiff
