#pragma once

#include <string>

#include "maskdiff/denoiser.hpp"
#include "maskdiff/trainer.hpp"

namespace maskdiff {

// Little-endian binary checkpoint (format documented in docs/formats.md)
// plus a human-readable <path>.manifest.txt. Round-trips are bit-exact.
void save_checkpoint(const DenoiserModel& model, const OptimizerState* opt,
                     const std::string& path);

struct LoadedCheckpoint {
    DenoiserModel model;
    OptimizerState opt;
    bool has_opt = false;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace maskdiff
