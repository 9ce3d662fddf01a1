#pragma once

#include <string>

#include "dualcam/tape.hpp"

namespace dcam::nn {

// Binary checkpoint: "DCKP" magic, u32 version, u32 record count, then per
// record a length-prefixed name, u32 ndim, i64 dims, and row-major f32 data.
// Writes go through a temporary file and an atomic rename.
void save_checkpoint(const ParamStore& params, const std::string& path,
                     const std::string& config_text = "");
// Replaces the store contents with the checkpoint records.
void load_checkpoint(ParamStore& params, const std::string& path);

// Full optimizer state (values + Adam moments + step counter) for exact
// training resumption; sidecar to the model checkpoint.
void save_trainer_state(const ParamStore& params, long step, const std::string& path);
long load_trainer_state(ParamStore& params, const std::string& path);

}  // namespace dcam::nn
