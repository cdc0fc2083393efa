#pragma once

#include <string>

#include "lcz/dataio.hpp"
#include "lcz/model.hpp"

namespace lcz {

// Binary checkpoint: magic "S2LZ", version, architecture config, the ten
// per-band normalization statistics, then every registry tensor (including
// batch-norm running statistics) as float32 in registry order.
void save_checkpoint(const std::string& path, const Model<float>& model,
                     const BandStats& stats);

struct LoadedCheckpoint {
  ModelConfig config;
  BandStats stats;
  Model<float> model;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace lcz
