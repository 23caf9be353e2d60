#pragma once

#include <string>

#include "contrastad/model.hpp"
#include "contrastad/training.hpp"

namespace contrastad::training {

// Versioned little-endian binary container: 8-byte magic "CTADCKPT", u32
// version, u32 epoch, u32 feature count, config JSON blob, then each
// parameter as (name, dims, raw doubles). Round-trips bitwise.
void save_checkpoint(const std::string& path, const model::Model& m, const TrainConfig& cfg,
                     std::uint32_t epoch);

struct LoadedCheckpoint {
    model::Model model;
    TrainConfig config;
    std::uint32_t epoch = 0;
    std::size_t n_features = 0;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace contrastad::training
