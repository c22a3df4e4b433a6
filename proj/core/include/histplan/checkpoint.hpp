#pragma once

#include <optional>
#include <string>
#include <vector>

#include "histplan/config.hpp"
#include "histplan/model.hpp"

namespace histplan {

struct CheckpointMeta {
    std::int64_t step_count = 0;
    std::int64_t epoch = 0;
};

/// Checkpoint layout: a directory holding
///   model.ckpt   - text header (meta keys, parameter names/shapes/offsets)
///                  terminated by "end", then little-endian float32 payloads
///                  in header order
///   vocab.txt    - tokenizer table, one token per line
///   classes.txt  - object/receptacle class names
///   config.txt   - the fully resolved training config
void save_checkpoint(const std::string& dir, PlannerModel& model, const TrainConfig& cfg,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
    PlannerModel model;
    TrainConfig config;
    CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::string& dir);

struct CheckpointEntry {
    std::string name;
    Shape shape;
    std::int64_t offset = 0;
};

struct CheckpointInfo {
    CheckpointMeta meta;
    std::vector<CheckpointEntry> entries;
    std::int64_t total_values = 0;
};

/// Parse just the text header of a model.ckpt file.
CheckpointInfo inspect_checkpoint(const std::string& ckpt_file);

}  // namespace histplan
