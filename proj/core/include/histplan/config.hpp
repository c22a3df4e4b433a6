#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace histplan {

/// Which input streams the planner sees. Disabled streams are replaced by
/// zero embeddings of the right shape before integration, so the additive
/// integration steps degrade gracefully. The instruction is always on.
struct ModalityMask {
    bool use_rgb_current = true;
    bool use_bbox_current = true;
    bool use_rgb_history = true;
    bool use_bbox_history = true;
    bool use_subgoal_history = true;

    bool all_on() const {
        return use_rgb_current && use_bbox_current && use_rgb_history && use_bbox_history &&
               use_subgoal_history;
    }
    std::string preset_name() const;

    static ModalityMask full();
    /// Instruction and sub-goal history only.
    static ModalityMask no_vision();
    /// Current observation and instruction only.
    static ModalityMask no_history();
    /// Drops both bounding-box streams.
    static ModalityMask no_bbox();
    static ModalityMask from_preset(const std::string& name);
};

/// Every architectural dimension in one place.
struct ModelConfig {
    std::int64_t image_size = 32;
    std::int64_t patch_size = 8;
    std::int64_t dim = 64;            // d: embedding width everywhere
    std::int64_t heads = 4;
    std::int64_t depth_vision = 2;    // transformer blocks per visual encoder
    std::int64_t depth_text = 2;
    std::int64_t seq_len = 32;        // T: token budget for text
    std::int64_t history_window = 4;  // l: retained observation pairs
    std::int64_t mlp_ratio = 4;
    std::int64_t fusion_stages = 2;

    std::int64_t num_actions = 9;
    std::int64_t num_objects = 12;      // includes the reserved "none" class
    std::int64_t num_receptacles = 9;   // includes "empty"

    void validate() const;
    std::int64_t patches_per_side() const { return image_size / patch_size; }
    std::int64_t num_patches() const { return patches_per_side() * patches_per_side(); }
};

struct TrainConfig {
    ModelConfig model;
    ModalityMask mask;
    std::int64_t epochs = 40;
    std::int64_t batch_size = 16;  // steps per optimizer update
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
};

// Flat key-value config file ("key = value" per line, '#' comments). Flags
// layered on top of a file always win.
using KvMap = std::map<std::string, std::string>;

KvMap kv_parse_file(const std::string& path);
KvMap kv_parse_text(const std::string& text);
void kv_write_file(const std::string& path, const KvMap& kv);

KvMap train_config_to_kv(const TrainConfig& cfg);
TrainConfig train_config_from_kv(const KvMap& kv);

}  // namespace histplan
