#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "histplan/checkpoint.hpp"
#include "histplan/config.hpp"
#include "histplan/dataset.hpp"
#include "histplan/model.hpp"
#include "histplan/optim.hpp"

namespace histplan {

struct EvalRow {
    std::string split;
    std::string mask = "full";
    double actions = 0.0, objects = 0.0, receptacles = 0.0, total = 0.0;  // percent
    std::int64_t steps = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    /// One machine-readable row per split x mask; pretty adds alignment.
    std::string to_text(bool pretty) const;
};

struct LossTracePoint {
    std::int64_t step = 0;  // global optimizer step
    double loss = 0.0;
};

struct TrainResult {
    PlannerModel model;
    TrainConfig config;             // with vocabulary sizes resolved
    std::vector<LossTracePoint> trace;
    std::vector<double> epoch_mean_loss;
    CheckpointMeta meta;
};

struct TrainOptions {
    std::string checkpoint_dir;               // empty: no checkpoints
    const LoadedCheckpoint* resume = nullptr; // warm start + step offset
    std::function<void(std::int64_t epoch, double mean_loss)> on_epoch;
};

/// Teacher-forced ground-truth inputs for predicting one step of an episode.
StepQuery build_step_query(const Episode& episode, std::int64_t step, const ClassVocabs& vocabs);

/// Teacher-forced training over the corpus's train split. Episodes are
/// shuffled per epoch (seeded); each batch shares one tape, so an observation
/// referenced by several steps is encoded once. Gradients flow through every
/// path, history encodings included.
TrainResult train(const Corpus& corpus, TrainConfig cfg, const ClassVocabs& vocabs,
                  const TrainOptions& options = {});

using StepPredictor = std::function<SubGoal(const Episode&, std::int64_t step)>;

/// Step-level teacher-forced scoring: every step is predicted from the
/// ground-truth prefix; Total counts steps where all three heads match.
EvalRow evaluate_with(const Corpus& corpus, const std::string& split, const StepPredictor& predict);
EvalRow evaluate(const PlannerModel& model, const Corpus& corpus, const std::string& split,
                 const ModalityMask& mask);

/// The four modality rows mirrored by the ablation table.
std::vector<ModalityMask> ablation_masks();

/// Train one model per mask with a shared seed and budget, then evaluate each
/// on both validation splits.
EvalReport ablation_grid(const Corpus& corpus, const TrainConfig& base_cfg,
                         const ClassVocabs& vocabs,
                         const std::vector<ModalityMask>& masks = ablation_masks(),
                         const std::string& checkpoint_root = "",
                         std::function<void(const std::string&)> log = nullptr);

}  // namespace histplan
