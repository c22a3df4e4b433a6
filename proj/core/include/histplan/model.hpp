#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "histplan/config.hpp"
#include "histplan/encoder.hpp"
#include "histplan/fusion.hpp"
#include "histplan/heads.hpp"
#include "histplan/history.hpp"
#include "histplan/vocab.hpp"

namespace histplan {

/// Raw inputs for planning one step. History observations are the previous
/// steps' views, oldest first; the model keeps only the last `history_window`
/// of them.
struct StepQuery {
    std::vector<const Observation*> history;
    const Observation* current = nullptr;
    std::string instruction;
    std::string subgoal_text;  // rendered sub-goal history
};

/// Per-modality embeddings for one step, ready for integration. Disabled
/// modalities appear as zero tensors (and, for text, all-[PAD] ids).
struct EmbeddedStepInputs {
    std::vector<EmbeddingPair> visual_history;
    Tensor rgb_current, bbox_current;        // [1 x d]
    Tensor instruction_feats, subgoal_feats; // [T x d]
    std::vector<int> instruction_ids, subgoal_ids;
};

/// Memoizes encoder outputs within one tape (or one tape-free evaluation
/// pass). Never reuse across tapes; ops will reject mixed-tape operands.
struct EmbedCache {
    std::unordered_map<const Image*, Tensor> rgb, bbox;
    std::map<std::string, Tensor> text;
    void clear() {
        rgb.clear();
        bbox.clear();
        text.clear();
    }
};

/// All learned parameters plus the vocabularies they were trained against.
class PlannerModel {
public:
    PlannerModel(ModelConfig config, ClassVocabs classes, Vocabulary vocab);

    void init_params(std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    const ClassVocabs& classes() const { return classes_; }
    const Vocabulary& vocab() const { return vocab_; }

    /// Visit every parameter tensor in a fixed order (init, checkpoint and
    /// gradient collection all rely on the same order).
    void for_each_param(const ParamVisitor& fn);
    std::vector<std::pair<std::string, Tensor*>> named_params();
    std::int64_t parameter_count();

    void attach_all(Tape& tape);
    void detach_all();

    Tensor encode_rgb(const Image& rgb) const;
    Tensor encode_bbox(const Image& mask) const;
    Tensor encode_text(const std::vector<int>& ids) const;

    EmbeddedStepInputs embed_step(const StepQuery& q, const ModalityMask& mask,
                                  EmbedCache* cache) const;
    HeadLogits predict_from(const EmbeddedStepInputs& inputs) const;
    HeadLogits predict(const StepQuery& q, const ModalityMask& mask, EmbedCache* cache) const;
    SubGoal plan(const StepQuery& q, const ModalityMask& mask, EmbedCache* cache) const;

    // Parameter groups, public so tests can zero or perturb them directly.
    VisualEncoderParams rgb_encoder;
    VisualEncoderParams bbox_encoder;
    TextEncoderParams text_encoder;
    FusionStackParams fusion_stack;
    HeadParams heads;

private:
    ModelConfig config_;
    ClassVocabs classes_;
    Vocabulary vocab_;

    Tensor cached_rgb(const Image& img, EmbedCache* cache) const;
    Tensor cached_bbox(const Image& img, EmbedCache* cache) const;
    Tensor cached_text(const std::string& text, EmbedCache* cache) const;
};

}  // namespace histplan
