#pragma once

#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "histplan/labels.hpp"
#include "histplan/tape.hpp"

namespace histplan {

/// A stored (rgb embedding, bbox embedding) pair for one past step.
struct EmbeddingPair {
    Tensor rgb;   // [1 x d]
    Tensor bbox;  // [1 x d]
};

/// Ring buffer of the last `window` embedding pairs, oldest first.
class VisualHistory {
public:
    explicit VisualHistory(std::int64_t window) : window_(window) {}

    void push(Tensor rgb_emb, Tensor bbox_emb);
    const std::deque<EmbeddingPair>& entries() const { return entries_; }
    std::int64_t window() const { return window_; }
    std::int64_t size() const { return static_cast<std::int64_t>(entries_.size()); }
    void clear() { entries_.clear(); }

private:
    std::int64_t window_;
    std::deque<EmbeddingPair> entries_;
};

/// Mean-of-frames history token plus current-step token, stacked into a
/// 2-token sequence. The history token is the mean over however many pairs
/// are buffered (at most the window); with an empty buffer it is the zero
/// vector. The mean is recomputed from the stored embeddings on every call.
Tensor integrate_visual(const std::vector<EmbeddingPair>& buffer, const Tensor& current_rgb,
                        const Tensor& current_bbox);
Tensor integrate_visual(const VisualHistory& history, const Tensor& current_rgb,
                        const Tensor& current_bbox);

/// Element-wise sum of instruction and sub-goal-history token features.
Tensor integrate_linguistic(const Tensor& instruction_feats, const Tensor& subgoal_feats);

/// Ordered record of attempted sub-goals (failed ones included, so the
/// planner can see its own mistakes).
class SubGoalHistory {
public:
    void push(const SubGoal& sg) { completed_.push_back(sg); }
    const std::vector<SubGoal>& entries() const { return completed_; }
    std::int64_t size() const { return static_cast<std::int64_t>(completed_.size()); }
    void clear() { completed_.clear(); }

    /// "action object receptacle" per entry, space separated; the reserved
    /// none/empty classes are omitted.
    std::string render(const ClassVocabs& vocabs) const;

private:
    std::vector<SubGoal> completed_;
};

std::string render_subgoals(const std::vector<SubGoal>& subgoals, const ClassVocabs& vocabs);

}  // namespace histplan
