#include "histplan/history.hpp"

namespace histplan {

void VisualHistory::push(Tensor rgb_emb, Tensor bbox_emb) {
    entries_.push_back(EmbeddingPair{std::move(rgb_emb), std::move(bbox_emb)});
    while (static_cast<std::int64_t>(entries_.size()) > window_) entries_.pop_front();
}

Tensor integrate_visual(const std::vector<EmbeddingPair>& buffer, const Tensor& current_rgb,
                        const Tensor& current_bbox) {
    if (!current_rgb.same_shape(current_bbox) || current_rgb.rows() != 1) {
        throw ShapeError("integrate_visual: current embeddings must both be [1 x d], got " +
                         shape_str(current_rgb.shape()) + " and " + shape_str(current_bbox.shape()));
    }
    const std::int64_t dim = current_rgb.cols();
    Tensor history_token = Tensor::zeros({1, dim});
    if (!buffer.empty()) {
        std::vector<Tensor> rgb_rows, bbox_rows;
        for (const EmbeddingPair& e : buffer) {
            if (e.rgb.cols() != dim || e.bbox.cols() != dim) {
                throw ShapeError("integrate_visual: buffered width " + shape_str(e.rgb.shape()) +
                                 " does not match current width " + std::to_string(dim));
            }
            rgb_rows.push_back(e.rgb);
            bbox_rows.push_back(e.bbox);
        }
        history_token = add(mean_rows(concat_rows(rgb_rows)), mean_rows(concat_rows(bbox_rows)));
    }
    const Tensor current_token = add(current_rgb, current_bbox);
    return concat_rows({history_token, current_token});
}

Tensor integrate_visual(const VisualHistory& history, const Tensor& current_rgb,
                        const Tensor& current_bbox) {
    std::vector<EmbeddingPair> buffer(history.entries().begin(), history.entries().end());
    return integrate_visual(buffer, current_rgb, current_bbox);
}

Tensor integrate_linguistic(const Tensor& instruction_feats, const Tensor& subgoal_feats) {
    if (!instruction_feats.same_shape(subgoal_feats)) {
        throw ShapeError("integrate_linguistic: shape mismatch " +
                         shape_str(instruction_feats.shape()) + " vs " +
                         shape_str(subgoal_feats.shape()));
    }
    return add(instruction_feats, subgoal_feats);
}

std::string render_subgoals(const std::vector<SubGoal>& subgoals, const ClassVocabs& vocabs) {
    std::string out;
    for (const SubGoal& sg : subgoals) {
        if (!out.empty()) out += ' ';
        out += action_name(sg.action);
        if (sg.object != 0) {
            out += ' ';
            out += vocabs.objects[static_cast<std::size_t>(sg.object)];
        }
        if (sg.receptacle != 0) {
            out += ' ';
            out += vocabs.receptacles[static_cast<std::size_t>(sg.receptacle)];
        }
    }
    return out;
}

std::string SubGoalHistory::render(const ClassVocabs& vocabs) const {
    return render_subgoals(completed_, vocabs);
}

}  // namespace histplan
