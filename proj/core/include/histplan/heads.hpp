#pragma once

#include "histplan/encoder.hpp"
#include "histplan/labels.hpp"
#include "histplan/tape.hpp"

namespace histplan {

/// 3-layer perceptron: in -> hidden -> hidden -> classes, GELU activations,
/// linear output.
struct Mlp3Params {
    Tensor w1, b1, w2, b2, w3, b3;
    static Mlp3Params make(std::int64_t in, std::int64_t hidden, std::int64_t classes);
    void init(Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Three independent heads over the fused feature: action, object (also the
/// destination when the action is Navigate), receptacle.
struct HeadParams {
    Mlp3Params action, object, receptacle;
    static HeadParams make(std::int64_t fused_dim, std::int64_t num_actions,
                           std::int64_t num_objects, std::int64_t num_receptacles);
    void init(Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct HeadLogits {
    Tensor action;      // [1 x 9]
    Tensor object;      // [1 x |objects|]
    Tensor receptacle;  // [1 x |receptacles|]
};

/// Raw logit triple; no softmax (the loss handles normalization).
HeadLogits predict_logits(const Tensor& fused, const HeadParams& p);

/// Per-head argmax, ties broken toward the lowest index. When the action is
/// Navigate the object index is the intended destination; when it is Stop the
/// object/receptacle values are retained but carry no meaning.
SubGoal decode_subgoal(const HeadLogits& logits);

/// Sum of the three cross-entropy terms, equally weighted.
Tensor subgoal_loss(const HeadLogits& logits, const SubGoal& target);

}  // namespace histplan
