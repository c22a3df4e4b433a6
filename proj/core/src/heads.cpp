#include "histplan/heads.hpp"

namespace histplan {

Mlp3Params Mlp3Params::make(std::int64_t in, std::int64_t hidden, std::int64_t classes) {
    return Mlp3Params{Tensor::zeros({in, hidden}),     Tensor::zeros({1, hidden}),
                      Tensor::zeros({hidden, hidden}), Tensor::zeros({1, hidden}),
                      Tensor::zeros({hidden, classes}), Tensor::zeros({1, classes})};
}

void Mlp3Params::init(Rng& rng) {
    fill_normal(w1, rng, 0.02);
    fill_normal(w2, rng, 0.02);
    fill_normal(w3, rng, 0.02);
    for (Tensor* b : {&b1, &b2, &b3}) {
        for (auto& v : b->data()) v = 0.0;
    }
}

void Mlp3Params::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".w1", w1);
    fn(prefix + ".b1", b1);
    fn(prefix + ".w2", w2);
    fn(prefix + ".b2", b2);
    fn(prefix + ".w3", w3);
    fn(prefix + ".b3", b3);
}

HeadParams HeadParams::make(std::int64_t fused_dim, std::int64_t num_actions,
                            std::int64_t num_objects, std::int64_t num_receptacles) {
    return HeadParams{Mlp3Params::make(fused_dim, fused_dim, num_actions),
                      Mlp3Params::make(fused_dim, fused_dim, num_objects),
                      Mlp3Params::make(fused_dim, fused_dim, num_receptacles)};
}

void HeadParams::init(Rng& rng) {
    action.init(rng);
    object.init(rng);
    receptacle.init(rng);
}

void HeadParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    action.visit(prefix + ".action", fn);
    object.visit(prefix + ".object", fn);
    receptacle.visit(prefix + ".receptacle", fn);
}

namespace {

Tensor mlp3_forward(const Mlp3Params& p, const Tensor& x) {
    const Tensor h1 = gelu(add(matmul(x, p.w1), p.b1));
    const Tensor h2 = gelu(add(matmul(h1, p.w2), p.b2));
    return add(matmul(h2, p.w3), p.b3);
}

int argmax_row(const Tensor& logits) {
    int best = 0;
    for (std::int64_t j = 1; j < logits.cols(); ++j) {
        if (logits.at(j) > logits.at(best)) best = static_cast<int>(j);
    }
    return best;
}

}  // namespace

HeadLogits predict_logits(const Tensor& fused, const HeadParams& p) {
    if (fused.rows() != 1 || fused.cols() != p.action.w1.rows()) {
        throw ShapeError("predict_logits: fused feature " + shape_str(fused.shape()) +
                         " does not match head input width " + std::to_string(p.action.w1.rows()));
    }
    return HeadLogits{mlp3_forward(p.action, fused), mlp3_forward(p.object, fused),
                      mlp3_forward(p.receptacle, fused)};
}

SubGoal decode_subgoal(const HeadLogits& logits) {
    SubGoal sg;
    sg.action = static_cast<Action>(argmax_row(logits.action));
    sg.object = argmax_row(logits.object);
    sg.receptacle = argmax_row(logits.receptacle);
    return sg;
}

Tensor subgoal_loss(const HeadLogits& logits, const SubGoal& target) {
    const Tensor action_loss = cross_entropy(logits.action, static_cast<int>(target.action));
    const Tensor object_loss = cross_entropy(logits.object, target.object);
    const Tensor receptacle_loss = cross_entropy(logits.receptacle, target.receptacle);
    return add(add(action_loss, object_loss), receptacle_loss);
}

}  // namespace histplan
