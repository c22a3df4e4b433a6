#include "histplan/model.hpp"

#include <algorithm>

namespace histplan {

PlannerModel::PlannerModel(ModelConfig config, ClassVocabs classes, Vocabulary vocab)
    : config_(config), classes_(std::move(classes)), vocab_(std::move(vocab)) {
    config_.validate();
    if (static_cast<std::int64_t>(classes_.objects.size()) != config_.num_objects ||
        static_cast<std::int64_t>(classes_.receptacles.size()) != config_.num_receptacles) {
        throw ConfigError("class vocabularies (" + std::to_string(classes_.objects.size()) + "/" +
                          std::to_string(classes_.receptacles.size()) +
                          ") do not match configured head sizes (" +
                          std::to_string(config_.num_objects) + "/" +
                          std::to_string(config_.num_receptacles) + ")");
    }
    const std::int64_t hidden = config_.dim * config_.mlp_ratio;
    rgb_encoder = VisualEncoderParams::make(config_.image_size, config_.patch_size, 3, config_.dim,
                                            config_.heads, config_.depth_vision, hidden);
    bbox_encoder = VisualEncoderParams::make(config_.image_size, config_.patch_size, 1, config_.dim,
                                             config_.heads, config_.depth_vision, hidden);
    text_encoder = TextEncoderParams::make(vocab_.size(), config_.seq_len, config_.dim,
                                           config_.heads, config_.depth_text, hidden);
    fusion_stack =
        FusionStackParams::make(config_.dim, config_.heads, config_.fusion_stages, hidden);
    heads = HeadParams::make(2 * config_.dim, config_.num_actions, config_.num_objects,
                             config_.num_receptacles);
}

void PlannerModel::init_params(std::uint64_t seed) {
    Rng rng(seed);
    rgb_encoder.init(rng);
    bbox_encoder.init(rng);
    text_encoder.init(rng);
    fusion_stack.init(rng);
    heads.init(rng);
}

void PlannerModel::for_each_param(const ParamVisitor& fn) {
    rgb_encoder.visit("rgb_encoder", fn);
    bbox_encoder.visit("bbox_encoder", fn);
    text_encoder.visit("text_encoder", fn);
    fusion_stack.visit("fusion", fn);
    heads.visit("heads", fn);
}

std::vector<std::pair<std::string, Tensor*>> PlannerModel::named_params() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for_each_param([&](const std::string& name, Tensor& t) { out.emplace_back(name, &t); });
    return out;
}

std::int64_t PlannerModel::parameter_count() {
    std::int64_t n = 0;
    for_each_param([&](const std::string&, Tensor& t) { n += t.numel(); });
    return n;
}

void PlannerModel::attach_all(Tape& tape) {
    for_each_param([&](const std::string&, Tensor& t) { tape.watch(t); });
}

void PlannerModel::detach_all() {
    for_each_param([](const std::string&, Tensor& t) { t.detach_in_place(); });
}

Tensor PlannerModel::encode_rgb(const Image& rgb) const {
    if (rgb.channels != 3) {
        throw ValidationError("encode_rgb expects a 3-channel image, got " +
                              std::to_string(rgb.channels));
    }
    return encode_image(rgb_encoder, rgb, 1.0 / 255.0);
}

Tensor PlannerModel::encode_bbox(const Image& mask) const {
    if (mask.channels != 1) {
        throw ValidationError("encode_bbox expects a single-channel mask, got " +
                              std::to_string(mask.channels));
    }
    for (std::uint8_t v : mask.pixels) {
        if (v >= config_.num_objects) {
            throw ValidationError("mask value " + std::to_string(static_cast<int>(v)) +
                                  " exceeds the " + std::to_string(config_.num_objects) +
                                  "-class object vocabulary");
        }
    }
    return encode_image(bbox_encoder, mask, 1.0 / static_cast<double>(config_.num_objects));
}

Tensor PlannerModel::encode_text(const std::vector<int>& ids) const {
    return encode_tokens(text_encoder, ids);
}

Tensor PlannerModel::cached_rgb(const Image& img, EmbedCache* cache) const {
    if (cache) {
        auto it = cache->rgb.find(&img);
        if (it != cache->rgb.end()) return it->second;
    }
    Tensor e = encode_rgb(img);
    if (cache) cache->rgb.emplace(&img, e);
    return e;
}

Tensor PlannerModel::cached_bbox(const Image& img, EmbedCache* cache) const {
    if (cache) {
        auto it = cache->bbox.find(&img);
        if (it != cache->bbox.end()) return it->second;
    }
    Tensor e = encode_bbox(img);
    if (cache) cache->bbox.emplace(&img, e);
    return e;
}

Tensor PlannerModel::cached_text(const std::string& text, EmbedCache* cache) const {
    if (cache) {
        auto it = cache->text.find(text);
        if (it != cache->text.end()) return it->second;
    }
    Tensor e = encode_text(tokenize(text, vocab_, config_.seq_len));
    if (cache) cache->text.emplace(text, e);
    return e;
}

EmbeddedStepInputs PlannerModel::embed_step(const StepQuery& q, const ModalityMask& mask,
                                            EmbedCache* cache) const {
    if (q.current == nullptr) throw ValidationError("step query has no current observation");
    EmbeddedStepInputs in;
    const std::int64_t d = config_.dim;

    in.rgb_current = mask.use_rgb_current ? cached_rgb(q.current->rgb, cache) : Tensor::zeros({1, d});
    in.bbox_current =
        mask.use_bbox_current ? cached_bbox(q.current->bbox_mask, cache) : Tensor::zeros({1, d});

    const std::int64_t window = config_.history_window;
    const std::int64_t take =
        std::min<std::int64_t>(window, static_cast<std::int64_t>(q.history.size()));
    for (std::int64_t i = static_cast<std::int64_t>(q.history.size()) - take;
         i < static_cast<std::int64_t>(q.history.size()); ++i) {
        const Observation* obs = q.history[static_cast<std::size_t>(i)];
        EmbeddingPair pair;
        pair.rgb = mask.use_rgb_history ? cached_rgb(obs->rgb, cache) : Tensor::zeros({1, d});
        pair.bbox = mask.use_bbox_history ? cached_bbox(obs->bbox_mask, cache) : Tensor::zeros({1, d});
        in.visual_history.push_back(std::move(pair));
    }

    in.instruction_ids = tokenize(q.instruction, vocab_, config_.seq_len);
    in.instruction_feats = cached_text(q.instruction, cache);
    if (mask.use_subgoal_history) {
        in.subgoal_ids = tokenize(q.subgoal_text, vocab_, config_.seq_len);
        in.subgoal_feats = cached_text(q.subgoal_text, cache);
    } else {
        in.subgoal_ids.assign(static_cast<std::size_t>(config_.seq_len), kPadId);
        in.subgoal_feats = Tensor::zeros({config_.seq_len, d});
    }
    return in;
}

HeadLogits PlannerModel::predict_from(const EmbeddedStepInputs& inputs) const {
    const Tensor vision = integrate_visual(inputs.visual_history, inputs.rgb_current,
                                           inputs.bbox_current);
    const Tensor language = integrate_linguistic(inputs.instruction_feats, inputs.subgoal_feats);

    // A language position is real if either source has a non-pad token there.
    const std::int64_t T = config_.seq_len;
    std::vector<double> mask_row(static_cast<std::size_t>(T));
    std::vector<double> pool_row(static_cast<std::size_t>(T), 0.0);
    std::int64_t live = 0;
    for (std::int64_t i = 0; i < T; ++i) {
        const bool real = inputs.instruction_ids[static_cast<std::size_t>(i)] != kPadId ||
                          inputs.subgoal_ids[static_cast<std::size_t>(i)] != kPadId;
        mask_row[static_cast<std::size_t>(i)] = real ? 0.0 : -1e30;
        if (real) ++live;
    }
    if (live == 0) throw ValidationError("language stream has no non-pad positions");
    for (std::int64_t i = 0; i < T; ++i) {
        if (mask_row[static_cast<std::size_t>(i)] == 0.0) {
            pool_row[static_cast<std::size_t>(i)] = 1.0 / static_cast<double>(live);
        }
    }
    const Tensor lang_mask({1, T}, std::move(mask_row));
    const Tensor pool_weights({1, T}, std::move(pool_row));

    const FusedFeature fused = fuse(vision, language, fusion_stack, &lang_mask, pool_weights);
    return predict_logits(fused.fused, heads);
}

HeadLogits PlannerModel::predict(const StepQuery& q, const ModalityMask& mask,
                                 EmbedCache* cache) const {
    return predict_from(embed_step(q, mask, cache));
}

SubGoal PlannerModel::plan(const StepQuery& q, const ModalityMask& mask, EmbedCache* cache) const {
    return decode_subgoal(predict(q, mask, cache));
}

}  // namespace histplan
