#include "histplan/fusion.hpp"

#include <cmath>

namespace histplan {

XMHAParams XMHAParams::make(std::int64_t dim, std::int64_t heads) {
    if (heads <= 0 || dim % heads != 0) {
        throw ConfigError("fusion width " + std::to_string(dim) + " not divisible by " +
                          std::to_string(heads) + " heads");
    }
    XMHAParams p;
    p.dim = dim;
    p.heads = heads;
    p.wq = Tensor::zeros({dim, dim});
    p.wk = Tensor::zeros({dim, dim});
    p.wv_vis = Tensor::zeros({dim, dim});
    p.wv_lang = Tensor::zeros({dim, dim});
    p.wp_vis = Tensor::zeros({dim, dim});
    p.wp_lang = Tensor::zeros({dim, dim});
    return p;
}

void XMHAParams::init(Rng& rng) {
    fill_normal(wq, rng, 0.02);
    fill_normal(wk, rng, 0.02);
    fill_normal(wv_vis, rng, 0.02);
    fill_normal(wv_lang, rng, 0.02);
    fill_normal(wp_vis, rng, 0.02);
    fill_normal(wp_lang, rng, 0.02);
}

void XMHAParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".wq", wq);
    fn(prefix + ".wk", wk);
    fn(prefix + ".wv_vis", wv_vis);
    fn(prefix + ".wv_lang", wv_lang);
    fn(prefix + ".wp_vis", wp_vis);
    fn(prefix + ".wp_lang", wp_lang);
}

XMHAOutput x_mha(const Tensor& vision, const Tensor& language, const XMHAParams& p,
                 const Tensor* lang_mask) {
    if (vision.cols() != p.dim || language.cols() != p.dim) {
        throw ShapeError("x_mha: stream widths " + shape_str(vision.shape()) + ", " +
                         shape_str(language.shape()) + " do not match parameter width " +
                         std::to_string(p.dim));
    }
    const std::int64_t dh = p.dim / p.heads;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    const Tensor q = matmul(vision, p.wq);
    const Tensor k = matmul(language, p.wk);
    const Tensor value_vis = matmul(vision, p.wv_vis);
    const Tensor value_lang = matmul(language, p.wv_lang);

    std::vector<Tensor> to_vision_heads, to_language_heads;
    to_vision_heads.reserve(static_cast<std::size_t>(p.heads));
    to_language_heads.reserve(static_cast<std::size_t>(p.heads));
    for (std::int64_t h = 0; h < p.heads; ++h) {
        const Tensor qh = slice_cols(q, h * dh, dh);
        const Tensor kh = slice_cols(k, h * dh, dh);
        const Tensor scores = scale(matmul(qh, transpose(kh)), att_scale);  // [N_v x N_l]

        Tensor vision_scores = scores;
        if (lang_mask != nullptr) vision_scores = add(vision_scores, *lang_mask);
        to_vision_heads.push_back(
            matmul(softmax_rows(vision_scores), slice_cols(value_lang, h * dh, dh)));

        // Language tokens attend over the (always valid) visual tokens.
        to_language_heads.push_back(
            matmul(softmax_rows(transpose(scores)), slice_cols(value_vis, h * dh, dh)));
    }
    const Tensor weighted_lang = concat_cols(to_vision_heads);    // v*_L
    const Tensor weighted_vis = concat_cols(to_language_heads);   // v*_V

    XMHAOutput out;
    out.vision = add(matmul(weighted_lang, p.wp_lang), vision);
    out.language = add(matmul(weighted_vis, p.wp_vis), language);
    return out;
}

FusionStackParams FusionStackParams::make(std::int64_t dim, std::int64_t heads,
                                          std::int64_t num_stages, std::int64_t mlp_hidden) {
    if (num_stages < 1) throw ConfigError("fusion needs at least one stage");
    FusionStackParams p;
    p.dim = dim;
    p.heads = heads;
    for (std::int64_t s = 0; s < num_stages; ++s) p.stages.push_back(XMHAParams::make(dim, heads));
    for (std::int64_t s = 0; s + 1 < num_stages; ++s) {
        p.vision_refiners.push_back(BlockParams::make(dim, mlp_hidden));
        p.language_refiners.push_back(BlockParams::make(dim, mlp_hidden));
    }
    return p;
}

void FusionStackParams::init(Rng& rng) {
    for (auto& s : stages) s.init(rng);
    for (auto& b : vision_refiners) b.init(rng);
    for (auto& b : language_refiners) b.init(rng);
}

void FusionStackParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    for (std::size_t i = 0; i < stages.size(); ++i) {
        stages[i].visit(prefix + ".stage" + std::to_string(i), fn);
    }
    for (std::size_t i = 0; i < vision_refiners.size(); ++i) {
        vision_refiners[i].visit(prefix + ".vit_block" + std::to_string(i), fn);
        language_refiners[i].visit(prefix + ".bert_block" + std::to_string(i), fn);
    }
}

FusedFeature fuse(const Tensor& vision, const Tensor& language, const FusionStackParams& p,
                  const Tensor* lang_mask, const Tensor& lang_pool_weights) {
    if (lang_pool_weights.rows() != 1 || lang_pool_weights.cols() != language.rows()) {
        throw ShapeError("fuse: pooling weights " + shape_str(lang_pool_weights.shape()) +
                         " do not cover " + std::to_string(language.rows()) + " language tokens");
    }
    FusedFeature out;
    XMHAOutput exchanged = x_mha(vision, language, p.stages[0], lang_mask);
    out.vision_stage1 = exchanged.vision;
    out.language_stage1 = exchanged.language;
    for (std::size_t s = 1; s < p.stages.size(); ++s) {
        const Tensor refined_vision =
            block_forward(p.vision_refiners[s - 1], exchanged.vision, p.heads, nullptr);
        const Tensor refined_language =
            block_forward(p.language_refiners[s - 1], exchanged.language, p.heads, lang_mask);
        exchanged = x_mha(refined_vision, refined_language, p.stages[s], lang_mask);
    }
    out.vision_final = exchanged.vision;
    out.language_final = exchanged.language;
    out.fused = concat_cols(
        {mean_rows(exchanged.vision), matmul(lang_pool_weights, exchanged.language)});
    return out;
}

}  // namespace histplan
