#include "histplan/encoder.hpp"

#include <cmath>

#include "histplan/vocab.hpp"

namespace histplan {

namespace {
constexpr double kMaskNegative = -1e30;

Tensor zeros_param(std::int64_t rows, std::int64_t cols) { return Tensor::zeros({rows, cols}); }
}  // namespace

Image build_bbox_mask(const std::vector<BoxSpec>& boxes, std::int64_t height, std::int64_t width,
                      int num_classes) {
    Image mask = Image::zeros(height, width, 1);
    for (const BoxSpec& b : boxes) {
        if (b.class_id <= 0 || b.class_id >= num_classes) {
            throw ValidationError("bbox class id " + std::to_string(b.class_id) +
                                  " outside 1.." + std::to_string(num_classes - 1));
        }
        if (b.x0 > b.x1 || b.y0 > b.y1) {
            throw ValidationError("inverted box (" + std::to_string(b.x0) + "," + std::to_string(b.y0) +
                                  ")-(" + std::to_string(b.x1) + "," + std::to_string(b.y1) + ")");
        }
        if (b.x0 < 0 || b.y0 < 0 || b.x1 >= width || b.y1 >= height) {
            throw ValidationError("box (" + std::to_string(b.x0) + "," + std::to_string(b.y0) + ")-(" +
                                  std::to_string(b.x1) + "," + std::to_string(b.y1) +
                                  ") outside " + std::to_string(width) + "x" + std::to_string(height));
        }
        for (std::int64_t y = b.y0; y <= b.y1; ++y) {
            for (std::int64_t x = b.x0; x <= b.x1; ++x) {
                mask.set(y, x, 0, static_cast<std::uint8_t>(b.class_id));
            }
        }
    }
    return mask;
}

LayerNormParams LayerNormParams::make(std::int64_t dim) {
    return LayerNormParams{zeros_param(1, dim), zeros_param(1, dim)};
}

void LayerNormParams::init(Rng&) {
    for (auto& v : gain.data()) v = 1.0;
    for (auto& v : bias.data()) v = 0.0;
}

void LayerNormParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".gain", gain);
    fn(prefix + ".bias", bias);
}

AttentionParams AttentionParams::make(std::int64_t dim) {
    return AttentionParams{zeros_param(dim, dim), zeros_param(1, dim), zeros_param(dim, dim),
                           zeros_param(1, dim),   zeros_param(dim, dim), zeros_param(1, dim),
                           zeros_param(dim, dim), zeros_param(1, dim)};
}

void AttentionParams::init(Rng& rng) {
    fill_normal(wq, rng, 0.02);
    fill_normal(wk, rng, 0.02);
    fill_normal(wv, rng, 0.02);
    fill_normal(wo, rng, 0.02);
    for (Tensor* b : {&bq, &bk, &bv, &bo}) {
        for (auto& v : b->data()) v = 0.0;
    }
}

void AttentionParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".wq", wq);
    fn(prefix + ".bq", bq);
    fn(prefix + ".wk", wk);
    fn(prefix + ".bk", bk);
    fn(prefix + ".wv", wv);
    fn(prefix + ".bv", bv);
    fn(prefix + ".wo", wo);
    fn(prefix + ".bo", bo);
}

MlpParams MlpParams::make(std::int64_t dim, std::int64_t hidden) {
    return MlpParams{zeros_param(dim, hidden), zeros_param(1, hidden), zeros_param(hidden, dim),
                     zeros_param(1, dim)};
}

void MlpParams::init(Rng& rng) {
    fill_normal(w1, rng, 0.02);
    fill_normal(w2, rng, 0.02);
    for (auto& v : b1.data()) v = 0.0;
    for (auto& v : b2.data()) v = 0.0;
}

void MlpParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".w1", w1);
    fn(prefix + ".b1", b1);
    fn(prefix + ".w2", w2);
    fn(prefix + ".b2", b2);
}

BlockParams BlockParams::make(std::int64_t dim, std::int64_t hidden) {
    return BlockParams{LayerNormParams::make(dim), LayerNormParams::make(dim),
                       AttentionParams::make(dim), MlpParams::make(dim, hidden)};
}

void BlockParams::init(Rng& rng) {
    ln1.init(rng);
    ln2.init(rng);
    attn.init(rng);
    mlp.init(rng);
}

void BlockParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    ln1.visit(prefix + ".ln1", fn);
    ln2.visit(prefix + ".ln2", fn);
    attn.visit(prefix + ".attn", fn);
    mlp.visit(prefix + ".mlp", fn);
}

namespace {

Tensor multi_head_self_attention(const AttentionParams& p, const Tensor& x, std::int64_t heads,
                                 const Tensor* key_mask) {
    const std::int64_t dim = x.cols();
    if (dim % heads != 0) {
        throw ConfigError("width " + std::to_string(dim) + " not divisible by " +
                          std::to_string(heads) + " heads");
    }
    const std::int64_t dh = dim / heads;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const Tensor q = add(matmul(x, p.wq), p.bq);
    const Tensor k = add(matmul(x, p.wk), p.bk);
    const Tensor v = add(matmul(x, p.wv), p.bv);
    std::vector<Tensor> head_outputs;
    head_outputs.reserve(static_cast<std::size_t>(heads));
    for (std::int64_t h = 0; h < heads; ++h) {
        const Tensor qh = slice_cols(q, h * dh, dh);
        const Tensor kh = slice_cols(k, h * dh, dh);
        const Tensor vh = slice_cols(v, h * dh, dh);
        Tensor scores = scale(matmul(qh, transpose(kh)), att_scale);
        if (key_mask != nullptr) scores = add(scores, *key_mask);
        head_outputs.push_back(matmul(softmax_rows(scores), vh));
    }
    const Tensor merged = concat_cols(head_outputs);
    return add(matmul(merged, p.wo), p.bo);
}

Tensor mlp_forward(const MlpParams& p, const Tensor& x) {
    return add(matmul(gelu(add(matmul(x, p.w1), p.b1)), p.w2), p.b2);
}

}  // namespace

Tensor block_forward(const BlockParams& p, const Tensor& x, std::int64_t heads,
                     const Tensor* key_mask) {
    const Tensor attended =
        add(x, multi_head_self_attention(p.attn, layer_norm(x, p.ln1.gain, p.ln1.bias), heads, key_mask));
    return add(attended, mlp_forward(p.mlp, layer_norm(attended, p.ln2.gain, p.ln2.bias)));
}

VisualEncoderParams VisualEncoderParams::make(std::int64_t image_size, std::int64_t patch_size,
                                              std::int64_t channels, std::int64_t dim,
                                              std::int64_t heads, std::int64_t depth,
                                              std::int64_t mlp_hidden) {
    if (image_size % patch_size != 0) {
        throw ConfigError("image size " + std::to_string(image_size) +
                          " not divisible by patch size " + std::to_string(patch_size));
    }
    VisualEncoderParams p;
    p.image_size = image_size;
    p.patch_size = patch_size;
    p.channels = channels;
    p.dim = dim;
    p.heads = heads;
    const std::int64_t side = image_size / patch_size;
    const std::int64_t patch_dim = patch_size * patch_size * channels;
    p.patch_w = zeros_param(patch_dim, dim);
    p.patch_b = zeros_param(1, dim);
    p.pos = zeros_param(side * side + 1, dim);
    p.cls = zeros_param(1, dim);
    for (std::int64_t i = 0; i < depth; ++i) p.blocks.push_back(BlockParams::make(dim, mlp_hidden));
    p.final_norm = LayerNormParams::make(dim);
    return p;
}

void VisualEncoderParams::init(Rng& rng) {
    fill_normal(patch_w, rng, 0.02);
    for (auto& v : patch_b.data()) v = 0.0;
    fill_normal(pos, rng, 0.02);
    fill_normal(cls, rng, 0.02);
    for (auto& b : blocks) b.init(rng);
    final_norm.init(rng);
}

void VisualEncoderParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".patch_w", patch_w);
    fn(prefix + ".patch_b", patch_b);
    fn(prefix + ".pos", pos);
    fn(prefix + ".cls", cls);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        blocks[i].visit(prefix + ".block" + std::to_string(i), fn);
    }
    final_norm.visit(prefix + ".final_norm", fn);
}

Tensor encode_image(const VisualEncoderParams& p, const Image& img, double value_scale) {
    if (img.height != p.image_size || img.width != p.image_size || img.channels != p.channels) {
        throw ConfigError("image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                          "x" + std::to_string(img.channels) + " does not match encoder " +
                          std::to_string(p.image_size) + "x" + std::to_string(p.image_size) + "x" +
                          std::to_string(p.channels));
    }
    const std::int64_t side = p.image_size / p.patch_size;
    const std::int64_t patch_dim = p.patch_size * p.patch_size * p.channels;
    std::vector<double> patched(static_cast<std::size_t>(side * side * patch_dim));
    std::int64_t w = 0;
    for (std::int64_t py = 0; py < side; ++py) {
        for (std::int64_t px = 0; px < side; ++px) {
            for (std::int64_t y = 0; y < p.patch_size; ++y) {
                for (std::int64_t x = 0; x < p.patch_size; ++x) {
                    for (std::int64_t c = 0; c < p.channels; ++c) {
                        patched[static_cast<std::size_t>(w++)] =
                            static_cast<double>(
                                img.at(py * p.patch_size + y, px * p.patch_size + x, c)) *
                            value_scale;
                    }
                }
            }
        }
    }
    const Tensor patches({side * side, patch_dim}, std::move(patched));
    const Tensor projected = add(matmul(patches, p.patch_w), p.patch_b);
    Tensor tokens = concat_rows({p.cls, projected});
    tokens = add(tokens, p.pos);
    for (const BlockParams& block : p.blocks) {
        tokens = block_forward(block, tokens, p.heads, nullptr);
    }
    tokens = layer_norm(tokens, p.final_norm.gain, p.final_norm.bias);
    return slice_rows(tokens, 0, 1);
}

TextEncoderParams TextEncoderParams::make(std::int64_t vocab_size, std::int64_t seq_len,
                                          std::int64_t dim, std::int64_t heads, std::int64_t depth,
                                          std::int64_t mlp_hidden) {
    TextEncoderParams p;
    p.seq_len = seq_len;
    p.dim = dim;
    p.heads = heads;
    p.vocab_size = vocab_size;
    p.tok_emb = zeros_param(vocab_size, dim);
    p.pos = zeros_param(seq_len, dim);
    for (std::int64_t i = 0; i < depth; ++i) p.blocks.push_back(BlockParams::make(dim, mlp_hidden));
    p.final_norm = LayerNormParams::make(dim);
    return p;
}

void TextEncoderParams::init(Rng& rng) {
    fill_normal(tok_emb, rng, 0.02);
    fill_normal(pos, rng, 0.02);
    for (auto& b : blocks) b.init(rng);
    final_norm.init(rng);
}

void TextEncoderParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".tok_emb", tok_emb);
    fn(prefix + ".pos", pos);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        blocks[i].visit(prefix + ".block" + std::to_string(i), fn);
    }
    final_norm.visit(prefix + ".final_norm", fn);
}

Tensor padding_mask_row(const std::vector<int>& ids) {
    std::vector<double> row(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        row[i] = (ids[i] == kPadId) ? kMaskNegative : 0.0;
    }
    return Tensor({1, static_cast<std::int64_t>(ids.size())}, std::move(row));
}

Tensor encode_tokens(const TextEncoderParams& p, const std::vector<int>& ids) {
    if (static_cast<std::int64_t>(ids.size()) != p.seq_len) {
        throw ShapeError("encode_tokens expects " + std::to_string(p.seq_len) + " ids, got " +
                         std::to_string(ids.size()));
    }
    Tensor tokens = add(embedding(p.tok_emb, ids), p.pos);
    const Tensor mask = padding_mask_row(ids);
    for (const BlockParams& block : p.blocks) {
        tokens = block_forward(block, tokens, p.heads, &mask);
    }
    return layer_norm(tokens, p.final_norm.gain, p.final_norm.bias);
}

}  // namespace histplan
