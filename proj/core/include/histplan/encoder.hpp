#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "histplan/tape.hpp"
#include "histplan/tensor.hpp"

namespace histplan {

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

/// Row-major interleaved integer image, values 0-255.
struct Image {
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::int64_t channels = 0;
    std::vector<std::uint8_t> pixels;

    static Image zeros(std::int64_t h, std::int64_t w, std::int64_t c) {
        return Image{h, w, c, std::vector<std::uint8_t>(static_cast<std::size_t>(h * w * c), 0)};
    }
    std::uint8_t at(std::int64_t y, std::int64_t x, std::int64_t c) const {
        return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
    }
    void set(std::int64_t y, std::int64_t x, std::int64_t c, std::uint8_t v) {
        pixels[static_cast<std::size_t>((y * width + x) * channels + c)] = v;
    }
    bool operator==(const Image&) const = default;
};

/// One time step's view: RGB image plus the single-channel class mask derived
/// from detection boxes (0 = background, k > 0 = object class k).
struct Observation {
    Image rgb;        // 3 channels
    Image bbox_mask;  // 1 channel
    bool operator==(const Observation&) const = default;
};

/// Axis-aligned box with inclusive pixel coordinates.
struct BoxSpec {
    int class_id = 0;
    std::int64_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

/// Paint class ids into a zero image. Later boxes overwrite earlier ones on
/// overlap. Coordinates are inclusive and must lie inside the image.
Image build_bbox_mask(const std::vector<BoxSpec>& boxes, std::int64_t height, std::int64_t width,
                      int num_classes);

struct LayerNormParams {
    Tensor gain, bias;  // [1 x d]
    static LayerNormParams make(std::int64_t dim);
    void init(Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct AttentionParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    static AttentionParams make(std::int64_t dim);
    void init(Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct MlpParams {
    Tensor w1, b1, w2, b2;
    static MlpParams make(std::int64_t dim, std::int64_t hidden);
    void init(Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Pre-norm transformer block: x + MHSA(LN(x)), then x + MLP(LN(x)).
struct BlockParams {
    LayerNormParams ln1, ln2;
    AttentionParams attn;
    MlpParams mlp;
    static BlockParams make(std::int64_t dim, std::int64_t hidden);
    void init(Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Multi-head self-attention + MLP with residuals. key_mask, when given, is an
/// additive [1 x N] row (0 for valid keys, large negative for masked keys).
Tensor block_forward(const BlockParams& p, const Tensor& x, std::int64_t heads,
                     const Tensor* key_mask);

/// One ViT-style image encoder: patch projection, positional embeddings, CLS
/// token, transformer blocks, final norm. The RGB and bbox encoders are two
/// disjoint instances of this.
struct VisualEncoderParams {
    std::int64_t image_size = 0, patch_size = 0, channels = 0;
    std::int64_t dim = 0, heads = 0;
    Tensor patch_w, patch_b;  // [patch_dim x d], [1 x d]
    Tensor pos;               // [(P+1) x d]
    Tensor cls;               // [1 x d]
    std::vector<BlockParams> blocks;
    LayerNormParams final_norm;

    static VisualEncoderParams make(std::int64_t image_size, std::int64_t patch_size,
                                    std::int64_t channels, std::int64_t dim, std::int64_t heads,
                                    std::int64_t depth, std::int64_t mlp_hidden);
    void init(Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Pixels scaled by value_scale into [0, 1], patchified, projected, position
/// embedded, run through the blocks; returns the CLS row as a [1 x d] tensor.
Tensor encode_image(const VisualEncoderParams& p, const Image& img, double value_scale);

/// BERT-style text encoder over fixed-length token id sequences. Padding is
/// masked out of attention; returns the full [T x d] token features.
struct TextEncoderParams {
    std::int64_t seq_len = 0, dim = 0, heads = 0;
    std::int64_t vocab_size = 0;
    Tensor tok_emb;  // [V x d]
    Tensor pos;      // [T x d]
    std::vector<BlockParams> blocks;
    LayerNormParams final_norm;

    static TextEncoderParams make(std::int64_t vocab_size, std::int64_t seq_len, std::int64_t dim,
                                  std::int64_t heads, std::int64_t depth, std::int64_t mlp_hidden);
    void init(Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

Tensor encode_tokens(const TextEncoderParams& p, const std::vector<int>& ids);

/// Additive attention mask row for a padded id sequence: 0 where the token is
/// real, -1e30 where it is [PAD].
Tensor padding_mask_row(const std::vector<int>& ids);

}  // namespace histplan
