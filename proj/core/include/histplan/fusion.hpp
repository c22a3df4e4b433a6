#pragma once

#include <vector>

#include "histplan/encoder.hpp"
#include "histplan/tape.hpp"

namespace histplan {

/// Cross-modal multi-head attention parameters: one shared query/key pair
/// plus per-stream value and output projections. Pure matrices, no biases.
struct XMHAParams {
    std::int64_t dim = 0, heads = 0;
    Tensor wq, wk;          // queries from vision, keys from language
    Tensor wv_vis, wv_lang; // value projections per stream
    Tensor wp_vis, wp_lang; // output projections per stream

    static XMHAParams make(std::int64_t dim, std::int64_t heads);
    void init(Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct XMHAOutput {
    Tensor vision;    // [N_v x d]
    Tensor language;  // [N_l x d]
};

/// One bidirectional exchange. A = (V Wq)(L Wk)^T / sqrt(d_h) per head; the
/// vision stream is updated from row-softmaxed A over language values, the
/// language stream from row-softmaxed A^T over vision values; both through
/// their output projections plus residuals. lang_mask is an additive
/// [1 x N_l] row that removes [PAD] columns from the vision-side softmax.
/// Zeroing both output projections makes this the exact identity.
XMHAOutput x_mha(const Tensor& vision, const Tensor& language, const XMHAParams& p,
                 const Tensor* lang_mask);

/// The full fusion stack: stage-1 exchange, per-modality transformer
/// refinement, further exchanges, then mean-pooled concatenation.
struct FusionStackParams {
    std::int64_t dim = 0, heads = 0;
    std::vector<XMHAParams> stages;                    // >= 1, disjoint weights
    std::vector<BlockParams> vision_refiners;          // stages.size() - 1 of each
    std::vector<BlockParams> language_refiners;

    static FusionStackParams make(std::int64_t dim, std::int64_t heads, std::int64_t num_stages,
                                  std::int64_t mlp_hidden);
    void init(Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct FusedFeature {
    Tensor fused;           // [1 x 2d]
    Tensor vision_stage1;   // intermediates kept for inspection/tests
    Tensor language_stage1;
    Tensor vision_final;
    Tensor language_final;
};

/// lang_pool_weights is a [1 x N_l] row of 1/count over non-pad positions
/// (zero elsewhere); the fused vector concatenates the visual-token mean with
/// that weighted language mean.
FusedFeature fuse(const Tensor& vision, const Tensor& language, const FusionStackParams& p,
                  const Tensor* lang_mask, const Tensor& lang_pool_weights);

}  // namespace histplan
