#include <doctest.h>

#include "histplan/fusion.hpp"
#include "oracles.hpp"

using namespace histplan;

namespace {

oracle::Mat to_mat(const Tensor& t) {
    oracle::Mat m(t.rows(), t.cols());
    m.v = t.data();
    return m;
}

oracle::XmhaMats to_mats(const XMHAParams& p) {
    oracle::XmhaMats m;
    m.wq = to_mat(p.wq);
    m.wk = to_mat(p.wk);
    m.wv_vis = to_mat(p.wv_vis);
    m.wv_lang = to_mat(p.wv_lang);
    m.wp_vis = to_mat(p.wp_vis);
    m.wp_lang = to_mat(p.wp_lang);
    m.heads = p.heads;
    return m;
}

oracle::BlockMats to_mats(const BlockParams& p, std::int64_t heads) {
    oracle::BlockMats m;
    m.ln1_gain = to_mat(p.ln1.gain);
    m.ln1_bias = to_mat(p.ln1.bias);
    m.ln2_gain = to_mat(p.ln2.gain);
    m.ln2_bias = to_mat(p.ln2.bias);
    m.wq = to_mat(p.attn.wq);
    m.bq = to_mat(p.attn.bq);
    m.wk = to_mat(p.attn.wk);
    m.bk = to_mat(p.attn.bk);
    m.wv = to_mat(p.attn.wv);
    m.bv = to_mat(p.attn.bv);
    m.wo = to_mat(p.attn.wo);
    m.bo = to_mat(p.attn.bo);
    m.w1 = to_mat(p.mlp.w1);
    m.b1 = to_mat(p.mlp.b1);
    m.w2 = to_mat(p.mlp.w2);
    m.b2 = to_mat(p.mlp.b2);
    m.heads = heads;
    return m;
}

Tensor random_tensor(Shape shape, Rng& rng, double scl = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    fill_normal(t, rng, scl);
    return t;
}

}  // namespace

TEST_CASE("zeroed output projections make stage-1 exchange the exact identity") {
    Rng rng(3);
    XMHAParams p = XMHAParams::make(8, 2);
    p.init(rng);
    for (auto& v : p.wp_vis.data()) v = 0.0;
    for (auto& v : p.wp_lang.data()) v = 0.0;
    const Tensor vision = random_tensor({2, 8}, rng);
    const Tensor language = random_tensor({5, 8}, rng);
    const XMHAOutput out = x_mha(vision, language, p, nullptr);
    CHECK(out.vision.data() == vision.data());      // bitwise
    CHECK(out.language.data() == language.data());
}

TEST_CASE("a single language token receives full attention from every visual token") {
    Rng rng(5);
    XMHAParams p = XMHAParams::make(6, 1);
    p.init(rng);
    const Tensor vision = random_tensor({3, 6}, rng);
    const Tensor language = random_tensor({1, 6}, rng);
    const XMHAOutput out = x_mha(vision, language, p, nullptr);
    // softmax over one column is 1, so every visual row gets the same
    // language value row: V_f = (L Wv_lang) Wp_lang + V.
    const Tensor value = matmul(matmul(language, p.wv_lang), p.wp_lang);
    for (std::int64_t i = 0; i < 3; ++i) {
        for (std::int64_t j = 0; j < 6; ++j) {
            CHECK(out.vision.at(i, j) ==
                  doctest::Approx(value.at(0, j) + vision.at(i, j)).epsilon(1e-12));
        }
    }
}

TEST_CASE("x_mha matches the straight-line oracle") {
    for (std::int64_t heads : {1LL, 2LL}) {
        Rng rng(70 + static_cast<std::uint64_t>(heads));
        XMHAParams p = XMHAParams::make(8, heads);
        p.init(rng);
        const Tensor vision = random_tensor({2, 8}, rng);
        const Tensor language = random_tensor({5, 8}, rng);
        const XMHAOutput got = x_mha(vision, language, p, nullptr);
        const auto [v_want, l_want] = oracle::xmha(to_mat(vision), to_mat(language), to_mats(p), nullptr);
        for (std::int64_t i = 0; i < got.vision.numel(); ++i) {
            CHECK(got.vision.at(i) == doctest::Approx(v_want.v[static_cast<std::size_t>(i)]).epsilon(1e-10));
        }
        for (std::int64_t i = 0; i < got.language.numel(); ++i) {
            CHECK(got.language.at(i) == doctest::Approx(l_want.v[static_cast<std::size_t>(i)]).epsilon(1e-10));
        }
    }
}

TEST_CASE("masked PAD columns receive exactly zero attention weight") {
    Rng rng(9);
    XMHAParams p = XMHAParams::make(4, 1);
    p.init(rng);
    const Tensor vision = random_tensor({2, 4}, rng);
    Tensor language = random_tensor({4, 4}, rng);
    const Tensor mask = Tensor::matrix(1, 4, {0.0, 0.0, -1e30, -1e30});
    const XMHAOutput masked = x_mha(vision, language, p, &mask);
    // Changing a masked position's content must not move the vision stream.
    language.data()[2 * 4 + 1] += 17.0;
    language.data()[3 * 4 + 0] -= 4.0;
    const XMHAOutput masked2 = x_mha(vision, language, p, &mask);
    CHECK(masked.vision.data() == masked2.vision.data());
}

TEST_CASE("language permutation equivariance of the stage-1 exchange") {
    Rng rng(31);
    XMHAParams p = XMHAParams::make(6, 2);
    p.init(rng);
    const Tensor vision = random_tensor({2, 6}, rng);
    const Tensor language = random_tensor({4, 6}, rng);
    const XMHAOutput base = x_mha(vision, language, p, nullptr);

    const std::vector<std::int64_t> perm = {2, 0, 3, 1};
    std::vector<double> permuted(language.data().size());
    for (std::int64_t i = 0; i < 4; ++i) {
        for (std::int64_t j = 0; j < 6; ++j) {
            permuted[static_cast<std::size_t>(i * 6 + j)] = language.at(perm[static_cast<std::size_t>(i)], j);
        }
    }
    const XMHAOutput shuffled = x_mha(vision, Tensor({4, 6}, permuted), p, nullptr);
    CHECK(shuffled.vision.data() == base.vision.data());
    for (std::int64_t i = 0; i < 4; ++i) {
        for (std::int64_t j = 0; j < 6; ++j) {
            CHECK(shuffled.language.at(i, j) == base.language.at(perm[static_cast<std::size_t>(i)], j));
        }
    }
}

TEST_CASE("fuse with zeroed parameters reduces to pooled residuals") {
    const std::int64_t d = 6, T = 5;
    FusionStackParams p = FusionStackParams::make(d, 2, 2, 2 * d);
    // Everything zero except the residual paths; LN gains must stay benign
    // but their output is multiplied by zero weights anyway.
    Rng rng(1);
    const Tensor vision = random_tensor({2, d}, rng);
    const Tensor language = random_tensor({T, d}, rng);
    const Tensor mask = Tensor::matrix(1, T, {0.0, 0.0, 0.0, -1e30, -1e30});
    const Tensor pool = Tensor::matrix(1, T, {1.0 / 3, 1.0 / 3, 1.0 / 3, 0.0, 0.0});
    const FusedFeature f = fuse(vision, language, p, &mask, pool);
    CHECK(f.fused.cols() == 2 * d);
    for (std::int64_t j = 0; j < d; ++j) {
        CHECK(f.fused.at(0, j) == doctest::Approx((vision.at(0, j) + vision.at(1, j)) / 2).epsilon(1e-15));
        const double lang_mean = (language.at(0, j) + language.at(1, j) + language.at(2, j)) / 3;
        CHECK(f.fused.at(0, d + j) == doctest::Approx(lang_mean).epsilon(1e-12));
    }
}

TEST_CASE("fused width is 2d for any valid inputs") {
    Rng rng(8);
    for (std::int64_t d : {4LL, 8LL}) {
        FusionStackParams p = FusionStackParams::make(d, 2, 2, 2 * d);
        p.init(rng);
        const Tensor vision = random_tensor({2, d}, rng);
        const Tensor language = random_tensor({3, d}, rng);
        const Tensor pool = Tensor::full({1, 3}, 1.0 / 3);
        const FusedFeature f = fuse(vision, language, p, nullptr, pool);
        CHECK(f.fused.rows() == 1);
        CHECK(f.fused.cols() == 2 * d);
    }
}

TEST_CASE("fuse matches the composed straight-line oracle") {
    Rng rng(99);
    const std::int64_t d = 6, T = 4;
    FusionStackParams p = FusionStackParams::make(d, 1, 2, 2 * d);
    p.init(rng);
    const Tensor vision = random_tensor({2, d}, rng);
    const Tensor language = random_tensor({T, d}, rng);
    const std::vector<double> mask_row = {0.0, 0.0, 0.0, -1e30};
    const Tensor mask({1, T}, std::vector<double>(mask_row));
    const std::vector<double> pool_row = {1.0 / 3, 1.0 / 3, 1.0 / 3, 0.0};
    const Tensor pool({1, T}, std::vector<double>(pool_row));

    const FusedFeature got = fuse(vision, language, p, &mask, pool);

    oracle::FuseMats mats;
    mats.stage1 = to_mats(p.stages[0]);
    mats.stage2 = to_mats(p.stages[1]);
    mats.vit_block = to_mats(p.vision_refiners[0], p.heads);
    mats.bert_block = to_mats(p.language_refiners[0], p.heads);
    const oracle::Mat want = oracle::fuse(to_mat(vision), to_mat(language), mats, &mask_row, pool_row);
    for (std::int64_t j = 0; j < 2 * d; ++j) {
        CHECK(got.fused.at(0, j) == doctest::Approx(want.at(0, j)).epsilon(1e-9));
    }
}

TEST_CASE("information flows both ways across the full stack") {
    Rng rng(12);
    const std::int64_t d = 8, T = 4;
    FusionStackParams p = FusionStackParams::make(d, 2, 2, 2 * d);
    p.init(rng);
    Tensor vision = random_tensor({2, d}, rng);
    Tensor language = random_tensor({T, d}, rng);
    const Tensor pool = Tensor::full({1, T}, 1.0 / T);

    const FusedFeature base = fuse(vision, language, p, nullptr, pool);
    Tensor language2 = language;
    language2.data()[1 * d + 3] += 0.5;  // perturb one language token
    const FusedFeature lang_changed = fuse(vision, language2, p, nullptr, pool);
    CHECK(lang_changed.vision_final.data() != base.vision_final.data());

    Tensor vision2 = vision;
    vision2.data()[0 * d + 2] -= 0.25;  // perturb one visual token
    const FusedFeature vis_changed = fuse(vision2, language, p, nullptr, pool);
    CHECK(vis_changed.language_final.data() != base.language_final.data());
}

TEST_CASE("width not divisible by heads is a configuration error") {
    CHECK_THROWS_AS(XMHAParams::make(6, 4), ConfigError);
    Rng rng(2);
    XMHAParams p = XMHAParams::make(6, 2);
    p.init(rng);
    CHECK_THROWS_AS(x_mha(Tensor::zeros({2, 4}), Tensor::zeros({3, 6}), p, nullptr), ShapeError);
}

TEST_CASE("cross-attention parameters all carry gradient") {
    Rng rng(44);
    const std::int64_t d = 6, T = 3;
    FusionStackParams p = FusionStackParams::make(d, 1, 2, 2 * d);
    p.init(rng);
    const Tensor vision_const = random_tensor({2, d}, rng);
    const Tensor language_const = random_tensor({T, d}, rng);
    const Tensor pool = Tensor::full({1, T}, 1.0 / T);

    Tape tape;
    std::vector<std::pair<std::string, Tensor*>> watched;
    p.visit("fusion", [&](const std::string& name, Tensor& t) {
        tape.watch(t);
        watched.emplace_back(name, &t);
    });
    tape.backward(sum_all(fuse(vision_const, language_const, p, nullptr, pool).fused));
    for (auto& [name, t] : watched) {
        if (name.find("stage") == std::string::npos) continue;  // the x_mha matrices
        double norm = 0.0;
        for (double g : tape.grad_of(*t)) norm += g * g;
        INFO(name);
        CHECK(norm > 0.0);
    }
}
