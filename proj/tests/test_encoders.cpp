#include <doctest.h>

#include "histplan/encoder.hpp"
#include "histplan/model.hpp"
#include "histplan/vocab.hpp"

using namespace histplan;

namespace {

PlannerModel tiny_model(std::uint64_t seed = 0) {
    ModelConfig cfg;
    cfg.image_size = 32;
    cfg.patch_size = 8;
    cfg.dim = 16;
    cfg.heads = 2;
    cfg.depth_vision = cfg.depth_text = 2;
    cfg.seq_len = 8;
    cfg.history_window = 2;
    cfg.mlp_ratio = 2;
    Vocabulary vocab = Vocabulary::build({"pickup pencil put knife bowl on the table"});
    PlannerModel model(cfg, ClassVocabs::desk(), vocab);
    if (seed) model.init_params(seed);
    return model;
}

Image solid_image(std::int64_t size, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    Image img = Image::zeros(size, size, 3);
    for (std::int64_t y = 0; y < size; ++y) {
        for (std::int64_t x = 0; x < size; ++x) {
            img.set(y, x, 0, r);
            img.set(y, x, 1, g);
            img.set(y, x, 2, b);
        }
    }
    return img;
}

}  // namespace

TEST_CASE("build_bbox_mask paints boxes in list order") {
    SUBCASE("empty box list gives an all-zero mask") {
        const Image mask = build_bbox_mask({}, 4, 4, 12);
        for (std::uint8_t v : mask.pixels) CHECK(v == 0);
    }
    SUBCASE("one box paints exactly its inclusive area") {
        const Image mask = build_bbox_mask({BoxSpec{3, 1, 1, 2, 2}}, 4, 4, 12);
        int threes = 0, zeros = 0;
        for (std::uint8_t v : mask.pixels) {
            if (v == 3) ++threes;
            if (v == 0) ++zeros;
        }
        CHECK(threes == 4);
        CHECK(zeros == 12);
        CHECK(mask.at(1, 1, 0) == 3);
        CHECK(mask.at(2, 2, 0) == 3);
    }
    SUBCASE("later boxes overwrite earlier ones, verified pixel by pixel") {
        const std::vector<BoxSpec> boxes = {BoxSpec{2, 0, 0, 2, 2}, BoxSpec{5, 1, 1, 3, 3}};
        const Image mask = build_bbox_mask(boxes, 5, 5, 12);
        // Paint oracle: straight per-pixel loop over the same list.
        std::vector<std::uint8_t> want(25, 0);
        for (const BoxSpec& b : boxes) {
            for (std::int64_t y = b.y0; y <= b.y1; ++y) {
                for (std::int64_t x = b.x0; x <= b.x1; ++x) {
                    want[static_cast<std::size_t>(y * 5 + x)] = static_cast<std::uint8_t>(b.class_id);
                }
            }
        }
        CHECK(mask.pixels == want);
        CHECK(mask.at(1, 1, 0) == 5);  // the overlap belongs to the later box
    }
    SUBCASE("out-of-bounds and inverted boxes are rejected") {
        CHECK_THROWS_AS(build_bbox_mask({BoxSpec{1, 0, 0, 4, 1}}, 4, 4, 12), ValidationError);
        CHECK_THROWS_AS(build_bbox_mask({BoxSpec{1, 2, 0, 1, 1}}, 4, 4, 12), ValidationError);
        CHECK_THROWS_AS(build_bbox_mask({BoxSpec{0, 0, 0, 1, 1}}, 4, 4, 12), ValidationError);
    }
}

TEST_CASE("distinct class layouts produce distinct scaled masks") {
    const Image a = build_bbox_mask({BoxSpec{2, 0, 0, 1, 1}, BoxSpec{7, 2, 2, 3, 3}}, 4, 4, 12);
    const Image b = build_bbox_mask({BoxSpec{5, 0, 0, 1, 1}, BoxSpec{7, 2, 2, 3, 3}}, 4, 4, 12);
    CHECK(a.pixels != b.pixels);
    // Scaling by 1/num_classes keeps them distinct (ids stay below the divisor).
    bool differs = false;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        differs = differs || (a.pixels[i] / 12.0 != b.pixels[i] / 12.0);
    }
    CHECK(differs);
}

TEST_CASE("encode_rgb contract") {
    SUBCASE("zero weights and zero CLS give the zero vector") {
        PlannerModel model = tiny_model();  // all parameters still zero
        const Tensor e = model.encode_rgb(solid_image(32, 120, 30, 200));
        CHECK(e.cols() == 16);
        for (std::int64_t i = 0; i < e.numel(); ++i) CHECK(e.at(i) == 0.0);
    }
    SUBCASE("output width is d regardless of content") {
        PlannerModel model = tiny_model(7);
        const Tensor e1 = model.encode_rgb(solid_image(32, 0, 0, 0));
        const Tensor e2 = model.encode_rgb(solid_image(32, 255, 255, 255));
        CHECK(e1.rows() == 1);
        CHECK(e1.cols() == 16);
        CHECK(e2.cols() == 16);
    }
    SUBCASE("a one-patch difference changes the embedding under random init") {
        PlannerModel model = tiny_model(7);
        Image a = solid_image(32, 100, 100, 100);
        Image b = a;
        b.set(2, 3, 1, 250);  // single pixel inside patch (0, 0)
        const Tensor ea = model.encode_rgb(a);
        const Tensor eb = model.encode_rgb(b);
        CHECK(ea.data() != eb.data());
    }
    SUBCASE("indivisible image dimensions are a configuration error") {
        PlannerModel model = tiny_model(7);
        CHECK_THROWS_AS(model.encode_rgb(solid_image(20, 0, 0, 0)), ConfigError);
    }
}

TEST_CASE("encode_bbox contract") {
    PlannerModel model = tiny_model(9);
    SUBCASE("all-zero mask through zero weights gives the zero vector") {
        PlannerModel zero = tiny_model();
        const Tensor e = zero.encode_bbox(Image::zeros(32, 32, 1));
        for (std::int64_t i = 0; i < e.numel(); ++i) CHECK(e.at(i) == 0.0);
    }
    SUBCASE("output shape is [1 x d]") {
        const Tensor e = model.encode_bbox(Image::zeros(32, 32, 1));
        CHECK(e.rows() == 1);
        CHECK(e.cols() == 16);
    }
    SUBCASE("class identity matters at the same location") {
        Image m2 = Image::zeros(32, 32, 1);
        Image m5 = Image::zeros(32, 32, 1);
        for (std::int64_t y = 4; y < 8; ++y) {
            for (std::int64_t x = 4; x < 8; ++x) {
                m2.set(y, x, 0, 2);
                m5.set(y, x, 0, 5);
            }
        }
        CHECK(model.encode_bbox(m2).data() != model.encode_bbox(m5).data());
    }
    SUBCASE("mask values beyond the class vocabulary are rejected") {
        Image bad = Image::zeros(32, 32, 1);
        bad.set(0, 0, 0, 12);  // == num_objects
        CHECK_THROWS_AS(model.encode_bbox(bad), ValidationError);
    }
}

TEST_CASE("encoders are deterministic functions of input and parameters") {
    PlannerModel model = tiny_model(21);
    const Image img = solid_image(32, 10, 200, 40);
    CHECK(model.encode_rgb(img).data() == model.encode_rgb(img).data());
}

TEST_CASE("tokenize") {
    const Vocabulary vocab = Vocabulary::build({"pickup pencil table"});
    SUBCASE("empty text is CLS plus padding") {
        const auto ids = tokenize("", vocab, 8);
        CHECK(ids.size() == 8);
        CHECK(ids[0] == kClsId);
        for (std::size_t i = 1; i < ids.size(); ++i) CHECK(ids[i] == kPadId);
    }
    SUBCASE("known words resolve, case-insensitively") {
        const auto ids = tokenize("Pickup Pencil", vocab, 8);
        CHECK(ids[0] == kClsId);
        CHECK(ids[1] == vocab.id_of("pickup"));
        CHECK(ids[2] == vocab.id_of("pencil"));
        CHECK(ids[1] != kUnkId);
        CHECK(ids[2] != kUnkId);
        CHECK(ids[3] == kPadId);
    }
    SUBCASE("unknown words map to UNK") {
        const auto ids = tokenize("zebra", vocab, 4);
        CHECK(ids[1] == kUnkId);
    }
    SUBCASE("long input truncates from the right at T") {
        std::string text;
        for (int i = 0; i < 100; ++i) text += "pencil" + std::to_string(i) + " ";
        const auto ids = tokenize(text, vocab, 32);
        CHECK(ids.size() == 32);
        for (int i = 1; i < 32; ++i) CHECK(ids[static_cast<std::size_t>(i)] != kPadId);
        // Punctuation splitting makes "pencil30" -> "pencil30"; the 31st
        // content slot holds word index 30 (0-based), i.e. the 31st word.
    }
}

TEST_CASE("encode_text contract") {
    PlannerModel model = tiny_model(33);
    const Vocabulary& vocab = model.vocab();
    SUBCASE("output shape is [T x d]") {
        const Tensor feats = model.encode_text(tokenize("pickup pencil", vocab, 8));
        CHECK(feats.rows() == 8);
        CHECK(feats.cols() == 16);
    }
    SUBCASE("wrong length is rejected") {
        CHECK_THROWS_AS(model.encode_text(std::vector<int>(5, kClsId)), ShapeError);
    }
    SUBCASE("out-of-vocabulary id is rejected") {
        std::vector<int> ids(8, kPadId);
        ids[0] = kClsId;
        ids[1] = static_cast<int>(model.vocab().size());
        CHECK_THROWS_AS(model.encode_text(ids), ValidationError);
    }
    SUBCASE("with only [CLS] live, its output ignores PAD token content") {
        // PAD keys are masked out of attention, so changing the PAD embedding
        // row cannot leak into the CLS position.
        std::vector<int> ids(8, kPadId);
        ids[0] = kClsId;
        const Tensor before = model.encode_text(ids);
        for (std::int64_t j = 0; j < 16; ++j) {
            model.text_encoder.tok_emb.data()[static_cast<std::size_t>(kPadId * 16 + j)] += 3.5;
        }
        const Tensor after = model.encode_text(ids);
        for (std::int64_t j = 0; j < 16; ++j) CHECK(before.at(0, j) == after.at(0, j));
    }
    SUBCASE("swapping two content tokens changes those positions") {
        const auto ids1 = tokenize("pickup pencil", vocab, 8);
        const auto ids2 = tokenize("pencil pickup", vocab, 8);
        const Tensor f1 = model.encode_text(ids1);
        const Tensor f2 = model.encode_text(ids2);
        bool changed = false;
        for (std::int64_t j = 0; j < 16; ++j) changed = changed || f1.at(1, j) != f2.at(1, j);
        CHECK(changed);
    }
}

TEST_CASE("padding invariance: extra PAD never changes non-pad outputs") {
    PlannerModel model = tiny_model(41);
    const auto base_ids = tokenize("pickup pencil table", model.vocab(), 8);
    const Tensor feats = model.encode_text(base_ids);
    // The same content is already padded from position 4; re-encoding with
    // the pads replaced by more pads is the identical id sequence, so instead
    // compare against a shorter content prefix padded differently: encode
    // content "pickup pencil" (pads from 3) and the same with one fewer pad
    // by growing T is fixed; so verify via PAD-embedding perturbation.
    for (std::int64_t j = 0; j < 16; ++j) {
        model.text_encoder.tok_emb.data()[static_cast<std::size_t>(kPadId * 16 + j)] -= 1.25;
    }
    const Tensor feats2 = model.encode_text(base_ids);
    for (std::int64_t i = 0; i < 4; ++i) {  // CLS + 3 content tokens
        for (std::int64_t j = 0; j < 16; ++j) CHECK(feats.at(i, j) == feats2.at(i, j));
    }
}
