#include <doctest.h>

#include "histplan/history.hpp"

using namespace histplan;

namespace {

Tensor row(std::vector<double> values) {
    const auto n = static_cast<std::int64_t>(values.size());
    return Tensor({1, n}, std::move(values));
}

}  // namespace

TEST_CASE("integrate_visual pinned cases") {
    SUBCASE("empty history gives a zero history token") {
        const Tensor v = integrate_visual(std::vector<EmbeddingPair>{}, row({1, 2}), row({3, 4}));
        CHECK(v.rows() == 2);
        CHECK(v.cols() == 2);
        CHECK(v.at(0, 0) == 0.0);
        CHECK(v.at(0, 1) == 0.0);
        CHECK(v.at(1, 0) == 4.0);  // current token = E_n^O + E_n^B
        CHECK(v.at(1, 1) == 6.0);
    }
    SUBCASE("a single stored pair is its own mean") {
        const std::vector<EmbeddingPair> buffer = {EmbeddingPair{row({1, 0}), row({0, 2})}};
        const Tensor v = integrate_visual(buffer, row({5, 5}), row({1, 1}));
        CHECK(v.at(0, 0) == 1.0);
        CHECK(v.at(0, 1) == 2.0);
        CHECK(v.at(1, 0) == 6.0);
        CHECK(v.at(1, 1) == 6.0);
    }
    SUBCASE("a full window matches the direct-summation oracle") {
        Rng rng(13);
        std::vector<EmbeddingPair> buffer;
        const std::int64_t d = 6;
        for (int k = 0; k < 4; ++k) {
            Tensor o = Tensor::zeros({1, d});
            Tensor b = Tensor::zeros({1, d});
            fill_normal(o, rng, 1.0);
            fill_normal(b, rng, 1.0);
            buffer.push_back(EmbeddingPair{o, b});
        }
        Tensor cur_o = Tensor::zeros({1, d}), cur_b = Tensor::zeros({1, d});
        fill_normal(cur_o, rng, 1.0);
        fill_normal(cur_b, rng, 1.0);
        const Tensor v = integrate_visual(buffer, cur_o, cur_b);
        for (std::int64_t j = 0; j < d; ++j) {
            double sum = 0.0;
            for (const EmbeddingPair& e : buffer) sum += e.rgb.at(j) / 4.0 + e.bbox.at(j) / 4.0;
            CHECK(v.at(0, j) == doctest::Approx(sum).epsilon(1e-12));
            CHECK(v.at(1, j) == doctest::Approx(cur_o.at(j) + cur_b.at(j)).epsilon(1e-12));
        }
    }
    SUBCASE("width mismatch is a dimension error") {
        CHECK_THROWS_AS(integrate_visual(std::vector<EmbeddingPair>{}, row({1, 2}), row({1, 2, 3})),
                        ShapeError);
        const std::vector<EmbeddingPair> buffer = {EmbeddingPair{row({1, 2, 3}), row({1, 2, 3})}};
        CHECK_THROWS_AS(integrate_visual(buffer, row({1, 2}), row({3, 4})), ShapeError);
    }
}

TEST_CASE("integrate_visual equals brute-force recomputation at every buffer length") {
    Rng rng(17);
    const std::int64_t d = 5, window = 4;
    VisualHistory history(window);
    for (int push = 0; push <= window; ++push) {
        Tensor cur_o = Tensor::zeros({1, d}), cur_b = Tensor::zeros({1, d});
        fill_normal(cur_o, rng, 1.0);
        fill_normal(cur_b, rng, 1.0);
        const Tensor v = integrate_visual(history, cur_o, cur_b);
        const std::int64_t n = history.size();
        for (std::int64_t j = 0; j < d; ++j) {
            double want = 0.0;
            for (const EmbeddingPair& e : history.entries()) {
                want += (e.rgb.at(j) + e.bbox.at(j)) / static_cast<double>(n);
            }
            CHECK(v.at(0, j) == doctest::Approx(want).epsilon(1e-12));
        }
        history.push(cur_o, cur_b);
    }
}

TEST_CASE("push_visual keeps the last `window` pairs in order") {
    VisualHistory history(4);
    CHECK(history.size() == 0);
    history.push(row({0}), row({0}));
    CHECK(history.size() == 1);

    VisualHistory h2(4);
    for (int i = 0; i < 6; ++i) h2.push(row({double(i)}), row({double(i)}));
    CHECK(h2.size() == 4);
    for (int i = 0; i < 4; ++i) CHECK(h2.entries()[static_cast<std::size_t>(i)].rgb.at(0) == i + 2);
}

TEST_CASE("push sequences replay to the last min(count, window) pushes") {
    Rng rng(7);
    for (std::int64_t window : {1, 3, 5}) {
        for (int count = 0; count < 8; ++count) {
            VisualHistory history(window);
            std::vector<double> values;
            for (int i = 0; i < count; ++i) {
                const double v = rng.next_double();
                values.push_back(v);
                history.push(row({v}), row({0}));
            }
            const std::int64_t kept = std::min<std::int64_t>(count, window);
            CHECK(history.size() == kept);
            for (std::int64_t i = 0; i < kept; ++i) {
                CHECK(history.entries()[static_cast<std::size_t>(i)].rgb.at(0) ==
                      values[values.size() - static_cast<std::size_t>(kept - i)]);
            }
        }
    }
}

TEST_CASE("entries older than the window have zero influence") {
    const std::int64_t d = 3;
    VisualHistory a(2), b(2);
    // Same last two pushes, wildly different older history.
    a.push(row({100, 100, 100}), row({100, 100, 100}));
    for (VisualHistory* h : {&a, &b}) {
        h->push(row({1, 2, 3}), row({0, 0, 0}));
        h->push(row({4, 5, 6}), row({1, 1, 1}));
    }
    const Tensor cur_o = row({0, 0, 0});
    const Tensor cur_b = row({0, 0, 0});
    const Tensor va = integrate_visual(a, cur_o, cur_b);
    const Tensor vb = integrate_visual(b, cur_o, cur_b);
    for (std::int64_t i = 0; i < 2 * d; ++i) CHECK(va.at(i) == vb.at(i));
}

TEST_CASE("render_subgoal_history") {
    const ClassVocabs vocabs = ClassVocabs::desk();
    SubGoalHistory history;
    SUBCASE("empty history renders to the empty string") {
        CHECK(history.render(vocabs) == "");
    }
    SUBCASE("a Pickup renders as action then object") {
        history.push(SubGoal{Action::PickUp, vocabs.object_id("Pencil"), 0});
        CHECK(history.render(vocabs) == "Pickup Pencil");
    }
    SUBCASE("receptacles are appended, `empty` is omitted") {
        history.push(SubGoal{Action::PickUp, vocabs.object_id("Knife"), 0});
        history.push(SubGoal{Action::Put, vocabs.object_id("Knife"), vocabs.receptacle_id("Bowl")});
        CHECK(history.render(vocabs) == "Pickup Knife Put Knife Bowl");
    }
    SUBCASE("rendering is prefix-monotone") {
        Rng rng(3);
        std::string previous;
        for (int i = 0; i < 12; ++i) {
            history.push(SubGoal{static_cast<Action>(rng.next_index(kActionCount)),
                                 static_cast<int>(rng.next_index(12)),
                                 static_cast<int>(rng.next_index(9))});
            const std::string current = history.render(vocabs);
            CHECK(current.substr(0, previous.size()) == previous);
            previous = current;
        }
    }
    SUBCASE("rendering is deterministic in the entry list") {
        history.push(SubGoal{Action::Navigate, vocabs.object_id("Table"), 0});
        history.push(SubGoal{Action::ToggleOn, vocabs.object_id("Sink"), 0});
        CHECK(history.render(vocabs) == history.render(vocabs));
        CHECK(history.render(vocabs) == "Navigate Table ToggleOn Sink");
    }
}

TEST_CASE("integrate_linguistic is the element-wise sum") {
    Rng rng(19);
    Tensor a = Tensor::zeros({4, 3}), b = Tensor::zeros({4, 3});
    fill_normal(a, rng, 1.0);
    fill_normal(b, rng, 1.0);
    SUBCASE("zero sub-goal features give back the instruction") {
        const Tensor l = integrate_linguistic(a, Tensor::zeros({4, 3}));
        CHECK(l.data() == a.data());
    }
    SUBCASE("opposite features cancel") {
        const Tensor l = integrate_linguistic(a, scale(a, -1.0));
        for (std::int64_t i = 0; i < l.numel(); ++i) CHECK(l.at(i) == 0.0);
    }
    SUBCASE("random pair matches the element-wise oracle exactly") {
        const Tensor l = integrate_linguistic(a, b);
        for (std::int64_t i = 0; i < l.numel(); ++i) CHECK(l.at(i) == a.at(i) + b.at(i));
    }
    SUBCASE("shape mismatch is rejected") {
        CHECK_THROWS_AS(integrate_linguistic(a, Tensor::zeros({3, 4})), ShapeError);
    }
}
