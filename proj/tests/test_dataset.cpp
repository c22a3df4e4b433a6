#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "histplan/dataset.hpp"
#include "histplan/history.hpp"
#include "histplan/trainer.hpp"

using namespace histplan;

namespace {

const ClassVocabs& vocabs() {
    static const ClassVocabs v = ClassVocabs::desk();
    return v;
}

GenConfig small_config(std::uint64_t seed = 7) {
    GenConfig cfg;
    cfg.seed = seed;
    cfg.num_scenes = 6;
    cfg.unseen_scenes = 2;
    cfg.train_episodes = 10;
    cfg.eval_episodes_per_split = 4;
    return cfg;
}

std::string temp_dir(const std::string& tag) {
    const std::string dir = (std::filesystem::temp_directory_path() / ("histplan_test_" + tag)).string();
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("generate_scene determinism and layout rules") {
    const GenConfig cfg = small_config();
    SUBCASE("same seed, same scene") {
        const Scene a = generate_scene(42, 3, cfg, vocabs());
        const Scene b = generate_scene(42, 3, cfg, vocabs());
        CHECK(a.placements.size() == b.placements.size());
        for (std::size_t i = 0; i < a.placements.size(); ++i) {
            CHECK(a.placements[i].class_id == b.placements[i].class_id);
            CHECK(a.placements[i].cell == b.placements[i].cell);
        }
        CHECK(a.palette == b.palette);
    }
    SUBCASE("different scene ids differ in layout or palette") {
        const Scene a = generate_scene(42, 0, cfg, vocabs());
        const Scene b = generate_scene(42, 1, cfg, vocabs());
        bool differs = !(a.palette == b.palette);
        for (std::size_t i = 0; !differs && i < a.placements.size(); ++i) {
            differs = a.placements[i].cell != b.placements[i].cell;
        }
        CHECK(differs);
    }
    SUBCASE("zero portable sets leaves receptacles only") {
        GenConfig cfg0 = cfg;
        cfg0.portable_sets = 0;
        const Scene s = generate_scene(42, 0, cfg0, vocabs());
        CHECK(!s.placements.empty());
        for (const Placement& p : s.placements) CHECK(p.is_receptacle);
    }
    SUBCASE("a thousand seeds place without collisions") {
        for (std::uint64_t seed = 0; seed < 1000; ++seed) {
            const Scene s = generate_scene(seed, static_cast<int>(seed % 24), cfg, vocabs());
            std::set<std::int64_t> cells;
            for (const Placement& p : s.placements) {
                CHECK(cells.insert(p.cell).second);  // pairwise-distinct cells
            }
        }
    }
    SUBCASE("an infeasible grid is a generation error") {
        GenConfig tiny = cfg;
        tiny.grid = 4;  // 16 cells for 12 placements fails the headroom check
        CHECK_THROWS_AS(generate_scene(1, 0, tiny, vocabs()), ValidationError);
    }
}

TEST_CASE("generate_episode expansions") {
    const GenConfig cfg = small_config();
    const Scene scene = generate_scene(cfg.seed, 0, cfg, vocabs());
    SUBCASE("pick-place expands to the canonical five sub-goals") {
        Task task;
        task.kind = TaskTemplate::PickPlace;
        task.object_class = vocabs().object_id("Pencil");
        task.receptacle_class = vocabs().receptacle_id("Table");
        const Episode ep = generate_episode(scene, task, 5, cfg, vocabs());
        REQUIRE(ep.steps.size() == 5);
        const int pencil = vocabs().object_id("Pencil");
        const int table_obj = vocabs().object_id("Table");
        const int table_recep = vocabs().receptacle_id("Table");
        CHECK(ep.steps[0].subgoal == SubGoal{Action::Navigate, pencil, 0});
        CHECK(ep.steps[1].subgoal == SubGoal{Action::PickUp, pencil, 0});
        CHECK(ep.steps[2].subgoal == SubGoal{Action::Navigate, table_obj, 0});
        CHECK(ep.steps[3].subgoal == SubGoal{Action::Put, pencil, table_recep});
        CHECK(ep.steps[4].subgoal == SubGoal{Action::Stop, 0, 0});
    }
    SUBCASE("every generated episode ends with Stop") {
        const Corpus corpus = generate_corpus(cfg, vocabs());
        for (const Episode& ep : corpus.episodes) {
            CHECK(ep.steps.back().subgoal.action == Action::Stop);
            CHECK(ep.steps.size() >= 5);
            CHECK(ep.steps.size() <= 14);
        }
    }
    SUBCASE("slice-place has exactly one Slice, preceded by a knife pickup") {
        Task task;
        task.kind = TaskTemplate::SlicePlace;
        task.object_class = vocabs().object_id("Apple");
        task.receptacle_class = vocabs().receptacle_id("Bowl");
        const Episode ep = generate_episode(scene, task, 8, cfg, vocabs());
        int slices = 0;
        std::int64_t slice_at = -1, knife_pickup_at = -1;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(ep.steps.size()); ++i) {
            const SubGoal& sg = ep.steps[static_cast<std::size_t>(i)].subgoal;
            if (sg.action == Action::Slice) {
                ++slices;
                slice_at = i;
            }
            if (sg.action == Action::PickUp && sg.object == vocabs().object_id("Knife") &&
                knife_pickup_at < 0) {
                knife_pickup_at = i;
            }
        }
        CHECK(slices == 1);
        CHECK(knife_pickup_at >= 0);
        CHECK(knife_pickup_at < slice_at);
    }
    SUBCASE("a missing referenced class is a validation error") {
        Scene bare = scene;
        bare.placements.clear();
        for (const Placement& p : scene.placements) {
            if (p.class_id != vocabs().object_id("Apple")) bare.placements.push_back(p);
        }
        Task task;
        task.kind = TaskTemplate::PickPlace;
        task.object_class = vocabs().object_id("Apple");
        task.receptacle_class = vocabs().receptacle_id("Table");
        CHECK_THROWS_AS(generate_episode(bare, task, 1, cfg, vocabs()), ValidationError);
    }
}

TEST_CASE("episode files round-trip and fail loudly on corruption") {
    const GenConfig cfg = small_config();
    const Corpus corpus = generate_corpus(cfg, vocabs());
    const std::string dir = temp_dir("episodes");
    const std::string path = dir + "/episodes.jsonl";

    SUBCASE("round-trip of ten episodes is structurally equal") {
        std::vector<Episode> ten(corpus.episodes.begin(), corpus.episodes.begin() + 10);
        write_episodes(ten, path);
        const std::vector<Episode> back = read_episodes(path, vocabs());
        REQUIRE(back.size() == ten.size());
        for (std::size_t i = 0; i < ten.size(); ++i) CHECK(episodes_equal(ten[i], back[i]));
    }
    SUBCASE("an empty file reads as an empty list") {
        std::ofstream(path).close();
        CHECK(read_episodes(path, vocabs()).empty());
    }
    SUBCASE("a truncated last line reports its line number") {
        write_episodes({corpus.episodes[0], corpus.episodes[1]}, path);
        std::ifstream in(path);
        std::stringstream all;
        all << in.rdbuf();
        std::string text = all.str();
        text.resize(text.size() - text.size() / 3);  // chop into the last record
        std::ofstream(path) << text;
        try {
            read_episodes(path, vocabs());
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line_number == 3);
            CHECK(std::string(e.what()).find("line 3") != std::string::npos);
        }
    }
}

TEST_CASE("corpus writes are byte-identical for a fixed seed and config") {
    const GenConfig cfg = small_config(11);
    const std::string d1 = temp_dir("corpus_a");
    const std::string d2 = temp_dir("corpus_b");
    write_corpus(generate_corpus(cfg, vocabs()), cfg, d1);
    write_corpus(generate_corpus(cfg, vocabs()), cfg, d2);
    for (const char* name : {"/episodes.jsonl", "/scenes.jsonl", "/gen_config.txt"}) {
        std::ifstream a(d1 + name), b(d2 + name);
        std::stringstream sa, sb;
        sa << a.rdbuf();
        sb << b.rdbuf();
        CHECK(sa.str() == sb.str());
    }
}

TEST_CASE("split hygiene: unseen scenes never appear in train") {
    const Corpus corpus = generate_corpus(small_config(3), vocabs());
    std::set<int> train_scenes, unseen_scenes, seen_scenes;
    for (const Episode& ep : corpus.episodes) {
        if (ep.split == "train") train_scenes.insert(ep.scene_id);
        if (ep.split == "valid_unseen") unseen_scenes.insert(ep.scene_id);
        if (ep.split == "valid_seen") seen_scenes.insert(ep.scene_id);
    }
    for (int id : unseen_scenes) CHECK(train_scenes.count(id) == 0);
    for (int id : seen_scenes) CHECK(train_scenes.count(id) == 1);
}

TEST_CASE("observations track world state and mask pixels match rendered footprints") {
    const GenConfig cfg = small_config(5);
    const Corpus corpus = generate_corpus(cfg, vocabs());
    for (std::size_t e = 0; e < 4; ++e) {
        const Episode& ep = corpus.episodes[e];
        const Scene& scene = corpus.scene_by_id(ep.scene_id);
        WorldState state = initial_world(scene);
        for (const EpisodeStep& step : ep.steps) {
            const Observation want =
                render_observation(state, cfg.image_size, static_cast<int>(vocabs().objects.size()));
            CHECK(step.obs == want);
            // Every nonzero mask pixel names a class that exists in the scene.
            for (std::uint8_t v : step.obs.bbox_mask.pixels) {
                if (v == 0) continue;
                bool present = false;
                for (const Placement& p : scene.placements) present = present || p.class_id == v;
                CHECK(present);
            }
            CHECK(step_world(state, step.subgoal, vocabs()) == Outcome::Success);
        }
    }
}

TEST_CASE("apply_modality_mask zero-substitutes the disabled streams") {
    ModelConfig mc;
    mc.image_size = 32;
    mc.patch_size = 8;
    mc.dim = 12;
    mc.heads = 2;
    mc.seq_len = 8;
    mc.history_window = 2;
    mc.mlp_ratio = 2;
    const GenConfig cfg = small_config(9);
    const Corpus corpus = generate_corpus(cfg, vocabs());
    PlannerModel model(mc, vocabs(), build_vocabulary(corpus, vocabs()));
    model.init_params(77);

    const Episode& ep = corpus.episodes[0];
    const StepQuery q = build_step_query(ep, 3, vocabs());
    const EmbeddedStepInputs full = model.embed_step(q, ModalityMask::full(), nullptr);

    SUBCASE("the all-true mask changes nothing") {
        const EmbeddedStepInputs same = apply_modality_mask(full, ModalityMask::full());
        CHECK(same.rgb_current.data() == full.rgb_current.data());
        CHECK(same.subgoal_feats.data() == full.subgoal_feats.data());
    }
    SUBCASE("disabling sub-goal history collapses L to the instruction features") {
        const EmbeddedStepInputs masked = apply_modality_mask(full, ModalityMask::no_vision());
        const Tensor l = integrate_linguistic(masked.instruction_feats, masked.subgoal_feats);
        // no_vision keeps S_hist; flip it off explicitly instead.
        ModalityMask no_s = ModalityMask::full();
        no_s.use_subgoal_history = false;
        const EmbeddedStepInputs masked2 = apply_modality_mask(full, no_s);
        const Tensor l2 = integrate_linguistic(masked2.instruction_feats, masked2.subgoal_feats);
        CHECK(l2.data() == full.instruction_feats.data());
        (void)l;
    }
    SUBCASE("disabling both visual histories zeroes the history token") {
        const EmbeddedStepInputs masked = apply_modality_mask(full, ModalityMask::no_history());
        const Tensor v = integrate_visual(masked.visual_history, masked.rgb_current,
                                          masked.bbox_current);
        for (std::int64_t j = 0; j < v.cols(); ++j) CHECK(v.at(0, j) == 0.0);
    }
    SUBCASE("masking before integration equals skipping the encode entirely") {
        for (const ModalityMask& mask :
             {ModalityMask::no_vision(), ModalityMask::no_history(), ModalityMask::no_bbox()}) {
            const HeadLogits via_mask = model.predict_from(apply_modality_mask(full, mask));
            const HeadLogits direct = model.predict(q, mask, nullptr);
            CHECK(via_mask.action.data() == direct.action.data());
            CHECK(via_mask.object.data() == direct.object.data());
            CHECK(via_mask.receptacle.data() == direct.receptacle.data());
        }
    }
}

TEST_CASE("vocabulary covers actions, classes and train instructions") {
    const Corpus corpus = generate_corpus(small_config(13), vocabs());
    const Vocabulary vocab = build_vocabulary(corpus, vocabs());
    CHECK(vocab.id_of("pickup") != kUnkId);
    CHECK(vocab.id_of("toggleon") != kUnkId);
    CHECK(vocab.id_of("pencil") != kUnkId);
    CHECK(vocab.id_of("microwave") != kUnkId);
    for (const Episode& ep : corpus.episodes) {
        if (ep.split != "train") continue;
        for (const std::string& w : split_words(ep.instruction)) CHECK(vocab.id_of(w) != kUnkId);
    }
}
