#include <doctest.h>

#include <filesystem>

#include "histplan/agent.hpp"
#include "histplan/trainer.hpp"

using namespace histplan;

namespace {

const ClassVocabs& vocabs() {
    static const ClassVocabs v = ClassVocabs::desk();
    return v;
}

GenConfig tiny_gen(std::uint64_t seed = 7) {
    GenConfig cfg;
    cfg.seed = seed;
    cfg.num_scenes = 4;
    cfg.unseen_scenes = 1;
    cfg.train_episodes = 6;
    cfg.eval_episodes_per_split = 2;
    return cfg;
}

std::vector<SubGoal> plan_of(const Episode& ep) {
    std::vector<SubGoal> plan;
    for (const EpisodeStep& s : ep.steps) plan.push_back(s.subgoal);
    return plan;
}

RunSpec spec_for(const Corpus& corpus, const Episode& ep, std::int64_t limit = 0) {
    RunSpec spec;
    spec.scene = &corpus.scene_by_id(ep.scene_id);
    spec.instruction = ep.instruction;
    spec.task = ep.task;
    spec.step_limit = limit > 0 ? limit : default_step_limit(ep);
    spec.image_size = 32;
    return spec;
}

std::string temp_path(const std::string& tag) {
    return (std::filesystem::temp_directory_path() / ("histplan_sim_" + tag)).string();
}

std::int64_t manhattan(const Scene& scene, std::int64_t a, std::int64_t b) {
    return std::llabs(a / scene.grid - b / scene.grid) + std::llabs(a % scene.grid - b % scene.grid);
}

}  // namespace

TEST_CASE("step_world basic dynamics") {
    const GenConfig cfg = tiny_gen();
    const Scene scene = generate_scene(cfg.seed, 0, cfg, vocabs());
    WorldState state = initial_world(scene);

    SUBCASE("Navigate lands adjacent to the target") {
        const int pencil = vocabs().object_id("Pencil");
        CHECK(step_world(state, SubGoal{Action::Navigate, pencil, 0}, vocabs()) == Outcome::Success);
        std::int64_t best = 1 << 20;
        for (std::size_t i = 0; i < scene.placements.size(); ++i) {
            if (scene.placements[i].class_id == pencil) {
                best = std::min(best, manhattan(scene, state.agent_cell, state.positions[i]));
            }
        }
        CHECK(best == 1);
    }
    SUBCASE("PickUp while already holding fails and changes nothing") {
        const int pencil = vocabs().object_id("Pencil");
        REQUIRE(step_world(state, SubGoal{Action::Navigate, pencil, 0}, vocabs()) == Outcome::Success);
        REQUIRE(step_world(state, SubGoal{Action::PickUp, pencil, 0}, vocabs()) == Outcome::Success);
        const WorldState before = state;
        CHECK(step_world(state, SubGoal{Action::PickUp, vocabs().object_id("Apple"), 0}, vocabs()) ==
              Outcome::Failed);
        CHECK(state.held == before.held);
        CHECK(state.positions == before.positions);
        CHECK(state.agent_cell == before.agent_cell);
    }
    SUBCASE("interactions respect adjacency") {
        // Without navigating first, picking a (generally distant) pencil fails.
        bool adjacent = false;
        for (std::size_t i = 0; i < scene.placements.size(); ++i) {
            if (scene.placements[i].class_id == vocabs().object_id("Pencil")) {
                adjacent = adjacent || manhattan(scene, state.agent_cell, state.positions[i]) == 1;
            }
        }
        if (!adjacent) {
            CHECK(step_world(state, SubGoal{Action::PickUp, vocabs().object_id("Pencil"), 0},
                             vocabs()) == Outcome::Failed);
        }
    }
    SUBCASE("toggling the sink cleans what is in it") {
        const int apple = vocabs().object_id("Apple");
        const int sink = vocabs().object_id("Sink");
        REQUIRE(step_world(state, SubGoal{Action::Navigate, apple, 0}, vocabs()) == Outcome::Success);
        REQUIRE(step_world(state, SubGoal{Action::PickUp, apple, 0}, vocabs()) == Outcome::Success);
        REQUIRE(step_world(state, SubGoal{Action::Navigate, sink, 0}, vocabs()) == Outcome::Success);
        REQUIRE(step_world(state, SubGoal{Action::Put, apple, vocabs().receptacle_id("Sink")},
                           vocabs()) == Outcome::Success);
        REQUIRE(step_world(state, SubGoal{Action::ToggleOn, sink, 0}, vocabs()) == Outcome::Success);
        int apple_idx = -1;
        for (std::size_t i = 0; i < scene.placements.size(); ++i) {
            if (scene.placements[i].class_id == apple) apple_idx = static_cast<int>(i);
        }
        CHECK(state.flags[static_cast<std::size_t>(apple_idx)].cleaned);
        // Toggling twice in the same direction fails.
        CHECK(step_world(state, SubGoal{Action::ToggleOn, sink, 0}, vocabs()) == Outcome::Failed);
    }
}

TEST_CASE("every generated ground-truth sequence executes to success") {
    const Corpus corpus = generate_corpus(tiny_gen(11), vocabs());
    for (const Episode& ep : corpus.episodes) {
        WorldState state = initial_world(corpus.scene_by_id(ep.scene_id));
        for (const EpisodeStep& step : ep.steps) {
            CHECK(step_world(state, step.subgoal, vocabs()) == Outcome::Success);
        }
        CHECK(goal_satisfied(state, ep.task, vocabs()));
    }
}

TEST_CASE("run_agent with the scripted oracle succeeds in exactly the ground-truth length") {
    const Corpus corpus = generate_corpus(tiny_gen(13), vocabs());
    const Episode& ep = corpus.episodes[0];
    ScriptedPolicy policy(plan_of(ep));
    const Trajectory traj = run_agent(policy, spec_for(corpus, ep), FailureInjector::none(), vocabs());
    CHECK(traj.status == RunStatus::Success);
    CHECK(traj.records.size() == ep.steps.size());
    CHECK(traj.failures_injected == 0);
}

TEST_CASE("step_limit of one with a non-Stop prediction ends as step_limit") {
    const Corpus corpus = generate_corpus(tiny_gen(17), vocabs());
    const Episode& ep = corpus.episodes[0];
    ScriptedPolicy policy(plan_of(ep));  // first sub-goal is Navigate
    const Trajectory traj = run_agent(policy, spec_for(corpus, ep, 1), FailureInjector::none(), vocabs());
    CHECK(traj.status == RunStatus::StepLimit);
    CHECK(traj.records.size() == 1);
}

TEST_CASE("navigation failure recovers with exactly one extra Navigate") {
    const Corpus corpus = generate_corpus(tiny_gen(19), vocabs());
    const Episode& ep = corpus.episodes[0];
    const std::vector<SubGoal> plan = plan_of(ep);
    // Step 2 of every template is a Navigate.
    REQUIRE(plan[2].action == Action::Navigate);

    FailureInjector injector;
    injector.seed = 5;
    injector.schedule = {FailureEvent{2, FailureKind::NavigationError}};
    RecoveryPolicy policy(plan);
    const Trajectory traj =
        run_agent(policy, spec_for(corpus, ep), injector, vocabs());
    CHECK(traj.status == RunStatus::Success);
    CHECK(traj.failures_injected == 1);
    CHECK(traj.failures_recovered == 1);
    REQUIRE(traj.records.size() == ep.steps.size() + 1);  // one corrective step
    // The exact trajectory: ground truth with the failed Navigate re-issued.
    CHECK(traj.records[2].subgoal == plan[2]);
    CHECK(traj.records[2].outcome == Outcome::Failed);
    CHECK(traj.records[2].injected);
    CHECK(traj.records[3].subgoal == plan[2]);
    CHECK(traj.records[3].outcome == Outcome::Success);
    for (std::size_t i = 4; i < traj.records.size(); ++i) {
        CHECK(traj.records[i].subgoal == plan[i - 1]);
        CHECK(traj.records[i].outcome == Outcome::Success);
    }
}

TEST_CASE("manipulation failure recovers with exactly one extra PickUp") {
    const Corpus corpus = generate_corpus(tiny_gen(19), vocabs());
    const Episode& ep = corpus.episodes[0];
    const std::vector<SubGoal> plan = plan_of(ep);
    REQUIRE(plan[1].action == Action::PickUp);

    FailureInjector injector;
    injector.seed = 9;
    injector.schedule = {FailureEvent{1, FailureKind::ManipulationError}};
    RecoveryPolicy policy(plan);
    const Trajectory traj = run_agent(policy, spec_for(corpus, ep), injector, vocabs());
    CHECK(traj.status == RunStatus::Success);
    CHECK(traj.failures_injected == 1);
    REQUIRE(traj.records.size() == ep.steps.size() + 1);
    CHECK(traj.records[1].subgoal == plan[1]);
    CHECK(traj.records[1].outcome == Outcome::Failed);  // dropped what it grabbed
    CHECK(traj.records[2].subgoal == plan[1]);          // re-issued PickUp
    CHECK(traj.records[2].outcome == Outcome::Success);
}

TEST_CASE("after an injected failure the next observation differs from the clean run") {
    const Corpus corpus = generate_corpus(tiny_gen(23), vocabs());
    const Episode& ep = corpus.episodes[0];
    const std::vector<SubGoal> plan = plan_of(ep);

    ScriptedPolicy clean_policy(plan);
    const Trajectory clean = run_agent(clean_policy, spec_for(corpus, ep), FailureInjector::none(), vocabs());

    FailureInjector injector;
    injector.seed = 31;
    injector.schedule = {FailureEvent{2, FailureKind::NavigationError}};
    ScriptedPolicy failed_policy(plan);
    const Trajectory failed = run_agent(failed_policy, spec_for(corpus, ep), injector, vocabs());

    REQUIRE(clean.records.size() > 3);
    REQUIRE(failed.records.size() > 3);
    CHECK(clean.records[2].obs == failed.records[2].obs);      // identical before the failure
    CHECK(!(clean.records[3].obs == failed.records[3].obs));   // divergent right after
}

TEST_CASE("trajectories are deterministic in (policy, scene, seed, schedule)") {
    const Corpus corpus = generate_corpus(tiny_gen(29), vocabs());
    const Episode& ep = corpus.episodes[1];
    FailureInjector injector;
    injector.seed = 77;
    injector.schedule = {FailureEvent{1, FailureKind::ManipulationError},
                         FailureEvent{3, FailureKind::NavigationError}};
    const auto run_once = [&] {
        RecoveryPolicy policy(plan_of(ep));
        return run_agent(policy, spec_for(corpus, ep), injector, vocabs());
    };
    const Trajectory a = run_once();
    const Trajectory b = run_once();
    REQUIRE(a.records.size() == b.records.size());
    CHECK(a.status == b.status);
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].subgoal == b.records[i].subgoal);
        CHECK(a.records[i].obs == b.records[i].obs);
        CHECK(a.records[i].outcome == b.records[i].outcome);
    }
}

TEST_CASE("trajectory files round-trip and carry failure flags") {
    const Corpus corpus = generate_corpus(tiny_gen(31), vocabs());
    const Episode& ep = corpus.episodes[0];
    FailureInjector injector;
    injector.seed = 3;
    injector.schedule = {FailureEvent{2, FailureKind::NavigationError}};
    RecoveryPolicy policy(plan_of(ep));
    const Trajectory traj = run_agent(policy, spec_for(corpus, ep), injector, vocabs());

    const std::string path = temp_path("roundtrip.jsonl");
    write_trajectory(traj, path);
    const Trajectory back = read_trajectory(path, vocabs());
    CHECK(back.status == traj.status);
    CHECK(back.failures_injected == traj.failures_injected);
    CHECK(back.failures_recovered == traj.failures_recovered);
    REQUIRE(back.records.size() == traj.records.size());
    for (std::size_t i = 0; i < traj.records.size(); ++i) {
        CHECK(back.records[i].obs == traj.records[i].obs);
        CHECK(back.records[i].subgoal == traj.records[i].subgoal);
        CHECK(back.records[i].outcome == traj.records[i].outcome);
        CHECK(back.records[i].injected == traj.records[i].injected);
        CHECK(back.records[i].injected == (i == 2));
    }
    CHECK(back.summary_line() == traj.summary_line());
}

TEST_CASE("replaying logged sub-goals reproduces the logged observations") {
    const Corpus corpus = generate_corpus(tiny_gen(37), vocabs());
    const Episode& ep = corpus.episodes[2];
    FailureInjector injector;
    injector.seed = 55;
    injector.schedule = {FailureEvent{1, FailureKind::ManipulationError}};
    RecoveryPolicy policy(plan_of(ep));
    const Trajectory traj = run_agent(policy, spec_for(corpus, ep), injector, vocabs());

    // Drive the world with the logged sub-goals and the same injector seed.
    std::vector<SubGoal> logged;
    for (const TrajectoryRecord& r : traj.records) logged.push_back(r.subgoal);
    ScriptedPolicy replay(logged);
    const Trajectory again = run_agent(replay, spec_for(corpus, ep), injector, vocabs());
    REQUIRE(again.records.size() == traj.records.size());
    for (std::size_t i = 0; i < traj.records.size(); ++i) {
        CHECK(again.records[i].obs == traj.records[i].obs);
        CHECK(again.records[i].outcome == traj.records[i].outcome);
    }
}

TEST_CASE("a model policy drives the loop end to end") {
    const Corpus corpus = generate_corpus(tiny_gen(41), vocabs());
    TrainConfig cfg;
    cfg.model.dim = 16;
    cfg.model.heads = 2;
    cfg.model.seq_len = 16;
    cfg.model.history_window = 2;
    cfg.model.mlp_ratio = 2;
    cfg.epochs = 1;
    cfg.seed = 41;
    const TrainResult trained = train(corpus, cfg, vocabs());
    ModelPolicy policy(trained.model, cfg.mask);
    const Episode& ep = corpus.episodes[0];
    const Trajectory traj = run_agent(policy, spec_for(corpus, ep), FailureInjector::none(), vocabs());
    CHECK(traj.records.size() <= static_cast<std::size_t>(default_step_limit(ep)));
    CHECK(!traj.records.empty());
}
