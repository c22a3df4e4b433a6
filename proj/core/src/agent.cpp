#include "histplan/agent.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "histplan/history.hpp"

namespace histplan {

using json = nlohmann::json;

const std::string& failure_kind_name(FailureKind k) {
    static const std::string nav = "navigation_error";
    static const std::string manip = "manipulation_error";
    return k == FailureKind::NavigationError ? nav : manip;
}

FailureKind failure_kind_from_name(const std::string& name) {
    if (name == "navigation_error") return FailureKind::NavigationError;
    if (name == "manipulation_error") return FailureKind::ManipulationError;
    throw ValidationError("unknown failure kind '" + name +
                          "' (expected navigation_error or manipulation_error)");
}

const std::string& run_status_name(RunStatus s) {
    static const std::string names[] = {"success", "stop_without_success", "step_limit"};
    return names[static_cast<std::size_t>(s)];
}

RunStatus run_status_from_name(const std::string& name) {
    if (name == "success") return RunStatus::Success;
    if (name == "stop_without_success") return RunStatus::StopWithoutSuccess;
    if (name == "step_limit") return RunStatus::StepLimit;
    throw ValidationError("unknown run status '" + name + "'");
}

std::string Trajectory::summary_line() const {
    std::ostringstream os;
    os << "status=" << run_status_name(status) << " steps=" << records.size()
       << " failures_injected=" << failures_injected
       << " failures_recovered=" << failures_recovered;
    return os.str();
}

SubGoal ModelPolicy::decide(const StepQuery& query) {
    return model_->plan(query, mask_, nullptr);
}

SubGoal ScriptedPolicy::decide(const StepQuery&) {
    if (next_ >= plan_.size()) return SubGoal{Action::Stop, 0, 0};
    return plan_[next_];
}

void ScriptedPolicy::observe(const SubGoal&, Outcome) { ++next_; }

SubGoal RecoveryPolicy::decide(const StepQuery&) {
    if (gave_up_ || next_ >= plan_.size()) return SubGoal{Action::Stop, 0, 0};
    if (navigate_pending_) return SubGoal{Action::Navigate, plan_[next_].object, 0};
    return plan_[next_];
}

void RecoveryPolicy::observe(const SubGoal&, Outcome outcome) {
    if (gave_up_ || next_ >= plan_.size()) return;
    if (navigate_pending_) {
        navigate_pending_ = false;  // retry the plan step either way
        return;
    }
    if (outcome == Outcome::Success) {
        ++next_;
        consecutive_failures_ = 0;
        attempts_this_step_ = 0;
        return;
    }
    ++consecutive_failures_;
    ++attempts_this_step_;
    if (attempts_this_step_ > 5) {
        gave_up_ = true;
        return;
    }
    if (consecutive_failures_ >= 2 && plan_[next_].object > 0) {
        navigate_pending_ = true;
        consecutive_failures_ = 0;
    }
}

namespace {

void apply_failure(WorldState& state, FailureKind kind, Rng& rng) {
    const std::int64_t cells = state.scene->grid * state.scene->grid;
    if (kind == FailureKind::NavigationError) {
        std::vector<std::int64_t> candidates;
        for (std::int64_t c = 0; c < cells; ++c) {
            if (c != state.agent_cell && !cell_occupied(state, c)) candidates.push_back(c);
        }
        if (candidates.empty()) return;
        state.agent_cell =
            candidates[static_cast<std::size_t>(rng.next_index(static_cast<std::int64_t>(candidates.size())))];
    } else {
        if (state.held < 0) return;
        std::vector<std::int64_t> candidates = free_adjacent_cells(state, state.agent_cell);
        if (candidates.empty()) {
            // Nearest free cell, distance then index order.
            std::int64_t best = -1, best_dist = 0;
            const std::int64_t grid = state.scene->grid;
            for (std::int64_t c = 0; c < cells; ++c) {
                if (c == state.agent_cell || cell_occupied(state, c)) continue;
                const std::int64_t dist = std::llabs(c / grid - state.agent_cell / grid) +
                                          std::llabs(c % grid - state.agent_cell % grid);
                if (best < 0 || dist < best_dist) {
                    best = c;
                    best_dist = dist;
                }
            }
            if (best < 0) return;
            candidates.push_back(best);
        }
        const std::int64_t cell =
            candidates[static_cast<std::size_t>(rng.next_index(static_cast<std::int64_t>(candidates.size())))];
        state.positions[static_cast<std::size_t>(state.held)] = cell;
        state.held = -1;
    }
}

}  // namespace

std::int64_t default_step_limit(const Episode& episode) {
    return 3 * static_cast<std::int64_t>(episode.steps.size());
}

Trajectory run_agent(AgentPolicy& policy, const RunSpec& spec, const FailureInjector& injector,
                     const ClassVocabs& vocabs) {
    if (spec.step_limit <= 0) throw ValidationError("step_limit must be positive");
    if (spec.scene == nullptr) throw ValidationError("run spec has no scene");

    Trajectory traj;
    traj.instruction = spec.instruction;
    traj.scene_id = spec.scene->scene_id;
    traj.task = spec.task;

    WorldState state = initial_world(*spec.scene);
    SubGoalHistory subgoals;
    std::vector<std::unique_ptr<Observation>> seen;  // stable addresses for the query

    bool stopped = false;
    for (std::int64_t t = 0; t < spec.step_limit && !stopped; ++t) {
        seen.push_back(std::make_unique<Observation>(
            render_observation(state, spec.image_size, static_cast<int>(vocabs.objects.size()))));

        StepQuery query;
        for (std::size_t i = 0; i + 1 < seen.size(); ++i) query.history.push_back(seen[i].get());
        query.current = seen.back().get();
        query.instruction = spec.instruction;
        query.subgoal_text = subgoals.render(vocabs);

        const SubGoal sg = policy.decide(query);
        Outcome outcome = step_world(state, sg, vocabs);
        bool injected = false;
        if (sg.action == Action::Stop) {
            stopped = true;
        } else {
            for (const FailureEvent& ev : injector.schedule) {
                if (ev.step == t) {
                    Rng rng = Rng(injector.seed ? injector.seed : 1).fork(static_cast<std::uint64_t>(t));
                    apply_failure(state, ev.kind, rng);
                    outcome = Outcome::Failed;
                    injected = true;
                    ++traj.failures_injected;
                }
            }
        }
        subgoals.push(sg);
        policy.observe(sg, outcome);
        traj.records.push_back(TrajectoryRecord{*seen.back(), sg, outcome, injected});
    }

    if (stopped) {
        traj.status = goal_satisfied(state, spec.task, vocabs) ? RunStatus::Success
                                                               : RunStatus::StopWithoutSuccess;
    } else {
        traj.status = RunStatus::StepLimit;
    }
    traj.failures_recovered = traj.status == RunStatus::Success ? traj.failures_injected : 0;
    return traj;
}

void write_trajectory(const Trajectory& traj, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    out << json{{"format_version", 1}, {"kind", "trajectory"}}.dump() << "\n";
    out << json{{"instruction", traj.instruction},
                {"scene_id", traj.scene_id},
                {"task",
                 {{"template", template_name(traj.task.kind)},
                  {"object", traj.task.object_class},
                  {"receptacle", traj.task.receptacle_class}}},
                {"status", run_status_name(traj.status)},
                {"failures_injected", traj.failures_injected},
                {"failures_recovered", traj.failures_recovered}}
               .dump()
        << "\n";
    for (const TrajectoryRecord& r : traj.records) {
        out << json{{"rgb",
                     {{"h", r.obs.rgb.height},
                      {"w", r.obs.rgb.width},
                      {"c", r.obs.rgb.channels},
                      {"data", base64_encode(r.obs.rgb.pixels)}}},
                    {"bbox_mask",
                     {{"h", r.obs.bbox_mask.height},
                      {"w", r.obs.bbox_mask.width},
                      {"c", r.obs.bbox_mask.channels},
                      {"data", base64_encode(r.obs.bbox_mask.pixels)}}},
                    {"action", action_name(r.subgoal.action)},
                    {"object", r.subgoal.object},
                    {"receptacle", r.subgoal.receptacle},
                    {"outcome", r.outcome == Outcome::Success ? "success" : "failed"},
                    {"injected", r.injected}}
                   .dump()
            << "\n";
    }
}

Trajectory read_trajectory(const std::string& path, const ClassVocabs& vocabs) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    std::string line;
    std::int64_t lineno = 0;
    Trajectory traj;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            if (lineno == 1) {
                if (j.value("format_version", 0) != 1 || j.value("kind", "") != "trajectory") {
                    throw ValidationError("expected a version-1 trajectory header");
                }
                continue;
            }
            if (lineno == 2) {
                traj.instruction = j.at("instruction").get<std::string>();
                traj.scene_id = j.at("scene_id").get<int>();
                traj.task.kind = template_from_name(j.at("task").at("template").get<std::string>());
                traj.task.object_class = j.at("task").at("object").get<int>();
                traj.task.receptacle_class = j.at("task").at("receptacle").get<int>();
                traj.status = run_status_from_name(j.at("status").get<std::string>());
                traj.failures_injected = j.at("failures_injected").get<std::int64_t>();
                traj.failures_recovered = j.at("failures_recovered").get<std::int64_t>();
                continue;
            }
            TrajectoryRecord r;
            const auto read_img = [](const json& ji) {
                Image img;
                img.height = ji.at("h").get<std::int64_t>();
                img.width = ji.at("w").get<std::int64_t>();
                img.channels = ji.at("c").get<std::int64_t>();
                img.pixels = base64_decode(ji.at("data").get<std::string>());
                if (static_cast<std::int64_t>(img.pixels.size()) !=
                    img.height * img.width * img.channels) {
                    throw ValidationError("image payload does not match its dimensions");
                }
                return img;
            };
            r.obs.rgb = read_img(j.at("rgb"));
            r.obs.bbox_mask = read_img(j.at("bbox_mask"));
            r.subgoal.action = action_from_name(j.at("action").get<std::string>());
            r.subgoal.object = j.at("object").get<int>();
            r.subgoal.receptacle = j.at("receptacle").get<int>();
            if (r.subgoal.object < 0 ||
                r.subgoal.object >= static_cast<int>(vocabs.objects.size()) ||
                r.subgoal.receptacle < 0 ||
                r.subgoal.receptacle >= static_cast<int>(vocabs.receptacles.size())) {
                throw ValidationError("sub-goal classes out of vocabulary");
            }
            r.outcome = j.at("outcome").get<std::string>() == "success" ? Outcome::Success
                                                                        : Outcome::Failed;
            r.injected = j.at("injected").get<bool>();
            traj.records.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw ParseError(std::string("bad trajectory record: ") + e.what(), lineno);
        } catch (const ValidationError& e) {
            throw ParseError(e.what(), lineno);
        }
    }
    return traj;
}

}  // namespace histplan
