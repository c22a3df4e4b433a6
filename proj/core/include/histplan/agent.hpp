#pragma once

#include <memory>
#include <string>
#include <vector>

#include "histplan/dataset.hpp"
#include "histplan/model.hpp"
#include "histplan/world.hpp"

namespace histplan {

enum class FailureKind { NavigationError, ManipulationError };

const std::string& failure_kind_name(FailureKind k);
FailureKind failure_kind_from_name(const std::string& name);

struct FailureEvent {
    std::int64_t step = 0;  // 0-based executed-step index
    FailureKind kind = FailureKind::NavigationError;
};

/// Corrupts outcomes, not model inputs: after the scheduled step executes,
/// a navigation error teleports the agent to a wrong free cell and a
/// manipulation error drops whatever is held to a nearby cell. The next
/// observation honestly shows the damage.
struct FailureInjector {
    std::vector<FailureEvent> schedule;
    std::uint64_t seed = 0;

    static FailureInjector none() { return FailureInjector{}; }
};

enum class RunStatus { Success, StopWithoutSuccess, StepLimit };
const std::string& run_status_name(RunStatus s);
RunStatus run_status_from_name(const std::string& name);

struct TrajectoryRecord {
    Observation obs;       // what the agent saw before acting
    SubGoal subgoal;       // what it attempted
    Outcome outcome = Outcome::Success;
    bool injected = false;
};

struct Trajectory {
    std::string instruction;
    int scene_id = 0;
    Task task;
    RunStatus status = RunStatus::StepLimit;
    std::int64_t failures_injected = 0;
    std::int64_t failures_recovered = 0;  // injected failures in runs that still succeed
    std::vector<TrajectoryRecord> records;

    std::string summary_line() const;
};

/// A planning policy driven by the same step inputs the model sees.
class AgentPolicy {
public:
    virtual ~AgentPolicy() = default;
    virtual SubGoal decide(const StepQuery& query) = 0;
    virtual void observe(const SubGoal& executed, Outcome outcome) { (void)executed; (void)outcome; }
};

class ModelPolicy final : public AgentPolicy {
public:
    ModelPolicy(const PlannerModel& model, ModalityMask mask) : model_(&model), mask_(mask) {}
    SubGoal decide(const StepQuery& query) override;

private:
    const PlannerModel* model_;
    ModalityMask mask_;
};

/// Replays a fixed sub-goal sequence, advancing regardless of outcome.
class ScriptedPolicy final : public AgentPolicy {
public:
    explicit ScriptedPolicy(std::vector<SubGoal> plan) : plan_(std::move(plan)) {}
    SubGoal decide(const StepQuery& query) override;
    void observe(const SubGoal& executed, Outcome outcome) override;

private:
    std::vector<SubGoal> plan_;
    std::size_t next_ = 0;
};

/// Ground-truth plan plus minimal corrections: a failed step is retried; a
/// second consecutive failure inserts one Navigate to the step's target
/// before the retry. Gives up (Stop) after too many attempts at one step.
class RecoveryPolicy final : public AgentPolicy {
public:
    explicit RecoveryPolicy(std::vector<SubGoal> plan) : plan_(std::move(plan)) {}
    SubGoal decide(const StepQuery& query) override;
    void observe(const SubGoal& executed, Outcome outcome) override;

private:
    std::vector<SubGoal> plan_;
    std::size_t next_ = 0;
    int consecutive_failures_ = 0;
    int attempts_this_step_ = 0;
    bool navigate_pending_ = false;
    bool gave_up_ = false;
};

struct RunSpec {
    const Scene* scene = nullptr;
    std::string instruction;
    Task task;
    std::int64_t step_limit = 0;
    std::int64_t image_size = 32;
};

/// The closed plan-act loop: render, predict from histories + current view +
/// instruction, execute (possibly corrupted), append the attempt to the
/// sub-goal history, repeat until Stop or the step limit.
Trajectory run_agent(AgentPolicy& policy, const RunSpec& spec, const FailureInjector& injector,
                     const ClassVocabs& vocabs);

/// Step limit used when replaying generated episodes: three times the
/// ground-truth length.
std::int64_t default_step_limit(const Episode& episode);

void write_trajectory(const Trajectory& traj, const std::string& path);
Trajectory read_trajectory(const std::string& path, const ClassVocabs& vocabs);

}  // namespace histplan
