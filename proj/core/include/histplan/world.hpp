#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "histplan/encoder.hpp"
#include "histplan/labels.hpp"

namespace histplan {

/// One entity instance in a scene. Receptacles are fixed full-cell fixtures;
/// objects are portable and may end up held (cell == kHeldCell).
struct Placement {
    int class_id = 0;  // object-vocabulary index, > 0
    std::int64_t cell = 0;
    bool is_receptacle = false;
};

inline constexpr std::int64_t kHeldCell = -1;

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

/// Static world: geometry, initial placements, per-class colors. Scenes vary
/// in placement layout and palette, which is what makes the unseen split
/// visually unfamiliar.
struct Scene {
    int scene_id = 0;
    std::int64_t grid = 8;                 // square grid side
    std::vector<Placement> placements;
    std::vector<Rgb> palette;              // indexed by object class id

    std::int64_t cell_of(std::int64_t row, std::int64_t col) const { return row * grid + col; }
};

enum class TaskTemplate { PickPlace, PickTwoPlace, CleanPlace, HeatPlace, SlicePlace };

const std::string& template_name(TaskTemplate t);
TaskTemplate template_from_name(const std::string& name);

struct Task {
    TaskTemplate kind = TaskTemplate::PickPlace;
    int object_class = 0;
    int receptacle_class = 0;  // receptacle-vocabulary index
};

/// Per-instance dynamic flags.
struct EntityFlags {
    bool sliced = false;
    bool toggled_on = false;
    bool open = false;
    bool cleaned = false;
    bool heated = false;
};

enum class Outcome { Success, Failed };

struct WorldState {
    const Scene* scene = nullptr;
    std::vector<std::int64_t> positions;  // per placement; kHeldCell while held
    std::vector<EntityFlags> flags;
    std::int64_t agent_cell = 0;
    int facing = 2;  // 0 N, 1 E, 2 S, 3 W
    int held = -1;   // placement index
    std::int64_t step_count = 0;
};

/// Class capabilities, keyed by class name so alternate vocabularies degrade
/// to inert classes instead of breaking.
bool class_portable(const std::string& name);
bool class_openable(const std::string& name);
bool class_toggleable(const std::string& name);
bool class_sliceable(const std::string& name);

WorldState initial_world(const Scene& scene);

/// Apply one sub-goal. Illegal actions report Outcome::Failed and leave the
/// state unchanged (aside from the step counter); the planner has to cope.
Outcome step_world(WorldState& state, const SubGoal& sg, const ClassVocabs& vocabs);

bool goal_satisfied(const WorldState& state, const Task& task, const ClassVocabs& vocabs);

bool cell_occupied(const WorldState& state, std::int64_t cell);
std::vector<std::int64_t> free_adjacent_cells(const WorldState& state, std::int64_t cell);

/// Top-down raster of the current state plus the matching detection mask.
/// Fixtures paint first, then loose objects (quadrant-packed within a cell),
/// then the agent, then the held object; the mask mirrors the same boxes in
/// the same order, minus the agent.
Observation render_observation(const WorldState& state, std::int64_t image_size,
                               int num_object_classes);

}  // namespace histplan
