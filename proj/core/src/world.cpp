#include "histplan/world.hpp"

#include <algorithm>
#include <cmath>

namespace histplan {

namespace {

const std::vector<std::string>& template_names() {
    static const std::vector<std::string> names = {"pick-place", "pick-two-place", "clean-place",
                                                   "heat-place", "slice-place"};
    return names;
}

std::int64_t manhattan(const Scene& scene, std::int64_t a, std::int64_t b) {
    const std::int64_t ar = a / scene.grid, ac = a % scene.grid;
    const std::int64_t br = b / scene.grid, bc = b % scene.grid;
    return std::llabs(ar - br) + std::llabs(ac - bc);
}

// Deterministic neighbor order: up, down, left, right.
std::vector<std::int64_t> adjacent_cells(const Scene& scene, std::int64_t cell) {
    const std::int64_t r = cell / scene.grid, c = cell % scene.grid;
    std::vector<std::int64_t> out;
    if (r > 0) out.push_back(scene.cell_of(r - 1, c));
    if (r + 1 < scene.grid) out.push_back(scene.cell_of(r + 1, c));
    if (c > 0) out.push_back(scene.cell_of(r, c - 1));
    if (c + 1 < scene.grid) out.push_back(scene.cell_of(r, c + 1));
    return out;
}

bool on_receptacle_cell(const WorldState& state, std::size_t idx) {
    const std::int64_t pos = state.positions[idx];
    for (std::size_t j = 0; j < state.positions.size(); ++j) {
        if (j != idx && state.scene->placements[j].is_receptacle && state.positions[j] == pos) {
            return true;
        }
    }
    return false;
}

/// Resolve a class-level target to an instance: loose floor instances rank
/// before ones sitting on a receptacle, then nearer, then lowest index. This
/// keeps repeated class-level sub-goals (pick-two) from re-grabbing what was
/// just put down.
int find_instance(const WorldState& state, int class_id, bool require_adjacent) {
    int best = -1;
    std::int64_t best_dist = 0;
    bool best_stowed = false;
    for (std::size_t i = 0; i < state.scene->placements.size(); ++i) {
        if (state.scene->placements[i].class_id != class_id) continue;
        const std::int64_t pos = state.positions[i];
        if (pos == kHeldCell) continue;
        const std::int64_t dist = manhattan(*state.scene, state.agent_cell, pos);
        if (require_adjacent && dist != 1) continue;
        const bool stowed = on_receptacle_cell(state, i);
        if (best < 0 || (!stowed && best_stowed) ||
            (stowed == best_stowed && dist < best_dist)) {
            best = static_cast<int>(i);
            best_dist = dist;
            best_stowed = stowed;
        }
    }
    return best;
}

/// The openable fixture co-located with a cell, if any.
int fixture_at(const WorldState& state, std::int64_t cell) {
    for (std::size_t i = 0; i < state.scene->placements.size(); ++i) {
        if (state.scene->placements[i].is_receptacle && state.positions[i] == cell) {
            return static_cast<int>(i);
        }
    }
    return -1;
}

int facing_from(const Scene& scene, std::int64_t from, std::int64_t to) {
    const std::int64_t fr = from / scene.grid, fc = from % scene.grid;
    const std::int64_t tr = to / scene.grid, tc = to % scene.grid;
    if (tr < fr) return 0;
    if (tc > fc) return 1;
    if (tr > fr) return 2;
    return 3;
}

}  // namespace

const std::string& template_name(TaskTemplate t) {
    return template_names()[static_cast<std::size_t>(t)];
}

TaskTemplate template_from_name(const std::string& name) {
    const auto& names = template_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<TaskTemplate>(i);
    }
    throw ValidationError("unknown task template '" + name + "'");
}

bool class_portable(const std::string& name) {
    return name == "Apple" || name == "Knife" || name == "Pencil";
}
bool class_openable(const std::string& name) { return name == "Microwave" || name == "Fridge"; }
bool class_toggleable(const std::string& name) { return name == "Sink" || name == "Microwave"; }
bool class_sliceable(const std::string& name) { return name == "Apple"; }

WorldState initial_world(const Scene& scene) {
    WorldState state;
    state.scene = &scene;
    state.positions.reserve(scene.placements.size());
    for (const Placement& p : scene.placements) state.positions.push_back(p.cell);
    state.flags.assign(scene.placements.size(), EntityFlags{});
    // Agent starts on the first entity-free cell in row-major order.
    std::int64_t start = -1;
    for (std::int64_t cell = 0; cell < scene.grid * scene.grid && start < 0; ++cell) {
        bool taken = false;
        for (std::int64_t pos : state.positions) taken = taken || pos == cell;
        if (!taken) start = cell;
    }
    if (start < 0) throw ValidationError("scene " + std::to_string(scene.scene_id) + " has no free cell");
    state.agent_cell = start;
    return state;
}

bool cell_occupied(const WorldState& state, std::int64_t cell) {
    for (std::int64_t pos : state.positions) {
        if (pos == cell) return true;
    }
    return false;
}

std::vector<std::int64_t> free_adjacent_cells(const WorldState& state, std::int64_t cell) {
    std::vector<std::int64_t> out;
    for (std::int64_t c : adjacent_cells(*state.scene, cell)) {
        if (!cell_occupied(state, c)) out.push_back(c);
    }
    return out;
}

Outcome step_world(WorldState& state, const SubGoal& sg, const ClassVocabs& vocabs) {
    ++state.step_count;
    const auto obj_name = [&](int class_id) -> const std::string& {
        if (class_id < 0 || class_id >= static_cast<int>(vocabs.objects.size())) {
            throw ValidationError("object class " + std::to_string(class_id) + " out of vocabulary");
        }
        return vocabs.objects[static_cast<std::size_t>(class_id)];
    };

    switch (sg.action) {
        case Action::Stop:
            return Outcome::Success;

        case Action::Navigate: {
            if (sg.object <= 0) return Outcome::Failed;
            const int target = find_instance(state, sg.object, false);
            if (target < 0) return Outcome::Failed;
            const std::int64_t dest = state.positions[static_cast<std::size_t>(target)];
            // Stand on the free neighbor closest to the current position.
            std::int64_t chosen = -1, chosen_dist = 0;
            for (std::int64_t c : free_adjacent_cells(state, dest)) {
                const std::int64_t dist = manhattan(*state.scene, state.agent_cell, c);
                if (chosen < 0 || dist < chosen_dist) {
                    chosen = c;
                    chosen_dist = dist;
                }
            }
            if (chosen < 0) return Outcome::Failed;
            state.agent_cell = chosen;
            state.facing = facing_from(*state.scene, chosen, dest);
            return Outcome::Success;
        }

        case Action::PickUp: {
            if (state.held >= 0) return Outcome::Failed;
            if (sg.object <= 0 || !class_portable(obj_name(sg.object))) return Outcome::Failed;
            const int target = find_instance(state, sg.object, true);
            if (target < 0) return Outcome::Failed;
            const int fixture = fixture_at(state, state.positions[static_cast<std::size_t>(target)]);
            if (fixture >= 0) {
                const Placement& f = state.scene->placements[static_cast<std::size_t>(fixture)];
                if (class_openable(obj_name(f.class_id)) &&
                    !state.flags[static_cast<std::size_t>(fixture)].open) {
                    return Outcome::Failed;  // inside a closed container
                }
            }
            state.held = target;
            state.positions[static_cast<std::size_t>(target)] = kHeldCell;
            return Outcome::Success;
        }

        case Action::Put: {
            if (state.held < 0) return Outcome::Failed;
            if (state.scene->placements[static_cast<std::size_t>(state.held)].class_id != sg.object) {
                return Outcome::Failed;
            }
            if (sg.receptacle <= 0 ||
                sg.receptacle >= static_cast<int>(vocabs.receptacles.size())) {
                return Outcome::Failed;
            }
            const std::string& recep_name =
                vocabs.receptacles[static_cast<std::size_t>(sg.receptacle)];
            const int recep_class = vocabs.object_id(recep_name);
            const int target = find_instance(state, recep_class, true);
            if (target < 0) return Outcome::Failed;
            if (class_openable(recep_name) && !state.flags[static_cast<std::size_t>(target)].open) {
                return Outcome::Failed;
            }
            state.positions[static_cast<std::size_t>(state.held)] =
                state.positions[static_cast<std::size_t>(target)];
            state.held = -1;
            return Outcome::Success;
        }

        case Action::Open:
        case Action::Close: {
            if (sg.object <= 0 || !class_openable(obj_name(sg.object))) return Outcome::Failed;
            const int target = find_instance(state, sg.object, true);
            if (target < 0) return Outcome::Failed;
            EntityFlags& f = state.flags[static_cast<std::size_t>(target)];
            const bool want_open = sg.action == Action::Open;
            if (f.open == want_open) return Outcome::Failed;
            f.open = want_open;
            return Outcome::Success;
        }

        case Action::ToggleOn:
        case Action::ToggleOff: {
            if (sg.object <= 0 || !class_toggleable(obj_name(sg.object))) return Outcome::Failed;
            const int target = find_instance(state, sg.object, true);
            if (target < 0) return Outcome::Failed;
            EntityFlags& f = state.flags[static_cast<std::size_t>(target)];
            const bool want_on = sg.action == Action::ToggleOn;
            if (f.toggled_on == want_on) return Outcome::Failed;
            const std::string& name = obj_name(sg.object);
            if (want_on && name == "Microwave" && f.open) return Outcome::Failed;  // runs closed
            f.toggled_on = want_on;
            if (want_on) {
                // Running fixtures act on everything co-located with them.
                const std::int64_t cell = state.positions[static_cast<std::size_t>(target)];
                for (std::size_t i = 0; i < state.positions.size(); ++i) {
                    if (static_cast<int>(i) == target || state.positions[i] != cell) continue;
                    if (name == "Sink") state.flags[i].cleaned = true;
                    if (name == "Microwave") state.flags[i].heated = true;
                }
            }
            return Outcome::Success;
        }

        case Action::Slice: {
            if (state.held < 0) return Outcome::Failed;
            const Placement& held_p = state.scene->placements[static_cast<std::size_t>(state.held)];
            if (obj_name(held_p.class_id) != "Knife") return Outcome::Failed;
            if (sg.object <= 0 || !class_sliceable(obj_name(sg.object))) return Outcome::Failed;
            const int target = find_instance(state, sg.object, true);
            if (target < 0) return Outcome::Failed;
            EntityFlags& f = state.flags[static_cast<std::size_t>(target)];
            if (f.sliced) return Outcome::Failed;
            f.sliced = true;
            return Outcome::Success;
        }
    }
    return Outcome::Failed;
}

bool goal_satisfied(const WorldState& state, const Task& task, const ClassVocabs& vocabs) {
    if (task.receptacle_class <= 0 ||
        task.receptacle_class >= static_cast<int>(vocabs.receptacles.size())) {
        return false;
    }
    const int recep_class =
        vocabs.object_id(vocabs.receptacles[static_cast<std::size_t>(task.receptacle_class)]);
    int placed = 0;
    for (std::size_t i = 0; i < state.positions.size(); ++i) {
        if (state.scene->placements[i].class_id != task.object_class) continue;
        const std::int64_t pos = state.positions[i];
        if (pos == kHeldCell) continue;
        bool on_receptacle = false;
        for (std::size_t j = 0; j < state.positions.size(); ++j) {
            if (state.scene->placements[j].class_id == recep_class && state.positions[j] == pos) {
                on_receptacle = true;
            }
        }
        if (!on_receptacle) continue;
        const EntityFlags& f = state.flags[i];
        switch (task.kind) {
            case TaskTemplate::PickPlace:
            case TaskTemplate::PickTwoPlace:
                ++placed;
                break;
            case TaskTemplate::CleanPlace:
                if (f.cleaned) ++placed;
                break;
            case TaskTemplate::HeatPlace:
                if (f.heated) ++placed;
                break;
            case TaskTemplate::SlicePlace:
                if (f.sliced) ++placed;
                break;
        }
    }
    return task.kind == TaskTemplate::PickTwoPlace ? placed >= 2 : placed >= 1;
}

namespace {

Rgb state_color(Rgb base, const EntityFlags& f) {
    auto lift = [](std::uint8_t v, int delta) {
        const int x = static_cast<int>(v) + delta;
        return static_cast<std::uint8_t>(std::clamp(x, 0, 255));
    };
    Rgb c = base;
    if (f.sliced) c = Rgb{c.b, c.r, c.g};  // visible hue rotation, same footprint
    if (f.open) c = Rgb{lift(c.r, -70), lift(c.g, -70), lift(c.b, -70)};
    if (f.toggled_on) c = Rgb{lift(c.r, 70), lift(c.g, 70), lift(c.b, 70)};
    if (f.cleaned) c.b = lift(c.b, 50);
    if (f.heated) c.r = lift(c.r, 50);
    return c;
}

void paint_rect(Image& img, std::int64_t x0, std::int64_t y0, std::int64_t x1, std::int64_t y1,
                Rgb c) {
    for (std::int64_t y = y0; y <= y1; ++y) {
        for (std::int64_t x = x0; x <= x1; ++x) {
            img.set(y, x, 0, c.r);
            img.set(y, x, 1, c.g);
            img.set(y, x, 2, c.b);
        }
    }
}

}  // namespace

Observation render_observation(const WorldState& state, std::int64_t image_size,
                               int num_object_classes) {
    const Scene& scene = *state.scene;
    if (image_size % scene.grid != 0) {
        throw ConfigError("image size " + std::to_string(image_size) +
                          " not divisible by grid " + std::to_string(scene.grid));
    }
    const std::int64_t px = image_size / scene.grid;
    const std::int64_t half = std::max<std::int64_t>(1, px / 2);

    Observation obs;
    obs.rgb = Image::zeros(image_size, image_size, 3);
    std::vector<BoxSpec> boxes;

    auto cell_origin = [&](std::int64_t cell) {
        return std::pair<std::int64_t, std::int64_t>{(cell % scene.grid) * px,
                                                     (cell / scene.grid) * px};
    };

    // Fixtures: full-cell blocks.
    for (std::size_t i = 0; i < scene.placements.size(); ++i) {
        const Placement& p = scene.placements[i];
        if (!p.is_receptacle) continue;
        const auto [x0, y0] = cell_origin(state.positions[i]);
        const Rgb c = state_color(scene.palette[static_cast<std::size_t>(p.class_id)], state.flags[i]);
        paint_rect(obs.rgb, x0, y0, x0 + px - 1, y0 + px - 1, c);
        boxes.push_back(BoxSpec{p.class_id, x0, y0, x0 + px - 1, y0 + px - 1});
    }

    // Loose objects: quadrant-packed half-cell blocks, placement order.
    std::vector<int> seen_at_cell(static_cast<std::size_t>(scene.grid * scene.grid), 0);
    for (std::size_t i = 0; i < scene.placements.size(); ++i) {
        const Placement& p = scene.placements[i];
        if (p.is_receptacle || state.positions[i] == kHeldCell) continue;
        const std::int64_t cell = state.positions[i];
        const int quadrant = std::min(seen_at_cell[static_cast<std::size_t>(cell)]++, 3);
        const auto [cx, cy] = cell_origin(cell);
        const std::int64_t x0 = cx + (quadrant % 2) * half;
        const std::int64_t y0 = cy + (quadrant / 2) * half;
        const Rgb c = state_color(scene.palette[static_cast<std::size_t>(p.class_id)], state.flags[i]);
        paint_rect(obs.rgb, x0, y0, x0 + half - 1, y0 + half - 1, c);
        boxes.push_back(BoxSpec{p.class_id, x0, y0, x0 + half - 1, y0 + half - 1});
    }

    // Agent (RGB only; detectors report objects, not the agent).
    {
        const auto [x0, y0] = cell_origin(state.agent_cell);
        paint_rect(obs.rgb, x0, y0, x0 + px - 1, y0 + px - 1, Rgb{235, 235, 235});
    }

    // Held object rides in the agent cell's bottom-right quadrant.
    if (state.held >= 0) {
        const Placement& p = state.scene->placements[static_cast<std::size_t>(state.held)];
        const auto [cx, cy] = cell_origin(state.agent_cell);
        const std::int64_t x0 = cx + half, y0 = cy + half;
        const Rgb c = state_color(scene.palette[static_cast<std::size_t>(p.class_id)],
                                  state.flags[static_cast<std::size_t>(state.held)]);
        paint_rect(obs.rgb, x0, y0, x0 + half - 1, y0 + half - 1, c);
        boxes.push_back(BoxSpec{p.class_id, x0, y0, x0 + half - 1, y0 + half - 1});
    }

    obs.bbox_mask = build_bbox_mask(boxes, image_size, image_size, num_object_classes);
    return obs;
}

}  // namespace histplan
