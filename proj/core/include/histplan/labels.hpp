#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "histplan/tensor.hpp"

namespace histplan {

/// The nine plannable actions: seven interactions plus Navigate and Stop.
enum class Action : int {
    PickUp = 0,
    Put,
    Open,
    Close,
    ToggleOn,
    ToggleOff,
    Slice,
    Navigate,
    Stop,
};
inline constexpr int kActionCount = 9;

inline const std::array<std::string, kActionCount>& action_names() {
    static const std::array<std::string, kActionCount> names = {
        "Pickup", "Put", "Open", "Close", "ToggleOn", "ToggleOff", "Slice", "Navigate", "Stop"};
    return names;
}

inline const std::string& action_name(Action a) { return action_names()[static_cast<std::size_t>(a)]; }

inline Action action_from_name(const std::string& name) {
    const auto& names = action_names();
    for (int i = 0; i < kActionCount; ++i) {
        if (names[static_cast<std::size_t>(i)] == name) return static_cast<Action>(i);
    }
    throw ValidationError("unknown action '" + name + "'");
}

/// One planned step: action, interaction/destination object, receptacle.
/// Object index 0 is the reserved "none" class; receptacle index 0 is "empty".
struct SubGoal {
    Action action = Action::Stop;
    int object = 0;
    int receptacle = 0;

    bool operator==(const SubGoal&) const = default;
};

/// Object and receptacle class names, fixed for a trained model and saved
/// beside its checkpoint so decoded sub-goals stay stable across runs.
struct ClassVocabs {
    std::vector<std::string> objects;      // [0] == "none"
    std::vector<std::string> receptacles;  // [0] == "empty"

    int object_id(const std::string& name) const;
    int receptacle_id(const std::string& name) const;

    /// The desk-scale world: "none" + 3 portables + 8 receptacle classes on
    /// the object side; "empty" + the same 8 on the receptacle side.
    static ClassVocabs desk();
};

inline int ClassVocabs::object_id(const std::string& name) const {
    for (std::size_t i = 0; i < objects.size(); ++i) {
        if (objects[i] == name) return static_cast<int>(i);
    }
    throw ValidationError("unknown object class '" + name + "'");
}

inline int ClassVocabs::receptacle_id(const std::string& name) const {
    for (std::size_t i = 0; i < receptacles.size(); ++i) {
        if (receptacles[i] == name) return static_cast<int>(i);
    }
    throw ValidationError("unknown receptacle class '" + name + "'");
}

inline ClassVocabs ClassVocabs::desk() {
    ClassVocabs v;
    v.objects = {"none",   "Apple",      "Knife",  "Pencil",    "Bowl", "Box",
                 "CounterTop", "Fridge", "Microwave", "Shelf", "Sink", "Table"};
    v.receptacles = {"empty", "Bowl", "Box", "CounterTop", "Fridge", "Microwave", "Shelf", "Sink", "Table"};
    return v;
}

}  // namespace histplan
