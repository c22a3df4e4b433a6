#include "histplan/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "histplan/history.hpp"

namespace histplan {

using json = nlohmann::json;

namespace {

struct BaseColor {
    const char* name;
    Rgb color;
};

constexpr BaseColor kBaseColors[] = {
    {"Apple", {200, 40, 40}},   {"Knife", {175, 175, 195}}, {"Pencil", {230, 190, 60}},
    {"Bowl", {90, 130, 220}},   {"Box", {150, 100, 60}},    {"CounterTop", {120, 120, 120}},
    {"Fridge", {210, 215, 225}},{"Microwave", {45, 45, 60}},{"Shelf", {110, 75, 40}},
    {"Sink", {70, 160, 200}},   {"Table", {160, 110, 70}},
};

Rgb base_color(const std::string& name) {
    for (const BaseColor& bc : kBaseColors) {
        if (name == bc.name) return bc.color;
    }
    return Rgb{128, 128, 128};
}

std::uint8_t jitter_channel(std::uint8_t base, Rng& rng) {
    const int delta = static_cast<int>(rng.next_index(51)) - 25;
    return static_cast<std::uint8_t>(std::clamp(static_cast<int>(base) + delta, 0, 255));
}

struct TemplatePools {
    std::vector<std::string> objects;
    std::vector<std::string> receptacles;
};

TemplatePools pools_for(TaskTemplate t) {
    const std::vector<std::string> open_shelves = {"Bowl", "Box", "CounterTop", "Shelf", "Sink",
                                                   "Table"};
    switch (t) {
        case TaskTemplate::PickPlace:
            return {{"Apple", "Knife", "Pencil"}, open_shelves};
        case TaskTemplate::PickTwoPlace:
            return {{"Pencil"}, open_shelves};
        // Clean/heat targets stay single-instance classes: with a duplicate
        // class the post-wash PickUp can legally resolve to the untreated
        // floor instance and the goal check rejects the plan.
        case TaskTemplate::CleanPlace:
            return {{"Apple", "Knife"}, {"Bowl", "Box", "CounterTop", "Shelf", "Table"}};
        case TaskTemplate::HeatPlace:
            return {{"Apple"}, open_shelves};
        case TaskTemplate::SlicePlace:
            return {{"Apple"}, open_shelves};
    }
    throw ValidationError("unknown template");
}

const std::vector<std::string>& instruction_patterns(TaskTemplate t) {
    static const std::vector<std::string> pick = {
        "put the {obj} on the {recep}",
        "move a {obj} to the {recep}",
        "place the {obj} onto the {recep}",
    };
    static const std::vector<std::string> pick_two = {
        "put two {obj}s on the {recep}",
        "move a pair of {obj}s to the {recep}",
        "place two {obj}s onto the {recep}",
    };
    static const std::vector<std::string> clean = {
        "rinse the {obj} and place it on the {recep}",
        "wash the {obj} then put it on the {recep}",
        "clean the {obj} and set it on the {recep}",
    };
    static const std::vector<std::string> heat = {
        "heat the {obj} and put it on the {recep}",
        "warm the {obj} in the microwave and place it on the {recep}",
        "microwave the {obj} then move it to the {recep}",
    };
    static const std::vector<std::string> slice = {
        "slice the {obj} and put a slice on the {recep}",
        "cut the {obj} then place it on the {recep}",
        "slice up the {obj} and set a piece on the {recep}",
    };
    switch (t) {
        case TaskTemplate::PickPlace: return pick;
        case TaskTemplate::PickTwoPlace: return pick_two;
        case TaskTemplate::CleanPlace: return clean;
        case TaskTemplate::HeatPlace: return heat;
        case TaskTemplate::SlicePlace: return slice;
    }
    throw ValidationError("unknown template");
}

std::string lowercase(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string fill_pattern(const std::string& pattern, const std::string& obj,
                         const std::string& recep) {
    std::string out = pattern;
    const auto replace_all = [&out](const std::string& key, const std::string& value) {
        std::size_t pos;
        while ((pos = out.find(key)) != std::string::npos) out.replace(pos, key.size(), value);
    };
    replace_all("{obj}", lowercase(obj));
    replace_all("{recep}", lowercase(recep));
    return out;
}

/// Ground-truth plan for a task, in class-level sub-goals.
std::vector<SubGoal> expand_template(const Task& task, const ClassVocabs& vocabs) {
    const int obj = task.object_class;
    const int recep = task.receptacle_class;
    const int recep_as_obj = vocabs.object_id(vocabs.receptacles[static_cast<std::size_t>(recep)]);
    const int sink = vocabs.object_id("Sink");
    const int sink_recep = vocabs.receptacle_id("Sink");
    const int microwave = vocabs.object_id("Microwave");
    const int microwave_recep = vocabs.receptacle_id("Microwave");
    const int knife = vocabs.object_id("Knife");
    const int counter = vocabs.object_id("CounterTop");
    const int counter_recep = vocabs.receptacle_id("CounterTop");

    const auto nav = [](int target) { return SubGoal{Action::Navigate, target, 0}; };
    const auto pick = [](int target) { return SubGoal{Action::PickUp, target, 0}; };
    const auto put = [](int o, int r) { return SubGoal{Action::Put, o, r}; };
    const SubGoal stop{Action::Stop, 0, 0};

    switch (task.kind) {
        case TaskTemplate::PickPlace:
            return {nav(obj), pick(obj), nav(recep_as_obj), put(obj, recep), stop};
        case TaskTemplate::PickTwoPlace:
            return {nav(obj), pick(obj), nav(recep_as_obj), put(obj, recep),
                    nav(obj), pick(obj), nav(recep_as_obj), put(obj, recep), stop};
        case TaskTemplate::CleanPlace:
            return {nav(obj),
                    pick(obj),
                    nav(sink),
                    put(obj, sink_recep),
                    SubGoal{Action::ToggleOn, sink, 0},
                    SubGoal{Action::ToggleOff, sink, 0},
                    pick(obj),
                    nav(recep_as_obj),
                    put(obj, recep),
                    stop};
        case TaskTemplate::HeatPlace:
            return {nav(obj),
                    pick(obj),
                    nav(microwave),
                    SubGoal{Action::Open, microwave, 0},
                    put(obj, microwave_recep),
                    SubGoal{Action::Close, microwave, 0},
                    SubGoal{Action::ToggleOn, microwave, 0},
                    SubGoal{Action::ToggleOff, microwave, 0},
                    SubGoal{Action::Open, microwave, 0},
                    pick(obj),
                    SubGoal{Action::Close, microwave, 0},
                    nav(recep_as_obj),
                    put(obj, recep),
                    stop};
        case TaskTemplate::SlicePlace:
            return {nav(knife),
                    pick(knife),
                    nav(obj),
                    SubGoal{Action::Slice, obj, 0},
                    nav(counter),
                    put(knife, counter_recep),
                    nav(obj),
                    pick(obj),
                    nav(recep_as_obj),
                    put(obj, recep),
                    stop};
    }
    throw ValidationError("unknown template");
}

}  // namespace

bool episodes_equal(const Episode& a, const Episode& b) {
    return a.instruction == b.instruction && a.scene_id == b.scene_id && a.split == b.split &&
           a.task.kind == b.task.kind && a.task.object_class == b.task.object_class &&
           a.task.receptacle_class == b.task.receptacle_class && a.steps == b.steps;
}

KvMap GenConfig::to_kv() const {
    KvMap kv;
    kv["seed"] = std::to_string(seed);
    kv["num_scenes"] = std::to_string(num_scenes);
    kv["unseen_scenes"] = std::to_string(unseen_scenes);
    kv["train_episodes"] = std::to_string(train_episodes);
    kv["eval_episodes_per_split"] = std::to_string(eval_episodes_per_split);
    kv["grid"] = std::to_string(grid);
    kv["image_size"] = std::to_string(image_size);
    kv["portable_sets"] = std::to_string(portable_sets);
    return kv;
}

GenConfig GenConfig::from_kv(const KvMap& kv) {
    GenConfig cfg;
    const auto get = [&kv](const char* key, std::int64_t fallback) {
        auto it = kv.find(key);
        return it == kv.end() ? fallback : std::stoll(it->second);
    };
    cfg.seed = static_cast<std::uint64_t>(get("seed", 0));
    cfg.num_scenes = get("num_scenes", cfg.num_scenes);
    cfg.unseen_scenes = get("unseen_scenes", cfg.unseen_scenes);
    cfg.train_episodes = get("train_episodes", cfg.train_episodes);
    cfg.eval_episodes_per_split = get("eval_episodes_per_split", cfg.eval_episodes_per_split);
    cfg.grid = get("grid", cfg.grid);
    cfg.image_size = get("image_size", cfg.image_size);
    cfg.portable_sets = get("portable_sets", cfg.portable_sets);
    return cfg;
}

Scene generate_scene(std::uint64_t seed, int scene_id, const GenConfig& cfg,
                     const ClassVocabs& vocabs) {
    if (cfg.grid < 4) throw ValidationError("grid too small for the desk world");
    // Instance plan: one of each receptacle class, one Apple/Knife, two Pencils.
    std::vector<std::pair<int, bool>> wanted;  // (class id, is_receptacle)
    for (std::size_t r = 1; r < vocabs.receptacles.size(); ++r) {
        wanted.emplace_back(vocabs.object_id(vocabs.receptacles[r]), true);
    }
    for (std::int64_t s = 0; s < cfg.portable_sets; ++s) {
        for (const char* name : {"Apple", "Knife", "Pencil", "Pencil"}) {
            wanted.emplace_back(vocabs.object_id(name), false);
        }
    }
    if (static_cast<std::int64_t>(wanted.size()) * 2 > cfg.grid * cfg.grid) {
        throw ValidationError("grid " + std::to_string(cfg.grid) + "x" + std::to_string(cfg.grid) +
                              " cannot host " + std::to_string(wanted.size()) + " placements");
    }

    Rng rng = Rng(seed).fork(static_cast<std::uint64_t>(scene_id) * 2 + 1);
    Scene scene;
    scene.scene_id = scene_id;
    scene.grid = cfg.grid;
    scene.palette.assign(vocabs.objects.size(), Rgb{0, 0, 0});
    for (std::size_t i = 1; i < vocabs.objects.size(); ++i) {
        const Rgb base = base_color(vocabs.objects[i]);
        scene.palette[i] = Rgb{jitter_channel(base.r, rng), jitter_channel(base.g, rng),
                               jitter_channel(base.b, rng)};
    }

    for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
        Rng layout = rng.fork(attempt);
        std::vector<std::int64_t> cells(static_cast<std::size_t>(cfg.grid * cfg.grid));
        for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = static_cast<std::int64_t>(i);
        for (std::size_t i = cells.size(); i > 1; --i) {  // Fisher-Yates
            std::swap(cells[i - 1], cells[static_cast<std::size_t>(layout.next_index(
                                        static_cast<std::int64_t>(i)))]);
        }
        scene.placements.clear();
        for (std::size_t i = 0; i < wanted.size(); ++i) {
            scene.placements.push_back(Placement{wanted[i].first, cells[i], wanted[i].second});
        }
        // Reject layouts with an unreachable fixture or object.
        WorldState probe = initial_world(scene);
        bool ok = true;
        for (const Placement& p : scene.placements) {
            if (free_adjacent_cells(probe, p.cell).empty()) ok = false;
        }
        if (ok) return scene;
    }
    throw ValidationError("could not generate a reachable layout for scene " +
                          std::to_string(scene_id));
}

Episode generate_episode(const Scene& scene, const Task& task, std::uint64_t seed,
                         const GenConfig& cfg, const ClassVocabs& vocabs) {
    // Referenced classes must exist in the scene.
    const int recep_class =
        vocabs.object_id(vocabs.receptacles[static_cast<std::size_t>(task.receptacle_class)]);
    for (int cls : {task.object_class, recep_class}) {
        bool found = false;
        for (const Placement& p : scene.placements) found = found || p.class_id == cls;
        if (!found) {
            throw ValidationError("scene " + std::to_string(scene.scene_id) + " lacks class '" +
                                  vocabs.objects[static_cast<std::size_t>(cls)] + "'");
        }
    }

    Rng rng(seed);
    Episode ep;
    ep.scene_id = scene.scene_id;
    ep.task = task;
    const auto& patterns = instruction_patterns(task.kind);
    ep.instruction = fill_pattern(
        patterns[static_cast<std::size_t>(rng.next_index(static_cast<std::int64_t>(patterns.size())))],
        vocabs.objects[static_cast<std::size_t>(task.object_class)],
        vocabs.receptacles[static_cast<std::size_t>(task.receptacle_class)]);

    WorldState state = initial_world(scene);
    for (const SubGoal& sg : expand_template(task, vocabs)) {
        EpisodeStep step;
        step.obs = render_observation(state, cfg.image_size,
                                      static_cast<int>(vocabs.objects.size()));
        step.subgoal = sg;
        const Outcome outcome = step_world(state, sg, vocabs);
        if (outcome != Outcome::Success) {
            throw ValidationError("template '" + template_name(task.kind) +
                                  "' failed at step " + std::to_string(ep.steps.size()) +
                                  " in scene " + std::to_string(scene.scene_id));
        }
        ep.steps.push_back(std::move(step));
    }
    if (!goal_satisfied(state, task, vocabs)) {
        throw ValidationError("template '" + template_name(task.kind) +
                              "' did not reach its goal in scene " + std::to_string(scene.scene_id));
    }
    return ep;
}

std::vector<const Episode*> Corpus::split(const std::string& name) const {
    std::vector<const Episode*> out;
    for (const Episode& ep : episodes) {
        if (ep.split == name) out.push_back(&ep);
    }
    return out;
}

const Scene& Corpus::scene_by_id(int id) const {
    for (const Scene& s : scenes) {
        if (s.scene_id == id) return s;
    }
    throw ValidationError("scene id " + std::to_string(id) + " not in corpus");
}

Corpus generate_corpus(const GenConfig& cfg, const ClassVocabs& vocabs) {
    if (cfg.unseen_scenes <= 0 || cfg.unseen_scenes >= cfg.num_scenes) {
        throw ValidationError("unseen_scenes must be in (0, num_scenes)");
    }
    Corpus corpus;
    for (int id = 0; id < cfg.num_scenes; ++id) {
        corpus.scenes.push_back(generate_scene(cfg.seed, id, cfg, vocabs));
    }
    const std::int64_t train_pool = cfg.num_scenes - cfg.unseen_scenes;

    Rng rng = Rng(cfg.seed).fork(0xda7a);
    const auto sample_task = [&](Rng& r) {
        Task task;
        task.kind = static_cast<TaskTemplate>(r.next_index(5));
        const TemplatePools pools = pools_for(task.kind);
        task.object_class = vocabs.object_id(
            pools.objects[static_cast<std::size_t>(r.next_index(static_cast<std::int64_t>(pools.objects.size())))]);
        task.receptacle_class = vocabs.receptacle_id(
            pools.receptacles[static_cast<std::size_t>(r.next_index(static_cast<std::int64_t>(pools.receptacles.size())))]);
        return task;
    };

    const auto emit = [&](const std::string& split, std::int64_t count, std::int64_t scene_lo,
                          std::int64_t scene_hi, std::uint64_t stream) {
        Rng split_rng = rng.fork(stream);
        for (std::int64_t i = 0; i < count; ++i) {
            const int scene_id =
                static_cast<int>(scene_lo + split_rng.next_index(scene_hi - scene_lo));
            const Task task = sample_task(split_rng);
            Episode ep = generate_episode(corpus.scene_by_id(scene_id), task,
                                          split_rng.next_u64(), cfg, vocabs);
            ep.split = split;
            corpus.episodes.push_back(std::move(ep));
        }
    };
    emit("train", cfg.train_episodes, 0, train_pool, 1);
    emit("valid_seen", cfg.eval_episodes_per_split, 0, train_pool, 2);
    emit("valid_unseen", cfg.eval_episodes_per_split, train_pool, cfg.num_scenes, 3);
    return corpus;
}

// ---------------------------------------------------------------------------

namespace {
constexpr char kB64Chars[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (std::size_t i = 0; i < bytes.size(); i += 3) {
        std::uint32_t chunk = static_cast<std::uint32_t>(bytes[i]) << 16;
        if (i + 1 < bytes.size()) chunk |= static_cast<std::uint32_t>(bytes[i + 1]) << 8;
        if (i + 2 < bytes.size()) chunk |= static_cast<std::uint32_t>(bytes[i + 2]);
        out.push_back(kB64Chars[(chunk >> 18) & 0x3f]);
        out.push_back(kB64Chars[(chunk >> 12) & 0x3f]);
        out.push_back(i + 1 < bytes.size() ? kB64Chars[(chunk >> 6) & 0x3f] : '=');
        out.push_back(i + 2 < bytes.size() ? kB64Chars[chunk & 0x3f] : '=');
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    static const auto value_of = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    if (text.size() % 4 != 0) throw ValidationError("base64 payload length not a multiple of 4");
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int vals[4] = {0, 0, 0, 0};
        int pad = 0;
        for (std::size_t j = 0; j < 4; ++j) {
            const char c = text[i + j];
            if (c == '=') {
                ++pad;
                vals[j] = 0;
            } else {
                vals[j] = value_of(c);
                if (vals[j] < 0 || pad > 0) throw ValidationError("invalid base64 payload");
            }
        }
        const std::uint32_t chunk = (static_cast<std::uint32_t>(vals[0]) << 18) |
                                    (static_cast<std::uint32_t>(vals[1]) << 12) |
                                    (static_cast<std::uint32_t>(vals[2]) << 6) |
                                    static_cast<std::uint32_t>(vals[3]);
        out.push_back(static_cast<std::uint8_t>((chunk >> 16) & 0xff));
        if (pad < 2) out.push_back(static_cast<std::uint8_t>((chunk >> 8) & 0xff));
        if (pad < 1) out.push_back(static_cast<std::uint8_t>(chunk & 0xff));
    }
    return out;
}

namespace {

json image_to_json(const Image& img) {
    return json{{"h", img.height}, {"w", img.width}, {"c", img.channels},
                {"data", base64_encode(img.pixels)}};
}

Image image_from_json(const json& j) {
    Image img;
    img.height = j.at("h").get<std::int64_t>();
    img.width = j.at("w").get<std::int64_t>();
    img.channels = j.at("c").get<std::int64_t>();
    img.pixels = base64_decode(j.at("data").get<std::string>());
    if (static_cast<std::int64_t>(img.pixels.size()) != img.height * img.width * img.channels) {
        throw ValidationError("image payload does not match its dimensions");
    }
    return img;
}

void expect_header(const std::string& line, const char* kind) {
    json j = json::parse(line);
    if (j.value("format_version", 0) != 1 || j.value("kind", "") != kind) {
        throw ValidationError(std::string("expected a version-1 '") + kind + "' file header");
    }
}

}  // namespace

void write_episodes(const std::vector<Episode>& episodes, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    out << json{{"format_version", 1}, {"kind", "episodes"}}.dump() << "\n";
    for (const Episode& ep : episodes) {
        json steps = json::array();
        for (const EpisodeStep& step : ep.steps) {
            steps.push_back(json{{"rgb", image_to_json(step.obs.rgb)},
                                 {"bbox_mask", image_to_json(step.obs.bbox_mask)},
                                 {"action", action_name(step.subgoal.action)},
                                 {"object", step.subgoal.object},
                                 {"receptacle", step.subgoal.receptacle}});
        }
        out << json{{"instruction", ep.instruction},
                    {"scene_id", ep.scene_id},
                    {"split", ep.split},
                    {"task",
                     {{"template", template_name(ep.task.kind)},
                      {"object", ep.task.object_class},
                      {"receptacle", ep.task.receptacle_class}}},
                    {"steps", steps}}
                   .dump()
            << "\n";
    }
}

std::vector<Episode> read_episodes(const std::string& path, const ClassVocabs& vocabs) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    std::string line;
    std::int64_t lineno = 0;
    std::vector<Episode> out;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(std::string("bad episode record: ") + e.what(), lineno);
        }
        try {
            if (lineno == 1) {
                expect_header(line, "episodes");
                continue;
            }
            Episode ep;
            ep.instruction = j.at("instruction").get<std::string>();
            ep.scene_id = j.at("scene_id").get<int>();
            ep.split = j.at("split").get<std::string>();
            const json& task = j.at("task");
            ep.task.kind = template_from_name(task.at("template").get<std::string>());
            ep.task.object_class = task.at("object").get<int>();
            ep.task.receptacle_class = task.at("receptacle").get<int>();
            if (ep.task.object_class <= 0 ||
                ep.task.object_class >= static_cast<int>(vocabs.objects.size()) ||
                ep.task.receptacle_class <= 0 ||
                ep.task.receptacle_class >= static_cast<int>(vocabs.receptacles.size())) {
                throw ValidationError("task classes out of vocabulary");
            }
            for (const json& js : j.at("steps")) {
                EpisodeStep step;
                step.obs.rgb = image_from_json(js.at("rgb"));
                step.obs.bbox_mask = image_from_json(js.at("bbox_mask"));
                step.subgoal.action = action_from_name(js.at("action").get<std::string>());
                step.subgoal.object = js.at("object").get<int>();
                step.subgoal.receptacle = js.at("receptacle").get<int>();
                ep.steps.push_back(std::move(step));
            }
            out.push_back(std::move(ep));
        } catch (const json::exception& e) {
            throw ParseError(std::string("bad episode record: ") + e.what(), lineno);
        } catch (const ValidationError& e) {
            throw ParseError(e.what(), lineno);
        }
    }
    return out;
}

void write_scenes(const std::vector<Scene>& scenes, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    out << json{{"format_version", 1}, {"kind", "scenes"}}.dump() << "\n";
    for (const Scene& s : scenes) {
        json placements = json::array();
        for (const Placement& p : s.placements) {
            placements.push_back(
                json{{"class", p.class_id}, {"cell", p.cell}, {"receptacle", p.is_receptacle}});
        }
        json palette = json::array();
        for (const Rgb& c : s.palette) palette.push_back(json::array({c.r, c.g, c.b}));
        out << json{{"scene_id", s.scene_id},
                    {"grid", s.grid},
                    {"placements", placements},
                    {"palette", palette}}
                   .dump()
            << "\n";
    }
}

std::vector<Scene> read_scenes(const std::string& path, const ClassVocabs& vocabs) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    std::string line;
    std::int64_t lineno = 0;
    std::vector<Scene> out;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            if (lineno == 1) {
                expect_header(line, "scenes");
                continue;
            }
            Scene s;
            s.scene_id = j.at("scene_id").get<int>();
            s.grid = j.at("grid").get<std::int64_t>();
            for (const json& jp : j.at("placements")) {
                Placement p;
                p.class_id = jp.at("class").get<int>();
                p.cell = jp.at("cell").get<std::int64_t>();
                p.is_receptacle = jp.at("receptacle").get<bool>();
                if (p.class_id <= 0 || p.class_id >= static_cast<int>(vocabs.objects.size())) {
                    throw ValidationError("placement class out of vocabulary");
                }
                s.placements.push_back(p);
            }
            for (const json& jc : j.at("palette")) {
                s.palette.push_back(Rgb{jc.at(0).get<std::uint8_t>(), jc.at(1).get<std::uint8_t>(),
                                        jc.at(2).get<std::uint8_t>()});
            }
            out.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw ParseError(std::string("bad scene record: ") + e.what(), lineno);
        } catch (const ValidationError& e) {
            throw ParseError(e.what(), lineno);
        }
    }
    return out;
}

void write_corpus(const Corpus& corpus, const GenConfig& cfg, const std::string& dir) {
    std::filesystem::create_directories(dir);
    write_episodes(corpus.episodes, dir + "/episodes.jsonl");
    write_scenes(corpus.scenes, dir + "/scenes.jsonl");
    kv_write_file(dir + "/gen_config.txt", cfg.to_kv());
}

Corpus read_corpus(const std::string& dir, const ClassVocabs& vocabs) {
    Corpus corpus;
    corpus.episodes = read_episodes(dir + "/episodes.jsonl", vocabs);
    corpus.scenes = read_scenes(dir + "/scenes.jsonl", vocabs);
    return corpus;
}

EmbeddedStepInputs apply_modality_mask(EmbeddedStepInputs inputs, const ModalityMask& mask) {
    const auto zero_like = [](const Tensor& t) { return Tensor::zeros(t.shape()); };
    if (!mask.use_rgb_current) inputs.rgb_current = zero_like(inputs.rgb_current);
    if (!mask.use_bbox_current) inputs.bbox_current = zero_like(inputs.bbox_current);
    for (EmbeddingPair& pair : inputs.visual_history) {
        if (!mask.use_rgb_history) pair.rgb = zero_like(pair.rgb);
        if (!mask.use_bbox_history) pair.bbox = zero_like(pair.bbox);
    }
    if (!mask.use_subgoal_history) {
        inputs.subgoal_feats = zero_like(inputs.subgoal_feats);
        inputs.subgoal_ids.assign(inputs.subgoal_ids.size(), kPadId);
    }
    return inputs;
}

Vocabulary build_vocabulary(const Corpus& corpus, const ClassVocabs& vocabs) {
    std::vector<std::string> texts;
    for (const Episode& ep : corpus.episodes) {
        if (ep.split == "train") texts.push_back(ep.instruction);
    }
    for (const std::string& name : action_names()) texts.push_back(name);
    for (const std::string& name : vocabs.objects) texts.push_back(name);
    for (const std::string& name : vocabs.receptacles) texts.push_back(name);
    return Vocabulary::build(texts);
}

}  // namespace histplan
