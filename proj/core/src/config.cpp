#include "histplan/config.hpp"

#include <fstream>
#include <sstream>

#include "histplan/tensor.hpp"

namespace histplan {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

bool kv_bool(const KvMap& kv, const std::string& key, bool fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    const std::string& v = it->second;
    if (v == "1" || v == "true" || v == "on") return true;
    if (v == "0" || v == "false" || v == "off") return false;
    throw ValidationError("config key '" + key + "' has non-boolean value '" + v + "'");
}

std::int64_t kv_int(const KvMap& kv, const std::string& key, std::int64_t fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        return std::stoll(it->second);
    } catch (const std::exception&) {
        throw ValidationError("config key '" + key + "' has non-integer value '" + it->second + "'");
    }
}

double kv_double(const KvMap& kv, const std::string& key, double fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw ValidationError("config key '" + key + "' has non-numeric value '" + it->second + "'");
    }
}

}  // namespace

std::string ModalityMask::preset_name() const {
    if (all_on()) return "full";
    if (!use_rgb_current && !use_bbox_current && !use_rgb_history && !use_bbox_history &&
        use_subgoal_history) {
        return "no-vision";
    }
    if (use_rgb_current && use_bbox_current && !use_rgb_history && !use_bbox_history &&
        !use_subgoal_history) {
        return "no-history";
    }
    if (use_rgb_current && !use_bbox_current && use_rgb_history && !use_bbox_history &&
        use_subgoal_history) {
        return "no-bbox";
    }
    return "custom";
}

ModalityMask ModalityMask::full() { return ModalityMask{}; }

ModalityMask ModalityMask::no_vision() {
    ModalityMask m;
    m.use_rgb_current = m.use_bbox_current = m.use_rgb_history = m.use_bbox_history = false;
    return m;
}

ModalityMask ModalityMask::no_history() {
    ModalityMask m;
    m.use_rgb_history = m.use_bbox_history = m.use_subgoal_history = false;
    return m;
}

ModalityMask ModalityMask::no_bbox() {
    ModalityMask m;
    m.use_bbox_current = m.use_bbox_history = false;
    return m;
}

ModalityMask ModalityMask::from_preset(const std::string& name) {
    if (name == "full") return full();
    if (name == "no-vision") return no_vision();
    if (name == "no-history") return no_history();
    if (name == "no-bbox") return no_bbox();
    throw ValidationError("unknown modality mask preset '" + name +
                          "' (expected full, no-vision, no-history, or no-bbox)");
}

void ModelConfig::validate() const {
    if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0) {
        throw ConfigError("image size " + std::to_string(image_size) +
                          " is not divisible by patch size " + std::to_string(patch_size));
    }
    if (dim <= 0 || heads <= 0 || dim % heads != 0) {
        throw ConfigError("width " + std::to_string(dim) + " is not divisible by head count " +
                          std::to_string(heads));
    }
    if (seq_len < 2) throw ConfigError("seq_len must be at least 2");
    if (history_window < 0) throw ConfigError("history_window must be >= 0");
    if (depth_vision < 1 || depth_text < 1) throw ConfigError("encoder depth must be >= 1");
    if (fusion_stages < 1) throw ConfigError("fusion_stages must be >= 1");
    if (num_actions != 9) throw ConfigError("the action vocabulary is fixed at 9 classes");
    if (num_objects < 2 || num_receptacles < 2) {
        throw ConfigError("object/receptacle vocabularies need at least their reserved class plus one");
    }
}

KvMap kv_parse_text(const std::string& text) {
    KvMap out;
    std::istringstream is(text);
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ParseError("expected 'key = value', got '" + t + "'", lineno);
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw ParseError("empty config key", lineno);
        out[key] = value;
    }
    return out;
}

KvMap kv_parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return kv_parse_text(ss.str());
}

void kv_write_file(const std::string& path, const KvMap& kv) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write config file '" + path + "'");
    for (const auto& [k, v] : kv) {
        out << k << " = " << v << "\n";
    }
}

KvMap train_config_to_kv(const TrainConfig& cfg) {
    KvMap kv;
    kv["image_size"] = std::to_string(cfg.model.image_size);
    kv["patch_size"] = std::to_string(cfg.model.patch_size);
    kv["dim"] = std::to_string(cfg.model.dim);
    kv["heads"] = std::to_string(cfg.model.heads);
    kv["depth_vision"] = std::to_string(cfg.model.depth_vision);
    kv["depth_text"] = std::to_string(cfg.model.depth_text);
    kv["seq_len"] = std::to_string(cfg.model.seq_len);
    kv["history_window"] = std::to_string(cfg.model.history_window);
    kv["mlp_ratio"] = std::to_string(cfg.model.mlp_ratio);
    kv["fusion_stages"] = std::to_string(cfg.model.fusion_stages);
    kv["num_actions"] = std::to_string(cfg.model.num_actions);
    kv["num_objects"] = std::to_string(cfg.model.num_objects);
    kv["num_receptacles"] = std::to_string(cfg.model.num_receptacles);
    kv["epochs"] = std::to_string(cfg.epochs);
    kv["batch_size"] = std::to_string(cfg.batch_size);
    {
        std::ostringstream os;
        os.precision(17);
        os << cfg.learning_rate;
        kv["learning_rate"] = os.str();
    }
    kv["seed"] = std::to_string(cfg.seed);
    kv["mask"] = cfg.mask.preset_name();
    kv["mask_rgb_current"] = cfg.mask.use_rgb_current ? "1" : "0";
    kv["mask_bbox_current"] = cfg.mask.use_bbox_current ? "1" : "0";
    kv["mask_rgb_history"] = cfg.mask.use_rgb_history ? "1" : "0";
    kv["mask_bbox_history"] = cfg.mask.use_bbox_history ? "1" : "0";
    kv["mask_subgoal_history"] = cfg.mask.use_subgoal_history ? "1" : "0";
    return kv;
}

TrainConfig train_config_from_kv(const KvMap& kv) {
    TrainConfig cfg;
    cfg.model.image_size = kv_int(kv, "image_size", cfg.model.image_size);
    cfg.model.patch_size = kv_int(kv, "patch_size", cfg.model.patch_size);
    cfg.model.dim = kv_int(kv, "dim", cfg.model.dim);
    cfg.model.heads = kv_int(kv, "heads", cfg.model.heads);
    cfg.model.depth_vision = kv_int(kv, "depth_vision", cfg.model.depth_vision);
    cfg.model.depth_text = kv_int(kv, "depth_text", cfg.model.depth_text);
    cfg.model.seq_len = kv_int(kv, "seq_len", cfg.model.seq_len);
    cfg.model.history_window = kv_int(kv, "history_window", cfg.model.history_window);
    cfg.model.mlp_ratio = kv_int(kv, "mlp_ratio", cfg.model.mlp_ratio);
    cfg.model.fusion_stages = kv_int(kv, "fusion_stages", cfg.model.fusion_stages);
    cfg.model.num_actions = kv_int(kv, "num_actions", cfg.model.num_actions);
    cfg.model.num_objects = kv_int(kv, "num_objects", cfg.model.num_objects);
    cfg.model.num_receptacles = kv_int(kv, "num_receptacles", cfg.model.num_receptacles);
    cfg.epochs = kv_int(kv, "epochs", cfg.epochs);
    cfg.batch_size = kv_int(kv, "batch_size", cfg.batch_size);
    cfg.learning_rate = kv_double(kv, "learning_rate", cfg.learning_rate);
    cfg.seed = static_cast<std::uint64_t>(kv_int(kv, "seed", static_cast<std::int64_t>(cfg.seed)));
    if (auto it = kv.find("mask"); it != kv.end() && it->second != "custom") {
        cfg.mask = ModalityMask::from_preset(it->second);
    }
    cfg.mask.use_rgb_current = kv_bool(kv, "mask_rgb_current", cfg.mask.use_rgb_current);
    cfg.mask.use_bbox_current = kv_bool(kv, "mask_bbox_current", cfg.mask.use_bbox_current);
    cfg.mask.use_rgb_history = kv_bool(kv, "mask_rgb_history", cfg.mask.use_rgb_history);
    cfg.mask.use_bbox_history = kv_bool(kv, "mask_bbox_history", cfg.mask.use_bbox_history);
    cfg.mask.use_subgoal_history = kv_bool(kv, "mask_subgoal_history", cfg.mask.use_subgoal_history);
    return cfg;
}

}  // namespace histplan
