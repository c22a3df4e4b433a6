#include "histplan/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace histplan {

namespace {

constexpr const char* kMagic = "histplan-checkpoint v1";

void write_f32_le(std::ostream& out, double value) {
    const float f = static_cast<float>(value);
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    const unsigned char bytes[4] = {
        static_cast<unsigned char>(bits & 0xff), static_cast<unsigned char>((bits >> 8) & 0xff),
        static_cast<unsigned char>((bits >> 16) & 0xff),
        static_cast<unsigned char>((bits >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(bytes), 4);
}

double read_f32_le(std::istream& in) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    if (!in) throw ValidationError("checkpoint payload truncated");
    const std::uint32_t bits = static_cast<std::uint32_t>(bytes[0]) |
                               (static_cast<std::uint32_t>(bytes[1]) << 8) |
                               (static_cast<std::uint32_t>(bytes[2]) << 16) |
                               (static_cast<std::uint32_t>(bytes[3]) << 24);
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    return static_cast<double>(f);
}

}  // namespace

void save_checkpoint(const std::string& dir, PlannerModel& model, const TrainConfig& cfg,
                     const CheckpointMeta& meta) {
    std::filesystem::create_directories(dir);
    const std::string ckpt_path = dir + "/model.ckpt";
    std::ofstream out(ckpt_path, std::ios::binary);
    if (!out) throw ValidationError("cannot write checkpoint '" + ckpt_path + "'");

    std::ostringstream header;
    header << kMagic << "\n";
    header << "meta step_count " << meta.step_count << "\n";
    header << "meta epoch " << meta.epoch << "\n";
    std::int64_t offset = 0;
    model.for_each_param([&](const std::string& name, Tensor& t) {
        header << "param " << name << " " << t.ndim();
        for (auto d : t.shape()) header << " " << d;
        header << " offset " << offset << "\n";
        offset += t.numel() * 4;
    });
    header << "end\n";
    out << header.str();
    model.for_each_param([&](const std::string&, Tensor& t) {
        for (double v : t.data()) write_f32_le(out, v);
    });
    if (!out) throw ValidationError("write failure on checkpoint '" + ckpt_path + "'");
    out.close();

    model.vocab().save(dir + "/vocab.txt");
    {
        std::ofstream cls(dir + "/classes.txt");
        if (!cls) throw ValidationError("cannot write '" + dir + "/classes.txt'");
        for (const auto& name : model.classes().objects) cls << "object " << name << "\n";
        for (const auto& name : model.classes().receptacles) cls << "receptacle " << name << "\n";
    }
    kv_write_file(dir + "/config.txt", train_config_to_kv(cfg));
}

CheckpointInfo inspect_checkpoint(const std::string& ckpt_file) {
    std::ifstream in(ckpt_file, std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint '" + ckpt_file + "'");
    std::string line;
    std::int64_t lineno = 0;
    if (!std::getline(in, line) || line != kMagic) {
        throw ParseError("not a checkpoint file (bad magic)", 1);
    }
    ++lineno;
    CheckpointInfo info;
    while (std::getline(in, line)) {
        ++lineno;
        if (line == "end") {
            return info;
        }
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "meta") {
            std::string key;
            std::int64_t value;
            if (!(ls >> key >> value)) throw ParseError("malformed meta line", lineno);
            if (key == "step_count") info.meta.step_count = value;
            else if (key == "epoch") info.meta.epoch = value;
        } else if (kind == "param") {
            CheckpointEntry e;
            std::int64_t ndim = 0;
            if (!(ls >> e.name >> ndim)) throw ParseError("malformed param line", lineno);
            for (std::int64_t i = 0; i < ndim; ++i) {
                std::int64_t d;
                if (!(ls >> d)) throw ParseError("malformed param shape", lineno);
                e.shape.push_back(d);
            }
            std::string off_kw;
            if (!(ls >> off_kw >> e.offset) || off_kw != "offset") {
                throw ParseError("malformed param offset", lineno);
            }
            info.total_values += shape_numel(e.shape);
            info.entries.push_back(std::move(e));
        } else {
            throw ParseError("unknown checkpoint header line '" + line + "'", lineno);
        }
    }
    throw ParseError("checkpoint header not terminated by 'end'", lineno);
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
    const std::string ckpt_path = dir + "/model.ckpt";
    const CheckpointInfo info = inspect_checkpoint(ckpt_path);
    const TrainConfig cfg = train_config_from_kv(kv_parse_file(dir + "/config.txt"));
    const Vocabulary vocab = Vocabulary::load(dir + "/vocab.txt");

    ClassVocabs classes;
    {
        std::ifstream cls(dir + "/classes.txt");
        if (!cls) throw ValidationError("cannot open '" + dir + "/classes.txt'");
        std::string kind, name;
        while (cls >> kind >> name) {
            if (kind == "object") classes.objects.push_back(name);
            else if (kind == "receptacle") classes.receptacles.push_back(name);
            else throw ValidationError("unknown class kind '" + kind + "' in classes.txt");
        }
    }

    LoadedCheckpoint loaded{PlannerModel(cfg.model, std::move(classes), vocab), cfg, info.meta};

    std::ifstream in(ckpt_path, std::ios::binary);
    std::string line;
    while (std::getline(in, line)) {
        if (line == "end") break;
    }
    const std::streampos payload_start = in.tellg();

    std::size_t next = 0;
    loaded.model.for_each_param([&](const std::string& name, Tensor& t) {
        if (next >= info.entries.size()) {
            throw ValidationError("checkpoint is missing parameter '" + name + "'");
        }
        const CheckpointEntry& e = info.entries[next++];
        if (e.name != name || e.shape != t.shape()) {
            throw ValidationError("checkpoint entry '" + e.name + "' " + shape_str(e.shape) +
                                  " does not match model parameter '" + name + "' " +
                                  shape_str(t.shape()));
        }
        in.seekg(payload_start + static_cast<std::streamoff>(e.offset));
        for (auto& v : t.data()) v = read_f32_le(in);
    });
    if (next != info.entries.size()) {
        throw ValidationError("checkpoint has " + std::to_string(info.entries.size() - next) +
                              " extra parameter entries");
    }
    return loaded;
}

}  // namespace histplan
