// histplan: data generation, training, evaluation, ablation grids and
// closed-loop simulated rollouts for the sub-goal planner.
//
// Exit codes: 0 success, 1 usage, 2 data/validation error, 3 numeric failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "histplan/agent.hpp"
#include "histplan/checkpoint.hpp"
#include "histplan/trainer.hpp"

namespace {

using namespace histplan;

constexpr const char* kConfigEnvVar = "HISTPLAN_CONFIG";

/// Layered config: env-var default file, then --config, then explicit flags.
struct KvOverrides {
    std::string config_path;
    KvMap flag_values;

    KvMap resolve() const {
        KvMap kv;
        if (const char* env = std::getenv(kConfigEnvVar); env && *env && config_path.empty()) {
            kv = kv_parse_file(env);
        }
        if (!config_path.empty()) {
            for (const auto& [k, v] : kv_parse_file(config_path)) kv[k] = v;
        }
        for (const auto& [k, v] : flag_values) kv[k] = v;
        return kv;
    }
};

void add_config_flag(CLI::App* cmd, KvOverrides& kv) {
    cmd->add_option("--config", kv.config_path, "key = value config file (flags win)");
}

void add_kv_flag(CLI::App* cmd, KvOverrides& kv, const std::string& flag, const std::string& key,
                 const std::string& help) {
    cmd->add_option_function<std::string>(
        flag, [&kv, key](const std::string& v) { kv.flag_values[key] = v; }, help);
}

void add_train_flags(CLI::App* cmd, KvOverrides& kv) {
    add_kv_flag(cmd, kv, "--seed", "seed", "training seed");
    add_kv_flag(cmd, kv, "--epochs", "epochs", "epoch budget");
    add_kv_flag(cmd, kv, "--batch-size", "batch_size", "steps per optimizer update");
    add_kv_flag(cmd, kv, "--lr", "learning_rate", "Adam learning rate");
    add_kv_flag(cmd, kv, "--mask", "mask", "modality mask preset (full, no-vision, no-history, no-bbox)");
    add_kv_flag(cmd, kv, "--dim", "dim", "embedding width d");
    add_kv_flag(cmd, kv, "--heads", "heads", "attention heads");
    add_kv_flag(cmd, kv, "--depth-vision", "depth_vision", "visual encoder depth");
    add_kv_flag(cmd, kv, "--depth-text", "depth_text", "text encoder depth");
    add_kv_flag(cmd, kv, "--seq-len", "seq_len", "text token budget T");
    add_kv_flag(cmd, kv, "--history-window", "history_window", "observation history window l");
    add_kv_flag(cmd, kv, "--image-size", "image_size", "input image side");
    add_kv_flag(cmd, kv, "--patch-size", "patch_size", "ViT patch side");
    add_kv_flag(cmd, kv, "--mlp-ratio", "mlp_ratio", "transformer MLP width multiplier");
    add_kv_flag(cmd, kv, "--fusion-stages", "fusion_stages", "number of fusion exchanges");
}

void write_loss_trace(const std::string& path, const std::vector<LossTracePoint>& trace) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    out << "step,loss\n";
    out.precision(17);
    for (const LossTracePoint& p : trace) out << p.step << "," << p.loss << "\n";
}

FailureInjector parse_injections(const std::vector<std::string>& specs, std::uint64_t seed) {
    FailureInjector injector;
    injector.seed = seed;
    for (const std::string& spec : specs) {
        const auto at = spec.find('@');
        if (at == std::string::npos) {
            throw ValidationError("--inject expects kind@step, got '" + spec + "'");
        }
        FailureEvent ev;
        ev.kind = failure_kind_from_name(spec.substr(0, at));
        try {
            ev.step = std::stoll(spec.substr(at + 1));
        } catch (const std::exception&) {
            throw ValidationError("bad step index in '" + spec + "'");
        }
        injector.schedule.push_back(ev);
    }
    return injector;
}

int cmd_gen_data(const std::string& out_dir, const KvOverrides& kv) {
    GenConfig cfg = GenConfig::from_kv(kv.resolve());
    const ClassVocabs vocabs = ClassVocabs::desk();
    const Corpus corpus = generate_corpus(cfg, vocabs);
    write_corpus(corpus, cfg, out_dir);
    std::cout << "wrote " << corpus.episodes.size() << " episodes over " << corpus.scenes.size()
              << " scenes to " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& corpus_dir, const std::string& out_dir, const std::string& resume,
              const KvOverrides& kv) {
    const ClassVocabs vocabs = ClassVocabs::desk();
    const Corpus corpus = read_corpus(corpus_dir, vocabs);
    TrainConfig cfg = train_config_from_kv(kv.resolve());

    std::optional<LoadedCheckpoint> resumed;
    TrainOptions options;
    options.checkpoint_dir = out_dir;
    if (!resume.empty()) {
        resumed = load_checkpoint(resume);
        options.resume = &*resumed;
        cfg.model = resumed->config.model;  // architecture is fixed by the checkpoint
    }
    options.on_epoch = [](std::int64_t epoch, double mean_loss) {
        std::cout << "epoch " << epoch << " mean_loss " << mean_loss << "\n";
    };

    const TrainResult result = train(corpus, cfg, vocabs, options);
    write_loss_trace(out_dir + "/loss_trace.csv", result.trace);
    std::cout << "trained " << result.meta.epoch << " epochs (" << result.meta.step_count
              << " optimizer steps); checkpoint in " << out_dir << "\n";
    return 0;
}

int cmd_eval(const std::string& corpus_dir, const std::string& checkpoint_dir,
             const std::string& split, const std::string& mask_flag, bool pretty,
             const std::string& out_dir) {
    const ClassVocabs vocabs = ClassVocabs::desk();
    const Corpus corpus = read_corpus(corpus_dir, vocabs);
    const LoadedCheckpoint loaded = load_checkpoint(checkpoint_dir);
    const ModalityMask mask =
        mask_flag.empty() ? loaded.config.mask : ModalityMask::from_preset(mask_flag);

    EvalReport report;
    if (split == "all") {
        for (const char* s : {"train", "valid_seen", "valid_unseen"}) {
            report.rows.push_back(evaluate(loaded.model, corpus, s, mask));
        }
    } else {
        report.rows.push_back(evaluate(loaded.model, corpus, split, mask));
    }
    std::cout << report.to_text(pretty);
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream out(out_dir + "/eval_report.txt");
        out << report.to_text(false);
        KvMap kv;
        kv["corpus"] = corpus_dir;
        kv["checkpoint"] = checkpoint_dir;
        kv["split"] = split;
        kv["mask"] = mask.preset_name();
        kv_write_file(out_dir + "/run_config.txt", kv);
    }
    return 0;
}

int cmd_ablate(const std::string& corpus_dir, const std::string& out_dir, bool pretty,
               const KvOverrides& kv) {
    const ClassVocabs vocabs = ClassVocabs::desk();
    const Corpus corpus = read_corpus(corpus_dir, vocabs);
    const TrainConfig cfg = train_config_from_kv(kv.resolve());
    std::filesystem::create_directories(out_dir);
    const EvalReport report =
        ablation_grid(corpus, cfg, vocabs, ablation_masks(), out_dir,
                      [](const std::string& line) { std::cout << line << "\n"; });
    std::cout << report.to_text(pretty);
    {
        std::ofstream out(out_dir + "/ablation.txt");
        out << report.to_text(false);
    }
    kv_write_file(out_dir + "/run_config.txt", train_config_to_kv(cfg));
    return 0;
}

int cmd_simulate(const std::string& corpus_dir, const std::string& checkpoint_dir,
                 const std::string& policy_name, std::int64_t episode_index,
                 const std::string& split, std::int64_t count,
                 const std::vector<std::string>& inject_specs, std::uint64_t seed,
                 std::int64_t limit, const std::string& out_dir) {
    const ClassVocabs vocabs = ClassVocabs::desk();
    const Corpus corpus = read_corpus(corpus_dir, vocabs);

    std::optional<LoadedCheckpoint> loaded;
    if (policy_name == "model") {
        if (checkpoint_dir.empty()) {
            throw ValidationError("--checkpoint is required with --policy model");
        }
        loaded = load_checkpoint(checkpoint_dir);
    }

    std::vector<const Episode*> selected;
    if (episode_index >= 0) {
        if (episode_index >= static_cast<std::int64_t>(corpus.episodes.size())) {
            throw ValidationError("--episode index out of range");
        }
        selected.push_back(&corpus.episodes[static_cast<std::size_t>(episode_index)]);
    } else {
        selected = corpus.split(split);
        if (count > 0 && count < static_cast<std::int64_t>(selected.size())) {
            selected.resize(static_cast<std::size_t>(count));
        }
    }
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    const FailureInjector injector = parse_injections(inject_specs, seed);
    std::int64_t successes = 0;
    for (std::size_t i = 0; i < selected.size(); ++i) {
        const Episode& ep = *selected[i];
        RunSpec spec;
        spec.scene = &corpus.scene_by_id(ep.scene_id);
        spec.instruction = ep.instruction;
        spec.task = ep.task;
        spec.step_limit = limit > 0 ? limit : default_step_limit(ep);
        spec.image_size = ep.steps.front().obs.rgb.height;

        std::vector<SubGoal> plan;
        for (const EpisodeStep& s : ep.steps) plan.push_back(s.subgoal);

        Trajectory traj;
        if (policy_name == "model") {
            ModelPolicy policy(loaded->model, loaded->config.mask);
            traj = run_agent(policy, spec, injector, vocabs);
        } else if (policy_name == "oracle") {
            ScriptedPolicy policy(plan);
            traj = run_agent(policy, spec, injector, vocabs);
        } else if (policy_name == "oracle-recovery") {
            RecoveryPolicy policy(plan);
            traj = run_agent(policy, spec, injector, vocabs);
        } else {
            throw ValidationError("unknown policy '" + policy_name +
                                  "' (expected model, oracle, or oracle-recovery)");
        }
        successes += traj.status == RunStatus::Success;
        std::cout << "run " << i << " " << traj.summary_line() << "\n";
        if (!out_dir.empty()) {
            write_trajectory(traj, out_dir + "/trajectory_" + std::to_string(i) + ".jsonl");
        }
    }
    std::cout << "success " << successes << "/" << selected.size() << "\n";
    if (!out_dir.empty()) {
        KvMap kv;
        kv["corpus"] = corpus_dir;
        kv["checkpoint"] = checkpoint_dir;
        kv["policy"] = policy_name;
        kv["seed"] = std::to_string(seed);
        kv["split"] = split;
        for (std::size_t i = 0; i < inject_specs.size(); ++i) {
            kv["inject" + std::to_string(i)] = inject_specs[i];
        }
        kv_write_file(out_dir + "/run_config.txt", kv);
    }
    return 0;
}

int cmd_inspect(const std::string& path) {
    const std::string file =
        std::filesystem::is_directory(path) ? path + "/model.ckpt" : path;
    const CheckpointInfo info = inspect_checkpoint(file);
    std::cout << "step_count " << info.meta.step_count << "\n";
    std::cout << "epoch " << info.meta.epoch << "\n";
    for (const CheckpointEntry& e : info.entries) {
        std::cout << e.name << " " << shape_str(e.shape) << " offset " << e.offset << "\n";
    }
    std::cout << "parameters " << info.total_values << " (" << info.entries.size()
              << " tensors)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"history-aware sub-goal planner workbench"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic episode corpus");
    std::string gen_out;
    KvOverrides gen_kv;
    gen->add_option("--out", gen_out, "output corpus directory")->required();
    add_config_flag(gen, gen_kv);
    add_kv_flag(gen, gen_kv, "--seed", "seed", "generator seed");
    add_kv_flag(gen, gen_kv, "--scenes", "num_scenes", "scene count");
    add_kv_flag(gen, gen_kv, "--unseen-scenes", "unseen_scenes", "held-out scene count");
    add_kv_flag(gen, gen_kv, "--train-episodes", "train_episodes", "train episode count");
    add_kv_flag(gen, gen_kv, "--eval-episodes", "eval_episodes_per_split",
                "episodes per validation split");
    add_kv_flag(gen, gen_kv, "--grid", "grid", "world grid side");
    add_kv_flag(gen, gen_kv, "--image-size", "image_size", "rendered image side");

    // train
    auto* tr = app.add_subcommand("train", "teacher-forced training");
    std::string tr_corpus, tr_out, tr_resume;
    KvOverrides tr_kv;
    tr->add_option("--corpus", tr_corpus, "corpus directory")->required();
    tr->add_option("--out", tr_out, "checkpoint/output directory")->required();
    tr->add_option("--resume", tr_resume, "checkpoint directory to warm-start from");
    add_config_flag(tr, tr_kv);
    add_train_flags(tr, tr_kv);

    // eval
    auto* ev = app.add_subcommand("eval", "teacher-forced accuracy report");
    std::string ev_corpus, ev_ckpt, ev_split = "valid_unseen", ev_mask, ev_out;
    bool ev_pretty = false;
    ev->add_option("--corpus", ev_corpus, "corpus directory")->required();
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint directory")->required();
    ev->add_option("--split", ev_split, "train, valid_seen, valid_unseen or all");
    ev->add_option("--mask", ev_mask, "override the checkpoint's modality mask");
    ev->add_flag("--pretty", ev_pretty, "aligned human-readable table");
    ev->add_option("--out", ev_out, "directory for the report file");

    // ablate
    auto* ab = app.add_subcommand("ablate", "train + evaluate every modality-mask row");
    std::string ab_corpus, ab_out;
    bool ab_pretty = false;
    KvOverrides ab_kv;
    ab->add_option("--corpus", ab_corpus, "corpus directory")->required();
    ab->add_option("--out", ab_out, "output directory")->required();
    ab->add_flag("--pretty", ab_pretty, "aligned human-readable table");
    add_config_flag(ab, ab_kv);
    add_train_flags(ab, ab_kv);

    // simulate
    auto* sim = app.add_subcommand("simulate", "closed-loop rollouts with failure injection");
    std::string sim_corpus, sim_ckpt, sim_policy = "model", sim_split = "valid_unseen", sim_out;
    std::int64_t sim_episode = -1, sim_count = 0, sim_limit = 0;
    std::uint64_t sim_seed = 0;
    std::vector<std::string> sim_inject;
    sim->add_option("--corpus", sim_corpus, "corpus directory")->required();
    sim->add_option("--checkpoint", sim_ckpt, "checkpoint directory (model policy)");
    sim->add_option("--policy", sim_policy, "model, oracle, or oracle-recovery");
    sim->add_option("--episode", sim_episode, "single episode index");
    sim->add_option("--split", sim_split, "episodes to roll out when --episode is unset");
    sim->add_option("--count", sim_count, "cap on rollouts (0 = whole split)");
    sim->add_option("--inject", sim_inject, "failure as kind@step (repeatable)");
    sim->add_option("--seed", sim_seed, "injector seed");
    sim->add_option("--limit", sim_limit, "step limit (0 = 3x ground-truth length)");
    sim->add_option("--out", sim_out, "directory for trajectory logs");

    // inspect-checkpoint
    auto* ins = app.add_subcommand("inspect-checkpoint", "print a checkpoint's header");
    std::string ins_path;
    ins->add_option("--checkpoint", ins_path, "checkpoint directory or model.ckpt file")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 1;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_out, gen_kv);
        if (tr->parsed()) return cmd_train(tr_corpus, tr_out, tr_resume, tr_kv);
        if (ev->parsed()) return cmd_eval(ev_corpus, ev_ckpt, ev_split, ev_mask, ev_pretty, ev_out);
        if (ab->parsed()) return cmd_ablate(ab_corpus, ab_out, ab_pretty, ab_kv);
        if (sim->parsed()) {
            return cmd_simulate(sim_corpus, sim_ckpt, sim_policy, sim_episode, sim_split,
                                sim_count, sim_inject, sim_seed, sim_limit, sim_out);
        }
        if (ins->parsed()) return cmd_inspect(ins_path);
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
