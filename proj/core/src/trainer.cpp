#include "histplan/trainer.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "histplan/heads.hpp"
#include "histplan/history.hpp"

namespace histplan {

std::string EvalReport::to_text(bool pretty) const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    if (pretty) {
        os << std::left << std::setw(14) << "split" << std::setw(12) << "mask" << std::right
           << std::setw(9) << "actions" << std::setw(9) << "objects" << std::setw(13)
           << "receptacles" << std::setw(9) << "total" << std::setw(8) << "steps" << "\n";
        for (const EvalRow& r : rows) {
            os << std::left << std::setw(14) << r.split << std::setw(12) << r.mask << std::right
               << std::setw(9) << r.actions << std::setw(9) << r.objects << std::setw(13)
               << r.receptacles << std::setw(9) << r.total << std::setw(8) << r.steps << "\n";
        }
    } else {
        os << "split mask actions objects receptacles total steps\n";
        for (const EvalRow& r : rows) {
            os << r.split << " " << r.mask << " " << r.actions << " " << r.objects << " "
               << r.receptacles << " " << r.total << " " << r.steps << "\n";
        }
    }
    return os.str();
}

StepQuery build_step_query(const Episode& episode, std::int64_t step, const ClassVocabs& vocabs) {
    if (step < 0 || step >= static_cast<std::int64_t>(episode.steps.size())) {
        throw ValidationError("step " + std::to_string(step) + " out of episode of length " +
                              std::to_string(episode.steps.size()));
    }
    StepQuery q;
    for (std::int64_t k = 0; k < step; ++k) {
        q.history.push_back(&episode.steps[static_cast<std::size_t>(k)].obs);
    }
    q.current = &episode.steps[static_cast<std::size_t>(step)].obs;
    q.instruction = episode.instruction;
    std::vector<SubGoal> prefix;
    for (std::int64_t k = 0; k < step; ++k) {
        prefix.push_back(episode.steps[static_cast<std::size_t>(k)].subgoal);
    }
    q.subgoal_text = render_subgoals(prefix, vocabs);
    return q;
}

namespace {

struct StepRef {
    const Episode* episode;
    std::int64_t step;
};

std::vector<StepRef> shuffled_train_steps(const Corpus& corpus, Rng& rng) {
    std::vector<const Episode*> episodes = corpus.split("train");
    for (std::size_t i = episodes.size(); i > 1; --i) {
        std::swap(episodes[i - 1],
                  episodes[static_cast<std::size_t>(rng.next_index(static_cast<std::int64_t>(i)))]);
    }
    std::vector<StepRef> steps;
    for (const Episode* ep : episodes) {
        for (std::int64_t n = 0; n < static_cast<std::int64_t>(ep->steps.size()); ++n) {
            steps.push_back(StepRef{ep, n});
        }
    }
    return steps;
}

}  // namespace

TrainResult train(const Corpus& corpus, TrainConfig cfg, const ClassVocabs& vocabs,
                  const TrainOptions& options) {
    if (corpus.split("train").empty()) throw ValidationError("corpus has no train episodes");
    cfg.model.num_objects = static_cast<std::int64_t>(vocabs.objects.size());
    cfg.model.num_receptacles = static_cast<std::int64_t>(vocabs.receptacles.size());
    cfg.model.validate();
    if (cfg.batch_size < 1) throw ValidationError("batch_size must be >= 1");

    const Vocabulary vocab =
        options.resume ? options.resume->model.vocab() : build_vocabulary(corpus, vocabs);

    TrainResult result{options.resume ? options.resume->model
                                      : PlannerModel(cfg.model, vocabs, vocab),
                       cfg,
                       {},
                       {},
                       options.resume ? options.resume->meta : CheckpointMeta{}};
    PlannerModel& model = result.model;
    if (!options.resume) model.init_params(cfg.seed);

    AdamState adam(cfg.learning_rate);
    auto params = model.named_params();
    std::vector<Tensor*> param_ptrs;
    for (auto& [name, t] : params) param_ptrs.push_back(t);

    std::int64_t global_step = result.meta.step_count;
    Rng shuffle_rng = Rng(cfg.seed).fork(0x5bfa11);

    for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::vector<StepRef> steps = shuffled_train_steps(corpus, shuffle_rng);
        double epoch_loss_sum = 0.0;
        std::int64_t epoch_batches = 0;

        for (std::size_t lo = 0; lo < steps.size(); lo += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t hi =
                std::min(steps.size(), lo + static_cast<std::size_t>(cfg.batch_size));
            Tape tape;
            model.attach_all(tape);
            EmbedCache cache;
            std::vector<Tensor> losses;
            try {
                for (std::size_t s = lo; s < hi; ++s) {
                    const StepQuery q = build_step_query(*steps[s].episode, steps[s].step, vocabs);
                    const HeadLogits logits = model.predict(q, cfg.mask, &cache);
                    losses.push_back(
                        subgoal_loss(logits, steps[s].episode->steps[static_cast<std::size_t>(
                                                                         steps[s].step)]
                                                 .subgoal));
                }
                const Tensor batch_loss = mean_of(losses);
                tape.backward(batch_loss);
                std::vector<std::vector<double>> grads;
                grads.reserve(params.size());
                for (auto& [name, t] : params) grads.push_back(tape.grad_of(*t));
                model.detach_all();
                adam.step(param_ptrs, grads);
                ++global_step;
                result.trace.push_back(LossTracePoint{global_step, batch_loss.at(0)});
                epoch_loss_sum += batch_loss.at(0);
                ++epoch_batches;
            } catch (const NumericError& e) {
                throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                                   ", optimizer step " + std::to_string(global_step + 1) +
                                   ", batch starting at episode step " + std::to_string(lo) + ": " +
                                   e.what());
            }
        }

        const double mean_loss = epoch_batches ? epoch_loss_sum / static_cast<double>(epoch_batches)
                                               : 0.0;
        result.epoch_mean_loss.push_back(mean_loss);
        result.meta.step_count = global_step;
        result.meta.epoch += 1;
        if (options.on_epoch) options.on_epoch(result.meta.epoch, mean_loss);
        if (!options.checkpoint_dir.empty()) {
            save_checkpoint(options.checkpoint_dir, model, cfg, result.meta);
        }
    }
    if (!options.checkpoint_dir.empty()) {
        save_checkpoint(options.checkpoint_dir, model, cfg, result.meta);
    }
    return result;
}

EvalRow evaluate_with(const Corpus& corpus, const std::string& split,
                      const StepPredictor& predict) {
    const std::vector<const Episode*> episodes = corpus.split(split);
    if (episodes.empty()) throw ValidationError("split '" + split + "' is empty");
    std::int64_t steps = 0, action_hits = 0, object_hits = 0, receptacle_hits = 0, total_hits = 0;
    for (const Episode* ep : episodes) {
        for (std::int64_t n = 0; n < static_cast<std::int64_t>(ep->steps.size()); ++n) {
            const SubGoal truth = ep->steps[static_cast<std::size_t>(n)].subgoal;
            const SubGoal guess = predict(*ep, n);
            const bool a = guess.action == truth.action;
            const bool o = guess.object == truth.object;
            const bool r = guess.receptacle == truth.receptacle;
            ++steps;
            action_hits += a;
            object_hits += o;
            receptacle_hits += r;
            total_hits += (a && o && r);
        }
    }
    EvalRow row;
    row.split = split;
    row.steps = steps;
    const double scale = 100.0 / static_cast<double>(steps);
    row.actions = scale * static_cast<double>(action_hits);
    row.objects = scale * static_cast<double>(object_hits);
    row.receptacles = scale * static_cast<double>(receptacle_hits);
    row.total = scale * static_cast<double>(total_hits);
    if (row.total > std::min({row.actions, row.objects, row.receptacles}) + 1e-9) {
        throw NumericError("metric bookkeeping error: Total exceeds a per-head accuracy");
    }
    return row;
}

EvalRow evaluate(const PlannerModel& model, const Corpus& corpus, const std::string& split,
                 const ModalityMask& mask) {
    EmbedCache cache;  // parameters are fixed, so embeddings are reusable split-wide
    EvalRow row = evaluate_with(corpus, split, [&](const Episode& ep, std::int64_t n) {
        return model.plan(build_step_query(ep, n, model.classes()), mask, &cache);
    });
    row.mask = mask.preset_name();
    return row;
}

std::vector<ModalityMask> ablation_masks() {
    return {ModalityMask::full(), ModalityMask::no_vision(), ModalityMask::no_history(),
            ModalityMask::no_bbox()};
}

EvalReport ablation_grid(const Corpus& corpus, const TrainConfig& base_cfg,
                         const ClassVocabs& vocabs, const std::vector<ModalityMask>& masks,
                         const std::string& checkpoint_root,
                         std::function<void(const std::string&)> log) {
    EvalReport report;
    for (const ModalityMask& mask : masks) {
        TrainConfig cfg = base_cfg;
        cfg.mask = mask;
        TrainOptions options;
        if (!checkpoint_root.empty()) {
            options.checkpoint_dir = checkpoint_root + "/" + mask.preset_name();
        }
        if (log) log("training mask=" + mask.preset_name());
        TrainResult trained = train(corpus, cfg, vocabs, options);
        for (const char* split : {"valid_seen", "valid_unseen"}) {
            report.rows.push_back(evaluate(trained.model, corpus, split, mask));
            if (log) {
                const EvalRow& r = report.rows.back();
                std::ostringstream os;
                os << std::fixed << std::setprecision(2) << "  " << r.split << " total=" << r.total;
                log(os.str());
            }
        }
    }
    return report;
}

}  // namespace histplan
