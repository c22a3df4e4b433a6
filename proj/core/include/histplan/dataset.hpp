#pragma once

#include <string>
#include <vector>

#include "histplan/config.hpp"
#include "histplan/model.hpp"
#include "histplan/world.hpp"

namespace histplan {

struct EpisodeStep {
    Observation obs;  // the view before this step's sub-goal executes
    SubGoal subgoal;
    bool operator==(const EpisodeStep&) const = default;
};

struct Episode {
    std::string instruction;
    int scene_id = 0;
    std::string split;  // train | valid_seen | valid_unseen
    Task task;
    std::vector<EpisodeStep> steps;
};

bool episodes_equal(const Episode& a, const Episode& b);

struct GenConfig {
    std::uint64_t seed = 0;
    std::int64_t num_scenes = 24;
    std::int64_t unseen_scenes = 6;  // the trailing scene ids
    std::int64_t train_episodes = 480;
    std::int64_t eval_episodes_per_split = 60;
    std::int64_t grid = 8;
    std::int64_t image_size = 32;
    std::int64_t portable_sets = 1;  // 0: receptacles only

    KvMap to_kv() const;
    static GenConfig from_kv(const KvMap& kv);
};

/// Deterministic in (seed, config): placements sampled without collision,
/// per-class palette jittered per scene, and every fixture left reachable.
Scene generate_scene(std::uint64_t seed, int scene_id, const GenConfig& cfg,
                     const ClassVocabs& vocabs);

/// Expand a task template into its ground-truth sub-goal sequence and roll it
/// through the world, rendering an observation per step. The rolled-out
/// sequence must execute to success; anything else is a generation error.
Episode generate_episode(const Scene& scene, const Task& task, std::uint64_t seed,
                         const GenConfig& cfg, const ClassVocabs& vocabs);

struct Corpus {
    std::vector<Scene> scenes;
    std::vector<Episode> episodes;

    std::vector<const Episode*> split(const std::string& name) const;
    const Scene& scene_by_id(int id) const;
};

Corpus generate_corpus(const GenConfig& cfg, const ClassVocabs& vocabs);

// Newline-delimited JSON records; the first line carries the format version.
// Images travel as base64 of their raw row-major bytes with explicit
// dimensions. read_* raise ParseError with the offending line number.
void write_episodes(const std::vector<Episode>& episodes, const std::string& path);
std::vector<Episode> read_episodes(const std::string& path, const ClassVocabs& vocabs);
void write_scenes(const std::vector<Scene>& scenes, const std::string& path);
std::vector<Scene> read_scenes(const std::string& path, const ClassVocabs& vocabs);

/// Corpus directory layout: episodes.jsonl + scenes.jsonl + gen_config.txt.
void write_corpus(const Corpus& corpus, const GenConfig& cfg, const std::string& dir);
Corpus read_corpus(const std::string& dir, const ClassVocabs& vocabs);

/// Replace every disabled modality's features with zeros of the same shape
/// (and its token ids with [PAD]) so the additive integrations degrade to
/// exactly the reduced-modality model.
EmbeddedStepInputs apply_modality_mask(EmbeddedStepInputs inputs, const ModalityMask& mask);

/// Tokenizer vocabulary over the train split's instructions plus every
/// action/object/receptacle surface form.
Vocabulary build_vocabulary(const Corpus& corpus, const ClassVocabs& vocabs);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace histplan
