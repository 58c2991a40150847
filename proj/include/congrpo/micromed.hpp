#pragma once
// MicroMed: a deterministic synthetic multiple-choice VQA benchmark.
//
// Each latent case stands in for one image. It carries a modality, an anatomy
// and, when abnormal, a lesion region and pathology. Every case is asked up
// to five questions, one per task axis. Options are single content tokens so
// answers and thoughts are rule-checkable.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "congrpo/sample.hpp"
#include "congrpo/vocabulary.hpp"

namespace congrpo::micromed {

inline constexpr int kNumModalities = 10;
inline constexpr int kNumAnatomies = 10;
inline constexpr int kNumPathologies = 6;
inline constexpr int kNumParaphrases = 10;

// Observation layout: [modality(10) | anatomy(10) | absent,present(2) |
// region(5) | pathology(6)].
inline constexpr int kModalityOffset = 0;
inline constexpr int kAnatomyOffset = kModalityOffset + kNumModalities;
inline constexpr int kAnomalyOffset = kAnatomyOffset + kNumAnatomies;
inline constexpr int kRegionOffset = kAnomalyOffset + 2;
inline constexpr int kPathologyOffset = kRegionOffset + kNumRegions;
inline constexpr int kObservationDim = kPathologyOffset + kNumPathologies;

std::span<const std::string_view> modality_tokens();
std::span<const std::string_view> anatomy_tokens();
std::span<const std::string_view> pathology_tokens();
std::span<const std::string_view> region_tokens();
// "present", "absent", then two never-correct distractors.
std::span<const std::string_view> anomaly_tokens();

std::string_view region_token(Region region);

// Token alphabet shared by the policy, the parser and the evaluator.
Vocabulary make_vocabulary();

// Candidate option contents for an axis; the truth is always one of them.
std::span<const std::string_view> answer_class_set(TaskAxis axis);

bool axis_legal(const LatentCase& c, TaskAxis axis);

// Ground-truth option content for (case, axis). Throws InputError when the
// axis needs an anomaly and the case has none.
std::string derive_answer(const LatentCase& c, TaskAxis axis);

// Question text for paraphrase_id in 1..10.
std::string question_text(TaskAxis axis, int paraphrase_id);

// Template chain-of-thought citing the latent evidence.
std::vector<std::string> gold_thought(const LatentCase& c, TaskAxis axis);

// Class one-hots scaled by `scale` plus N(0, sigma^2) noise drawn from
// noise_seed. sigma = 0 gives the exact concatenation.
std::vector<double> render_observation(const LatentCase& c, std::uint64_t noise_seed,
                                       double sigma, double scale = 1.0);

struct GeneratorConfig {
  std::uint64_t seed = 0;
  std::array<int, kNumAxes> per_axis{2286, 2286, 2286, 2286, 2286};
  double test_fraction = 0.3;
  double noise_sigma = 0.1;
  double anomaly_rate = 0.5;
  // Paraphrase ids reserved for the test split (empty: all ids in both).
  std::vector<int> heldout_paraphrases;
};

void validate(const GeneratorConfig& cfg);  // throws ConfigError

struct Dataset {
  GeneratorConfig config;
  std::vector<Sample> samples;  // generation order; split tag on each sample

  std::vector<Sample> split(Split which) const;
};

Dataset generate(const GeneratorConfig& cfg);

}  // namespace congrpo::micromed
