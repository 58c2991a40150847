#include "congrpo/micromed.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "congrpo/errors.hpp"
#include "congrpo/rng.hpp"

namespace congrpo {

namespace {
constexpr std::array<std::string_view, kNumAxes> kAxisNames{
    "anatomy_identification", "modality_classification", "anomaly_detection",
    "pathology_characterization", "lesion_localization"};
}  // namespace

std::string_view axis_name(TaskAxis axis) { return kAxisNames[axis_index(axis)]; }

std::optional<TaskAxis> axis_from_name(std::string_view name) {
  for (int i = 0; i < kNumAxes; ++i) {
    if (kAxisNames[i] == name) return static_cast<TaskAxis>(i);
  }
  return std::nullopt;
}

std::string_view split_name(Split split) { return split == Split::kTrain ? "train" : "test"; }

std::optional<Split> split_from_name(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "test") return Split::kTest;
  return std::nullopt;
}

}  // namespace congrpo

namespace congrpo::micromed {
namespace {

constexpr std::array<std::string_view, kNumModalities> kModalities{
    "xray", "ct", "mri", "ultrasound", "pet",
    "fundus", "dermoscopy", "endoscopy", "histology", "mammography"};
constexpr std::array<std::string_view, kNumAnatomies> kAnatomies{
    "brain", "chest", "abdomen", "knee", "spine",
    "retina", "skin", "colon", "breast", "liver"};
constexpr std::array<std::string_view, kNumPathologies> kPathologies{
    "tumor", "hemorrhage", "infarct", "fracture", "inflammation", "cyst"};
constexpr std::array<std::string_view, kNumRegions> kRegions{
    "left-upper", "right-upper", "left-lower", "right-lower", "center"};
constexpr std::array<std::string_view, 4> kAnomalyAnswers{
    "present", "absent", "indeterminate", "artifact"};

// Thought scaffolding words.
constexpr std::string_view kObserve = "observe";
constexpr std::string_view kSep = ";";
constexpr std::string_view kTherefore = "therefore";
constexpr std::string_view kShows = "shows";
constexpr std::string_view kLesion = "lesion";
constexpr std::string_view kNoLesion = "no-lesion";
constexpr std::string_view kAt = "at";

using QuestionBank = std::array<std::string_view, kNumParaphrases>;

constexpr std::array<QuestionBank, kNumAxes> kQuestions{{
    {"Which anatomical structure is shown in this image?",
     "What body part does this image depict?",
     "Identify the anatomy visible in the scan.",
     "Which organ or region is imaged here?",
     "What anatomical site is captured in this image?",
     "Name the body structure displayed.",
     "Which part of the body is this image of?",
     "What anatomy is the focus of this image?",
     "Determine the anatomical region in the picture.",
     "Which anatomical area does this scan cover?"},
    {"Which imaging modality was used to acquire this image?",
     "What type of scan is this?",
     "Identify the imaging technique of this picture.",
     "By which modality was this image obtained?",
     "What kind of medical imaging is shown?",
     "Name the acquisition modality of this image.",
     "Which imaging method produced this image?",
     "What modality does this image come from?",
     "Determine the imaging technology used here.",
     "Which scanner type generated this image?"},
    {"Is there an anomaly in this image?",
     "Does this image show any abnormality?",
     "Is an abnormal finding present in the scan?",
     "Can a lesion be detected in this image?",
     "Is this image normal or abnormal?",
     "Does the scan contain a pathological finding?",
     "Is any anomaly visible here?",
     "Would you report an abnormality in this image?",
     "Is there evidence of disease in the picture?",
     "Does this image reveal an anomaly?"},
    {"What is the most likely pathology shown?",
     "Characterize the abnormality in this image.",
     "Which pathology best explains the finding?",
     "What type of lesion is present?",
     "Identify the pathological process in the scan.",
     "What disease does the anomaly indicate?",
     "Which diagnosis fits the visible abnormality?",
     "What is the nature of the detected lesion?",
     "Name the pathology depicted in this image.",
     "Which condition is the finding consistent with?"},
    {"Where is the lesion located?",
     "In which region does the anomaly lie?",
     "Localize the abnormal finding in the image.",
     "Which quadrant contains the lesion?",
     "Where in the image is the anomaly?",
     "Identify the region of the abnormality.",
     "What is the position of the lesion?",
     "Which part of the grid holds the finding?",
     "Point out the location of the anomaly.",
     "In which area is the lesion visible?"},
}};

struct Counter {
  // Draws from repeated random permutations of a pool so every value appears
  // equally often up to one block.
  std::vector<int> pool;
  std::deque<int> pending;

  int next(Rng& rng) {
    if (pending.empty()) {
      std::vector<int> block = pool;
      shuffle(block.begin(), block.end(), rng);
      pending.assign(block.begin(), block.end());
    }
    const int v = pending.front();
    pending.pop_front();
    return v;
  }
};

}  // namespace

std::span<const std::string_view> modality_tokens() { return kModalities; }
std::span<const std::string_view> anatomy_tokens() { return kAnatomies; }
std::span<const std::string_view> pathology_tokens() { return kPathologies; }
std::span<const std::string_view> region_tokens() { return kRegions; }
std::span<const std::string_view> anomaly_tokens() { return kAnomalyAnswers; }

std::string_view region_token(Region region) { return kRegions[static_cast<int>(region)]; }

Vocabulary make_vocabulary() {
  std::vector<std::string> tokens{
      std::string(kThinkOpen), std::string(kThinkClose), std::string(kAnswerOpen),
      std::string(kAnswerClose), "A", "B", "C", "D",
      std::string(kEndOfSequence), std::string(kUnknown)};
  for (auto w : {kObserve, kSep, kTherefore, kShows, kLesion, kNoLesion, kAt}) {
    tokens.emplace_back(w);
  }
  for (auto group : {std::span<const std::string_view>(kModalities),
                     std::span<const std::string_view>(kAnatomies),
                     std::span<const std::string_view>(kAnomalyAnswers),
                     std::span<const std::string_view>(kPathologies),
                     std::span<const std::string_view>(kRegions)}) {
    for (auto w : group) tokens.emplace_back(w);
  }
  return Vocabulary(std::move(tokens));
}

std::span<const std::string_view> answer_class_set(TaskAxis axis) {
  switch (axis) {
    case TaskAxis::kAnatomyIdentification: return kAnatomies;
    case TaskAxis::kModalityClassification: return kModalities;
    case TaskAxis::kAnomalyDetection: return kAnomalyAnswers;
    case TaskAxis::kPathologyCharacterization: return kPathologies;
    case TaskAxis::kLesionLocalization: return kRegions;
  }
  return {};
}

bool axis_legal(const LatentCase& c, TaskAxis axis) {
  if (axis == TaskAxis::kPathologyCharacterization || axis == TaskAxis::kLesionLocalization) {
    return c.anomaly;
  }
  return true;
}

std::string derive_answer(const LatentCase& c, TaskAxis axis) {
  if (!axis_legal(c, axis)) {
    throw InputError(fmt::format("derive_answer: axis {} requires an anomaly (case {})",
                                 axis_name(axis), c.case_id));
  }
  switch (axis) {
    case TaskAxis::kAnatomyIdentification: return std::string(kAnatomies.at(c.anatomy));
    case TaskAxis::kModalityClassification: return std::string(kModalities.at(c.modality));
    case TaskAxis::kAnomalyDetection: return std::string(kAnomalyAnswers[c.anomaly ? 0 : 1]);
    case TaskAxis::kPathologyCharacterization:
      return std::string(kPathologies.at(static_cast<std::size_t>(c.pathology.value())));
    case TaskAxis::kLesionLocalization: return std::string(region_token(c.region.value()));
  }
  return {};
}

std::string question_text(TaskAxis axis, int paraphrase_id) {
  if (paraphrase_id < 1 || paraphrase_id > kNumParaphrases) {
    throw InputError(fmt::format("question_text: paraphrase id {} outside 1..10", paraphrase_id));
  }
  return std::string(kQuestions[axis_index(axis)][paraphrase_id - 1]);
}

std::vector<std::string> gold_thought(const LatentCase& c, TaskAxis axis) {
  const std::string modality(kModalities.at(c.modality));
  const std::string anatomy(kAnatomies.at(c.anatomy));
  const std::string answer = derive_answer(c, axis);
  std::vector<std::string> t;
  const auto push = [&t](std::string_view w) { t.emplace_back(w); };
  switch (axis) {
    case TaskAxis::kModalityClassification:
      push(kObserve), push(modality), push(kSep), push(kTherefore), push(answer);
      break;
    case TaskAxis::kAnatomyIdentification:
      push(kObserve), push(modality), push(kShows), push(anatomy);
      push(kSep), push(kTherefore), push(answer);
      break;
    case TaskAxis::kAnomalyDetection:
      push(kObserve), push(anatomy), push(kSep);
      if (c.anomaly) {
        push(kLesion), push(kAt), push(region_token(*c.region));
      } else {
        push(kNoLesion);
      }
      push(kSep), push(kTherefore), push(answer);
      break;
    case TaskAxis::kPathologyCharacterization:
      push(kObserve), push(anatomy), push(kSep), push(kLesion), push(answer);
      push(kAt), push(region_token(*c.region)), push(kSep), push(kTherefore), push(answer);
      break;
    case TaskAxis::kLesionLocalization:
      push(kObserve), push(anatomy), push(kSep), push(kLesion), push(kAt), push(answer);
      push(kSep), push(kTherefore), push(answer);
      break;
  }
  return t;
}

std::vector<double> render_observation(const LatentCase& c, std::uint64_t noise_seed,
                                       double sigma, double scale) {
  std::vector<double> v(kObservationDim, 0.0);
  v[kModalityOffset + c.modality] = scale;
  v[kAnatomyOffset + c.anatomy] = scale;
  v[kAnomalyOffset + (c.anomaly ? 1 : 0)] = scale;
  if (c.anomaly) {
    v[kRegionOffset + static_cast<int>(c.region.value())] = scale;
    v[kPathologyOffset + c.pathology.value()] = scale;
  }
  if (sigma > 0.0) {
    Rng rng(noise_seed);
    std::normal_distribution<double> noise(0.0, sigma);
    for (double& x : v) x += noise(rng);
  }
  return v;
}

void validate(const GeneratorConfig& cfg) {
  for (int a = 0; a < kNumAxes; ++a) {
    if (cfg.per_axis[a] < 1) {
      throw ConfigError(fmt::format("per_axis: count for {} must be >= 1, got {}",
                                    axis_name(kAllAxes[a]), cfg.per_axis[a]));
    }
  }
  if (!(cfg.test_fraction >= 0.0 && cfg.test_fraction < 1.0)) {
    throw ConfigError(fmt::format("test_fraction: must lie in [0, 1), got {}", cfg.test_fraction));
  }
  if (!(cfg.noise_sigma >= 0.0) || !std::isfinite(cfg.noise_sigma)) {
    throw ConfigError(fmt::format("noise_sigma: must be finite and >= 0, got {}", cfg.noise_sigma));
  }
  if (!(cfg.anomaly_rate > 0.0 && cfg.anomaly_rate < 1.0)) {
    throw ConfigError(fmt::format("anomaly_rate: must lie in (0, 1), got {}", cfg.anomaly_rate));
  }
  for (int p : cfg.heldout_paraphrases) {
    if (p < 1 || p > kNumParaphrases) {
      throw ConfigError(fmt::format("heldout_paraphrases: id {} outside 1..10", p));
    }
  }
  if (static_cast<int>(cfg.heldout_paraphrases.size()) >= kNumParaphrases) {
    throw ConfigError("heldout_paraphrases: at least one paraphrase must remain for training");
  }
}

std::vector<Sample> Dataset::split(Split which) const {
  std::vector<Sample> out;
  for (const Sample& s : samples) {
    if (s.split == which) out.push_back(s);
  }
  return out;
}

Dataset generate(const GeneratorConfig& cfg) {
  validate(cfg);

  // 1. Latent cases until every axis quota is met.
  Rng latent_rng(derive_seed(cfg.seed, {1}));
  std::array<int, kNumAxes> remaining = cfg.per_axis;
  std::vector<LatentCase> cases;
  std::vector<std::vector<TaskAxis>> case_axes;
  const auto open = [&] {
    return std::any_of(remaining.begin(), remaining.end(), [](int r) { return r > 0; });
  };
  while (open()) {
    LatentCase c;
    c.modality = static_cast<int>(uniform_below(latent_rng, kNumModalities));
    c.anatomy = static_cast<int>(uniform_below(latent_rng, kNumAnatomies));
    c.anomaly = uniform01(latent_rng) < cfg.anomaly_rate;
    if (c.anomaly) {
      c.region = static_cast<Region>(uniform_below(latent_rng, kNumRegions));
      c.pathology = static_cast<int>(uniform_below(latent_rng, kNumPathologies));
    }
    std::vector<TaskAxis> axes;
    for (TaskAxis axis : kAllAxes) {
      if (remaining[axis_index(axis)] > 0 && axis_legal(c, axis)) {
        axes.push_back(axis);
        --remaining[axis_index(axis)];
      }
    }
    if (axes.empty()) continue;
    c.case_id = static_cast<std::int64_t>(cases.size());
    cases.push_back(c);
    case_axes.push_back(std::move(axes));
  }

  // 2. Case-level split.
  std::vector<std::size_t> order(cases.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng(derive_seed(cfg.seed, {2}));
  shuffle(order.begin(), order.end(), split_rng);
  const auto n_test = static_cast<std::size_t>(
      std::llround(cfg.test_fraction * static_cast<double>(cases.size())));
  std::vector<Split> case_split(cases.size(), Split::kTrain);
  for (std::size_t i = 0; i < n_test; ++i) case_split[order[i]] = Split::kTest;

  // 3. Questions, options, thoughts.
  std::vector<int> train_pool, test_pool;
  for (int p = 1; p <= kNumParaphrases; ++p) {
    const bool held = std::find(cfg.heldout_paraphrases.begin(), cfg.heldout_paraphrases.end(),
                                p) != cfg.heldout_paraphrases.end();
    if (cfg.heldout_paraphrases.empty()) {
      train_pool.push_back(p);
      test_pool.push_back(p);
    } else if (held) {
      test_pool.push_back(p);
    } else {
      train_pool.push_back(p);
    }
  }
  std::map<std::pair<int, int>, Counter> paraphrase_counters;
  for (int a = 0; a < kNumAxes; ++a) {
    paraphrase_counters[{0, a}].pool = train_pool;
    paraphrase_counters[{1, a}].pool = test_pool;
  }
  Counter answer_slots{{0, 1, 2, 3}, {}};
  Rng option_rng(derive_seed(cfg.seed, {3}));

  Dataset ds;
  ds.config = cfg;
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    const LatentCase& c = cases[ci];
    const std::vector<double> observation =
        render_observation(c, derive_seed(cfg.seed, {4, static_cast<std::uint64_t>(c.case_id)}),
                           cfg.noise_sigma);
    for (TaskAxis axis : case_axes[ci]) {
      Sample s;
      s.case_id = c.case_id;
      s.split = case_split[ci];
      s.axis = axis;
      s.paraphrase_id =
          paraphrase_counters[{s.split == Split::kTest ? 1 : 0, axis_index(axis)}].next(option_rng);
      s.question = question_text(axis, s.paraphrase_id);

      const std::string truth = derive_answer(c, axis);
      std::vector<std::string> distractors;
      for (std::string_view w : answer_class_set(axis)) {
        if (w != truth) distractors.emplace_back(w);
      }
      shuffle(distractors.begin(), distractors.end(), option_rng);
      const int slot = answer_slots.next(option_rng);
      int d = 0;
      for (int k = 0; k < kNumOptions; ++k) {
        s.options[k] = k == slot ? truth : distractors[d++];
      }
      s.answer = static_cast<OptionLabel>(slot);
      s.thought_tokens = gold_thought(c, axis);
      s.observation = observation;
      s.latent = c;
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

}  // namespace congrpo::micromed
