#pragma once
// Benchmark item types shared by the reward engine, both trainers and the
// evaluation harness.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "congrpo/vocabulary.hpp"

namespace congrpo {

enum class TaskAxis : std::uint8_t {
  kAnatomyIdentification,
  kModalityClassification,
  kAnomalyDetection,
  kPathologyCharacterization,
  kLesionLocalization,
};
inline constexpr int kNumAxes = 5;
inline constexpr std::array<TaskAxis, kNumAxes> kAllAxes{
    TaskAxis::kAnatomyIdentification, TaskAxis::kModalityClassification,
    TaskAxis::kAnomalyDetection, TaskAxis::kPathologyCharacterization,
    TaskAxis::kLesionLocalization};

std::string_view axis_name(TaskAxis axis);
std::optional<TaskAxis> axis_from_name(std::string_view name);
inline int axis_index(TaskAxis axis) { return static_cast<int>(axis); }

// Five-cell localization grid.
enum class Region : std::uint8_t { kLeftUpper, kRightUpper, kLeftLower, kRightLower, kCenter };
inline constexpr int kNumRegions = 5;

enum class Split : std::uint8_t { kTrain, kTest };
std::string_view split_name(Split split);
std::optional<Split> split_from_name(std::string_view name);

// Ground truth behind one synthetic image. region and pathology are set iff
// anomaly is true.
struct LatentCase {
  std::int64_t case_id = 0;
  int modality = 0;
  int anatomy = 0;
  bool anomaly = false;
  std::optional<Region> region;
  std::optional<int> pathology;

  bool operator==(const LatentCase&) const = default;
};

struct Sample {
  std::int64_t case_id = 0;
  Split split = Split::kTrain;
  TaskAxis axis = TaskAxis::kAnatomyIdentification;
  int paraphrase_id = 1;  // 1..10
  std::string question;
  std::array<std::string, kNumOptions> options;
  OptionLabel answer = OptionLabel::kA;
  std::vector<std::string> thought_tokens;
  std::vector<double> observation;
  LatentCase latent;

  bool operator==(const Sample&) const = default;
};

}  // namespace congrpo
