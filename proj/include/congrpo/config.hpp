#pragma once
// Run configuration: defaults, presets, key=value files, environment and
// command-line overrides, in that order of increasing precedence.
//
// Config files hold one `key = value` per line; `#` starts a comment.
// Environment variables are CONGRPO_<KEY> with the key upper-cased.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "congrpo/eval.hpp"
#include "congrpo/grpo.hpp"
#include "congrpo/micromed.hpp"
#include "congrpo/remote_evaluator.hpp"
#include "congrpo/sft.hpp"

namespace congrpo {

enum class EvaluatorKind { kRuleBased, kRemote };

struct RunConfig {
  std::string preset = "paper";
  std::filesystem::path data_dir = "data";
  std::filesystem::path output_dir = "runs";
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  int jobs = 0;
  micromed::GeneratorConfig data;
  SftConfig sft;
  TrainConfig rl;
  EvalOptions eval;
  EvaluatorKind evaluator = EvaluatorKind::kRuleBased;
  RemoteEvaluatorConfig remote;
};

using KeyValues = std::map<std::string, std::string>;

// All recognised keys, in resolved-file order.
const std::vector<std::string>& config_keys();

// Parses `key = value` text. Throws ConfigError naming the line on bad syntax
// or an unknown key.
KeyValues parse_key_values(const std::string& text, const std::string& source);
KeyValues read_config_file(const std::filesystem::path& path);

// CONGRPO_<KEY> variables for every known key.
KeyValues env_overrides();

// Applies the preset named by layers (if any), then every layer in order.
// Throws ConfigError naming the offending field.
RunConfig resolve_config(const std::vector<KeyValues>& layers);

void validate(const RunConfig& cfg);

// Inverse of resolve_config: every key with its resolved value.
KeyValues to_key_values(const RunConfig& cfg);
std::string render_key_values(const KeyValues& kv);
void write_resolved_config(const std::filesystem::path& path, const RunConfig& cfg);

std::unique_ptr<ConsistencyEvaluator> make_evaluator(const RunConfig& cfg);

}  // namespace congrpo
