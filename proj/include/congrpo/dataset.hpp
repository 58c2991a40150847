#pragma once
// Dataset files and the glue from benchmark samples to policy inputs.
//
// File format: line-delimited JSON. Line 1 is a header
//   {"schema":"micromed","schema_version":1,"seed":..,"split":..,"count":..}
// followed by one sample per line:
//   {case_id, split, axis, paraphrase_id, question, options:[4],
//    answer:"A".."D", thought_tokens:[...], observation:[...], latent:{...}}

#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "congrpo/micromed.hpp"
#include "congrpo/policy.hpp"
#include "congrpo/sample.hpp"

namespace congrpo {

inline constexpr int kDatasetSchemaVersion = 1;

nlohmann::json sample_to_json(const Sample& s);
Sample sample_from_json(const nlohmann::json& j);  // throws InputError

void write_dataset(const std::filesystem::path& path, const std::vector<Sample>& samples,
                   const micromed::GeneratorConfig& cfg, std::optional<Split> split);
std::vector<Sample> read_dataset(const std::filesystem::path& path);

// Conditioning input for the policy.
Prompt make_prompt(const Sample& s, const Vocabulary& vocab);

// Gold target Y* = <think> T* </think> <answer> A* </answer> <eos>.
std::vector<TokenId> gold_sequence(const Sample& s, const Vocabulary& vocab);

FeatureLayout micromed_layout(const Vocabulary& vocab);

// Every gold sequence must parse as well-formed with the gold answer.
// Throws InputError naming the first offending sample.
void validate_dataset(const std::vector<Sample>& samples, const Vocabulary& vocab);

}  // namespace congrpo
