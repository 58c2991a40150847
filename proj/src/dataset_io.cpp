#include <fstream>

#include <fmt/format.h>

#include "congrpo/checkpoint.hpp"
#include "congrpo/dataset.hpp"
#include "congrpo/errors.hpp"
#include "congrpo/format.hpp"

namespace congrpo {

using json = nlohmann::json;

namespace {

json latent_to_json(const LatentCase& c) {
  json j{{"modality", micromed::modality_tokens()[static_cast<std::size_t>(c.modality)]},
         {"anatomy", micromed::anatomy_tokens()[static_cast<std::size_t>(c.anatomy)]},
         {"anomaly", c.anomaly},
         {"region", nullptr},
         {"pathology", nullptr}};
  if (c.region) j["region"] = micromed::region_token(*c.region);
  if (c.pathology) {
    j["pathology"] = micromed::pathology_tokens()[static_cast<std::size_t>(*c.pathology)];
  }
  return j;
}

int index_of(std::span<const std::string_view> table, const std::string& value,
             std::string_view field) {
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i] == value) return static_cast<int>(i);
  }
  throw InputError(fmt::format("dataset: unknown {} '{}'", field, value));
}

LatentCase latent_from_json(const json& j, std::int64_t case_id) {
  LatentCase c;
  c.case_id = case_id;
  c.modality = index_of(micromed::modality_tokens(), j.at("modality").get<std::string>(), "modality");
  c.anatomy = index_of(micromed::anatomy_tokens(), j.at("anatomy").get<std::string>(), "anatomy");
  c.anomaly = j.at("anomaly").get<bool>();
  if (!j.at("region").is_null()) {
    c.region = static_cast<Region>(
        index_of(micromed::region_tokens(), j.at("region").get<std::string>(), "region"));
  }
  if (!j.at("pathology").is_null()) {
    c.pathology =
        index_of(micromed::pathology_tokens(), j.at("pathology").get<std::string>(), "pathology");
  }
  if (c.anomaly != c.region.has_value() || c.anomaly != c.pathology.has_value()) {
    throw InputError(fmt::format("dataset: case {} has region/pathology inconsistent with anomaly",
                                 case_id));
  }
  return c;
}

}  // namespace

json sample_to_json(const Sample& s) {
  return json{{"case_id", s.case_id},
              {"split", split_name(s.split)},
              {"axis", axis_name(s.axis)},
              {"paraphrase_id", s.paraphrase_id},
              {"question", s.question},
              {"options", s.options},
              {"answer", std::string(1, option_char(s.answer))},
              {"thought_tokens", s.thought_tokens},
              {"observation", s.observation},
              {"latent", latent_to_json(s.latent)}};
}

Sample sample_from_json(const json& j) {
  try {
    Sample s;
    s.case_id = j.at("case_id").get<std::int64_t>();
    const auto split = split_from_name(j.at("split").get<std::string>());
    if (!split) throw InputError("dataset: bad split tag");
    s.split = *split;
    const auto axis = axis_from_name(j.at("axis").get<std::string>());
    if (!axis) throw InputError("dataset: bad axis name");
    s.axis = *axis;
    s.paraphrase_id = j.at("paraphrase_id").get<int>();
    s.question = j.at("question").get<std::string>();
    const auto options = j.at("options").get<std::vector<std::string>>();
    if (options.size() != kNumOptions) throw InputError("dataset: a sample needs exactly 4 options");
    std::copy(options.begin(), options.end(), s.options.begin());
    const auto answer = j.at("answer").get<std::string>();
    const auto label = answer.size() == 1 ? option_from_char(answer[0]) : std::nullopt;
    if (!label) throw InputError(fmt::format("dataset: bad answer label '{}'", answer));
    s.answer = *label;
    s.thought_tokens = j.at("thought_tokens").get<std::vector<std::string>>();
    s.observation = j.at("observation").get<std::vector<double>>();
    s.latent = latent_from_json(j.at("latent"), s.case_id);
    return s;
  } catch (const json::exception& e) {
    throw InputError(fmt::format("dataset: malformed sample record: {}", e.what()));
  }
}

void write_dataset(const std::filesystem::path& path, const std::vector<Sample>& samples,
                   const micromed::GeneratorConfig& cfg, std::optional<Split> split) {
  std::string out;
  json header{{"schema", "micromed"},
              {"schema_version", kDatasetSchemaVersion},
              {"seed", cfg.seed},
              {"noise_sigma", cfg.noise_sigma},
              {"split", split ? json(split_name(*split)) : json("all")},
              {"count", samples.size()}};
  out += header.dump();
  out.push_back('\n');
  for (const Sample& s : samples) {
    out += sample_to_json(s).dump();
    out.push_back('\n');
  }
  write_file_atomic(path, out);
}

std::vector<Sample> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open dataset '{}'", path.string()));
  std::string line;
  if (!std::getline(in, line)) throw InputError(fmt::format("dataset '{}' is empty", path.string()));
  json header = json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("schema", "") != "micromed") {
    throw InputError(fmt::format("dataset '{}': missing micromed header line", path.string()));
  }
  if (header.value("schema_version", -1) != kDatasetSchemaVersion) {
    throw InputError(fmt::format("dataset '{}': schema_version {} unsupported (expects {})",
                                 path.string(), header.value("schema_version", -1),
                                 kDatasetSchemaVersion));
  }
  std::vector<Sample> samples;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw InputError(fmt::format("dataset '{}' line {}: invalid JSON", path.string(), lineno));
    }
    samples.push_back(sample_from_json(j));
  }
  return samples;
}

Prompt make_prompt(const Sample& s, const Vocabulary& vocab) {
  Prompt p;
  p.observation = s.observation;
  p.axis = axis_index(s.axis);
  p.paraphrase = s.paraphrase_id - 1;
  for (int k = 0; k < kNumOptions; ++k) {
    auto id = vocab.find(s.options[static_cast<std::size_t>(k)]);
    p.option_tokens[static_cast<std::size_t>(k)] = id ? *id : -1;
  }
  return p;
}

std::vector<TokenId> gold_sequence(const Sample& s, const Vocabulary& vocab) {
  std::vector<TokenId> thought;
  thought.reserve(s.thought_tokens.size());
  for (const auto& w : s.thought_tokens) thought.push_back(vocab.id(w));
  return render_answer(thought, s.answer, vocab);
}

FeatureLayout micromed_layout(const Vocabulary& vocab) {
  FeatureLayout l;
  l.observation_dim = micromed::kObservationDim;
  l.num_axes = kNumAxes;
  l.num_paraphrases = micromed::kNumParaphrases;
  l.num_option_slots = kNumOptions;
  l.vocab_size = static_cast<int>(vocab.size());
  return l;
}

void validate_dataset(const std::vector<Sample>& samples, const Vocabulary& vocab) {
  for (const Sample& s : samples) {
    std::vector<TokenId> gold;
    try {
      gold = gold_sequence(s, vocab);
    } catch (const InputError& e) {
      throw InputError(fmt::format("dataset validation: case {} ({}): {}", s.case_id,
                                   axis_name(s.axis), e.what()));
    }
    const StructuredOutput parsed = parse(gold, vocab);
    if (!parsed.well_formed || parsed.answer != s.answer) {
      throw InputError(fmt::format("dataset validation: case {} ({}) gold sequence is malformed",
                                   s.case_id, axis_name(s.axis)));
    }
    if (static_cast<int>(s.observation.size()) != micromed::kObservationDim) {
      throw InputError(fmt::format("dataset validation: case {} observation has {} features",
                                   s.case_id, s.observation.size()));
    }
  }
}

}  // namespace congrpo
