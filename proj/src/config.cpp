#include "congrpo/config.hpp"

#include <charconv>
#include <cstdlib>
#include <functional>
#include <sstream>

#include <fmt/format.h>

#include "congrpo/checkpoint.hpp"
#include "congrpo/errors.hpp"

namespace congrpo {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  std::from_chars_result r;
  if constexpr (std::is_floating_point_v<T>) {
    // from_chars for double is available in libstdc++ 11.
    r = std::from_chars(first, last, out, std::chars_format::general);
  } else {
    r = std::from_chars(first, last, out);
  }
  if (value.empty() || r.ec != std::errc() || r.ptr != last) {
    throw ConfigError(fmt::format("{}: cannot parse '{}' as a number", key, value));
  }
  return out;
}

std::string join_u64(const std::vector<std::uint64_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string num(double v) { return fmt::format("{}", v); }

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename E>
E parse_enum(const std::string& key, const std::string& value,
             std::optional<E> (*from)(std::string_view), std::string_view choices) {
  auto e = from(value);
  if (!e) throw ConfigError(fmt::format("{}: '{}' is not one of {}", key, value, choices));
  return *e;
}

std::optional<ParseMode> parse_mode_from_name(std::string_view s) {
  if (s == "strict") return ParseMode::kStrict;
  if (s == "permissive") return ParseMode::kPermissive;
  return std::nullopt;
}

std::optional<EvaluatorKind> evaluator_from_name(std::string_view s) {
  if (s == "rule-based") return EvaluatorKind::kRuleBased;
  if (s == "remote") return EvaluatorKind::kRemote;
  return std::nullopt;
}

RewardWeights parse_lambda(const std::string& key, const std::string& value) {
  const auto parts = split_list(value);
  if (parts.size() != 3) {
    throw ConfigError(fmt::format("{}: expected three comma-separated weights, got '{}'", key, value));
  }
  return {parse_number<double>(key, parts[0]), parse_number<double>(key, parts[1]),
          parse_number<double>(key, parts[2])};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    const auto add = [&](std::string key, auto set, auto get) {
      f.push_back({std::move(key), set, get});
    };
    add("preset", [](RunConfig& c, const std::string& v) { c.preset = v; },
        [](const RunConfig& c) { return c.preset; });
    add("data_dir", [](RunConfig& c, const std::string& v) { c.data_dir = v; },
        [](const RunConfig& c) { return c.data_dir.string(); });
    add("output_dir", [](RunConfig& c, const std::string& v) { c.output_dir = v; },
        [](const RunConfig& c) { return c.output_dir.string(); });
    add("seed",
        [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); },
        [](const RunConfig& c) { return std::to_string(c.seed); });
    add("seeds",
        [](RunConfig& c, const std::string& v) {
          c.seeds.clear();
          for (const auto& s : split_list(v)) c.seeds.push_back(parse_number<std::uint64_t>("seeds", s));
        },
        [](const RunConfig& c) { return join_u64(c.seeds); });
    add("jobs", [](RunConfig& c, const std::string& v) { c.jobs = parse_number<int>("jobs", v); },
        [](const RunConfig& c) { return std::to_string(c.jobs); });

    add("per_axis",
        [](RunConfig& c, const std::string& v) {
          const auto parts = split_list(v);
          if (parts.size() == 1) {
            c.data.per_axis.fill(parse_number<int>("per_axis", parts[0]));
          } else if (parts.size() == static_cast<std::size_t>(kNumAxes)) {
            for (int i = 0; i < kNumAxes; ++i) {
              c.data.per_axis[static_cast<std::size_t>(i)] =
                  parse_number<int>("per_axis", parts[static_cast<std::size_t>(i)]);
            }
          } else {
            throw ConfigError(fmt::format("per_axis: expected 1 or {} counts, got '{}'", kNumAxes, v));
          }
        },
        [](const RunConfig& c) {
          std::string out;
          for (std::size_t i = 0; i < c.data.per_axis.size(); ++i) {
            out += (i ? "," : "") + std::to_string(c.data.per_axis[i]);
          }
          return out;
        });
    add("test_fraction",
        [](RunConfig& c, const std::string& v) {
          c.data.test_fraction = parse_number<double>("test_fraction", v);
        },
        [](const RunConfig& c) { return num(c.data.test_fraction); });
    add("noise_sigma",
        [](RunConfig& c, const std::string& v) { c.data.noise_sigma = parse_number<double>("noise_sigma", v); },
        [](const RunConfig& c) { return num(c.data.noise_sigma); });
    add("anomaly_rate",
        [](RunConfig& c, const std::string& v) {
          c.data.anomaly_rate = parse_number<double>("anomaly_rate", v);
        },
        [](const RunConfig& c) { return num(c.data.anomaly_rate); });
    add("heldout_paraphrases",
        [](RunConfig& c, const std::string& v) {
          c.data.heldout_paraphrases.clear();
          if (v.empty() || v == "none") return;
          for (const auto& s : split_list(v)) {
            c.data.heldout_paraphrases.push_back(parse_number<int>("heldout_paraphrases", s));
          }
        },
        [](const RunConfig& c) {
          if (c.data.heldout_paraphrases.empty()) return std::string("none");
          std::string out;
          for (std::size_t i = 0; i < c.data.heldout_paraphrases.size(); ++i) {
            out += (i ? "," : "") + std::to_string(c.data.heldout_paraphrases[i]);
          }
          return out;
        });

    add("sft_lr",
        [](RunConfig& c, const std::string& v) { c.sft.learning_rate = parse_number<double>("sft_lr", v); },
        [](const RunConfig& c) { return num(c.sft.learning_rate); });
    add("sft_epochs",
        [](RunConfig& c, const std::string& v) { c.sft.epochs = parse_number<int>("sft_epochs", v); },
        [](const RunConfig& c) { return std::to_string(c.sft.epochs); });
    add("sft_batch_size",
        [](RunConfig& c, const std::string& v) {
          c.sft.batch_size = parse_number<int>("sft_batch_size", v);
        },
        [](const RunConfig& c) { return std::to_string(c.sft.batch_size); });
    add("sft_max_steps",
        [](RunConfig& c, const std::string& v) { c.sft.max_steps = parse_number<long>("sft_max_steps", v); },
        [](const RunConfig& c) { return std::to_string(c.sft.max_steps); });

    add("group_size",
        [](RunConfig& c, const std::string& v) { c.rl.group_size = parse_number<int>("group_size", v); },
        [](const RunConfig& c) { return std::to_string(c.rl.group_size); });
    add("clip_epsilon",
        [](RunConfig& c, const std::string& v) {
          c.rl.clip_epsilon = parse_number<double>("clip_epsilon", v);
        },
        [](const RunConfig& c) { return num(c.rl.clip_epsilon); });
    add("kl_beta",
        [](RunConfig& c, const std::string& v) { c.rl.kl_beta = parse_number<double>("kl_beta", v); },
        [](const RunConfig& c) { return num(c.rl.kl_beta); });
    add("rl_lr",
        [](RunConfig& c, const std::string& v) { c.rl.learning_rate = parse_number<double>("rl_lr", v); },
        [](const RunConfig& c) { return num(c.rl.learning_rate); });
    add("rl_epochs",
        [](RunConfig& c, const std::string& v) { c.rl.epochs = parse_number<int>("rl_epochs", v); },
        [](const RunConfig& c) { return std::to_string(c.rl.epochs); });
    add("rl_batch_size",
        [](RunConfig& c, const std::string& v) { c.rl.batch_size = parse_number<int>("rl_batch_size", v); },
        [](const RunConfig& c) { return std::to_string(c.rl.batch_size); });
    add("rl_max_steps",
        [](RunConfig& c, const std::string& v) { c.rl.max_steps = parse_number<long>("rl_max_steps", v); },
        [](const RunConfig& c) { return std::to_string(c.rl.max_steps); });
    add("lambda", [](RunConfig& c, const std::string& v) { c.rl.weights = parse_lambda("lambda", v); },
        [](const RunConfig& c) {
          return fmt::format("{},{},{}", c.rl.weights.format, c.rl.weights.accuracy,
                             c.rl.weights.consistency);
        });
    add("advantage_mode",
        [](RunConfig& c, const std::string& v) {
          c.rl.advantage_mode = parse_enum<AdvantageMode>("advantage_mode", v, advantage_mode_from_name,
                                                          "{paper-literal, std-normalized}");
        },
        [](const RunConfig& c) { return std::string(advantage_mode_name(c.rl.advantage_mode)); });
    add("ratio_reference",
        [](RunConfig& c, const std::string& v) {
          c.rl.ratio_reference = parse_enum<RatioReference>(
              "ratio_reference", v, ratio_reference_from_name, "{sft-snapshot, behavior-snapshot}");
        },
        [](const RunConfig& c) { return std::string(ratio_reference_name(c.rl.ratio_reference)); });
    add("max_len",
        [](RunConfig& c, const std::string& v) {
          c.rl.max_len = parse_number<int>("max_len", v);
          c.eval.max_len = c.rl.max_len;
        },
        [](const RunConfig& c) { return std::to_string(c.rl.max_len); });
    add("temperature",
        [](RunConfig& c, const std::string& v) { c.rl.temperature = parse_number<double>("temperature", v); },
        [](const RunConfig& c) { return num(c.rl.temperature); });
    add("max_grad_norm",
        [](RunConfig& c, const std::string& v) {
          c.rl.max_grad_norm = parse_number<double>("max_grad_norm", v);
        },
        [](const RunConfig& c) { return num(c.rl.max_grad_norm); });
    add("checkpoint_every",
        [](RunConfig& c, const std::string& v) {
          c.rl.checkpoint_every = parse_number<int>("checkpoint_every", v);
        },
        [](const RunConfig& c) { return std::to_string(c.rl.checkpoint_every); });

    add("decode",
        [](RunConfig& c, const std::string& v) {
          c.eval.decode =
              parse_enum<DecodeMode>("decode", v, decode_mode_from_name, "{greedy, sampled}");
        },
        [](const RunConfig& c) { return std::string(decode_mode_name(c.eval.decode)); });
    add("eval_temperature",
        [](RunConfig& c, const std::string& v) {
          c.eval.temperature = parse_number<double>("eval_temperature", v);
        },
        [](const RunConfig& c) { return num(c.eval.temperature); });
    add("parse_mode",
        [](RunConfig& c, const std::string& v) {
          c.eval.parse_mode =
              parse_enum<ParseMode>("parse_mode", v, parse_mode_from_name, "{strict, permissive}");
        },
        [](const RunConfig& c) {
          return std::string(c.eval.parse_mode == ParseMode::kStrict ? "strict" : "permissive");
        });

    add("evaluator",
        [](RunConfig& c, const std::string& v) {
          c.evaluator = parse_enum<EvaluatorKind>("evaluator", v, evaluator_from_name,
                                                  "{rule-based, remote}");
        },
        [](const RunConfig& c) {
          return std::string(c.evaluator == EvaluatorKind::kRuleBased ? "rule-based" : "remote");
        });
    add("evaluator_url", [](RunConfig& c, const std::string& v) { c.remote.url = v; },
        [](const RunConfig& c) { return c.remote.url; });
    add("evaluator_path", [](RunConfig& c, const std::string& v) { c.remote.path = v; },
        [](const RunConfig& c) { return c.remote.path; });
    add("evaluator_timeout_ms",
        [](RunConfig& c, const std::string& v) {
          c.remote.timeout_ms = parse_number<int>("evaluator_timeout_ms", v);
        },
        [](const RunConfig& c) { return std::to_string(c.remote.timeout_ms); });
    add("evaluator_retries",
        [](RunConfig& c, const std::string& v) {
          c.remote.retries = parse_number<int>("evaluator_retries", v);
        },
        [](const RunConfig& c) { return std::to_string(c.remote.retries); });
    add("evaluator_backoff_ms",
        [](RunConfig& c, const std::string& v) {
          c.remote.backoff_ms = parse_number<int>("evaluator_backoff_ms", v);
        },
        [](const RunConfig& c) { return std::to_string(c.remote.backoff_ms); });
    add("evaluator_concurrency",
        [](RunConfig& c, const std::string& v) {
          c.remote.max_concurrency = parse_number<int>("evaluator_concurrency", v);
        },
        [](const RunConfig& c) { return std::to_string(c.remote.max_concurrency); });
    return f;
  }();
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

// Desk-scale overrides for a linear policy trained with plain gradient steps.
const KeyValues& desk_preset() {
  static const KeyValues kv{
      {"sft_lr", "0.05"},
      {"rl_lr", "100"},
      {"max_grad_norm", "0.01"},
      {"ratio_reference", "behavior-snapshot"},
  };
  return kv;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

KeyValues parse_key_values(const std::string& text, const std::string& source) {
  KeyValues kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(fmt::format("{}:{}: expected 'key = value', got '{}'", source, lineno, t));
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (!find_field(key)) {
      throw ConfigError(fmt::format("{}:{}: unknown key '{}'", source, lineno, key));
    }
    kv[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return kv;
}

KeyValues read_config_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError(fmt::format("config: file '{}' does not exist", path.string()));
  }
  return parse_key_values(read_file(path), path.string());
}

KeyValues env_overrides() {
  KeyValues kv;
  for (const auto& key : config_keys()) {
    std::string name = "CONGRPO_";
    for (char c : key) name.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (const char* v = std::getenv(name.c_str())) kv[key] = v;
  }
  return kv;
}

RunConfig resolve_config(const std::vector<KeyValues>& layers) {
  RunConfig cfg;
  std::string preset = "paper";
  for (const auto& layer : layers) {
    if (auto it = layer.find("preset"); it != layer.end()) preset = it->second;
  }
  if (preset == "desk") {
    for (const auto& [k, v] : desk_preset()) find_field(k)->set(cfg, v);
  } else if (preset != "paper") {
    throw ConfigError(fmt::format("preset: '{}' is not one of {{paper, desk}}", preset));
  }
  for (const auto& layer : layers) {
    for (const auto& [k, v] : layer) {
      const Field* f = find_field(k);
      if (!f) throw ConfigError(fmt::format("unknown configuration key '{}'", k));
      f->set(cfg, v);
    }
  }
  cfg.preset = preset;
  cfg.sft.seed = cfg.seed;
  cfg.rl.seed = cfg.seed;
  cfg.data.seed = cfg.seed;
  cfg.eval.seed = cfg.seed;
  cfg.sft.jobs = cfg.jobs;
  cfg.rl.jobs = cfg.jobs;
  cfg.eval.jobs = cfg.jobs;
  validate(cfg);
  return cfg;
}

void validate(const RunConfig& cfg) {
  if (cfg.jobs < 0) throw ConfigError(fmt::format("jobs: must be >= 0, got {}", cfg.jobs));
  if (cfg.seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  micromed::validate(cfg.data);
  validate(cfg.sft);
  validate(cfg.rl);
  if (!(cfg.eval.temperature > 0.0)) {
    throw ConfigError(fmt::format("eval_temperature: must be > 0, got {}", cfg.eval.temperature));
  }
  if (cfg.evaluator == EvaluatorKind::kRemote) validate(cfg.remote);
}

KeyValues to_key_values(const RunConfig& cfg) {
  KeyValues kv;
  for (const auto& f : fields()) kv[f.key] = f.get(cfg);
  return kv;
}

std::string render_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& key : config_keys()) {
    if (auto it = kv.find(key); it != kv.end()) out += fmt::format("{} = {}\n", key, it->second);
  }
  return out;
}

void write_resolved_config(const std::filesystem::path& path, const RunConfig& cfg) {
  write_file_atomic(path, "# resolved configuration\n" + render_key_values(to_key_values(cfg)));
}

std::unique_ptr<ConsistencyEvaluator> make_evaluator(const RunConfig& cfg) {
  if (cfg.evaluator == EvaluatorKind::kRemote) return std::make_unique<RemoteEvaluator>(cfg.remote);
  return rule_based_evaluator();
}

}  // namespace congrpo
