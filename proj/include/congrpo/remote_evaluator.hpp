#pragma once
// HTTP client for an external consistency judge.
//
// Wire protocol:
//   POST <url><path>   {"thought": str, "question": str, "options": [str x4]}
//   200                {"deduced": "A"|"B"|"C"|"D"|null}
//
// Transport errors and timeouts are retried with exponential backoff; after
// the last attempt, and on any malformed response, the evaluator abstains
// and emits a structured log record. Failures never throw.

#include <atomic>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "congrpo/reward.hpp"

namespace congrpo {

struct RemoteEvaluatorConfig {
  std::string url = "http://127.0.0.1:8080";  // scheme://host:port
  std::string path = "/deduce";
  int timeout_ms = 5000;
  int retries = 2;  // additional attempts after the first
  int backoff_ms = 100;
  int max_concurrency = 4;
};

void validate(const RemoteEvaluatorConfig& cfg);  // throws ConfigError

nlohmann::json make_judge_request(const EvaluatorQuery& query);

enum class JudgeReplyKind { kLabel, kAbstain, kMalformed };
struct JudgeReply {
  JudgeReplyKind kind = JudgeReplyKind::kMalformed;
  std::optional<OptionLabel> label;
  std::string error;
};
JudgeReply parse_judge_response(std::string_view body);

struct RemoteEvaluatorStats {
  std::atomic<long> requests{0};
  std::atomic<long> attempts{0};
  std::atomic<long> transport_failures{0};
  std::atomic<long> malformed{0};
  std::atomic<long> abstentions{0};
};

class RemoteEvaluator final : public ConsistencyEvaluator {
 public:
  explicit RemoteEvaluator(RemoteEvaluatorConfig cfg);

  std::optional<OptionLabel> deduce(const EvaluatorQuery& query) const override;
  std::vector<std::optional<OptionLabel>> deduce_batch(
      std::span<const EvaluatorQuery> queries) const override;

  const RemoteEvaluatorStats& stats() const { return *stats_; }
  const RemoteEvaluatorConfig& config() const { return cfg_; }

 private:
  RemoteEvaluatorConfig cfg_;
  std::unique_ptr<RemoteEvaluatorStats> stats_;
};

std::unique_ptr<ConsistencyEvaluator> remote_evaluator(RemoteEvaluatorConfig cfg);

}  // namespace congrpo
