#include "congrpo/remote_evaluator.hpp"

#include <algorithm>
#include <chrono>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "congrpo/errors.hpp"

namespace congrpo {

using json = nlohmann::json;

void validate(const RemoteEvaluatorConfig& cfg) {
  if (cfg.url.rfind("http://", 0) != 0 && cfg.url.rfind("https://", 0) != 0) {
    throw ConfigError(fmt::format("evaluator_url: expected http://host:port, got '{}'", cfg.url));
  }
  if (cfg.timeout_ms <= 0) throw ConfigError("evaluator_timeout_ms: must be > 0");
  if (cfg.retries < 0) throw ConfigError("evaluator_retries: must be >= 0");
  if (cfg.backoff_ms < 0) throw ConfigError("evaluator_backoff_ms: must be >= 0");
  if (cfg.max_concurrency < 1) throw ConfigError("evaluator_concurrency: must be >= 1");
}

json make_judge_request(const EvaluatorQuery& query) {
  return json{{"thought", query.thought_text()},
              {"question", query.question},
              {"options", json::array({query.options[0], query.options[1], query.options[2],
                                       query.options[3]})}};
}

JudgeReply parse_judge_response(std::string_view body) {
  JudgeReply reply;
  json doc = json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object()) {
    reply.error = "response is not a JSON object";
    return reply;
  }
  auto it = doc.find("deduced");
  if (it == doc.end()) {
    reply.error = "missing field 'deduced'";
    return reply;
  }
  if (it->is_null()) {
    reply.kind = JudgeReplyKind::kAbstain;
    return reply;
  }
  if (it->is_string()) {
    const auto s = it->get<std::string>();
    if (s.size() == 1) {
      if (auto label = option_from_char(s[0])) {
        reply.kind = JudgeReplyKind::kLabel;
        reply.label = label;
        return reply;
      }
    }
    reply.error = fmt::format("'deduced' is not an option label: '{}'", s);
    return reply;
  }
  reply.error = "'deduced' has the wrong type";
  return reply;
}

RemoteEvaluator::RemoteEvaluator(RemoteEvaluatorConfig cfg)
    : cfg_(std::move(cfg)), stats_(std::make_unique<RemoteEvaluatorStats>()) {
  validate(cfg_);
}

std::optional<OptionLabel> RemoteEvaluator::deduce(const EvaluatorQuery& query) const {
  ++stats_->requests;
  httplib::Client client(cfg_.url);
  const auto timeout = std::chrono::milliseconds(cfg_.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  const std::string body = make_judge_request(query).dump();
  int backoff = cfg_.backoff_ms;
  for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
    }
    ++stats_->attempts;
    auto res = client.Post(cfg_.path, body, "application/json");
    if (!res) {
      ++stats_->transport_failures;
      spdlog::warn(R"({{"event":"judge_transport_failure","url":"{}","attempt":{},"error":"{}"}})",
                   cfg_.url, attempt + 1, httplib::to_string(res.error()));
      continue;
    }
    if (res->status >= 500) {
      ++stats_->transport_failures;
      spdlog::warn(R"({{"event":"judge_server_error","url":"{}","attempt":{},"status":{}}})",
                   cfg_.url, attempt + 1, res->status);
      continue;
    }
    JudgeReply reply = res->status == 200
                           ? parse_judge_response(res->body)
                           : JudgeReply{JudgeReplyKind::kMalformed, std::nullopt,
                                        fmt::format("HTTP status {}", res->status)};
    if (reply.kind == JudgeReplyKind::kMalformed) {
      ++stats_->malformed;
      ++stats_->abstentions;
      spdlog::warn(R"({{"event":"judge_malformed_response","url":"{}","error":{}}})", cfg_.url,
                   json(reply.error).dump());
      return std::nullopt;
    }
    if (reply.kind == JudgeReplyKind::kAbstain) ++stats_->abstentions;
    return reply.label;
  }
  ++stats_->abstentions;
  spdlog::warn(R"({{"event":"judge_retries_exhausted","url":"{}","attempts":{}}})", cfg_.url,
               cfg_.retries + 1);
  return std::nullopt;
}

std::vector<std::optional<OptionLabel>> RemoteEvaluator::deduce_batch(
    std::span<const EvaluatorQuery> queries) const {
  std::vector<std::optional<OptionLabel>> out(queries.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < queries.size(); i = next++) out[i] = deduce(queries[i]);
  };
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(cfg_.max_concurrency),
                                       queries.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return out;
}

std::unique_ptr<ConsistencyEvaluator> remote_evaluator(RemoteEvaluatorConfig cfg) {
  return std::make_unique<RemoteEvaluator>(std::move(cfg));
}

}  // namespace congrpo
