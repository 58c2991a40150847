#include <gtest/gtest.h>

#include "congrpo/dataset.hpp"
#include "congrpo/errors.hpp"
#include "congrpo/grpo.hpp"
#include "congrpo/remote_evaluator.hpp"
#include "test_util.hpp"

namespace congrpo {
namespace {

using Mode = testing::StubJudge::Mode;

EvaluatorQuery ct_query() {
  return EvaluatorQuery{{"observe", "ct", ";", "therefore", "ct"}, "Which modality?",
                        {"mri", "pet", "ct", "xray"}};
}

RemoteEvaluatorConfig fast_config(const testing::StubJudge& stub) {
  RemoteEvaluatorConfig cfg;
  cfg.url = stub.url();
  cfg.timeout_ms = 150;
  cfg.retries = 1;
  cfg.backoff_ms = 5;
  return cfg;
}

TEST(JudgeProtocol, RequestCarriesThoughtQuestionAndOptionsOnly) {
  const auto j = make_judge_request(ct_query());
  EXPECT_EQ(j.at("thought"), "observe ct ; therefore ct");
  EXPECT_EQ(j.at("question"), "Which modality?");
  EXPECT_EQ(j.at("options").size(), 4u);
  EXPECT_EQ(j.size(), 3u);
}

TEST(JudgeProtocol, ResponseParsing) {
  EXPECT_EQ(parse_judge_response(R"({"deduced":"C"})").label, OptionLabel::kC);
  EXPECT_EQ(parse_judge_response(R"({"deduced":"c"})").label, OptionLabel::kC);
  EXPECT_EQ(parse_judge_response(R"({"deduced":null})").kind, JudgeReplyKind::kAbstain);
  for (const char* bad : {"", "[]", "{}", R"({"deduced":"E"})", R"({"deduced":3})", "{oops"}) {
    EXPECT_EQ(parse_judge_response(bad).kind, JudgeReplyKind::kMalformed) << bad;
  }
}

TEST(RemoteEvaluator, RoundTripsLabels) {
  testing::StubJudge stub;
  const RemoteEvaluator ev(fast_config(stub));
  EXPECT_EQ(ev.deduce(ct_query()), OptionLabel::kC);
  auto q = ct_query();
  q.thought = {"nothing"};
  EXPECT_EQ(ev.deduce(q), std::nullopt);
  stub.mode = Mode::kNull;
  EXPECT_EQ(ev.deduce(ct_query()), std::nullopt);
  EXPECT_EQ(ev.stats().transport_failures, 0);
}

TEST(RemoteEvaluator, TimeoutAbstainsAfterRetries) {
  testing::StubJudge stub;
  stub.mode = Mode::kSlow;
  const RemoteEvaluator ev(fast_config(stub));
  EXPECT_EQ(ev.deduce(ct_query()), std::nullopt);
  EXPECT_EQ(ev.stats().attempts, 2);
  EXPECT_EQ(ev.stats().transport_failures, 2);
  EXPECT_EQ(ev.stats().abstentions, 1);
}

TEST(RemoteEvaluator, MalformedResponseAbstainsWithoutRetry) {
  testing::StubJudge stub;
  stub.mode = Mode::kMalformed;
  const RemoteEvaluator ev(fast_config(stub));
  EXPECT_EQ(ev.deduce(ct_query()), std::nullopt);
  EXPECT_EQ(ev.stats().malformed, 1);
  EXPECT_EQ(ev.stats().attempts, 1);
}

TEST(RemoteEvaluator, ServerErrorsAreRetried) {
  testing::StubJudge stub;
  stub.mode = Mode::kServerErrorThenRule;
  stub.failures_left = 1;
  const RemoteEvaluator ev(fast_config(stub));
  EXPECT_EQ(ev.deduce(ct_query()), OptionLabel::kC);
  EXPECT_EQ(ev.stats().attempts, 2);
}

TEST(RemoteEvaluator, UnreachableServerAbstains) {
  RemoteEvaluatorConfig cfg;
  cfg.url = "http://127.0.0.1:1";
  cfg.timeout_ms = 100;
  cfg.retries = 0;
  const RemoteEvaluator ev(cfg);
  EXPECT_EQ(ev.deduce(ct_query()), std::nullopt);
}

TEST(RemoteEvaluator, BatchKeepsOrder) {
  testing::StubJudge stub;
  auto cfg = fast_config(stub);
  cfg.max_concurrency = 3;
  const RemoteEvaluator ev(cfg);
  std::vector<EvaluatorQuery> qs;
  for (int k = 0; k < 8; ++k) {
    auto q = ct_query();
    q.thought = {q.options[static_cast<std::size_t>(k % 4)]};
    qs.push_back(q);
  }
  const auto out = ev.deduce_batch(qs);
  for (int k = 0; k < 8; ++k) EXPECT_EQ(out[static_cast<std::size_t>(k)], static_cast<OptionLabel>(k % 4));
}

TEST(RemoteEvaluator, ConfigValidationNamesField) {
  RemoteEvaluatorConfig cfg;
  cfg.url = "localhost:80";
  try {
    RemoteEvaluator ev(cfg);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("evaluator_url"), std::string::npos);
  }
}

// A failing judge yields consistency reward 0 and the step still completes.
TEST(RemoteEvaluator, FaultsDoNotAbortTraining) {
  const auto data = testing::small_dataset(0, 20);
  const auto train = data.split(Split::kTrain);
  const auto ckpt = testing::quick_sft(train);
  const auto vocab = ckpt.vocab;
  const auto sft = to_snapshot(ckpt);
  std::vector<const Sample*> batch;
  for (std::size_t i = 0; i < 4; ++i) batch.push_back(&train[i]);
  TrainConfig cfg;
  cfg.group_size = 4;
  cfg.learning_rate = 0.1;

  testing::StubJudge stub;
  auto rcfg = fast_config(stub);
  rcfg.retries = 0;
  for (Mode mode : {Mode::kSlow, Mode::kMalformed}) {
    stub.mode = mode;
    const RemoteEvaluator ev(rcfg);
    PolicyParams live = ckpt.params;
    const auto report = train_step(batch, live, sft, ev, vocab, cfg, 0);
    EXPECT_GT(report.r_fmt_rate, 0.0);
    EXPECT_EQ(report.r_con_rate, 0.0);
    EXPECT_GT(report.abstentions, 0);
    EXPECT_TRUE(live.all_finite());
  }
}

}  // namespace
}  // namespace congrpo
