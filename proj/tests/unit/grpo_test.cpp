#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "congrpo/checkpoint.hpp"
#include "congrpo/errors.hpp"
#include "congrpo/grpo.hpp"
#include "test_util.hpp"

namespace congrpo {
namespace {

using testing::random_params;
using testing::tiny_layout;

TEST(Advantages, SumToZeroOnRandomGroups) {
  Rng rng(1);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  double worst = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const int g = 2 + static_cast<int>(uniform_below(rng, 15));
    std::vector<double> r(static_cast<std::size_t>(g));
    for (double& x : r) x = u(rng);
    for (auto mode : {AdvantageMode::kPaperLiteral, AdvantageMode::kStdNormalized}) {
      double s = 0.0;
      for (double a : group_advantages(r, mode)) s += a;
      worst = std::max(worst, std::abs(s));
    }
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(Advantages, KnownGroup) {
  const std::vector<double> r{1, 0, 1, 0};
  EXPECT_EQ(group_advantages(r, AdvantageMode::kPaperLiteral),
            (std::vector<double>{0.5, -0.5, 0.5, -0.5}));
  const auto z = group_advantages(r, AdvantageMode::kStdNormalized);
  EXPECT_NEAR(z[0], 1.0, 1e-7);
  const std::vector<double> same{0.3, 0.3, 0.3};
  for (double a : group_advantages(same, AdvantageMode::kStdNormalized)) EXPECT_EQ(a, 0.0);
  EXPECT_THROW(group_advantages(std::vector<double>{1.0}, AdvantageMode::kPaperLiteral), InputError);
}

TEST(Kl, PropertiesAgainstNaiveSum) {
  const auto layout = tiny_layout();
  Rng rng(2);
  double worst_self = 0.0, worst_naive = 0.0, min_kl = 1.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const auto a = random_params(layout, rng, 1.0);
    const auto b = random_params(layout, rng, 1.0);
    const auto prompt = testing::random_prompt(layout, rng);
    const auto prefix = testing::random_tokens(layout, rng, 0, 3);
    const Context ctx{prompt, prefix};
    const auto sa = snapshot(a, SnapshotRole::kBehavior);
    const auto sb = snapshot(b, SnapshotRole::kSftReference);
    worst_self = std::max(worst_self, exact_kl(a, sa, ctx));
    const double kl = exact_kl(a, sb, ctx);
    min_kl = std::min(min_kl, kl);
    const auto p = testing::naive_distribution(a, prompt, prefix);
    const auto q = testing::naive_distribution(b, prompt, prefix);
    double naive = 0.0;
    for (std::size_t v = 0; v < p.size(); ++v) naive += p[v] * std::log(p[v] / q[v]);
    worst_naive = std::max(worst_naive, std::abs(kl - naive));
  }
  EXPECT_LT(worst_self, 1e-12);
  EXPECT_GE(min_kl, 0.0);
  EXPECT_LT(worst_naive, 1e-10);
}

TEST(Ratio, DoubledProbabilityGivesRatioTwo) {
  const auto layout = tiny_layout();
  PolicyParams ref(layout), live(layout);
  const double v = layout.vocab_size;
  live.bias()[2] = std::log(2.0 * (v - 1.0) / (v - 2.0));
  Rng rng(3);
  const auto prompt = testing::random_prompt(layout, rng);
  const std::vector<TokenId> tokens{2};
  const auto r = token_ratio(live, snapshot(ref, SnapshotRole::kSftReference), prompt, tokens, 0);
  EXPECT_NEAR(r.ratio, 2.0, 1e-12);
  EXPECT_FALSE(r.guarded);
  const auto same = token_ratio(ref, snapshot(ref, SnapshotRole::kSftReference), prompt, tokens, 0);
  EXPECT_EQ(same.ratio, 1.0);
}

TEST(Ratio, UnderflowedReferenceIsGuarded) {
  const auto layout = tiny_layout();
  PolicyParams ref(layout), live(layout);
  ref.bias()[0] = 2000.0;
  Rng rng(4);
  const auto prompt = testing::random_prompt(layout, rng);
  const std::vector<TokenId> tokens{1};
  const auto r = token_ratio(live, snapshot(ref, SnapshotRole::kSftReference), prompt, tokens, 0);
  EXPECT_TRUE(r.guarded);
  EXPECT_EQ(r.ratio, kRatioCap);
}

// Finite differences on the objective recomputed densely; kinks are avoided
// by rejecting instances with a ratio within 1e-3 of a clip boundary.
TEST(Surrogate, GradientMatchesFiniteDifferencesIncludingClipAndKl) {
  const auto layout = tiny_layout();
  Rng rng(5);
  int instances = 0, with_clip = 0;
  double worst = 0.0;
  while (instances < 50) {
    const auto kl_ref = random_params(layout, rng, 0.5);
    auto live = kl_ref;
    const auto noise = random_params(layout, rng, 0.3);
    live.axpy(1.0, noise);
    const auto ratio_ref = (instances % 2 == 0) ? kl_ref : random_params(layout, rng, 0.5);
    const auto groups = testing::random_groups(layout, rng, 2, 3);
    TrainConfig cfg;
    cfg.clip_epsilon = 0.2;
    cfg.kl_beta = 0.05 + uniform01(rng);
    cfg.jobs = 1;

    bool near_kink = false;
    const auto rs = snapshot(ratio_ref, SnapshotRole::kBehavior);
    for (const auto& g : groups) {
      for (const auto& r : g.rollouts) {
        for (std::size_t t = 0; t < r.tokens.size(); ++t) {
          const double ratio = token_ratio(live, rs, g.prompt, r.tokens, t).ratio;
          if (std::abs(ratio - 1.2) < 1e-3 || std::abs(ratio - 0.8) < 1e-3) near_kink = true;
        }
      }
    }
    if (near_kink) continue;

    const auto res = surrogate_objective(groups, live, rs, snapshot(kl_ref, SnapshotRole::kSftReference), cfg);
    const double naive = testing::naive_objective(groups, live, ratio_ref, kl_ref, 0.2, cfg.kl_beta);
    EXPECT_NEAR(res.objective, naive, 1e-12);
    const auto fd = testing::check_gradient(live, res.gradient, [&](const PolicyParams& p) {
      return testing::naive_objective(groups, p, ratio_ref, kl_ref, 0.2, cfg.kl_beta);
    });
    worst = std::max(worst, fd.max_rel_error);
    if (res.clip_fraction > 0.0) ++with_clip;
    ++instances;
  }
  EXPECT_LT(worst, 1e-4);
  EXPECT_GE(with_clip, 10);
}

TEST(Surrogate, ZeroAdvantagesLeaveOnlyTheKlGradient) {
  const auto layout = tiny_layout();
  Rng rng(6);
  const auto ref = random_params(layout, rng);
  auto live = ref;
  live.axpy(1.0, random_params(layout, rng, 0.2));
  auto groups = testing::random_groups(layout, rng, 3, 4);
  for (auto& g : groups) std::fill(g.advantages.begin(), g.advantages.end(), 0.0);
  TrainConfig cfg;
  cfg.kl_beta = 0.0;
  const auto s = snapshot(ref, SnapshotRole::kSftReference);
  const auto res = surrogate_objective(groups, live, s, s, cfg);
  EXPECT_EQ(res.surrogate, 0.0);
  EXPECT_EQ(res.gradient.norm(), 0.0);
  cfg.kl_beta = 1.0;
  EXPECT_GT(surrogate_objective(groups, live, s, s, cfg).gradient.norm(), 0.0);
}

TEST(Surrogate, ClippingNeverIncreasesTheSurrogate) {
  const auto layout = tiny_layout();
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const auto ref = random_params(layout, rng);
    auto live = ref;
    live.axpy(1.0, random_params(layout, rng, 0.5));
    const auto groups = testing::random_groups(layout, rng, 2, 4);
    const auto s = snapshot(ref, SnapshotRole::kSftReference);
    TrainConfig cfg;
    const double clipped = surrogate_objective(groups, live, s, s, cfg).surrogate;
    cfg.clip_epsilon = 1e9;
    const auto unclipped = surrogate_objective(groups, live, s, s, cfg);
    EXPECT_LE(clipped, unclipped.surrogate + 1e-15);
    EXPECT_EQ(unclipped.clip_fraction, 0.0);
  }
}

TEST(Surrogate, WorkerCountDoesNotChangeResult) {
  const auto layout = tiny_layout();
  Rng rng(8);
  const auto ref = random_params(layout, rng);
  auto live = ref;
  live.axpy(1.0, random_params(layout, rng, 0.5));
  const auto groups = testing::random_groups(layout, rng, 9, 4);
  const auto s = snapshot(ref, SnapshotRole::kSftReference);
  TrainConfig cfg;
  cfg.jobs = 1;
  const auto a = surrogate_objective(groups, live, s, s, cfg);
  cfg.jobs = 4;
  const auto b = surrogate_objective(groups, live, s, s, cfg);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_EQ(a.gradient.flat()[0], b.gradient.flat()[0]);
  EXPECT_TRUE(std::equal(a.gradient.flat().begin(), a.gradient.flat().end(), b.gradient.flat().begin()));
}

TEST(TrainConfigValidation, NamesTheField) {
  const auto expect_field = [](TrainConfig cfg, const std::string& field) {
    try {
      validate(cfg);
      FAIL() << field;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
    }
  };
  TrainConfig c;
  c.group_size = 1;
  expect_field(c, "group_size");
  c = {};
  c.clip_epsilon = 1.5;
  expect_field(c, "clip_epsilon");
  c = {};
  c.kl_beta = -1;
  expect_field(c, "kl_beta");
  c = {};
  c.learning_rate = 0;
  expect_field(c, "rl_lr");
  EXPECT_NO_THROW(validate(TrainConfig{}));
}

class RlRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_ = new micromed::Dataset(testing::small_dataset(1, 30));
    train_ = new std::vector<Sample>(data_->split(Split::kTrain));
    sft_ = new Checkpoint(testing::quick_sft(*train_, 1));
  }
  static void TearDownTestSuite() {
    delete sft_;
    delete train_;
    delete data_;
  }
  static TrainConfig config() {
    TrainConfig cfg;
    cfg.group_size = 4;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.5;
    cfg.seed = 3;
    cfg.ratio_reference = RatioReference::kBehaviorSnapshot;
    return cfg;
  }
  static std::filesystem::path tmp(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("congrpo_rl_" + name);
    std::filesystem::remove_all(p);
    return p;
  }
  static inline micromed::Dataset* data_ = nullptr;
  static inline std::vector<Sample>* train_ = nullptr;
  static inline Checkpoint* sft_ = nullptr;
  RuleBasedEvaluator rule_;
};

TEST_F(RlRun, ZeroEpochsReturnsInputUnchanged) {
  auto cfg = config();
  cfg.epochs = 0;
  const auto res = run_rl(*train_, *sft_, cfg, rule_);
  EXPECT_EQ(res.final_checkpoint, *sft_);
  EXPECT_TRUE(res.reports.empty());
}

TEST_F(RlRun, IdenticalSeedsGiveIdenticalBytes) {
  const auto a = tmp("a"), b = tmp("b");
  auto cfg = config();
  cfg.jobs = 1;
  run_rl(*train_, *sft_, cfg, rule_, {a});
  cfg.jobs = 3;
  run_rl(*train_, *sft_, cfg, rule_, {b});
  EXPECT_EQ(read_file(a / "final.ckpt"), read_file(b / "final.ckpt"));
  EXPECT_EQ(read_file(a / "rl_metrics.jsonl"), read_file(b / "rl_metrics.jsonl"));
  EXPECT_FALSE(read_file(a / "rl_metrics.jsonl").empty());
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST_F(RlRun, UpdateMovesTheSftPolicy) {
  const auto res = run_rl(*train_, *sft_, config(), rule_);
  EXPECT_FALSE(res.final_checkpoint.params == sft_->params);
  EXPECT_EQ(res.final_checkpoint.role, SnapshotRole::kBehavior);
  EXPECT_EQ(res.final_checkpoint.meta.at("stage"), "rl");
}

TEST_F(RlRun, ResumeReproducesAnUninterruptedRun) {
  const auto full = tmp("full"), part = tmp("part");
  auto cfg = config();
  cfg.epochs = 2;
  run_rl(*train_, *sft_, cfg, rule_, {full});

  cfg.checkpoint_every = 1;
  cfg.max_steps = 3;
  const auto first = run_rl(*train_, *sft_, cfg, rule_, {part});
  EXPECT_EQ(first.reports.size(), 3u);
  cfg.max_steps = 0;
  const auto rest = run_rl(*train_, *sft_, cfg, rule_, {part, true});
  EXPECT_EQ(rest.resumed_from_step, 3);
  EXPECT_EQ(read_file(full / "rl_metrics.jsonl"), read_file(part / "rl_metrics.jsonl"));
  EXPECT_EQ(load_checkpoint(full / "final.ckpt").params, load_checkpoint(part / "final.ckpt").params);
  std::filesystem::remove_all(full);
  std::filesystem::remove_all(part);
}

}  // namespace
}  // namespace congrpo
