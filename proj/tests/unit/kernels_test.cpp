#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "congrpo/kernels.hpp"
#include "test_util.hpp"

namespace congrpo {
namespace {

using kernels::KernelTable;

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> d(0.0, 3.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

std::vector<double> log_softmax(const std::vector<double>& z) {
  auto p = testing::naive_softmax(z);
  for (double& v : p) v = std::log(v);
  return p;
}

class KernelEquivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    if (kernels::simd_table() == nullptr) GTEST_SKIP() << "no SIMD variant on this CPU";
  }
  const KernelTable& s = kernels::scalar_table();
  const KernelTable& v = *kernels::simd_table();
};

TEST_F(KernelEquivalence, AllKernelsMatchScalarAcrossLengths) {
  std::mt19937_64 rng(3);
  for (std::size_t n = 0; n < 70; ++n) {
    const auto x = random_vector(rng, n);
    const auto y0 = random_vector(rng, n);

    auto ys = y0, yv = y0;
    s.axpy(0.7, x.data(), ys.data(), n);
    v.axpy(0.7, x.data(), yv.data(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(ys[i], yv[i], 1e-12);

    ys = y0;
    yv = y0;
    s.scale(-1.3, ys.data(), n);
    v.scale(-1.3, yv.data(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(ys[i], yv[i]);

    EXPECT_NEAR(s.dot(x.data(), y0.data(), n), v.dot(x.data(), y0.data(), n), 1e-10);
    EXPECT_NEAR(s.sum(x.data(), n), v.sum(x.data(), n), 1e-10);
    if (n > 0) EXPECT_EQ(s.max(x.data(), n), v.max(x.data(), n));

    if (n > 0) {
      const auto lp = log_softmax(x);
      const auto lq = log_softmax(y0);
      EXPECT_NEAR(s.kl_from_logs(lp.data(), lq.data(), n), v.kl_from_logs(lp.data(), lq.data(), n),
                  1e-12);
    }
  }
}

TEST(Kernels, ScalarKlMatchesDefinition) {
  std::mt19937_64 rng(5);
  const auto& s = kernels::scalar_table();
  for (int trial = 0; trial < 100; ++trial) {
    const auto zp = random_vector(rng, 9), zq = random_vector(rng, 9);
    const auto p = testing::naive_softmax(zp), q = testing::naive_softmax(zq);
    double naive = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) naive += p[i] * std::log(p[i] / q[i]);
    const auto lp = log_softmax(zp), lq = log_softmax(zq);
    EXPECT_NEAR(s.kl_from_logs(lp.data(), lq.data(), 9), naive, 1e-12);
  }
}

TEST(Kernels, SoftmaxMatchesNaiveOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    auto z = random_vector(rng, 1 + trial % 60);
    const double temperature = 0.25 + 0.25 * (trial % 8);
    std::vector<double> scaled(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) scaled[i] = z[i] / temperature;
    const auto expect = testing::naive_softmax(scaled);
    std::vector<double> logs(z.size());
    kernels::softmax(z, temperature, logs);
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      EXPECT_NEAR(z[i], expect[i], 1e-13);
      EXPECT_NEAR(logs[i], std::log(expect[i]), 1e-11);
      total += z[i];
    }
    EXPECT_NEAR(total, 1.0, 1e-13);
  }
}

TEST(Kernels, SoftmaxSurvivesHugeLogits) {
  std::vector<double> z{1e300, -1e300, 0.0};
  kernels::softmax(z, 1.0);
  EXPECT_EQ(z[0], 1.0);
  EXPECT_EQ(z[1], 0.0);
  EXPECT_EQ(z[2], 0.0);
}

TEST(Kernels, ActiveTableIsNamed) {
  const auto name = kernels::isa_name(kernels::active().isa);
  EXPECT_FALSE(name.empty());
}

}  // namespace
}  // namespace congrpo
