#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "tetrys/channel.hpp"
#include "tetrys/fecblock.hpp"

using namespace tetrys;

namespace {

std::vector<std::optional<int>> outcome(FecConfig cfg, std::initializer_list<bool> lost) {
  const std::vector<char> v(lost.begin(), lost.end());
  const auto flags = std::make_unique<bool[]>(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) flags[i] = v[i] != 0;
  return fec_block_outcome(cfg, std::span<const bool>(flags.get(), v.size()));
}

double binom_tail(unsigned n, unsigned at_least, double p) {
  double s = 0;
  for (unsigned i = at_least; i <= n; ++i) {
    s += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0)) * std::pow(p, i) *
         std::pow(1 - p, n - i);
  }
  return s;
}

}  // namespace

TEST(FecBlock, NoLossesNoDelay) {
  for (const auto& d : outcome({4, 5}, {false, false, false, false, false})) EXPECT_EQ(d, 0);
}

TEST(FecBlock, HandTimelines) {
  // k=2, n=3: position 0 lost, recovered at the second received symbol.
  const auto a = outcome({2, 3}, {true, false, false});
  EXPECT_EQ(a[0], 2);
  EXPECT_EQ(a[1], 0);

  const auto b = outcome({2, 3}, {true, true, false});
  EXPECT_FALSE(b[0].has_value());
  EXPECT_FALSE(b[1].has_value());

  // k=3, n=5: positions 1 and 3 lost; the third received symbol is position 4.
  const auto c = outcome({3, 5}, {false, true, false, true, false});
  EXPECT_EQ(c[0], 0);
  EXPECT_EQ(c[1], 3);
  EXPECT_EQ(c[2], 0);
}

TEST(FecBlock, RejectsBadShapes) {
  EXPECT_THROW(FecConfig({3, 3}).validate(), std::invalid_argument);
  EXPECT_THROW(FecConfig({0, 2}).validate(), std::invalid_argument);
  EXPECT_THROW(outcome({2, 3}, {false, false}), std::invalid_argument);
  const bool seven[7] = {};
  EXPECT_THROW(fec_trace_delays({2, 3}, seven), std::invalid_argument);
}

TEST(FecBlock, LosslessCdfIsUnitStep) {
  const auto flags = std::make_unique<bool[]>(500);
  const std::span<const bool> trace(flags.get(), 500);
  const std::vector<int> grid = {0, 1, 5, 50};
  for (double v : fec_delay_cdf({4, 5}, trace, grid)) EXPECT_DOUBLE_EQ(v, 1.0);
}

// Exact delivered fraction by enumerating every loss pattern of a block,
// against the closed form 1 - p * P(Bin(n-1, p) >= n-k).
TEST(FecBlock, PlateauMatchesBinomialOracle) {
  for (const FecConfig cfg : {FecConfig{2, 3}, FecConfig{4, 5}, FecConfig{8, 10}}) {
    for (double p : {0.05, 0.15, 0.3}) {
      double delivered = 0;
      auto flags = std::make_unique<bool[]>(cfg.n);
      for (unsigned mask = 0; mask < (1u << cfg.n); ++mask) {
        unsigned losses = 0;
        for (unsigned i = 0; i < cfg.n; ++i) {
          flags[i] = (mask >> i) & 1u;
          losses += flags[i];
        }
        const double w = std::pow(p, losses) * std::pow(1 - p, cfg.n - losses);
        for (const auto& d : fec_block_outcome(cfg, std::span<const bool>(flags.get(), cfg.n))) {
          if (d) delivered += w / cfg.k;
        }
      }
      const double oracle = 1 - p * binom_tail(cfg.n - 1, cfg.n - cfg.k, p);
      EXPECT_NEAR(delivered, oracle, 1e-12) << cfg.k << "/" << cfg.n << " p=" << p;
    }
  }
}

TEST(FecBlock, TracePlateauAndMonotoneCdf) {
  const FecConfig cfg{4, 5};
  const double p = 0.15;
  const std::size_t len = 5 * 200'000;
  Channel ch(Bernoulli{p}, 3);
  auto flags = std::make_unique<bool[]>(len);
  for (std::size_t i = 0; i < len; ++i) flags[i] = ch.step();
  std::vector<int> grid(10);
  std::iota(grid.begin(), grid.end(), 0);
  const auto cdf = fec_delay_cdf(cfg, std::span<const bool>(flags.get(), len), grid);
  for (std::size_t i = 1; i < cdf.size(); ++i) EXPECT_GE(cdf[i], cdf[i - 1]);
  EXPECT_LE(cdf.back(), 1.0);
  const double oracle = 1 - p * binom_tail(4, 1, p);
  const double se = std::sqrt(oracle * (1 - oracle) / (len / 5 * 4));
  EXPECT_NEAR(cdf.back(), oracle, 5 * se);
  EXPECT_LT(cdf.back(), 1.0);
}

TEST(FecBlock, PlateauApproachesOneAsLossVanishes) {
  double prev = 0;
  for (double p : {0.1, 0.01, 0.001, 0.0001}) {
    const double plateau = 1 - p * binom_tail(4, 1, p);
    EXPECT_GT(plateau, prev);
    prev = plateau;
  }
  EXPECT_GT(prev, 1 - 1e-7);
}
