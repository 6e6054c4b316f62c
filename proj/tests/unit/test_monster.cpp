#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "rdsline/monster.hpp"
#include "support/oracles.hpp"
#include "support/tower_oracle.hpp"

using namespace rdsline;

namespace {

MonsterOptions options(MonsterVariant v, std::uint64_t steps) {
  MonsterOptions o;
  o.variant = v;
  o.steps = steps;
  return o;
}

}  // namespace

TEST(SampleRank, Examples) {
  EXPECT_EQ(sample_rank(0.3), 3u);
  EXPECT_EQ(sample_rank(std::nextafter(1.0, 0.0)), 1u);
  EXPECT_EQ(sample_rank(0.5), 2u);
  EXPECT_THROW(sample_rank(0.0), Error);
  EXPECT_THROW(sample_rank(1.0), Error);
  EXPECT_DOUBLE_EQ(rank_probability(1), 1.0 / 2);
  EXPECT_DOUBLE_EQ(rank_probability(2), 1.0 / 6);
  EXPECT_DOUBLE_EQ(rank_probability(3), 1.0 / 12);
}

TEST(SampleRank, FrequencyLawOverTenMillionDraws) {
  auto e = make_engine(12, Stream::Generic, 0);
  const std::uint64_t n = 10'000'000;
  std::vector<double> count(21);
  for (std::uint64_t i = 0; i < n; ++i) {
    auto k = sample_rank_raw(e());
    if (k <= 20) count[k] += 1;
  }
  for (std::uint64_t k = 1; k <= 20; ++k) {
    EXPECT_LT(std::abs(oracle::binomial_z(count[k], static_cast<double>(n), rank_probability(k))), 4.0) << k;
  }
}

TEST(TowerConstants, MatchHighPrecisionValues) {
  oracle::TowerOracle hp(6);
  for (int k = 1; k <= 6; ++k) EXPECT_EQ(kTower[k], hp.tower(k)) << k;
  EXPECT_NEAR(kTower[2], 1618.178, 1e-3);
  EXPECT_NEAR(dominance_margin(7), 693.2, 0.1);
}

TEST(ApplyRank, Examples) {
  RankState s;
  apply_rank(s, 2, MonsterVariant::Alternating);
  EXPECT_EQ(s.coeff(2), 1);
  EXPECT_NEAR(evaluate_low(s).value, 1618.18, 0.01);
  RankState t;
  apply_rank(t, 1, MonsterVariant::Alternating);
  EXPECT_EQ(t.coeff(1), -1);
  RankState u;
  apply_rank(u, 3, MonsterVariant::Symmetric, +1);
  apply_rank(u, 3, MonsterVariant::Symmetric, -1);
  EXPECT_EQ(u.coeff(3), 0);
  EXPECT_EQ(u.n, 2u);
  EXPECT_EQ(u.mass, 0u);
  apply_rank(u, 40, MonsterVariant::Symmetric, -1);
  EXPECT_EQ(u.top_rank(), 40u);
  apply_rank(u, 40, MonsterVariant::Symmetric, +1);
  EXPECT_TRUE(u.high.empty());
  EXPECT_THROW(apply_rank(u, 0, MonsterVariant::Symmetric), Error);
}

TEST(Position, Examples) {
  RankState zero;
  EXPECT_EQ(position_vs_interval(zero, -10, 10), Position::Inside);
  RankState below;
  below.add(1, -1);
  EXPECT_EQ(position_vs_interval(below, -10, 10), Position::Below);
  RankState top;
  top.add(7, 1);
  top.add(6, -999'999);
  EXPECT_EQ(position_vs_interval(top, -10, 10), Position::Above);
  top.add(7, -2);
  EXPECT_EQ(position_vs_interval(top, -10, 10), Position::Below);
  EXPECT_THROW(position_vs_interval(zero, -2e6, 0), Error);
}

TEST(Position, AgreesWithHighPrecisionOracle) {
  oracle::TowerOracle hp(40);
  std::mt19937_64 rng(5);
  auto pick = [&](std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
  };
  for (int i = 0; i < 100'000; ++i) {
    RankState s;
    s.x0 = std::uniform_real_distribution<double>(-50, 50)(rng);
    if (i % 3 == 0) {
      // Near-cancelling states around J.
      s.add(2, pick(-3, 3));
      s.add(1, pick(-350, 350));
    } else {
      auto K = static_cast<std::uint64_t>(pick(2, 6));
      for (std::uint64_t k = 1; k <= K; ++k) s.add(k, pick(-1000, 1000));
      if (s.coeff(K) == 0) s.add(K, 1);
    }
    ASSERT_EQ(position_vs_interval(s, -10, 10), hp.classify(s, -10, 10)) << i;
  }
  for (int i = 0; i < 2000; ++i) {
    RankState s;
    auto K = static_cast<std::uint64_t>(pick(7, 40));
    s.add(K, pick(0, 1) ? 1 : -1);
    // Lower ranks pushed against the sign of c_K with total mass 1e6.
    std::int64_t left = 999'999;
    std::int64_t against = -s.coeff(K);
    for (std::uint64_t k = K - 1; k >= 1 && left > 0; --k) {
      std::int64_t c = k == 1 ? left : pick(0, left);
      s.add(k, against * c);
      left -= c;
    }
    ASSERT_EQ(position_vs_interval(s, -10, 10), hp.classify(s, -10, 10)) << i;
  }
}

TEST(Lemma, SmallMaximumProbability) {
  double p = prob_max_rank_below(100, 10);
  EXPECT_NEAR(p, 2.656e-5, 0.001e-5);
  EXPECT_LT(p, std::exp(-10.0));
}

TEST(RunMonster, TraceInvariantsAndMassConservation) {
  for (auto v : {MonsterVariant::Alternating, MonsterVariant::Symmetric}) {
    auto opt = options(v, 100'000);
    opt.keep_ranks = true;
    auto t = run_monster(opt, 77);
    ASSERT_EQ(t.ranks.size(), opt.steps);
    for (std::size_t j = 1; j < t.records.size(); ++j) {
      EXPECT_LT(t.records[j - 1].step, t.records[j].step);
      EXPECT_LT(t.records[j - 1].rank, t.records[j].rank);
    }
    std::map<std::uint64_t, std::uint64_t> count;
    std::uint64_t K = 0;
    std::size_t next_record = 0;
    for (std::uint64_t n = 1; n <= opt.steps; ++n) {
      auto k = t.ranks[n - 1];
      ++count[k];
      if (k > K) {
        K = k;
        ASSERT_EQ(t.records[next_record].step, n);
        ++next_record;
      }
      ASSERT_EQ(t.running_max(n), K);
    }
    // Replay: |c_k| <= count_k, equal for the alternating variant.
    RankState s;
    auto engine = make_engine(77, Stream::Monster, 0);
    for (std::uint64_t n = 0; n < opt.steps; ++n) {
      auto k = sample_rank_raw(engine());
      int sign = v == MonsterVariant::Symmetric ? ((engine() >> 63) ? 1 : -1) : 1;
      apply_rank(s, k, v, sign);
    }
    EXPECT_LE(s.mass, s.n);
    for (const auto& [k, c] : count) {
      EXPECT_LE(static_cast<std::uint64_t>(std::abs(s.coeff(k))), c);
      if (v == MonsterVariant::Alternating) {
        EXPECT_EQ(static_cast<std::uint64_t>(std::abs(s.coeff(k))), c);
      }
    }
    EXPECT_EQ(s.top_rank(), t.final_top_rank);
  }
}

TEST(RunMonster, AlternatingLeavesJEarly) {
  auto traces = run_monster_batch(options(MonsterVariant::Alternating, 100'000), 1, 0, 100, 1);
  int early = 0;
  for (const auto& t : traces) early += !t.last_inside || *t.last_inside < 1000;
  EXPECT_GE(early, 99);
}

TEST(RunMonster, PerturbedVariantReachesTheSameConclusion) {
  for (auto v : {MonsterVariant::Alternating, MonsterVariant::Symmetric}) {
    auto opt = options(v, 100'000);
    opt.perturbed = true;
    auto traces = run_monster_batch(opt, 2, 0, 100, 1);
    int clean = 0;
    for (const auto& t : traces) clean += !t.last_inside || *t.last_inside <= 10'000;
    EXPECT_GE(clean, 99);
  }
}

TEST(RunMonster, BatchIndependentOfWorkers) {
  auto opt = options(MonsterVariant::Symmetric, 20'000);
  auto a = run_monster_batch(opt, 9, 0, 12, 1);
  auto b = run_monster_batch(opt, 9, 0, 12, 8);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].seed, b[i].seed);
    EXPECT_EQ(a[i].last_inside, b[i].last_inside);
    EXPECT_EQ(a[i].records.size(), b[i].records.size());
    EXPECT_EQ(a[i].final_top_rank, b[i].final_top_rank);
  }
}

TEST(RankLemmas, HorizonsAndRecordFrequencies) {
  auto opt = options(MonsterVariant::Symmetric, 10'000);
  opt.track_position = false;
  FrequencyTest repeat, doubling;
  int small_ok = 0;
  for (const auto& t : run_monster_batch(opt, 3, 0, 2000, 1)) {
    auto r = check_rank_lemmas(t);
    small_ok += r.last_small_max < 10'000;
    repeat.merge(r.repeat);
    doubling.merge(r.doubling);
  }
  EXPECT_GE(small_ok, 1990);
  EXPECT_GT(repeat.events, 10'000u);
  EXPECT_LT(std::abs(repeat.z()), 4.0);
  EXPECT_LT(std::abs(doubling.z()), 4.0);
}

TEST(RankLemmas, HandBuiltTrace) {
  RankTrace t;
  t.steps = 20;
  t.records = {{1, 1, 2}, {4, 3, 0}, {9, 8, 1}};
  auto r = check_rank_lemmas(t);
  EXPECT_EQ(r.records, 3u);
  // K = 1 until step 3 (1 <= sqrt 3), K = 3 until step 8 (9 > 8).
  EXPECT_EQ(r.last_small_max, 3u);
  EXPECT_EQ(r.last_tie_record, 3u);
  EXPECT_EQ(r.repeat.events, 2u + 1u + 1u + 1u);
  EXPECT_EQ(r.repeat.observed, 3.0);
  EXPECT_EQ(r.doubling.observed, 2.0);
}
