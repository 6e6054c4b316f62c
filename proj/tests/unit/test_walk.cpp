#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "rdsline/harmonic.hpp"
#include "rdsline/walk.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace rdsline;

namespace {

RandomSystem walk(Rational p) {
  return {{MonotoneMap::affine(1, 1), MonotoneMap::affine(1, -1)}, {p, 1 - p}, "walk"};
}

RandomSystem class2() {
  return {{MonotoneMap::piecewise_linear({Rational(0)}, {{1, 1}, {2, 1}}), MonotoneMap::affine(1, -1)},
          {Rational(1, 2), Rational(1, 2)},
          "class2"};
}

RandomSystem class4() {
  return {{MonotoneMap::affine(1, 1), MonotoneMap::affine(1, -1), MonotoneMap::affine(2, 0)},
          {Rational(2, 5), Rational(2, 5), Rational(1, 5)},
          "class4"};
}

SimParams params(std::uint64_t trials, std::uint64_t seed = 7) {
  SimParams p;
  p.trials = trials;
  p.master_seed = seed;
  return p;
}

bool same(const PhiEstimate& a, const PhiEstimate& b) {
  return a.plus == b.plus && a.minus == b.minus && a.zero == b.zero && a.phi_plus == b.phi_plus &&
         a.ci_halfwidth == b.ci_halfwidth;
}

PhiEstimate synthetic(double x, double plus, double minus, std::uint64_t n = 2000) {
  return make_phi_estimate(x, static_cast<std::uint64_t>(plus * n), static_cast<std::uint64_t>(minus * n), n);
}

}  // namespace

TEST(SimParams, RejectsInvalidValues) {
  SimParams p;
  EXPECT_NO_THROW(p.check());
  p.horizon = 0;
  EXPECT_THROW(p.check(), ConfigError);
  p = {};
  p.escape_threshold = 0;
  EXPECT_THROW(p.check(), ConfigError);
  p = {};
  p.confine_fraction = 1.0;
  EXPECT_THROW(p.check(), ConfigError);
  p = {};
  p.trials = 0;
  EXPECT_THROW(p.check(), ConfigError);
}

TEST(Trajectory, DeterministicShift) {
  RandomSystem up{{MonotoneMap::affine(1, 1)}, {Rational(1)}, "up"};
  SimParams p;
  p.horizon = 5;
  auto t = sample_trajectory(up, 0.0, p, 0).take_all();
  EXPECT_EQ(t, (std::vector<double>{1, 2, 3, 4, 5}));
}

TEST(Trajectory, SameSeedAndIndexGiveSameOrbit) {
  SimParams p = params(1, 99);
  p.horizon = 1000;
  auto a = sample_trajectory(class4(), 0.5, p, 3).take_all();
  auto b = sample_trajectory(class4(), 0.5, p, 3).take_all();
  auto c = sample_trajectory(class4(), 0.5, p, 4).take_all();
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(Trajectory, MapFrequenciesWithinThreeSigma) {
  SimParams p = params(1, 5);
  p.horizon = 1'000'000;
  auto stream = sample_trajectory(walk(Rational(2, 3)), 0.0, p, 0);
  double prev = 0.0, ups = 0.0;
  while (!stream.done()) {
    double x = stream.next();
    if (x > prev) ups += 1.0;
    prev = x;
  }
  EXPECT_LT(std::abs(oracle::binomial_z(ups, 1e6, 2.0 / 3.0)), 3.0);
}

TEST(IndexSampler, ThresholdsAreExact) {
  IndexSampler s({Rational(1, 2), Rational(1, 4), Rational(1, 4)});
  EXPECT_EQ(s(0), 0u);
  EXPECT_EQ(s((1ULL << 63) - 1), 0u);
  EXPECT_EQ(s(1ULL << 63), 1u);
  EXPECT_EQ(s(3ULL << 62), 2u);
  EXPECT_EQ(s(~0ULL), 2u);
}

TEST(ClassifyTrajectory, Examples) {
  SimParams p;
  p.escape_threshold = 100;
  p.horizon = 10000;
  std::vector<double> shift(10000);
  for (std::size_t i = 0; i < shift.size(); ++i) shift[i] = static_cast<double>(i + 1);
  auto out = classify_trajectory(shift, p);
  EXPECT_EQ(out.verdict, Verdict::TendsPlus);
  EXPECT_EQ(out.first_exit_step, 101u);
  EXPECT_GT(out.final_position, p.confine_fraction * p.escape_threshold);

  std::vector<double> osc;
  for (int i = 0; i < 10000; ++i) osc.push_back(i % 2 ? 1.0 : -1.0);
  auto o = classify_trajectory(osc, p);
  EXPECT_EQ(o.verdict, Verdict::Undecided);
  EXPECT_FALSE(o.first_exit_step);

  // Leaves above M but falls back below M/2: not an escape.
  std::vector<double> back{10, 150, 200, 40, 30};
  EXPECT_EQ(classify_trajectory(back, p).verdict, Verdict::Undecided);
  std::vector<double> down{-10, -150, -60, -300};
  EXPECT_EQ(classify_trajectory(down, p).verdict, Verdict::TendsMinus);
}

TEST(ClassifyTrajectory, SymmetricWalkRarelyEscapes) {
  SimParams p = params(10000, 3);
  auto e = estimate_phi(walk(Rational(1, 2)), 0.0, p);
  EXPECT_GE(e.phi_zero, 0.95);
}

TEST(ClassifyTrajectory, OnlineAndBatchVerdictsAgree) {
  SimParams p = params(1, 8);
  p.horizon = 2000;
  p.escape_threshold = 30;
  CompiledSystem compiled(class4());
  for (std::uint64_t t = 0; t < 200; ++t) {
    auto batch = classify_trajectory(sample_trajectory(class4(), 0.0, p, t).take_all(), p);
    auto online = run_trial(compiled, 0.0, p, t);
    EXPECT_EQ(batch.verdict, online.verdict);
    if (batch.verdict == Verdict::TendsPlus) {
      EXPECT_GT(batch.final_position, p.confine_fraction * p.escape_threshold);
    }
    if (batch.verdict == Verdict::TendsMinus) {
      EXPECT_LT(batch.final_position, -p.confine_fraction * p.escape_threshold);
    }
  }
}

TEST(EstimatePhi, AsymmetricWalkEscapesUp) {
  auto e = estimate_phi(walk(Rational(2, 3)), 0.0, params(2000));
  EXPECT_NEAR(e.phi_plus, 1.0, 0.02);
  long double ruin = oracle::gamblers_ruin(2.0L / 3.0L, -1000, 1000, 0);
  EXPECT_NEAR(static_cast<double>(ruin), 1.0, 1e-12);
}

TEST(EstimatePhi, SymmetricWalkOscillates) {
  auto e = estimate_phi(walk(Rational(1, 2)), 0.0, params(2000));
  EXPECT_NEAR(e.phi_zero, 1.0, 0.05);
}

TEST(EstimatePhi, Class4DependsOnStart) {
  SimParams p = params(2000);
  auto lo = estimate_phi(class4(), -4.0, p);
  auto hi = estimate_phi(class4(), 4.0, p);
  EXPECT_GT(hi.phi_plus - lo.phi_plus, 2.0 * std::max(lo.ci_halfwidth, hi.ci_halfwidth));
  HarmonicOptions o;
  o.grid_points = 101;
  auto g = solve_phi_window(class4(), -50, 50, o);
  EXPECT_LE(std::abs(hi.phi_plus - g(4.0)), hi.ci_halfwidth + 0.02);
  EXPECT_LE(std::abs(lo.phi_plus - g(-4.0)), lo.ci_halfwidth + 0.02);
}

TEST(EstimatePhi, CountsPartitionTrials) {
  gen::Gen g(31);
  SimParams p = params(300);
  p.horizon = 2000;
  p.escape_threshold = 100;
  for (int trial = 0; trial < 10; ++trial) {
    auto sys = g.pl_system(3);
    auto e = estimate_phi(sys, g.real(-10, 10), p);
    EXPECT_EQ(e.plus + e.minus + e.zero, e.trials);
    EXPECT_DOUBLE_EQ(e.phi_plus + e.phi_minus + e.phi_zero, 1.0);
  }
}

TEST(EstimatePhi, IndependentOfWorkerCount) {
  SimParams p = params(1000);
  auto base = estimate_phi(class4(), 1.5, p);
  for (unsigned w : {2u, 8u}) {
    p.workers = w;
    EXPECT_TRUE(same(base, estimate_phi(class4(), 1.5, p)));
  }
}

TEST(Property, PhiPlusMonotoneWithinBand) {
  gen::Gen g(32);
  SimParams p = params(400);
  p.horizon = 3000;
  p.escape_threshold = 200;
  for (int trial = 0; trial < 8; ++trial) {
    auto sys = g.shiftable_system();
    ASSERT_TRUE(check_shiftability(sys).shiftable);
    std::vector<double> xs{-15, -6, -1, 0, 2, 7, 15};
    auto est = estimate_phi(sys, xs, p);
    for (std::size_t i = 1; i < est.size(); ++i) {
      double band = 2.0 * (est[i - 1].ci_halfwidth + est[i].ci_halfwidth);
      EXPECT_LE(est[i - 1].phi_plus, est[i].phi_plus + band);
      EXPECT_LE(est[i].phi_minus, est[i - 1].phi_minus + band);
    }
  }
}

TEST(Recurrence, SymmetricWalkMatchesOccupationOracle) {
  double exact = oracle::srw_expected_visits(10000, -1, 1);
  // Asymptotically 3 sqrt(2N / pi).
  EXPECT_NEAR(exact, 3.0 * std::sqrt(2.0 * 10000 / std::numbers::pi), 0.02 * 239.4);
  auto s = recurrence_stats(walk(Rational(1, 2)), {-1, 1}, 0.0, params(2000));
  EXPECT_NEAR(s.mean_visits, exact, 0.25 * exact);
  EXPECT_NEAR(s.mean_visits_early + s.mean_visits_late, s.mean_visits, 1e-9);
  EXPECT_GT(s.late_visit_fraction, 0.5);
}

TEST(Recurrence, ShiftVisitsOnce) {
  RandomSystem up{{MonotoneMap::affine(1, 1)}, {Rational(1)}, "up"};
  SimParams p = params(5);
  p.horizon = 100;
  auto s = recurrence_stats(up, {-1, 1}, 0.0, p);
  EXPECT_EQ(s.mean_visits, 1.0);
  EXPECT_EQ(s.late_visit_fraction, 0.0);
}

TEST(Pattern, ReadsEachShape) {
  std::vector<PhiEstimate> plus{synthetic(-5, 0.99, 0), synthetic(0, 1, 0), synthetic(5, 1, 0)};
  EXPECT_EQ(read_pattern(plus, 0.1).pattern, Pattern::Plus);
  std::vector<PhiEstimate> zero{synthetic(-5, 0.01, 0.01), synthetic(0, 0, 0), synthetic(5, 0.02, 0)};
  EXPECT_EQ(read_pattern(zero, 0.1).pattern, Pattern::Zero);
  std::vector<PhiEstimate> split{synthetic(-5, 0.02, 0.98), synthetic(0, 0.5, 0.5), synthetic(5, 0.98, 0.02)};
  EXPECT_EQ(read_pattern(split, 0.1).pattern, Pattern::Split);
}

TEST(Pattern, MixedPhiZeroIsRefusedNotForced) {
  std::vector<PhiEstimate> mixed{synthetic(-5, 0, 0), synthetic(0, 0.5, 0), synthetic(5, 1, 0)};
  auto r = read_pattern(mixed, 0.1);
  EXPECT_EQ(r.pattern, Pattern::Inconsistent);
  EXPECT_FALSE(r.diagnostic.empty());
  std::vector<PhiEstimate> decreasing{synthetic(-5, 0.9, 0.1), synthetic(5, 0.1, 0.9)};
  EXPECT_EQ(read_pattern(decreasing, 0.1).pattern, Pattern::Inconsistent);
}

TEST(ClassTable, FlagsAndRefusals) {
  ClassVerdict v;
  auto check = [&](Pattern f, Pattern i, int c, bool orient, bool swap) {
    v = {};
    v.forward_pattern = f;
    v.inverse_pattern = i;
    assign_class(v);
    EXPECT_EQ(v.class_id, c);
    EXPECT_EQ(v.orientation_reversed, orient);
    EXPECT_EQ(v.swapped, swap);
  };
  check(Pattern::Plus, Pattern::Minus, 1, false, false);
  check(Pattern::Minus, Pattern::Plus, 1, true, false);
  check(Pattern::Plus, Pattern::Zero, 2, false, false);
  check(Pattern::Minus, Pattern::Zero, 2, true, false);
  check(Pattern::Zero, Pattern::Plus, 2, false, true);
  check(Pattern::Zero, Pattern::Minus, 2, true, true);
  check(Pattern::Zero, Pattern::Zero, 3, false, false);
  check(Pattern::Split, Pattern::Zero, 4, false, false);
  check(Pattern::Zero, Pattern::Split, 4, false, true);
  check(Pattern::Split, Pattern::Split, 0, false, false);
  EXPECT_TRUE(v.refused());
  check(Pattern::Plus, Pattern::Plus, 0, false, false);
}

TEST(ClassifySystem, RefusesNonShiftable) {
  RandomSystem up{{MonotoneMap::affine(1, 1)}, {Rational(1)}, "up"};
  auto v = classify_system(up, params(10));
  EXPECT_TRUE(v.refused());
  EXPECT_NE(v.refusal.find("not shiftable"), std::string::npos);
}

TEST(ClassifySystem, MirroredClass2CarriesOrientationFlag) {
  RandomSystem mirrored{{MonotoneMap::piecewise_linear({Rational(0)}, {{2, -1}, {1, -1}}), MonotoneMap::affine(1, 1)},
                        {Rational(1, 2), Rational(1, 2)},
                        "mirrored class2"};
  ClassifyParams cp;
  cp.probes = {-20, -5, 0, 5};
  auto v = classify_system(mirrored, params(2000), cp);
  EXPECT_EQ(v.class_id, 2) << v.refusal;
  EXPECT_TRUE(v.orientation_reversed);
  EXPECT_FALSE(v.swapped);
}

TEST(ClassifySystem, SwappingForwardAndInverseSetsSwapFlag) {
  ClassifyParams cp;
  cp.probes = {-5, 0, 5, 20};
  auto v = classify_system(inverse_system(class2()), params(2000), cp);
  EXPECT_EQ(v.class_id, 2) << v.refusal;
  EXPECT_TRUE(v.swapped);
  EXPECT_FALSE(v.orientation_reversed);
}

TEST(Property, DualityAndDichotomyOnTransientClasses) {
  ClassifyParams cp;
  cp.probes = {-5, 0, 5, 20};
  for (const auto& sys : {walk(Rational(2, 3)), class2()}) {
    auto v = classify_system(sys, params(2000, 11), cp);
    ASSERT_TRUE(v.class_id == 1 || v.class_id == 2) << v.refusal;
    for (const auto& e : v.inverse) EXPECT_LE(e.phi_plus, cp.tau);
    for (const auto* side : {&v.forward, &v.inverse}) {
      bool all_small = std::all_of(side->begin(), side->end(), [&](auto& e) { return e.phi_zero <= cp.tau; });
      bool all_large = std::all_of(side->begin(), side->end(), [&](auto& e) { return e.phi_zero >= 1 - cp.tau; });
      EXPECT_TRUE(all_small || all_large);
    }
  }
}
