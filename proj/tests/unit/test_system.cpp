#include <gtest/gtest.h>

#include "rdsline/system.hpp"
#include "support/generators.hpp"

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

}  // namespace

TEST(InverseSystem, TranslationsSwapAndKeepProbabilities) {
  auto inv = inverse_system(walk(Rational(2, 3)));
  EXPECT_EQ(inv.maps[0], MonotoneMap::affine(1, -1));
  EXPECT_EQ(inv.maps[1], MonotoneMap::affine(1, 1));
  EXPECT_EQ(inv.probs[0], Rational(2, 3));
  EXPECT_EQ(inv.probs[1], Rational(1, 3));
}

TEST(InverseSystem, Class2Example) {
  auto sys = class2();
  auto inv = inverse_system(sys);
  EXPECT_EQ(inv.probs, sys.probs);
  EXPECT_EQ(inv.maps[0], invert(sys.maps[0]));
  EXPECT_EQ(inv.maps[1], MonotoneMap::affine(1, 1));
}

TEST(InverseSystem, InvolutionOnRandomSystems) {
  gen::Gen g(21);
  for (int trial = 0; trial < 100; ++trial) {
    auto sys = g.pl_system();
    auto back = inverse_system(inverse_system(sys));
    auto inv = inverse_system(sys);
    for (int i = 0; i < 1000; ++i) {
      Rational x = g.rational(60, 9);
      for (std::size_t m = 0; m < sys.size(); ++m) {
        ASSERT_EQ(back.maps[m](x), sys.maps[m](x));
        ASSERT_EQ(inv.maps[m](sys.maps[m](x)), x);
      }
    }
  }
}

TEST(Shiftability, Examples) {
  auto w = check_shiftability(walk(Rational(1, 3)));
  EXPECT_TRUE(w.shiftable);
  EXPECT_EQ(w.shift_verdict, ShiftVerdict::Proved);

  RandomSystem only_up{{MonotoneMap::affine(1, 1)}, {Rational(1)}, "up"};
  auto u = check_shiftability(only_up);
  EXPECT_FALSE(u.shiftable);
  ASSERT_TRUE(u.counterexample.has_value());
  EXPECT_NE(u.certificate.find("left"), std::string::npos);

  auto c2 = check_shiftability(class2());
  EXPECT_TRUE(c2.shiftable);
  EXPECT_EQ(c2.shift_verdict, ShiftVerdict::Proved);
}

TEST(Shiftability, FixedPointBreaksIt) {
  // 2x and x/2 both fix 0, so nothing moves 0.
  RandomSystem s{{MonotoneMap::affine(2, 0), MonotoneMap::affine(Rational(1, 2), 0)},
                 {Rational(1, 2), Rational(1, 2)},
                 "scalings"};
  auto r = check_shiftability(s);
  EXPECT_FALSE(r.shiftable);
  ASSERT_TRUE(r.counterexample);
  EXPECT_EQ(*r.counterexample, Rational(0));
}

TEST(Shiftability, NumericKindsAreOnlyCheckedOnWindow) {
  RandomSystem s{{MonotoneMap::sin_perturbation(Rational(1, 10)), MonotoneMap::affine(1, -1)},
                 {Rational(1, 2), Rational(1, 2)},
                 "sin"};
  auto r = check_shiftability(s);
  EXPECT_FALSE(r.shiftable);  // at integers the sine map is the identity: nothing moves right
  RandomSystem t{{MonotoneMap::sin_perturbation(Rational(1, 10)), MonotoneMap::affine(1, -1), MonotoneMap::affine(1, 1)},
                 {Rational(1, 3), Rational(1, 3), Rational(1, 3)},
                 "sin walk"};
  auto q = check_shiftability(t);
  EXPECT_TRUE(q.shiftable);
  EXPECT_EQ(q.shift_verdict, ShiftVerdict::Proved);
}

TEST(Shiftability, ExactVerdictNeverContradictsGridScan) {
  gen::Gen g(22);
  for (int trial = 0; trial < 300; ++trial) {
    auto sys = g.pl_system(3);
    auto r = check_shiftability(sys);
    if (!r.shiftable) {
      ASSERT_TRUE(r.counterexample);
      bool left = false, right = false;
      for (const auto& m : sys.maps) {
        Rational y = m(*r.counterexample);
        left = left || y < *r.counterexample;
        right = right || y > *r.counterexample;
      }
      EXPECT_FALSE(left && right);
      continue;
    }
    for (int i = 0; i <= 10000; ++i) {
      Rational x = Rational(i - 5000, 50);
      bool left = false, right = false;
      for (const auto& m : sys.maps) {
        Rational y = m(x);
        left = left || y < x;
        right = right || y > x;
      }
      ASSERT_TRUE(left && right) << "grid point " << to_string(x);
    }
  }
}

TEST(ValidateSystem, Normalization) {
  EXPECT_TRUE(validate_system(walk(Rational(1, 2))).valid);
  RandomSystem bad{{MonotoneMap::affine(1, 1), MonotoneMap::affine(1, -1)}, {Rational(1, 2), Rational(1, 3)}, "bad"};
  auto r = validate_system(bad);
  ASSERT_FALSE(r.valid);
  EXPECT_NE(r.errors.front().find("sum to 5/6"), std::string::npos);
  EXPECT_THROW(require_valid(bad), InvalidSystem);
}

TEST(ValidateSystem, InvalidMapIndexAndCompactDisplacement) {
  RandomSystem bad{{MonotoneMap::affine(1, 1), MonotoneMap::piecewise_linear({Rational(0)}, {{1, 0}, {-1, 0}})},
                   {Rational(1, 2), Rational(1, 2)},
                   "bad map"};
  auto r = validate_system(bad);
  ASSERT_FALSE(r.valid);
  EXPECT_NE(r.errors.front().find("map 1"), std::string::npos);
  EXPECT_TRUE(validate_system(class2()).compact_displacement);
}
