#pragma once

// Infinitely generated systems with tower displacements. Rank k is drawn
// with probability 1/(k(k+1)) and moves the point by e^(e^k):
//   alternating: x + (-1)^k e^(e^k)
//   symmetric:   x +- e^(e^k), sign a fair coin.
// Positions are kept as x0 + sum_k c_k e^(e^k) with integer c_k and never
// evaluated in floating point once a rank >= 7 is present.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "rdsline/errors.hpp"
#include "rdsline/parallel.hpp"
#include "rdsline/rng.hpp"

namespace rdsline {

enum class MonsterVariant { Alternating, Symmetric };

inline std::string to_string(MonsterVariant v) {
  return v == MonsterVariant::Alternating ? "alternating" : "symmetric";
}

/// e^(e^k) for k = 1..6, nearest doubles. e^(e^7) overflows.
inline constexpr std::array<double, 7> kTower = {
    0.0,
    15.154262241479264,
    1618.1779919126534,
    528491311.4854942,
    5.148435562634572e+23,
    2.851123567946151e+64,
    1.610270566779372e+175,
};

inline constexpr int kDenseRanks = 6;

/// k = floor(1/u), so P(k >= m) = 1/m.
inline std::uint64_t sample_rank(double u) {
  if (!(u > 0.0) || !(u < 1.0)) throw Error("sample_rank needs u in (0, 1)");
  return static_cast<std::uint64_t>(std::floor(1.0 / u));
}

inline std::uint64_t sample_rank_raw(std::uint64_t r) { return sample_rank(uniform_open(r)); }

/// P(k = m) = 1/(m(m+1)).
inline double rank_probability(std::uint64_t m) {
  double md = static_cast<double>(m);
  return 1.0 / (md * (md + 1.0));
}

/// P(K_n < m) = (1 - 1/m)^n.
inline double prob_max_rank_below(std::uint64_t n, std::uint64_t m) {
  if (m <= 1) return 0.0;
  return std::exp(static_cast<double>(n) * std::log1p(-1.0 / static_cast<double>(m)));
}

struct RankState {
  double x0 = 0.0;
  std::array<std::int64_t, kDenseRanks + 1> low{};
  /// Ranks above kDenseRanks; zero coefficients are erased.
  std::map<std::uint64_t, std::int64_t> high;
  std::uint64_t n = 0;
  /// sum_k |c_k|, kept incrementally.
  std::uint64_t mass = 0;

  std::int64_t coeff(std::uint64_t k) const {
    if (k <= kDenseRanks) return low[k];
    auto it = high.find(k);
    return it == high.end() ? 0 : it->second;
  }

  void add(std::uint64_t k, std::int64_t delta) {
    std::int64_t before, after;
    if (k <= kDenseRanks) {
      before = low[k];
      after = low[k] += delta;
    } else {
      auto& c = high[k];
      before = c;
      after = c += delta;
      if (after == 0) high.erase(k);
    }
    mass = mass - static_cast<std::uint64_t>(std::abs(before)) + static_cast<std::uint64_t>(std::abs(after));
  }

  /// Largest k with c_k != 0, or 0.
  std::uint64_t top_rank() const {
    if (!high.empty()) return high.rbegin()->first;
    for (int k = kDenseRanks; k >= 1; --k) {
      if (low[k] != 0) return static_cast<std::uint64_t>(k);
    }
    return 0;
  }
};

inline void apply_rank(RankState& s, std::uint64_t k, MonsterVariant variant, int sign = 1) {
  if (k == 0) throw Error("rank must be >= 1");
  std::int64_t delta = variant == MonsterVariant::Alternating ? (k % 2 == 0 ? 1 : -1) : (sign >= 0 ? 1 : -1);
  s.add(k, delta);
  ++s.n;
}

enum class Position { Below, Inside, Above };

inline std::string to_string(Position p) {
  switch (p) {
    case Position::Below: return "below";
    case Position::Inside: return "inside";
    case Position::Above: return "above";
  }
  return "?";
}

/// Float evaluation for states whose top rank is at most 6, with a bound on
/// the accumulated rounding error.
struct FloatPosition {
  double value = 0.0;
  double error = 0.0;
};

inline FloatPosition evaluate_low(const RankState& s) {
  FloatPosition p;
  p.value = s.x0;
  double magnitude = std::abs(s.x0);
  for (int k = 1; k <= kDenseRanks; ++k) {
    double term = static_cast<double>(s.low[k]) * kTower[k];
    p.value += term;
    magnitude += std::abs(term);
  }
  p.error = magnitude * 16.0 * 0x1.0p-53;
  return p;
}

/// Natural log of the margin e^(e^K) / e^(e^(K-1)) minus one, i.e.
/// e^(K-1) (e - 1); at least 693 for K >= 7.
inline double dominance_margin(std::uint64_t K) {
  double k = static_cast<double>(std::min<std::uint64_t>(K, 64));
  return std::exp(k - 1.0) * (std::numbers::e - 1.0);
}

inline Position position_vs_interval(const RankState& s, double a, double b) {
  if (!(std::abs(a) <= 1e6) || !(std::abs(b) <= 1e6) || a > b) throw Error("interval must lie in [-1e6, 1e6]");
  std::uint64_t K = s.top_rank();
  if (K > kDenseRanks) {
    // |lower ranks| + |x0| + |J| <= (mass + |x0| + 1e6) e^(e^(K-1)) < e^(e^K).
    double slack = std::log(static_cast<double>(s.mass) + std::abs(s.x0) + 1e6 + 1.0);
    if (!(slack < dominance_margin(K))) throw Error("dominance bound violated");
    return s.coeff(K) > 0 ? Position::Above : Position::Below;
  }
  FloatPosition p = evaluate_low(s);
  if (p.value + p.error < a) return Position::Below;
  if (p.value - p.error > b) return Position::Above;
  return Position::Inside;
}

struct RankRecord {
  std::uint64_t step = 0;
  std::uint64_t rank = 0;
  /// Steps strictly before the next record whose rank equals this one.
  std::uint64_t ties = 0;
};

struct MonsterOptions {
  MonsterVariant variant = MonsterVariant::Alternating;
  std::uint64_t steps = 1'000'000;
  double a = -10.0;
  double b = 10.0;
  /// Each step also moves x0 by a uniform amount in [-1, 1].
  bool perturbed = false;
  bool track_position = true;
  bool keep_ranks = false;
};

struct RankTrace {
  MonsterVariant variant = MonsterVariant::Alternating;
  std::uint64_t seed = 0;
  std::uint64_t steps = 0;
  std::vector<RankRecord> records;
  std::vector<std::uint64_t> ranks;
  std::uint64_t inside_count = 0;
  std::optional<std::uint64_t> last_inside;
  std::uint64_t final_top_rank = 0;

  std::uint64_t max_rank() const { return records.empty() ? 0 : records.back().rank; }

  /// K_n, the largest rank applied in steps 1..n.
  std::uint64_t running_max(std::uint64_t n) const {
    std::uint64_t K = 0;
    for (const auto& r : records) {
      if (r.step > n) break;
      K = r.rank;
    }
    return K;
  }
};

inline RankTrace run_monster(const MonsterOptions& opt, std::uint64_t seed) {
  if (opt.steps > 100'000'000ULL) throw ConfigError("steps must be <= 1e8");
  auto engine = make_engine(seed, Stream::Monster, 0);
  RankTrace t;
  t.variant = opt.variant;
  t.seed = seed;
  t.steps = opt.steps;
  if (opt.keep_ranks) t.ranks.reserve(opt.steps);
  RankState s;
  std::uint64_t K = 0;
  for (std::uint64_t n = 1; n <= opt.steps; ++n) {
    std::uint64_t k = sample_rank_raw(engine());
    int sign = 1;
    if (opt.variant == MonsterVariant::Symmetric) sign = (engine() >> 63) ? 1 : -1;
    if (opt.perturbed) s.x0 += uniform_symmetric(engine());
    if (k > K) {
      K = k;
      t.records.push_back({n, k, 0});
    } else if (k == K) {
      ++t.records.back().ties;
    }
    if (opt.keep_ranks) t.ranks.push_back(k);
    if (opt.track_position) {
      apply_rank(s, k, opt.variant, sign);
      if (position_vs_interval(s, opt.a, opt.b) == Position::Inside) {
        ++t.inside_count;
        t.last_inside = n;
      }
    }
  }
  t.final_top_rank = s.top_rank();
  return t;
}

/// Seed of run `index` under a master seed.
inline std::uint64_t monster_run_seed(std::uint64_t master, std::uint64_t index) {
  return derive_seed(master, Stream::MonsterSeed, index);
}

/// Runs with indices [first, first + count), returned in index order.
inline std::vector<RankTrace> run_monster_batch(const MonsterOptions& opt, std::uint64_t master, std::uint64_t first,
                                                std::uint64_t count, unsigned workers) {
  return parallel_reduce(
      count, workers, std::vector<RankTrace>{},
      [&](std::size_t begin, std::size_t end) {
        std::vector<RankTrace> out;
        for (std::size_t i = begin; i < end; ++i) out.push_back(run_monster(opt, monster_run_seed(master, first + i)));
        return out;
      },
      [](std::vector<RankTrace>& acc, const std::vector<RankTrace>& part) {
        acc.insert(acc.end(), part.begin(), part.end());
      });
}

struct FrequencyTest {
  std::uint64_t events = 0;
  double observed = 0.0;
  double expected = 0.0;
  double variance = 0.0;

  void add(bool hit, double p) {
    ++events;
    observed += hit ? 1.0 : 0.0;
    expected += p;
    variance += p * (1.0 - p);
  }
  void merge(const FrequencyTest& o) {
    events += o.events;
    observed += o.observed;
    expected += o.expected;
    variance += o.variance;
  }
  double z() const { return variance > 0 ? (observed - expected) / std::sqrt(variance) : 0.0; }
};

struct RankLemmaReport {
  /// Largest n with K_n <= sqrt(n), 0 if none.
  std::uint64_t last_small_max = 0;
  /// Largest record index j (from 1) with a repeat of rank k_{n_j} before
  /// the next record, 0 if none.
  std::uint64_t last_tie_record = 0;
  /// Largest record index j with k_{n_j} <= 2^(j/3), 0 if none.
  std::uint64_t last_slow_record = 0;
  std::uint64_t records = 0;
  /// Each first step with rank >= K after a record or tie at K is an event;
  /// it repeats K with probability 1/(K+1) and reaches 2K with probability 1/2.
  FrequencyTest repeat;
  FrequencyTest doubling;
};

inline RankLemmaReport check_rank_lemmas(const RankTrace& t) {
  RankLemmaReport r;
  r.records = t.records.size();
  for (std::size_t j = 0; j < t.records.size(); ++j) {
    const auto& rec = t.records[j];
    std::uint64_t last_step = j + 1 < t.records.size() ? t.records[j + 1].step - 1 : t.steps;
    unsigned __int128 square = static_cast<unsigned __int128>(rec.rank) * rec.rank;
    if (square <= last_step) r.last_small_max = last_step;
    std::uint64_t index = j + 1;
    if (rec.ties > 0) r.last_tie_record = index;
    if (3.0 * std::log2(static_cast<double>(rec.rank)) <= static_cast<double>(index)) r.last_slow_record = index;

    double p_repeat = 1.0 / (static_cast<double>(rec.rank) + 1.0);
    for (std::uint64_t i = 0; i < rec.ties; ++i) {
      r.repeat.add(true, p_repeat);
      r.doubling.add(false, 0.5);
    }
    if (j + 1 < t.records.size()) {
      r.repeat.add(false, p_repeat);
      r.doubling.add(t.records[j + 1].rank >= 2 * rec.rank, 0.5);
    }
  }
  return r;
}

}  // namespace rdsline
