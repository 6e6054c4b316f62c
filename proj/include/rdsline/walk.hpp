#pragma once

// Seeded Monte Carlo over random orbits: finite-horizon escape verdicts,
// estimates of the escape probabilities phi_+, phi_-, phi_0, recurrence
// statistics and the four-class decision for a system and its inverse.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "rdsline/errors.hpp"
#include "rdsline/parallel.hpp"
#include "rdsline/rng.hpp"
#include "rdsline/system.hpp"

namespace rdsline {

struct SimParams {
  std::uint64_t horizon = 10000;
  double escape_threshold = 1000.0;
  double confine_fraction = 0.5;
  std::uint64_t trials = 2000;
  std::uint64_t master_seed = 0;
  unsigned workers = 1;

  void check() const {
    if (horizon < 1) throw ConfigError("horizon must be >= 1");
    if (!(escape_threshold > 0)) throw ConfigError("escape threshold must be > 0");
    if (!(confine_fraction > 0 && confine_fraction < 1)) throw ConfigError("confine_fraction must lie in (0,1)");
    if (trials < 1) throw ConfigError("trials must be >= 1");
  }
};

/// Map with a branch-light double evaluation for the affine and
/// piecewise-linear kinds; other kinds fall back to MonotoneMap.
class FastMap {
 public:
  explicit FastMap(MonotoneMap m) : map_(std::move(m)) {
    if (const auto* pl = map_.linear()) {
      linear_ = true;
      for (const auto& b : pl->breakpoints()) breakpoints_.push_back(to_double(b));
      for (const auto& piece : pl->pieces()) {
        slopes_.push_back(to_double(piece.slope));
        intercepts_.push_back(to_double(piece.intercept));
      }
    }
  }

  double operator()(double x) const {
    if (!linear_) return map_(x);
    std::size_t i = 0;
    while (i < breakpoints_.size() && x >= breakpoints_[i]) ++i;
    return slopes_[i] * x + intercepts_[i];
  }

  const MonotoneMap& map() const noexcept { return map_; }

 private:
  MonotoneMap map_;
  bool linear_ = false;
  std::vector<double> breakpoints_;
  std::vector<double> slopes_;
  std::vector<double> intercepts_;
};

/// Precomputed sampler plus maps; cheap to copy into workers.
class CompiledSystem {
 public:
  explicit CompiledSystem(const RandomSystem& sys) : sampler_(sys.probs) {
    for (const auto& m : sys.maps) maps_.emplace_back(m);
  }

  template <class Engine>
  double step(double x, Engine& engine) const {
    return maps_[sampler_(engine())](x);
  }

  template <class Engine>
  std::size_t draw(Engine& engine) const {
    return sampler_(engine());
  }

  double apply(std::size_t i, double x) const { return maps_[i](x); }
  const MonotoneMap& map(std::size_t i) const { return maps_[i].map(); }

 private:
  std::vector<FastMap> maps_;
  IndexSampler sampler_;
};

/// Lazily generated orbit x_1, x_2, ... of one trial; x_0 is the start point.
class TrajectoryStream {
 public:
  TrajectoryStream(const RandomSystem& sys, double x0, const SimParams& params, std::uint64_t trial_index)
      : system_(sys),
        engine_(make_engine(params.master_seed, Stream::Trajectory, trial_index)),
        position_(x0),
        horizon_(params.horizon) {}

  bool done() const noexcept { return step_ >= horizon_; }
  std::uint64_t step() const noexcept { return step_; }
  double position() const noexcept { return position_; }

  double next() {
    position_ = system_.step(position_, engine_);
    ++step_;
    return position_;
  }

  std::vector<double> take_all() {
    std::vector<double> out;
    out.reserve(horizon_ - step_);
    while (!done()) out.push_back(next());
    return out;
  }

 private:
  CompiledSystem system_;
  std::mt19937_64 engine_;
  double position_;
  std::uint64_t step_ = 0;
  std::uint64_t horizon_;
};

inline TrajectoryStream sample_trajectory(const RandomSystem& sys, double x0, const SimParams& params,
                                          std::uint64_t trial_index) {
  return TrajectoryStream(sys, x0, params, trial_index);
}

enum class Verdict { TendsPlus, TendsMinus, Undecided };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::TendsPlus: return "tends_plus";
    case Verdict::TendsMinus: return "tends_minus";
    case Verdict::Undecided: return "undecided";
  }
  return "unknown";
}

struct TrajectoryOutcome {
  Verdict verdict = Verdict::Undecided;
  std::optional<std::uint64_t> first_exit_step;
  double final_position = 0.0;
};

/// Online form of the escape proxy: TendsPlus iff the orbit exceeds M at some
/// step and stays above confine_fraction*M at every later step; TendsMinus
/// mirrors it.
class EscapeTracker {
 public:
  explicit EscapeTracker(const SimParams& params)
      : high_(params.escape_threshold), low_(params.confine_fraction * params.escape_threshold) {}

  void observe(std::uint64_t n, double x) noexcept {
    // Steps are stored shifted by one so that 0 means "never".
    const std::uint64_t s = n + 1;
    if (x > high_) {
      last_above_ = s;
      if (!first_exit_) first_exit_ = s;
    } else if (x <= low_) {
      last_not_above_ = s;
    }
    if (x < -high_) {
      last_below_ = s;
      if (!first_exit_) first_exit_ = s;
    } else if (x >= -low_) {
      last_not_below_ = s;
    }
    final_ = x;
  }

  TrajectoryOutcome outcome() const {
    TrajectoryOutcome out;
    out.final_position = final_;
    if (first_exit_) out.first_exit_step = first_exit_ - 1;
    if (last_above_ > last_not_above_) {
      out.verdict = Verdict::TendsPlus;
    } else if (last_below_ > last_not_below_) {
      out.verdict = Verdict::TendsMinus;
    }
    return out;
  }

 private:
  double high_;
  double low_;
  std::uint64_t last_above_ = 0, last_not_above_ = 0, last_below_ = 0, last_not_below_ = 0, first_exit_ = 0;
  double final_ = 0.0;
};

/// Verdict for an orbit x_1..x_N (the start point is not part of `traj`).
inline TrajectoryOutcome classify_trajectory(std::span<const double> traj, const SimParams& params) {
  EscapeTracker tracker(params);
  for (std::size_t i = 0; i < traj.size(); ++i) tracker.observe(i + 1, traj[i]);
  return tracker.outcome();
}

/// Runs one trial to the horizon. A non-finite position is absorbing for every
/// map kind, so the remaining steps cannot change the verdict and are skipped.
inline TrajectoryOutcome run_trial(const CompiledSystem& sys, double x0, const SimParams& params,
                                   std::uint64_t trial_index) {
  auto engine = make_engine(params.master_seed, Stream::Trajectory, trial_index);
  EscapeTracker tracker(params);
  double x = x0;
  for (std::uint64_t n = 1; n <= params.horizon; ++n) {
    x = sys.step(x, engine);
    tracker.observe(n, x);
    if (!std::isfinite(x)) break;
  }
  return tracker.outcome();
}

struct PhiEstimate {
  double x = 0.0;
  std::uint64_t plus = 0;
  std::uint64_t minus = 0;
  std::uint64_t zero = 0;
  std::uint64_t trials = 0;
  double phi_plus = 0.0;
  double phi_minus = 0.0;
  double phi_zero = 0.0;
  /// Largest normal-approximation half-width among the three proportions.
  double ci_halfwidth = 0.0;
};

inline double z_for_level(double level) {
  boost::math::normal standard;
  return boost::math::quantile(standard, 0.5 + level / 2.0);
}

inline double proportion_halfwidth(double p, std::uint64_t n, double z) {
  return z * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

inline PhiEstimate make_phi_estimate(double x, std::uint64_t plus, std::uint64_t minus, std::uint64_t trials,
                                     double ci_level = 0.95) {
  PhiEstimate e;
  e.x = x;
  e.plus = plus;
  e.minus = minus;
  e.zero = trials - plus - minus;
  e.trials = trials;
  double n = static_cast<double>(trials);
  e.phi_plus = static_cast<double>(plus) / n;
  e.phi_minus = static_cast<double>(minus) / n;
  e.phi_zero = static_cast<double>(e.zero) / n;
  double z = z_for_level(ci_level);
  e.ci_halfwidth = std::max({proportion_halfwidth(e.phi_plus, trials, z), proportion_halfwidth(e.phi_minus, trials, z),
                             proportion_halfwidth(e.phi_zero, trials, z)});
  return e;
}

/// Trials share streams across start points (common random numbers), so
/// estimates at x < y come from coupled orbits.
inline PhiEstimate estimate_phi(const RandomSystem& sys, double x, const SimParams& params, double ci_level = 0.95) {
  params.check();
  CompiledSystem compiled(sys);
  struct Counts {
    std::uint64_t plus = 0, minus = 0;
  };
  auto counts = parallel_reduce(
      params.trials, params.workers, Counts{},
      [&](std::size_t begin, std::size_t end) {
        Counts c;
        for (std::size_t t = begin; t < end; ++t) {
          auto out = run_trial(compiled, x, params, t);
          if (out.verdict == Verdict::TendsPlus) ++c.plus;
          if (out.verdict == Verdict::TendsMinus) ++c.minus;
        }
        return c;
      },
      [](Counts& acc, const Counts& part) {
        acc.plus += part.plus;
        acc.minus += part.minus;
      });
  return make_phi_estimate(x, counts.plus, counts.minus, params.trials, ci_level);
}

inline std::vector<PhiEstimate> estimate_phi(const RandomSystem& sys, std::span<const double> xs,
                                             const SimParams& params, double ci_level = 0.95) {
  std::vector<PhiEstimate> out;
  out.reserve(xs.size());
  for (double x : xs) out.push_back(estimate_phi(sys, x, params, ci_level));
  return out;
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const noexcept { return lo <= x && x <= hi; }
};

struct RecurrenceStats {
  std::uint64_t trials = 0;
  double mean_visits = 0.0;
  double mean_visits_early = 0.0;
  double mean_visits_late = 0.0;
  /// Fraction of trials visiting J at some step n > N/2.
  double late_visit_fraction = 0.0;
};

/// Counts steps n >= 1 with F_n(x0) in J, split at N/2.
inline RecurrenceStats recurrence_stats(const RandomSystem& sys, Interval j, double x0, const SimParams& params) {
  params.check();
  if (!(std::isfinite(j.lo) && std::isfinite(j.hi) && j.lo <= j.hi)) throw ConfigError("J must be a bounded interval");
  CompiledSystem compiled(sys);
  struct Counts {
    std::uint64_t early = 0, late = 0, late_trials = 0;
  };
  const std::uint64_t half = params.horizon / 2;
  auto c = parallel_reduce(
      params.trials, params.workers, Counts{},
      [&](std::size_t begin, std::size_t end) {
        Counts acc;
        for (std::size_t t = begin; t < end; ++t) {
          auto engine = make_engine(params.master_seed, Stream::Trajectory, t);
          double x = x0;
          bool late_hit = false;
          for (std::uint64_t n = 1; n <= params.horizon; ++n) {
            x = compiled.step(x, engine);
            if (j.contains(x)) {
              if (n <= half) {
                ++acc.early;
              } else {
                ++acc.late;
                late_hit = true;
              }
            }
          }
          if (late_hit) ++acc.late_trials;
        }
        return acc;
      },
      [](Counts& a, const Counts& b) {
        a.early += b.early;
        a.late += b.late;
        a.late_trials += b.late_trials;
      });
  RecurrenceStats s;
  s.trials = params.trials;
  double n = static_cast<double>(params.trials);
  s.mean_visits_early = static_cast<double>(c.early) / n;
  s.mean_visits_late = static_cast<double>(c.late) / n;
  s.mean_visits = static_cast<double>(c.early + c.late) / n;
  s.late_visit_fraction = static_cast<double>(c.late_trials) / n;
  return s;
}

struct ClassifyParams {
  double tau = 0.1;
  double ci_level = 0.95;
  std::vector<double> probes{-20.0, -5.0, 0.0, 5.0, 20.0};
};

/// Qualitative shape of (phi_+, phi_-, phi_0) across probe points.
enum class Pattern { Plus, Minus, Zero, Split, Inconsistent };

inline std::string to_string(Pattern p) {
  switch (p) {
    case Pattern::Plus: return "phi_plus=1";
    case Pattern::Minus: return "phi_minus=1";
    case Pattern::Zero: return "phi_zero=1";
    case Pattern::Split: return "phi_zero=0, phi_plus non-constant";
    case Pattern::Inconsistent: return "inconsistent";
  }
  return "unknown";
}

struct PatternReading {
  Pattern pattern = Pattern::Inconsistent;
  std::string diagnostic;
};

/// Reads a pattern from estimates sorted by x. Mixed phi_0 values (some near 0,
/// some near 1 or in between) and monotonicity breaks are reported as inconsistent.
inline PatternReading read_pattern(std::span<const PhiEstimate> est, double tau) {
  PatternReading r;
  if (est.empty()) {
    r.diagnostic = "no probe points";
    return r;
  }
  for (std::size_t i = 1; i < est.size(); ++i) {
    double band = 2.0 * (est[i - 1].ci_halfwidth + est[i].ci_halfwidth);
    if (est[i - 1].phi_plus > est[i].phi_plus + band || est[i].phi_minus > est[i - 1].phi_minus + band) {
      r.diagnostic = "monotonicity of phi_plus/phi_minus violated between x=" + std::to_string(est[i - 1].x) +
                     " and x=" + std::to_string(est[i].x);
      return r;
    }
  }
  auto all = [&](auto pred) { return std::all_of(est.begin(), est.end(), pred); };
  bool zero_small = all([&](const PhiEstimate& e) { return e.phi_zero <= tau; });
  bool zero_large = all([&](const PhiEstimate& e) { return e.phi_zero >= 1.0 - tau; });
  if (zero_large) {
    r.pattern = Pattern::Zero;
    return r;
  }
  if (!zero_small) {
    r.diagnostic = "phi_zero neither uniformly small nor uniformly large (horizon or threshold too small?)";
    return r;
  }
  if (all([&](const PhiEstimate& e) { return e.phi_plus >= 1.0 - tau; })) {
    r.pattern = Pattern::Plus;
    return r;
  }
  if (all([&](const PhiEstimate& e) { return e.phi_minus >= 1.0 - tau; })) {
    r.pattern = Pattern::Minus;
    return r;
  }
  auto [lo, hi] = std::minmax_element(est.begin(), est.end(),
                                      [](const auto& a, const auto& b) { return a.phi_plus < b.phi_plus; });
  double ci = std::max_element(est.begin(), est.end(), [](const auto& a, const auto& b) {
                return a.ci_halfwidth < b.ci_halfwidth;
              })->ci_halfwidth;
  if (hi->phi_plus - lo->phi_plus > 2.0 * ci) {
    r.pattern = Pattern::Split;
    return r;
  }
  r.diagnostic = "phi_zero is small but phi_plus is neither near 0/1 nor detectably non-constant";
  return r;
}

struct ClassVerdict {
  /// 1..4, or 0 when refused.
  int class_id = 0;
  /// Class reached after the space symmetry x -> -x.
  bool orientation_reversed = false;
  /// Class reached after interchanging the system with its inverse.
  bool swapped = false;
  Pattern forward_pattern = Pattern::Inconsistent;
  Pattern inverse_pattern = Pattern::Inconsistent;
  std::vector<PhiEstimate> forward;
  std::vector<PhiEstimate> inverse;
  std::string refusal;
  std::vector<std::string> notes;

  bool refused() const noexcept { return class_id == 0; }
};

/// Class table over (forward, inverse) patterns, up to x -> -x and swapping.
inline void assign_class(ClassVerdict& v) {
  using P = Pattern;
  const P f = v.forward_pattern, i = v.inverse_pattern;
  auto set = [&](int c, bool orient, bool swap) {
    v.class_id = c;
    v.orientation_reversed = orient;
    v.swapped = swap;
  };
  if (f == P::Plus && i == P::Minus) return set(1, false, false);
  if (f == P::Minus && i == P::Plus) return set(1, true, false);
  if (f == P::Plus && i == P::Zero) return set(2, false, false);
  if (f == P::Minus && i == P::Zero) return set(2, true, false);
  if (f == P::Zero && i == P::Plus) return set(2, false, true);
  if (f == P::Zero && i == P::Minus) return set(2, true, true);
  if (f == P::Zero && i == P::Zero) return set(3, false, false);
  if (f == P::Split && i == P::Zero) return set(4, false, false);
  if (f == P::Zero && i == P::Split) return set(4, false, true);
  v.class_id = 0;
  v.refusal = "estimates match no class: forward " + to_string(f) + ", inverse " + to_string(i);
}

inline ClassVerdict classify_system(const RandomSystem& sys, const SimParams& params,
                                    const ClassifyParams& cp = {}) {
  require_valid(sys);
  ClassVerdict v;
  auto shift = check_shiftability(sys);
  if (!shift.shiftable) {
    v.refusal = "system is not shiftable: " + shift.certificate;
    return v;
  }
  if (shift.shift_verdict == ShiftVerdict::CheckedOnWindow) v.notes.push_back(shift.notes);

  std::vector<double> probes = cp.probes;
  std::sort(probes.begin(), probes.end());
  RandomSystem inv = inverse_system(sys);
  v.forward = estimate_phi(sys, probes, params, cp.ci_level);
  v.inverse = estimate_phi(inv, probes, params, cp.ci_level);

  auto fr = read_pattern(v.forward, cp.tau);
  auto ir = read_pattern(v.inverse, cp.tau);
  v.forward_pattern = fr.pattern;
  v.inverse_pattern = ir.pattern;
  if (fr.pattern == Pattern::Inconsistent || ir.pattern == Pattern::Inconsistent) {
    v.refusal = fr.pattern == Pattern::Inconsistent ? "forward: " + fr.diagnostic : "inverse: " + ir.diagnostic;
    return v;
  }
  assign_class(v);
  return v;
}

}  // namespace rdsline
