#pragma once

// Stationary measures for the recurrent side of a system.
//
// A GridMeasure stores a distribution function up to an additive constant:
// Phi(y) - Phi(x) = nu((x, y]). With a finite left tail Phi is the usual CDF;
// with a finite right tail Phi(x) = -nu((x, +inf)); with both tails infinite
// only differences are meaningful. In all three cases stationarity under maps
// f_i reads Phi(x) - sum_i p_i Phi(f_i^-1(x)) = const, the constant being zero
// whenever a tail is finite.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rdsline/errors.hpp"
#include "rdsline/parallel.hpp"
#include "rdsline/rng.hpp"
#include "rdsline/system.hpp"
#include "rdsline/walk.hpp"

namespace rdsline {

enum class TailKind { Finite, Infinite };

struct Tail {
  TailKind kind = TailKind::Finite;
  /// Mass beyond the window; meaningful for finite tails only.
  double mass = 0.0;
};

/// Linear: Phi interpolated between samples. Step: atoms at the sample points
/// (the first sample, at the window start, carries no atom).
enum class Interpolation { Linear, Step };

struct GridMeasure {
  double a = 0.0;
  double b = 0.0;
  std::vector<double> x;
  std::vector<double> cdf;
  Interpolation interpolation = Interpolation::Linear;
  Tail left;
  Tail right;
  std::string normalization;
  /// Reference point for measures with two infinite tails.
  double anchor = 0.0;
  /// Last computed stationarity residual and the tolerance it was held to.
  double residual = NAN;
  double tolerance = NAN;
  std::string stationary_for;

  bool probability() const { return left.kind == TailKind::Finite && right.kind == TailKind::Finite; }

  double operator()(double t) const {
    if (t < a) {
      if (left.kind == TailKind::Infinite) throw WindowTooSmall("query below window in infinite left tail");
      return cdf.front();
    }
    if (t > b) {
      if (right.kind == TailKind::Infinite) throw WindowTooSmall("query above window in infinite right tail");
      return cdf.back();
    }
    auto it = std::upper_bound(x.begin(), x.end(), t);
    if (it == x.begin()) return cdf.front();
    std::size_t j = static_cast<std::size_t>(it - x.begin()) - 1;
    if (interpolation == Interpolation::Step || j + 1 >= x.size()) return cdf[j];
    double w = (t - x[j]) / (x[j + 1] - x[j]);
    return (1.0 - w) * cdf[j] + w * cdf[j + 1];
  }

  /// Points where the residual is evaluated: interior samples for linear
  /// measures, midpoints between atoms for step measures.
  std::vector<double> check_points() const {
    std::vector<double> pts;
    if (interpolation == Interpolation::Linear) {
      for (std::size_t i = 1; i + 1 < x.size(); ++i) pts.push_back(x[i]);
    } else {
      for (std::size_t i = 0; i + 1 < x.size(); ++i) pts.push_back((x[i] + x[i + 1]) / 2.0);
    }
    return pts;
  }

  bool monotone() const { return std::is_sorted(cdf.begin(), cdf.end()); }
};

struct CheckRange {
  double lo = -INFINITY;
  double hi = INFINITY;
};

/// sup over check points of |R(x)|, R(x) = Phi(x) - sum_i p_i Phi(f_i^-1(x)),
/// taken relative to R at the point nearest the anchor when both tails are
/// infinite. Exact-kind maps use their exact inverse.
inline double stationarity_residual(const GridMeasure& nu, const RandomSystem& sys, CheckRange range = {}) {
  RandomSystem inv = inverse_system(sys);
  std::vector<double> probs;
  for (const auto& p : sys.probs) probs.push_back(to_double(p));
  auto r_at = [&](double t) {
    double acc = nu(t);
    for (std::size_t i = 0; i < inv.size(); ++i) acc -= probs[i] * nu(inv.maps[i](t));
    return acc;
  };
  std::vector<double> pts;
  for (double t : nu.check_points()) {
    if (t >= range.lo && t <= range.hi) pts.push_back(t);
  }
  if (pts.empty()) throw WindowTooSmall("no check points inside the requested range");
  double reference = 0.0;
  if (nu.left.kind == TailKind::Infinite && nu.right.kind == TailKind::Infinite) {
    auto nearest = std::min_element(pts.begin(), pts.end(), [&](double p, double q) {
      return std::abs(p - nu.anchor) < std::abs(q - nu.anchor);
    });
    reference = r_at(*nearest);
  }
  double worst = 0.0;
  for (double t : pts) worst = std::max(worst, std::abs(r_at(t) - reference));
  return worst;
}

/// Pool-adjacent-violators fit, non-decreasing, equal weights.
inline std::vector<double> isotonic_increasing(std::span<const double> y) {
  struct Block {
    double sum;
    std::size_t count;
  };
  std::vector<Block> blocks;
  for (double v : y) {
    blocks.push_back({v, 1});
    while (blocks.size() > 1) {
      auto& last = blocks.back();
      auto& prev = blocks[blocks.size() - 2];
      if (prev.sum / static_cast<double>(prev.count) <= last.sum / static_cast<double>(last.count)) break;
      prev.sum += last.sum;
      prev.count += last.count;
      blocks.pop_back();
    }
  }
  std::vector<double> out;
  out.reserve(y.size());
  for (const auto& bl : blocks) out.insert(out.end(), bl.count, bl.sum / static_cast<double>(bl.count));
  return out;
}

inline std::vector<double> isotonic_decreasing(std::span<const double> y) {
  std::vector<double> neg(y.begin(), y.end());
  for (auto& v : neg) v = -v;
  auto fit = isotonic_increasing(neg);
  for (auto& v : fit) v = -v;
  return fit;
}

inline std::vector<double> uniform_grid(double a, double b, double step) {
  if (!(a < b) || !(step > 0)) throw ConfigError("grid needs a < b and a positive step");
  auto n = static_cast<std::size_t>(std::llround((b - a) / step));
  std::vector<double> g(n + 1);
  for (std::size_t i = 0; i <= n; ++i) g[i] = a + step * static_cast<double>(i);
  g.back() = b;
  return g;
}

struct MeasureParams {
  SimParams sim;
  ClassifyParams classify;
  double a = -30.0;
  double b = 30.0;
  double grid_step = 1.0;
  double tolerance = 0.02;
  double ci_level = 0.95;
};

/// Probability measure with distribution function phi_+ of the forward
/// system, stationary for the inverse system.
inline GridMeasure case4_from_verdict(const RandomSystem& fwd, const ClassVerdict& verdict, const MeasureParams& mp) {
  if (verdict.class_id != 4) {
    throw Refusal("probability measure needs class 4 (phi_+ and phi_- both non-vanishing); got " +
                  (verdict.refused() ? "refusal: " + verdict.refusal : "class " + std::to_string(verdict.class_id)));
  }
  const RandomSystem transient = verdict.swapped ? inverse_system(fwd) : fwd;
  const RandomSystem recurrent = inverse_system(transient);
  GridMeasure nu;
  nu.a = mp.a;
  nu.b = mp.b;
  nu.x = uniform_grid(mp.a, mp.b, mp.grid_step);
  std::vector<double> raw;
  for (const auto& e : estimate_phi(transient, nu.x, mp.sim, mp.ci_level)) raw.push_back(e.phi_plus);
  nu.cdf = isotonic_increasing(raw);
  nu.left = {TailKind::Finite, nu.cdf.front()};
  nu.right = {TailKind::Finite, 1.0 - nu.cdf.back()};
  nu.normalization = "total mass 1";
  nu.stationary_for = recurrent.label;
  nu.tolerance = mp.tolerance;
  nu.residual = stationarity_residual(nu, recurrent);
  return nu;
}

inline GridMeasure build_case4_measure(const RandomSystem& fwd, const MeasureParams& mp) {
  return case4_from_verdict(fwd, classify_system(fwd, mp.sim, mp.classify), mp);
}

struct SemiInfiniteParams {
  MeasureParams base;
  double y = -20.0;
  /// Trials per grid point for psi_y; normalizing by psi_y(0) amplifies its
  /// noise, so this is much larger than the classification trial count.
  std::uint64_t trials = 100000;
};

struct SemiInfiniteResult {
  GridMeasure measure;
  /// Raw hitting-probability estimates psi_y(x) on the grid.
  std::vector<double> psi;
  double psi_at_zero = 0.0;
  /// Fraction of orbits still below M at the horizon without hitting y.
  double truncated_fraction = 0.0;
};

/// Semi-infinite measure nu([x, +inf)) = psi_y(x) / psi_y(0), stationary for
/// the inverse system on subsets of (y, +inf); psi_y(x) is the probability
/// that the forward orbit of x ever goes below y.
inline SemiInfiniteResult semi_from_verdict(const RandomSystem& fwd, const ClassVerdict& verdict,
                                            const SemiInfiniteParams& sp) {
  if (verdict.class_id != 2 || verdict.orientation_reversed) {
    throw Refusal("semi-infinite construction needs class 2 with forward phi_+ = 1; got " +
                  (verdict.refused() ? "refusal: " + verdict.refusal : "class " + std::to_string(verdict.class_id)) +
                  (verdict.orientation_reversed ? " (reversed orientation)" : ""));
  }
  const RandomSystem transient = verdict.swapped ? inverse_system(fwd) : fwd;
  const MeasureParams& mp = sp.base;
  const SimParams& sim = mp.sim;
  SemiInfiniteResult out;
  GridMeasure& nu = out.measure;
  nu.a = mp.a;
  nu.b = mp.b;
  nu.x = uniform_grid(mp.a, mp.b, mp.grid_step);
  auto zero_it = std::find(nu.x.begin(), nu.x.end(), 0.0);
  if (zero_it == nu.x.end()) throw ConfigError("semi-infinite grid must contain 0 for normalization");
  if (!(mp.a <= sp.y - 1.0) || !(sp.y < 0.0)) throw ConfigError("semi-infinite window needs a <= y - 1 and y < 0");

  CompiledSystem compiled(transient);
  struct Counts {
    std::vector<std::uint64_t> hits;
    std::uint64_t truncated = 0;
  };
  const std::size_t n = nu.x.size();
  std::vector<double> psi(n, 1.0);
  std::uint64_t truncated = 0;
  std::uint64_t simulated = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double x0 = nu.x[i];
    if (x0 < sp.y) continue;
    auto c = parallel_reduce(
        sp.trials, sim.workers, Counts{{0}, 0},
        [&](std::size_t begin, std::size_t end) {
          Counts acc{{0}, 0};
          for (std::size_t t = begin; t < end; ++t) {
            auto engine = make_engine(sim.master_seed, Stream::Trajectory, t);
            double x = x0;
            bool hit = false, escaped = false;
            for (std::uint64_t s = 1; s <= sim.horizon; ++s) {
              x = compiled.step(x, engine);
              if (x < sp.y) {
                hit = true;
                break;
              }
              if (x > sim.escape_threshold) {
                escaped = true;
                break;
              }
            }
            if (hit) ++acc.hits[0];
            if (!hit && !escaped) ++acc.truncated;
          }
          return acc;
        },
        [](Counts& a, const Counts& b) {
          a.hits[0] += b.hits[0];
          a.truncated += b.truncated;
        });
    psi[i] = static_cast<double>(c.hits[0]) / static_cast<double>(sp.trials);
    truncated += c.truncated;
    simulated += sp.trials;
  }
  out.truncated_fraction = simulated ? static_cast<double>(truncated) / static_cast<double>(simulated) : 0.0;
  // Below y the value is exactly 1 and is left untouched by the monotone fit.
  std::size_t first_sim = static_cast<std::size_t>(
      std::find_if(nu.x.begin(), nu.x.end(), [&](double v) { return v >= sp.y; }) - nu.x.begin());
  std::vector<double> fitted = isotonic_decreasing(std::span(psi).subspan(first_sim));
  std::copy(fitted.begin(), fitted.end(), psi.begin() + static_cast<std::ptrdiff_t>(first_sim));
  out.psi = psi;
  const std::size_t zero_index = static_cast<std::size_t>(zero_it - nu.x.begin());
  out.psi_at_zero = psi[zero_index];
  if (!(out.psi_at_zero > 0.0)) throw Refusal("psi_y(0) estimated as 0: no orbit from 0 went below y");

  nu.cdf.resize(n);
  for (std::size_t i = 0; i < n; ++i) nu.cdf[i] = -psi[i] / out.psi_at_zero;
  nu.cdf[zero_index] = -1.0;
  nu.left = {TailKind::Infinite, INFINITY};
  nu.right = {TailKind::Finite, -nu.cdf.back()};
  nu.normalization = "nu([0, +inf)) = 1";
  const RandomSystem recurrent = inverse_system(transient);
  nu.stationary_for = recurrent.label;
  nu.tolerance = 0.03;
  nu.residual = stationarity_residual(nu, recurrent, CheckRange{std::nextafter(sp.y, INFINITY), nu.b});
  return out;
}

inline SemiInfiniteResult build_case2_semi(const RandomSystem& fwd, const SemiInfiniteParams& sp) {
  return semi_from_verdict(fwd, classify_system(fwd, sp.base.sim, sp.base.classify), sp);
}

/// Tent: 1 on [-L, L], 0 outside [-L-1, L+1], slope 1 in between.
struct StoppingFunction {
  double plateau = 5.0;

  double operator()(double x) const noexcept { return std::clamp(plateau + 1.0 - std::abs(x), 0.0, 1.0); }
  double support() const noexcept { return plateau + 1.0; }
};

/// Runs the orbit of z, stopping at each visited point x_n with probability
/// psi(x_n). With `forced_step` the check starts at n = 1 (the kernel of the
/// meta-chain); otherwise at n = 0.
template <class Engine>
std::optional<double> run_until_stopped(const CompiledSystem& sys, const StoppingFunction& psi, double z,
                                        Engine& engine, std::uint64_t horizon, bool forced_step) {
  double x = z;
  if (!forced_step && uniform_open(engine()) < psi(x)) return x;
  for (std::uint64_t n = 1; n <= horizon; ++n) {
    x = sys.step(x, engine);
    if (uniform_open(engine()) < psi(x)) return x;
  }
  return std::nullopt;
}

struct StopSample {
  std::vector<double> points;
  std::uint64_t no_stop = 0;
};

/// Stop points of `trials` independent stopped runs from x. Refuses when 1%
/// or more of the runs do not stop within the horizon.
inline StopSample stopped_distribution(const RandomSystem& sys, const StoppingFunction& psi, double x,
                                       const SimParams& params) {
  CompiledSystem compiled(sys);
  auto sample = parallel_reduce(
      params.trials, params.workers, StopSample{},
      [&](std::size_t begin, std::size_t end) {
        StopSample s;
        for (std::size_t t = begin; t < end; ++t) {
          auto engine = make_engine(params.master_seed, Stream::StopKernel, t);
          if (auto stop = run_until_stopped(compiled, psi, x, engine, params.horizon, false)) {
            s.points.push_back(*stop);
          } else {
            ++s.no_stop;
          }
        }
        return s;
      },
      [](StopSample& a, const StopSample& b) {
        a.points.insert(a.points.end(), b.points.begin(), b.points.end());
        a.no_stop += b.no_stop;
      });
  if (static_cast<double>(sample.no_stop) >= 0.01 * static_cast<double>(params.trials)) {
    throw Refusal("no stop within horizon in " + std::to_string(sample.no_stop) + " of " +
                  std::to_string(params.trials) + " runs");
  }
  return sample;
}

/// Bins centred on integer multiples of `width`, covering [-extent, extent].
struct Histogram {
  double width = 0.1;
  std::int64_t first = 0;
  std::vector<std::uint64_t> counts;

  Histogram() = default;
  Histogram(double w, double extent) : width(w) {
    first = -static_cast<std::int64_t>(std::llround(std::ceil(extent / w)));
    counts.assign(static_cast<std::size_t>(2 * (-first) + 1), 0);
  }

  double center(std::size_t j) const { return static_cast<double>(first + static_cast<std::int64_t>(j)) * width; }

  std::optional<std::size_t> bin(double x) const {
    std::int64_t k = std::llround(x / width) - first;
    if (k < 0 || k >= static_cast<std::int64_t>(counts.size())) return std::nullopt;
    return static_cast<std::size_t>(k);
  }

  void merge(const Histogram& other) {
    if (counts.empty()) {
      *this = other;
      return;
    }
    for (std::size_t j = 0; j < counts.size(); ++j) counts[j] += other.counts[j];
  }
};

struct RadonParams {
  SimParams sim;
  std::vector<double> ladder{5.0, 10.0, 20.0};
  /// Independent meta-chains per level (sim.trials is not used here).
  std::uint64_t chains = 64;
  std::uint64_t cycles_per_chain = 50000;
  std::uint64_t burn_in = 100;
  double bin_width = 0.1;
  double start = 0.0;
  Interval normalization_set{-1.0, 1.0};
  double consistency_tolerance = 0.05;
  double atom_factor = 5.0;
};

struct RadonLevel {
  double plateau = 0.0;
  Histogram histogram;
  std::uint64_t cycles = 0;
  std::uint64_t failed_cycles = 0;
};

struct RadonResult {
  GridMeasure measure;
  std::vector<RadonLevel> levels;
  /// Total-variation distance between consecutive levels on the inner plateau.
  std::vector<double> consistency;
  bool consistent = true;
  /// Normalized masses (nu(J) = 1) of the plateau bins of the returned level.
  std::vector<double> bin_centers;
  std::vector<double> bin_masses;
  std::vector<double> atoms;
};

/// Cesaro average of the stop points of the meta-chain z_{m+1} = stop point of
/// the psi-stopped orbit of z_m, forced to move at least once per cycle.
inline RadonLevel run_meta_chain(const RandomSystem& sys, const StoppingFunction& psi, const RadonParams& rp,
                                 std::uint64_t level_index) {
  CompiledSystem compiled(sys);
  struct Partial {
    Histogram h;
    std::uint64_t cycles = 0, failed = 0;
  };
  const Histogram empty(rp.bin_width, psi.support());
  auto merged = parallel_reduce(
      rp.chains, rp.sim.workers, Partial{empty, 0, 0},
      [&](std::size_t begin, std::size_t end) {
        Partial p{empty, 0, 0};
        for (std::size_t c = begin; c < end; ++c) {
          auto engine = make_engine(rp.sim.master_seed, Stream::StopKernel, level_index * 1'000'003ULL + c);
          double z = rp.start;
          for (std::uint64_t m = 0; m < rp.burn_in + rp.cycles_per_chain; ++m) {
            auto next = run_until_stopped(compiled, psi, z, engine, rp.sim.horizon, true);
            if (!next) {
              ++p.failed;
              continue;
            }
            z = *next;
            if (m < rp.burn_in) continue;
            ++p.cycles;
            if (auto j = p.h.bin(z)) ++p.h.counts[*j];
          }
        }
        return p;
      },
      [](Partial& a, const Partial& b) {
        a.h.merge(b.h);
        a.cycles += b.cycles;
        a.failed += b.failed;
      });
  RadonLevel level;
  level.plateau = psi.plateau;
  level.histogram = std::move(merged.h);
  level.cycles = merged.cycles;
  level.failed_cycles = merged.failed;
  return level;
}

/// Total variation between two levels restricted to bins inside [-L, L], each
/// renormalized to unit mass there.
inline double level_distance(const RadonLevel& inner, const RadonLevel& outer) {
  double sa = 0.0, sb = 0.0;
  std::vector<std::pair<double, double>> pairs;
  const double L = inner.plateau + 1e-9;
  for (std::size_t j = 0; j < inner.histogram.counts.size(); ++j) {
    double c = inner.histogram.center(j);
    if (std::abs(c) > L) continue;
    auto k = outer.histogram.bin(c);
    double a = static_cast<double>(inner.histogram.counts[j]);
    double b = k ? static_cast<double>(outer.histogram.counts[*k]) : 0.0;
    pairs.emplace_back(a, b);
    sa += a;
    sb += b;
  }
  if (sa == 0.0 || sb == 0.0) return 1.0;
  double tv = 0.0;
  for (auto [a, b] : pairs) tv += std::abs(a / sa - b / sb);
  return tv / 2.0;
}

/// Infinite Radon stationary measure glued from a ladder of stopping
/// functions with nested plateaus, normalized so that nu(J) = 1.
inline RadonResult build_case3_radon(const RandomSystem& sys, const RadonParams& rp) {
  require_valid(sys);
  if (rp.ladder.empty()) throw ConfigError("ladder must not be empty");
  std::vector<double> ladder = rp.ladder;
  std::sort(ladder.begin(), ladder.end());
  for (std::size_t i = 1; i < ladder.size(); ++i) {
    if (ladder[i] < ladder[i - 1] + 1.0) throw ConfigError("ladder plateaus must be nested with margin >= 1");
  }
  RadonResult out;
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    auto level = run_meta_chain(sys, StoppingFunction{ladder[i]}, rp, i);
    double failed = static_cast<double>(level.failed_cycles);
    if (failed >= 0.01 * static_cast<double>(level.cycles + level.failed_cycles)) {
      throw Refusal("meta-chain at plateau " + std::to_string(ladder[i]) + ": " +
                    std::to_string(level.failed_cycles) + " cycles without a stop within the horizon");
    }
    out.levels.push_back(std::move(level));
  }
  for (std::size_t i = 1; i < out.levels.size(); ++i) {
    double tv = level_distance(out.levels[i - 1], out.levels[i]);
    out.consistency.push_back(tv);
    if (tv > rp.consistency_tolerance) out.consistent = false;
  }

  const RadonLevel& top = out.levels.back();
  const Histogram& h = top.histogram;
  const double L = top.plateau + 1e-9;
  double j_mass = 0.0;
  for (std::size_t j = 0; j < h.counts.size(); ++j) {
    double c = h.center(j);
    if (std::abs(c) > L) continue;
    out.bin_centers.push_back(c);
    out.bin_masses.push_back(static_cast<double>(h.counts[j]));
    if (rp.normalization_set.contains(c)) j_mass += static_cast<double>(h.counts[j]);
  }
  if (j_mass == 0.0) throw Refusal("no mass observed in the normalization set");
  for (auto& m : out.bin_masses) m /= j_mass;

  for (std::size_t j = 0; j < out.bin_masses.size(); ++j) {
    double left = j > 0 ? out.bin_masses[j - 1] : 0.0;
    double right = j + 1 < out.bin_masses.size() ? out.bin_masses[j + 1] : 0.0;
    double neighbours = (left + right) / 2.0;
    if (out.bin_masses[j] > 0.0 && out.bin_masses[j] > rp.atom_factor * neighbours) {
      out.atoms.push_back(out.bin_centers[j]);
    }
  }

  GridMeasure& nu = out.measure;
  nu.interpolation = Interpolation::Step;
  nu.a = out.bin_centers.front() - rp.bin_width / 2.0;
  nu.b = out.bin_centers.back() + rp.bin_width / 2.0;
  nu.x.push_back(nu.a);
  nu.cdf.push_back(0.0);
  double cumulative = 0.0;
  double at_anchor = 0.0;
  for (std::size_t j = 0; j < out.bin_centers.size(); ++j) {
    cumulative += out.bin_masses[j];
    nu.x.push_back(out.bin_centers[j]);
    nu.cdf.push_back(cumulative);
    if (out.bin_centers[j] <= nu.anchor + 1e-12) at_anchor = cumulative;
  }
  for (auto& v : nu.cdf) v -= at_anchor;
  nu.left = {TailKind::Infinite, INFINITY};
  nu.right = {TailKind::Infinite, INFINITY};
  nu.normalization = "nu([" + std::to_string(rp.normalization_set.lo) + ", " +
                     std::to_string(rp.normalization_set.hi) + "]) = 1";
  nu.stationary_for = sys.label;
  nu.tolerance = 0.03;
  nu.residual = stationarity_residual(nu, sys, CheckRange{-top.plateau + 1.0, top.plateau - 1.0});
  return out;
}

}  // namespace rdsline
