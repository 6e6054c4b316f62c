#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "rdsline/errors.hpp"
#include "rdsline/homeo.hpp"
#include "rdsline/rational.hpp"

namespace rdsline {

/// Finitely many maps applied i.i.d. with exact rational probabilities.
struct RandomSystem {
  std::vector<MonotoneMap> maps;
  std::vector<Rational> probs;
  std::string label;

  std::size_t size() const noexcept { return maps.size(); }
  bool all_exact() const {
    return std::all_of(maps.begin(), maps.end(), [](const auto& m) { return m.is_exact(); });
  }
};

enum class ShiftVerdict { Proved, CheckedOnWindow, Refuted };

inline std::string to_string(ShiftVerdict v) {
  switch (v) {
    case ShiftVerdict::Proved: return "proved";
    case ShiftVerdict::CheckedOnWindow: return "checked on window";
    case ShiftVerdict::Refuted: return "refuted";
  }
  return "unknown";
}

struct SystemReport {
  bool valid = true;
  std::vector<std::string> errors;
  bool shiftable = false;
  ShiftVerdict shift_verdict = ShiftVerdict::Refuted;
  /// Point where no map moves strictly left (or right), when refuted.
  std::optional<Rational> counterexample;
  std::string certificate;
  bool compact_displacement = false;
  std::string notes;
};

/// Each map replaced by its inverse, probabilities unchanged.
inline RandomSystem inverse_system(const RandomSystem& sys) {
  RandomSystem inv;
  inv.label = sys.label.ends_with(" (inverse)") ? sys.label.substr(0, sys.label.size() - 10)
                                                : sys.label + " (inverse)";
  inv.probs = sys.probs;
  inv.maps.reserve(sys.maps.size());
  for (const auto& m : sys.maps) inv.maps.push_back(invert(m));
  return inv;
}

namespace detail {

/// Points where the sign of some f(x) - x may change: breakpoints and roots.
inline std::vector<Rational> displacement_critical_points(const std::vector<const PiecewiseLinearMap*>& maps) {
  std::vector<Rational> pts;
  for (const auto* pl : maps) {
    const auto& bps = pl->breakpoints();
    const auto& ps = pl->pieces();
    for (const auto& b : bps) pts.push_back(b);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (ps[i].slope == 1) continue;
      Rational root = -ps[i].intercept / (ps[i].slope - 1);
      bool in_piece = (i == 0 || bps[i - 1] <= root) && (i == bps.size() || root < bps[i]);
      if (in_piece) pts.push_back(root);
    }
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

/// Sample points covering every sign cell of the displacements.
inline std::vector<Rational> sign_cells(const std::vector<Rational>& critical) {
  std::vector<Rational> probes;
  if (critical.empty()) return {Rational(0)};
  probes.push_back(critical.front() - 1);
  for (std::size_t i = 0; i < critical.size(); ++i) {
    probes.push_back(critical[i]);
    if (i + 1 < critical.size()) probes.push_back((critical[i] + critical[i + 1]) / 2);
  }
  probes.push_back(critical.back() + 1);
  return probes;
}

}  // namespace detail

/// Decides whether every x has maps moving it strictly left and strictly right.
/// Exact piecewise sign analysis when the exact maps alone settle it; otherwise
/// a grid scan over [window_lo, window_hi].
inline SystemReport check_shiftability(const RandomSystem& sys, double window_lo = -100.0,
                                       double window_hi = 100.0, int grid_points = 10000) {
  SystemReport report;
  report.compact_displacement = true;

  std::vector<const PiecewiseLinearMap*> exact;
  for (const auto& m : sys.maps) {
    if (const auto* pl = m.linear()) exact.push_back(pl);
  }

  auto moves = [&](const Rational& x, bool& left, bool& right) {
    left = right = false;
    for (const auto* pl : exact) {
      Rational y = (*pl)(x);
      left = left || y < x;
      right = right || y > x;
    }
  };

  std::optional<Rational> exact_counterexample;
  std::string exact_why;
  if (!exact.empty()) {
    auto cells = detail::sign_cells(detail::displacement_critical_points(exact));
    for (const auto& x : cells) {
      bool left = false, right = false;
      moves(x, left, right);
      if (!left || !right) {
        exact_counterexample = x;
        exact_why = !left ? "no map moves x strictly left" : "no map moves x strictly right";
        break;
      }
    }
    if (!exact_counterexample) {
      report.shiftable = true;
      report.shift_verdict = ShiftVerdict::Proved;
      report.certificate = "exact sign analysis over " + std::to_string(cells.size()) + " sign cells";
      return report;
    }
  }

  if (sys.all_exact()) {
    report.shiftable = false;
    report.shift_verdict = ShiftVerdict::Refuted;
    report.counterexample = exact_counterexample;
    report.certificate = exact_why + " at x=" + to_string(*exact_counterexample);
    return report;
  }

  for (int i = 0; i <= grid_points; ++i) {
    double x = window_lo + (window_hi - window_lo) * i / grid_points;
    bool left = false, right = false;
    for (const auto& m : sys.maps) {
      double y = m(x);
      left = left || y < x;
      right = right || y > x;
    }
    if (!left || !right) {
      report.shiftable = false;
      report.shift_verdict = ShiftVerdict::Refuted;
      report.counterexample = from_double(x);
      report.certificate = std::string(!left ? "no map moves x strictly left" : "no map moves x strictly right") +
                           " at x=" + std::to_string(x);
      return report;
    }
  }
  report.shiftable = true;
  report.shift_verdict = ShiftVerdict::CheckedOnWindow;
  report.certificate = "grid scan of " + std::to_string(grid_points + 1) + " points on [" +
                       std::to_string(window_lo) + ", " + std::to_string(window_hi) + "]";
  report.notes = "numeric maps: shiftability checked on window, not proved";
  return report;
}

/// Normalization, per-map validity and (automatic for finite systems) compact displacement.
inline SystemReport validate_system(const RandomSystem& sys) {
  SystemReport report;
  if (sys.maps.empty()) {
    report.valid = false;
    report.errors.push_back("system has no maps");
  }
  if (sys.maps.size() != sys.probs.size()) {
    report.valid = false;
    report.errors.push_back("map count " + std::to_string(sys.maps.size()) + " differs from probability count " +
                            std::to_string(sys.probs.size()));
  }
  Rational total = 0;
  for (std::size_t i = 0; i < sys.probs.size(); ++i) {
    if (sys.probs[i] <= 0) {
      report.valid = false;
      report.errors.push_back("probability " + std::to_string(i) + " is not positive");
    }
    total += sys.probs[i];
  }
  if (total != 1) {
    report.valid = false;
    report.errors.push_back("probabilities sum to " + to_string(total) + " != 1");
  }
  for (std::size_t i = 0; i < sys.maps.size(); ++i) {
    auto v = validate(sys.maps[i]);
    for (const auto& why : v.violations) {
      report.valid = false;
      report.errors.push_back("map " + std::to_string(i) + ": " + why);
    }
  }
  report.compact_displacement = report.valid;
  if (report.valid) report.notes = "finite system: one-step images of each point are bounded";
  return report;
}

/// Throws InvalidSystem carrying every error from validate_system.
inline void require_valid(const RandomSystem& sys) {
  auto report = validate_system(sys);
  if (report.valid) return;
  std::string msg;
  for (const auto& e : report.errors) msg += (msg.empty() ? "" : "; ") + e;
  throw InvalidSystem(msg);
}

}  // namespace rdsline
