#pragma once

// Orientation-preserving homeomorphisms of the real line.
//
// Piecewise-linear and affine maps carry exact rational coefficients, so that
// inversion and composition stay exact. Every map also has a double fast path
// used by the trajectory engine.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "rdsline/errors.hpp"
#include "rdsline/rational.hpp"

namespace rdsline {

struct LinearPiece {
  Rational slope;
  Rational intercept;

  friend bool operator==(const LinearPiece&, const LinearPiece&) = default;
};

/// Piece i covers [breakpoints[i-1], breakpoints[i]); the two end pieces are unbounded.
class PiecewiseLinearMap {
 public:
  PiecewiseLinearMap() : PiecewiseLinearMap({}, {LinearPiece{1, 0}}) {}

  PiecewiseLinearMap(std::vector<Rational> breakpoints, std::vector<LinearPiece> pieces)
      : breakpoints_(std::move(breakpoints)), pieces_(std::move(pieces)) {
    cache();
  }

  const std::vector<Rational>& breakpoints() const noexcept { return breakpoints_; }
  const std::vector<LinearPiece>& pieces() const noexcept { return pieces_; }

  std::size_t piece_index(const Rational& x) const {
    return static_cast<std::size_t>(
        std::upper_bound(breakpoints_.begin(), breakpoints_.end(), x) - breakpoints_.begin());
  }

  Rational operator()(const Rational& x) const {
    const auto& p = pieces_[std::min(piece_index(x), pieces_.size() - 1)];
    return p.slope * x + p.intercept;
  }

  double operator()(double x) const noexcept {
    std::size_t i = static_cast<std::size_t>(
        std::upper_bound(bp_.begin(), bp_.end(), x) - bp_.begin());
    if (i >= slope_.size()) i = slope_.size() - 1;
    return slope_[i] * x + intercept_[i];
  }

  double inverse_value(double y) const noexcept {
    std::size_t i = static_cast<std::size_t>(
        std::upper_bound(image_bp_.begin(), image_bp_.end(), y) - image_bp_.begin());
    if (i >= slope_.size()) i = slope_.size() - 1;
    return (y - intercept_[i]) / slope_[i];
  }

  /// Exact inverse; assumes the map is valid.
  PiecewiseLinearMap inverse() const {
    std::vector<Rational> bps;
    bps.reserve(breakpoints_.size());
    for (std::size_t i = 0; i < breakpoints_.size(); ++i) {
      const auto& p = pieces_[i];
      bps.push_back(p.slope * breakpoints_[i] + p.intercept);
    }
    std::vector<LinearPiece> ps;
    ps.reserve(pieces_.size());
    for (const auto& p : pieces_) {
      ps.push_back({1 / p.slope, -p.intercept / p.slope});
    }
    return {std::move(bps), std::move(ps)};
  }

  /// Exact (*this) o inner. Breakpoints are those of `inner` plus the
  /// preimages under `inner` of this map's breakpoints; redundant ones are merged.
  PiecewiseLinearMap after(const PiecewiseLinearMap& inner) const {
    PiecewiseLinearMap inner_inv = inner.inverse();
    std::vector<Rational> cuts = inner.breakpoints_;
    for (const auto& b : breakpoints_) cuts.push_back(inner_inv(b));
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    auto piece_at = [&](const Rational& probe) {
      const auto& g = inner.pieces_[std::min(inner.piece_index(probe), inner.pieces_.size() - 1)];
      Rational gx = g.slope * probe + g.intercept;
      const auto& f = pieces_[std::min(piece_index(gx), pieces_.size() - 1)];
      return LinearPiece{f.slope * g.slope, f.slope * g.intercept + f.intercept};
    };

    std::vector<LinearPiece> raw;
    if (cuts.empty()) {
      raw.push_back(piece_at(Rational(0)));
    } else {
      raw.push_back(piece_at(cuts.front() - 1));
      for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        raw.push_back(piece_at((cuts[i] + cuts[i + 1]) / 2));
      }
      raw.push_back(piece_at(cuts.back() + 1));
    }

    std::vector<Rational> bps;
    std::vector<LinearPiece> ps{raw.front()};
    for (std::size_t i = 0; i < cuts.size(); ++i) {
      if (raw[i + 1] == ps.back()) continue;
      bps.push_back(cuts[i]);
      ps.push_back(raw[i + 1]);
    }
    return {std::move(bps), std::move(ps)};
  }

  friend bool operator==(const PiecewiseLinearMap& a, const PiecewiseLinearMap& b) {
    return a.breakpoints_ == b.breakpoints_ && a.pieces_ == b.pieces_;
  }

 private:
  void cache() {
    bp_.clear();
    image_bp_.clear();
    slope_.clear();
    intercept_.clear();
    for (std::size_t i = 0; i < breakpoints_.size(); ++i) {
      bp_.push_back(to_double(breakpoints_[i]));
      if (i < pieces_.size()) {
        image_bp_.push_back(to_double(pieces_[i].slope * breakpoints_[i] + pieces_[i].intercept));
      }
    }
    for (const auto& p : pieces_) {
      slope_.push_back(to_double(p.slope));
      intercept_.push_back(to_double(p.intercept));
    }
    if (slope_.empty()) {
      slope_.push_back(1.0);
      intercept_.push_back(0.0);
    }
  }

  std::vector<Rational> breakpoints_;
  std::vector<LinearPiece> pieces_;
  std::vector<double> bp_;
  std::vector<double> image_bp_;
  std::vector<double> slope_;
  std::vector<double> intercept_;
};

/// x + a sin(2 pi x); a homeomorphism while |2 pi a| < 1.
struct SinPerturbation {
  explicit SinPerturbation(Rational a) : amplitude(std::move(a)), amplitude_d(to_double(amplitude)) {}

  Rational amplitude;
  double amplitude_d;

  double operator()(double x) const noexcept {
    if (!std::isfinite(x)) return x;
    // Reduce mod 1 first: exact for |x| < 2^52 and keeps integers fixed exactly.
    double r = x - std::nearbyint(x);
    return x + amplitude_d * std::sin(2.0 * std::numbers::pi * r);
  }
};

/// Extension point for user maps. `forward` must be strictly increasing.
/// Without an explicit `inverse`, inversion is numeric and requires
/// `declared_bijective`, meaning the geometric bracket search terminates.
struct CustomMonotone {
  std::string name;
  std::function<double(double)> forward;
  std::function<double(double)> inverse;
  bool declared_bijective = false;
  double check_lo = -100.0;
  double check_hi = 100.0;
};

enum class MapKind { Affine, PiecewiseLinear, SinPerturbation, CustomMonotone };

inline std::string to_string(MapKind k) {
  switch (k) {
    case MapKind::Affine: return "affine";
    case MapKind::PiecewiseLinear: return "piecewise_linear";
    case MapKind::SinPerturbation: return "sin_perturbation";
    case MapKind::CustomMonotone: return "custom_monotone";
  }
  return "unknown";
}

inline constexpr double kInversionTolerance = 1e-12;

/// Solves f(x) = y for strictly increasing f by bisection, growing the
/// bracket geometrically from y.
inline double bisect_inverse(const std::function<double(double)>& f, double y,
                             double tol = kInversionTolerance) {
  if (!std::isfinite(y)) return y;
  double lo = y - 1.0, hi = y + 1.0;
  double step = 1.0;
  int expansions = 0;
  while (f(lo) > y) {
    step *= 2.0;
    lo = y - step;
    if (++expansions > 1100) throw CannotBracketInverse("cannot bracket inverse from below");
  }
  step = 1.0;
  expansions = 0;
  while (f(hi) < y) {
    step *= 2.0;
    hi = y + step;
    if (++expansions > 1100) throw CannotBracketInverse("cannot bracket inverse from above");
  }
  while (hi - lo > tol) {
    double mid = lo + (hi - lo) / 2.0;
    if (mid <= lo || mid >= hi) break;
    if (f(mid) < y) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo + (hi - lo) / 2.0;
}

class MonotoneMap {
 public:
  using Representation = std::variant<PiecewiseLinearMap, SinPerturbation, CustomMonotone>;

  MonotoneMap() : MonotoneMap(MapKind::Affine, PiecewiseLinearMap{}) {}

  static MonotoneMap identity() { return affine(1, 0); }

  static MonotoneMap affine(const Rational& slope, const Rational& intercept) {
    return {MapKind::Affine, PiecewiseLinearMap({}, {LinearPiece{slope, intercept}})};
  }

  static MonotoneMap piecewise_linear(std::vector<Rational> breakpoints,
                                      std::vector<LinearPiece> pieces) {
    MapKind kind = breakpoints.empty() ? MapKind::Affine : MapKind::PiecewiseLinear;
    return {kind, PiecewiseLinearMap(std::move(breakpoints), std::move(pieces))};
  }

  static MonotoneMap sin_perturbation(const Rational& amplitude) {
    return {MapKind::SinPerturbation, SinPerturbation{amplitude}};
  }

  static MonotoneMap custom(CustomMonotone c) { return {MapKind::CustomMonotone, std::move(c)}; }

  MapKind kind() const noexcept { return kind_; }
  bool inverted() const noexcept { return inverted_; }
  const Representation& representation() const noexcept { return *rep_; }

  /// True when evaluation, inversion and composition are exact in rationals.
  bool is_exact() const noexcept { return std::holds_alternative<PiecewiseLinearMap>(*rep_); }

  const PiecewiseLinearMap* linear() const noexcept { return std::get_if<PiecewiseLinearMap>(rep_.get()); }

  double operator()(double x) const {
    if (inverted_) return base_inverse(x);
    return forward_value(x);
  }

  Rational operator()(const Rational& x) const {
    if (const auto* pl = linear()) return (*pl)(x);
    throw InvalidMap("exact evaluation requires a piecewise-linear map");
  }

  /// Value of the inverse map at y.
  double inverse_value(double y) const {
    if (inverted_) return forward_value(y);
    return base_inverse(y);
  }

  friend MonotoneMap invert(const MonotoneMap& m);

  /// Structural equality; custom maps compare by name.
  friend bool operator==(const MonotoneMap& a, const MonotoneMap& b) {
    if (a.kind_ != b.kind_ || a.inverted_ != b.inverted_) return false;
    if (const auto* pa = a.linear()) return *pa == *b.linear();
    if (const auto* sa = std::get_if<SinPerturbation>(a.rep_.get())) {
      return sa->amplitude == std::get<SinPerturbation>(*b.rep_).amplitude;
    }
    return std::get<CustomMonotone>(*a.rep_).name == std::get<CustomMonotone>(*b.rep_).name;
  }

 private:
  // Inverse of the stored representation, ignoring the inverted flag.
  double base_inverse(double y) const {
    return std::visit(
        [&](const auto& r) -> double {
          using T = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<T, PiecewiseLinearMap>) {
            return r.inverse_value(y);
          } else if constexpr (std::is_same_v<T, SinPerturbation>) {
            return bisect_inverse(r, y);
          } else {
            if (r.inverse) return r.inverse(y);
            if (!r.declared_bijective) throw CannotBracketInverse("cannot bracket inverse of " + r.name);
            return bisect_inverse(r.forward, y);
          }
        },
        *rep_);
  }


  MonotoneMap(MapKind kind, Representation rep, bool inverted = false)
      : kind_(kind), rep_(std::make_shared<const Representation>(std::move(rep))), inverted_(inverted) {}

  double forward_value(double x) const {
    return std::visit(
        [&](const auto& r) -> double {
          using T = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<T, CustomMonotone>) {
            return r.forward(x);
          } else {
            return r(x);
          }
        },
        *rep_);
  }

  MapKind kind_;
  std::shared_ptr<const Representation> rep_;
  bool inverted_ = false;
};

inline MonotoneMap invert(const MonotoneMap& m) {
  if (const auto* pl = m.linear()) return {m.kind_, pl->inverse()};
  if (const auto* c = std::get_if<CustomMonotone>(m.rep_.get())) {
    if (c->inverse) {
      CustomMonotone swapped = *c;
      std::swap(swapped.forward, swapped.inverse);
      swapped.name = c->name.ends_with("^-1") ? c->name.substr(0, c->name.size() - 3) : c->name + "^-1";
      return {MapKind::CustomMonotone, std::move(swapped)};
    }
    if (!c->declared_bijective) throw CannotBracketInverse("cannot bracket inverse of " + c->name);
  }
  return {m.kind_, *m.rep_, !m.inverted_};
}

/// f o g. Piecewise-linear maps compose exactly; any other pairing yields a
/// custom map whose inverse is g^-1 o f^-1.
inline MonotoneMap compose(const MonotoneMap& f, const MonotoneMap& g) {
  if (f.linear() && g.linear()) {
    PiecewiseLinearMap h = f.linear()->after(*g.linear());
    auto pieces = h.pieces();
    auto bps = h.breakpoints();
    return MonotoneMap::piecewise_linear(std::move(bps), std::move(pieces));
  }
  CustomMonotone c;
  c.name = "compose";
  c.forward = [f, g](double x) { return f(g(x)); };
  try {
    c.inverse = [fi = invert(f), gi = invert(g)](double y) { return gi(fi(y)); };
    c.declared_bijective = true;
  } catch (const CannotBracketInverse&) {
    c.declared_bijective = false;
  }
  return MonotoneMap::custom(std::move(c));
}

struct ValidationReport {
  bool valid = true;
  std::vector<std::string> violations;

  void fail(std::string why) {
    valid = false;
    violations.push_back(std::move(why));
  }
};

inline ValidationReport validate(const PiecewiseLinearMap& pl) {
  ValidationReport report;
  const auto& bps = pl.breakpoints();
  const auto& ps = pl.pieces();
  if (ps.size() != bps.size() + 1) {
    report.fail("piece count " + std::to_string(ps.size()) + " does not match " +
                std::to_string(bps.size()) + " breakpoints");
    return report;
  }
  for (std::size_t i = 1; i < bps.size(); ++i) {
    if (!(bps[i - 1] < bps[i])) {
      report.fail("unsorted breakpoints at index " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (ps[i].slope <= 0) report.fail("non-positive slope on piece " + std::to_string(i));
  }
  for (std::size_t i = 0; i < bps.size(); ++i) {
    Rational left = ps[i].slope * bps[i] + ps[i].intercept;
    Rational right = ps[i + 1].slope * bps[i] + ps[i + 1].intercept;
    if (left != right) report.fail("discontinuity at breakpoint " + to_string(bps[i]));
  }
  return report;
}

inline ValidationReport validate(const MonotoneMap& m) {
  ValidationReport report;
  std::visit(
      [&](const auto& r) {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, PiecewiseLinearMap>) {
          report = validate(r);
        } else if constexpr (std::is_same_v<T, SinPerturbation>) {
          if (!(2.0 * std::numbers::pi * std::abs(r.amplitude_d) < 1.0)) {
            report.fail("non-positive slope: |2*pi*amplitude| must be below 1");
          }
        } else {
          if (!r.forward) {
            report.fail("custom map has no forward function");
            return;
          }
          constexpr int kSamples = 10000;
          double prev = r.forward(r.check_lo);
          for (int i = 1; i <= kSamples; ++i) {
            double x = r.check_lo + (r.check_hi - r.check_lo) * i / kSamples;
            double y = r.forward(x);
            if (!(y > prev)) {
              report.fail("not strictly increasing near x=" + std::to_string(x));
              return;
            }
            prev = y;
          }
        }
      },
      m.representation());
  return report;
}

}  // namespace rdsline
