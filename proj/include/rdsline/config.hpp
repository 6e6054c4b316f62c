#pragma once

// JSON run configuration. Parsing is strict: unknown keys, wrong types and
// non-normalized probabilities are rejected with the path of the offending
// field. Rationals (map coefficients, probabilities) are strings such as
// "2/3" so that they are read exactly.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rdsline/errors.hpp"
#include "rdsline/homeo.hpp"
#include "rdsline/measure.hpp"
#include "rdsline/monster.hpp"
#include "rdsline/rational.hpp"
#include "rdsline/system.hpp"
#include "rdsline/walk.hpp"

namespace rdsline {

using Json = nlohmann::json;

enum class Construction { Auto, Case4, Case2, Case3 };

struct PhiConfig {
  std::vector<double> points;
  std::optional<Interval> window;
  std::size_t grid_points = 0;
  double tol = 1e-8;
};

struct MeasureConfig {
  Construction construction = Construction::Auto;
  double a = -30.0;
  double b = 30.0;
  double grid_step = 1.0;
  double y = -20.0;
  std::uint64_t psi_trials = 100000;
  RadonParams radon;
};

struct MonsterConfig {
  MonsterOptions options;
  std::uint64_t seeds = 100;
  /// Extra rank-only runs pooled into the record statistics.
  std::uint64_t extra_runs = 0;
  std::uint64_t extra_steps = 10000;
};

struct RunConfig {
  std::string label;
  std::optional<RandomSystem> system;
  std::uint64_t seed = 0;
  SimParams sim;
  ClassifyParams classify;
  PhiConfig phi;
  MeasureConfig measure;
  MonsterConfig monster;
};

namespace detail {

class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const std::string& path() const { return path_; }

  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(path_ + ": " + msg); }

  void expect_object(std::initializer_list<std::string_view> allowed) const {
    if (!j_.is_object()) fail("expected an object");
    std::set<std::string_view> keys(allowed);
    for (const auto& item : j_.items()) {
      if (!keys.count(item.key())) throw ConfigError(path_ + "." + item.key() + ": unknown key");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  Reader at(const char* key) const {
    if (!j_.contains(key)) throw ConfigError(path_ + "." + key + ": missing required key");
    return {j_.at(key), path_ + "." + key};
  }

  std::vector<Reader> array() const {
    if (!j_.is_array()) fail("expected an array");
    std::vector<Reader> out;
    for (std::size_t i = 0; i < j_.size(); ++i) out.emplace_back(j_[i], path_ + "[" + std::to_string(i) + "]");
    return out;
  }

  Rational rational() const {
    if (!j_.is_string()) fail("expected a rational as a string such as \"1/2\"");
    try {
      return parse_rational(j_.get<std::string>());
    } catch (const ConfigError& e) {
      fail(e.what());
    }
  }

  double number() const {
    if (!j_.is_number()) fail("expected a number");
    return j_.get<double>();
  }

  std::uint64_t count() const {
    if (!j_.is_number_unsigned() && !(j_.is_number_integer() && j_.get<std::int64_t>() >= 0)) {
      fail("expected a non-negative integer");
    }
    return j_.get<std::uint64_t>();
  }

  std::string string() const {
    if (!j_.is_string()) fail("expected a string");
    return j_.get<std::string>();
  }

  bool boolean() const {
    if (!j_.is_boolean()) fail("expected true or false");
    return j_.get<bool>();
  }

  std::vector<double> numbers() const {
    std::vector<double> out;
    for (const auto& r : array()) out.push_back(r.number());
    return out;
  }

  Interval interval() const {
    auto v = numbers();
    if (v.size() != 2 || !(v[0] < v[1])) fail("expected [lo, hi] with lo < hi");
    return {v[0], v[1]};
  }

 private:
  const Json& j_;
  std::string path_;
};

inline MonotoneMap parse_map(const Reader& r) {
  std::string kind = r.at("kind").string();
  MonotoneMap m;
  if (kind == "identity") {
    r.expect_object({"kind"});
    m = MonotoneMap::identity();
  } else if (kind == "affine") {
    r.expect_object({"kind", "slope", "intercept"});
    m = MonotoneMap::affine(r.at("slope").rational(), r.at("intercept").rational());
  } else if (kind == "piecewise_linear") {
    r.expect_object({"kind", "breakpoints", "pieces"});
    std::vector<Rational> bps;
    for (const auto& b : r.at("breakpoints").array()) bps.push_back(b.rational());
    std::vector<LinearPiece> pieces;
    for (const auto& p : r.at("pieces").array()) {
      p.expect_object({"slope", "intercept"});
      pieces.push_back({p.at("slope").rational(), p.at("intercept").rational()});
    }
    PiecewiseLinearMap pl(bps, pieces);
    auto report = validate(pl);
    if (!report.valid) r.fail("invalid map: " + report.violations.front());
    m = MonotoneMap::piecewise_linear(bps, pieces);
  } else if (kind == "sin_perturbation") {
    r.expect_object({"kind", "amplitude", "inverted"});
    m = MonotoneMap::sin_perturbation(r.at("amplitude").rational());
    if (r.has("inverted") && r.at("inverted").boolean()) m = invert(m);
  } else {
    r.at("kind").fail("unknown map kind '" + kind + "'");
  }
  auto report = validate(m);
  if (!report.valid) r.fail("invalid map: " + report.violations.front());
  return m;
}

inline RandomSystem parse_system(const Reader& r, std::string label) {
  r.expect_object({"maps", "probs"});
  RandomSystem sys;
  sys.label = std::move(label);
  for (const auto& m : r.at("maps").array()) sys.maps.push_back(parse_map(m));
  for (const auto& p : r.at("probs").array()) sys.probs.push_back(p.rational());
  auto report = validate_system(sys);
  if (!report.valid) r.fail(report.errors.front());
  return sys;
}

inline void parse_sim(const Reader& r, SimParams& sim) {
  r.expect_object({"trials", "horizon", "escape_threshold", "confine_fraction"});
  if (r.has("trials")) sim.trials = r.at("trials").count();
  if (r.has("horizon")) sim.horizon = r.at("horizon").count();
  if (r.has("escape_threshold")) sim.escape_threshold = r.at("escape_threshold").number();
  if (r.has("confine_fraction")) sim.confine_fraction = r.at("confine_fraction").number();
}

inline void parse_classify(const Reader& r, ClassifyParams& cp) {
  r.expect_object({"tau", "ci_level", "probes"});
  if (r.has("tau")) cp.tau = r.at("tau").number();
  if (r.has("ci_level")) cp.ci_level = r.at("ci_level").number();
  if (r.has("probes")) {
    cp.probes = r.at("probes").numbers();
    if (cp.probes.empty()) r.at("probes").fail("needs at least one probe");
  }
}

inline void parse_phi(const Reader& r, PhiConfig& pc) {
  r.expect_object({"points", "window", "grid_points", "tol"});
  if (r.has("points")) pc.points = r.at("points").numbers();
  if (r.has("window")) pc.window = r.at("window").interval();
  if (r.has("grid_points")) pc.grid_points = r.at("grid_points").count();
  if (r.has("tol")) pc.tol = r.at("tol").number();
}

inline void parse_measure(const Reader& r, MeasureConfig& mc) {
  r.expect_object({"construction", "window", "grid_step", "y", "psi_trials", "ladder", "chains", "cycles_per_chain",
                   "burn_in", "bin_width", "start", "consistency_tolerance"});
  if (r.has("construction")) {
    std::string c = r.at("construction").string();
    if (c == "auto") mc.construction = Construction::Auto;
    else if (c == "case4") mc.construction = Construction::Case4;
    else if (c == "case2") mc.construction = Construction::Case2;
    else if (c == "case3") mc.construction = Construction::Case3;
    else r.at("construction").fail("expected one of auto, case4, case2, case3");
  }
  if (r.has("window")) {
    auto w = r.at("window").interval();
    mc.a = w.lo;
    mc.b = w.hi;
  }
  if (r.has("grid_step")) mc.grid_step = r.at("grid_step").number();
  if (r.has("y")) mc.y = r.at("y").number();
  if (r.has("psi_trials")) mc.psi_trials = r.at("psi_trials").count();
  if (r.has("ladder")) mc.radon.ladder = r.at("ladder").numbers();
  if (r.has("chains")) mc.radon.chains = r.at("chains").count();
  if (r.has("cycles_per_chain")) mc.radon.cycles_per_chain = r.at("cycles_per_chain").count();
  if (r.has("burn_in")) mc.radon.burn_in = r.at("burn_in").count();
  if (r.has("bin_width")) mc.radon.bin_width = r.at("bin_width").number();
  if (r.has("start")) mc.radon.start = r.at("start").number();
  if (r.has("consistency_tolerance")) mc.radon.consistency_tolerance = r.at("consistency_tolerance").number();
}

inline void parse_monster(const Reader& r, MonsterConfig& mc) {
  r.expect_object({"variant", "steps", "seeds", "interval", "perturbed", "extra_runs", "extra_steps"});
  if (r.has("variant")) {
    std::string v = r.at("variant").string();
    if (v == "alternating") mc.options.variant = MonsterVariant::Alternating;
    else if (v == "symmetric") mc.options.variant = MonsterVariant::Symmetric;
    else r.at("variant").fail("expected alternating or symmetric");
  }
  if (r.has("steps")) mc.options.steps = r.at("steps").count();
  if (r.has("seeds")) mc.seeds = r.at("seeds").count();
  if (r.has("interval")) {
    auto j = r.at("interval").interval();
    mc.options.a = j.lo;
    mc.options.b = j.hi;
  }
  if (r.has("perturbed")) mc.options.perturbed = r.at("perturbed").boolean();
  if (r.has("extra_runs")) mc.extra_runs = r.at("extra_runs").count();
  if (r.has("extra_steps")) mc.extra_steps = r.at("extra_steps").count();
}

}  // namespace detail

inline RunConfig parse_config(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("$: malformed JSON: ") + e.what());
  }
  detail::Reader root(j, "$");
  root.expect_object({"label", "seed", "system", "simulation", "classify", "phi", "measure", "monster"});
  RunConfig cfg;
  if (root.has("label")) cfg.label = root.at("label").string();
  if (root.has("seed")) cfg.seed = root.at("seed").count();
  if (root.has("system")) cfg.system = detail::parse_system(root.at("system"), cfg.label);
  if (root.has("simulation")) detail::parse_sim(root.at("simulation"), cfg.sim);
  if (root.has("classify")) detail::parse_classify(root.at("classify"), cfg.classify);
  if (root.has("phi")) detail::parse_phi(root.at("phi"), cfg.phi);
  if (root.has("measure")) detail::parse_measure(root.at("measure"), cfg.measure);
  if (root.has("monster")) detail::parse_monster(root.at("monster"), cfg.monster);
  return cfg;
}

inline Json rational_json(const Rational& r) { return to_string(r); }

/// Inverse of the "system" block of parse_config, for exact kinds and sin maps.
inline Json system_json(const RandomSystem& sys) {
  Json maps = Json::array();
  for (const auto& m : sys.maps) {
    Json jm;
    switch (m.kind()) {
      case MapKind::Affine:
      case MapKind::PiecewiseLinear: {
        const PiecewiseLinearMap& pl = *m.linear();
        if (pl.breakpoints().empty()) {
          jm = {{"kind", "affine"},
                {"slope", rational_json(pl.pieces()[0].slope)},
                {"intercept", rational_json(pl.pieces()[0].intercept)}};
        } else {
          Json bps = Json::array(), pieces = Json::array();
          for (const auto& b : pl.breakpoints()) bps.push_back(rational_json(b));
          for (const auto& p : pl.pieces()) {
            pieces.push_back({{"slope", rational_json(p.slope)}, {"intercept", rational_json(p.intercept)}});
          }
          jm = {{"kind", "piecewise_linear"}, {"breakpoints", bps}, {"pieces", pieces}};
        }
        break;
      }
      case MapKind::SinPerturbation:
        jm = {{"kind", "sin_perturbation"},
              {"amplitude", rational_json(std::get<SinPerturbation>(m.representation()).amplitude)}};
        break;
      case MapKind::CustomMonotone:
        jm = {{"kind", "custom"}, {"name", std::get<CustomMonotone>(m.representation()).name}};
        break;
    }
    if (m.inverted()) jm["inverted"] = true;
    maps.push_back(jm);
  }
  Json probs = Json::array();
  for (const auto& p : sys.probs) probs.push_back(rational_json(p));
  return {{"maps", maps}, {"probs", probs}};
}

}  // namespace rdsline
