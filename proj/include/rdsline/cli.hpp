#pragma once

// Command dispatch for the rdsline tool. Each command turns a RunConfig into
// a JSON report plus named artifact files; run_cli adds the bookkeeping
// fields, writes everything atomically and maps outcomes to exit codes.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>

#include "rdsline/config.hpp"
#include "rdsline/harmonic.hpp"
#include "rdsline/measure.hpp"
#include "rdsline/monster.hpp"
#include "rdsline/report.hpp"
#include "rdsline/walk.hpp"

namespace rdsline {

enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitRefused = 2, kExitConfig = 3, kExitVerify = 4 };

struct CliOptions {
  std::string command;
  std::filesystem::path config;
  std::filesystem::path out = ".";
  std::optional<std::uint64_t> seed;
  unsigned workers = 1;
  std::optional<std::uint64_t> trials;
  std::optional<std::uint64_t> horizon;
  std::optional<double> escape;
  std::optional<Interval> window;
  std::optional<std::string> variant;
  std::optional<std::uint64_t> steps;
  bool plot = false;
  bool verify = false;
};

struct CommandOutput {
  Json results = Json::object();
  std::map<std::string, std::string> files;
  std::string status = "ok";
  std::string reason;
};

namespace detail {

inline Json estimate_json(const PhiEstimate& e) {
  return {{"x", e.x},
          {"phi_plus", e.phi_plus},
          {"phi_minus", e.phi_minus},
          {"phi_zero", e.phi_zero},
          {"ci", e.ci_halfwidth},
          {"trials", e.trials}};
}

inline std::string phi_csv(const std::vector<PhiEstimate>& est) {
  CsvTable t({"x", "phi_plus", "phi_minus", "phi_zero", "ci", "trials"});
  for (const auto& e : est) {
    t.add({e.x, e.phi_plus, e.phi_minus, e.phi_zero, e.ci_halfwidth, static_cast<double>(e.trials)});
  }
  return t.str();
}

inline SvgSeries phi_series(const std::string& name, const std::string& color, const std::vector<PhiEstimate>& est) {
  SvgSeries s{name, color, {}, {}, false};
  for (const auto& e : est) {
    s.x.push_back(e.x);
    s.y.push_back(e.phi_plus);
  }
  return s;
}

inline const RandomSystem& need_system(const RunConfig& cfg) {
  if (!cfg.system) throw ConfigError("$.system: missing required key");
  return *cfg.system;
}

inline std::string tail_name(const Tail& t) { return t.kind == TailKind::Finite ? "finite" : "infinite"; }

inline Json measure_header(const GridMeasure& nu) {
  Json h = {{"window", {nu.a, nu.b}},
            {"interpolation", nu.interpolation == Interpolation::Linear ? "linear" : "step"},
            {"left_tail", {{"kind", tail_name(nu.left)}}},
            {"right_tail", {{"kind", tail_name(nu.right)}}},
            {"normalization", nu.normalization},
            {"stationary_for", nu.stationary_for},
            {"residual", nu.residual},
            {"tolerance", nu.tolerance},
            {"residual_within_tolerance", nu.residual <= nu.tolerance},
            {"monotone", nu.monotone()}};
  if (nu.left.kind == TailKind::Finite) h["left_tail"]["mass"] = nu.left.mass;
  if (nu.right.kind == TailKind::Finite) h["right_tail"]["mass"] = nu.right.mass;
  if (nu.left.kind == TailKind::Infinite && nu.right.kind == TailKind::Infinite) h["anchor"] = nu.anchor;
  return h;
}

inline void emit_measure(CommandOutput& out, const GridMeasure& nu, bool plot) {
  CsvTable t({"x", "cdf"});
  for (std::size_t i = 0; i < nu.x.size(); ++i) t.add({nu.x[i], nu.cdf[i]});
  out.files["measure.csv"] = t.str();
  Json header = measure_header(nu);
  out.files["measure.json"] = header.dump(2) + "\n";
  out.results["measure"] = header;
  if (plot) {
    SvgSeries s{"distribution function", "steelblue", nu.x, nu.cdf, nu.interpolation == Interpolation::Step};
    out.files["measure.svg"] = svg_plot("stationary measure", {s});
  }
}

inline Json verdict_json(const ClassVerdict& v) {
  Json j = {{"class", v.class_id},
            {"refused", v.refused()},
            {"orientation_reversed", v.orientation_reversed},
            {"swapped", v.swapped},
            {"forward_pattern", to_string(v.forward_pattern)},
            {"inverse_pattern", to_string(v.inverse_pattern)},
            {"notes", v.notes}};
  if (v.refused()) j["refusal"] = v.refusal;
  Json f = Json::array(), i = Json::array();
  for (const auto& e : v.forward) f.push_back(estimate_json(e));
  for (const auto& e : v.inverse) i.push_back(estimate_json(e));
  j["forward"] = f;
  j["inverse"] = i;
  return j;
}

inline CommandOutput cmd_check(const RunConfig& cfg) {
  const RandomSystem& sys = need_system(cfg);
  CommandOutput out;
  SystemReport v = validate_system(sys);
  SystemReport s = check_shiftability(sys);
  out.results = {{"valid", v.valid},
                 {"errors", v.errors},
                 {"compact_displacement", v.compact_displacement},
                 {"shiftable", s.shiftable},
                 {"shift_verdict", s.shift_verdict == ShiftVerdict::Proved          ? "proved"
                                   : s.shift_verdict == ShiftVerdict::CheckedOnWindow ? "checked_on_window"
                                                                                      : "refuted"},
                 {"certificate", s.certificate},
                 {"notes", s.notes},
                 {"system", system_json(sys)},
                 {"inverse_system", system_json(inverse_system(sys))}};
  if (s.counterexample) out.results["counterexample"] = to_string(*s.counterexample);
  return out;
}

inline std::size_t default_grid_points(Interval w) {
  double span = w.hi - w.lo;
  if (span == std::floor(span) && span <= 100000) return static_cast<std::size_t>(span) + 1;
  return 2001;
}

inline CommandOutput cmd_phi(const RunConfig& cfg, bool plot) {
  const RandomSystem& sys = need_system(cfg);
  CommandOutput out;
  std::vector<double> points = cfg.phi.points.empty() ? cfg.classify.probes : cfg.phi.points;
  std::sort(points.begin(), points.end());
  auto fwd = estimate_phi(sys, points, cfg.sim, cfg.classify.ci_level);
  auto inv = estimate_phi(inverse_system(sys), points, cfg.sim, cfg.classify.ci_level);
  out.files["phi.csv"] = phi_csv(fwd);
  out.files["phi_inverse.csv"] = phi_csv(inv);
  Json f = Json::array(), i = Json::array();
  for (const auto& e : fwd) f.push_back(estimate_json(e));
  for (const auto& e : inv) i.push_back(estimate_json(e));
  out.results["forward"] = f;
  out.results["inverse"] = i;
  std::vector<SvgSeries> series{phi_series("forward", "steelblue", fwd), phi_series("inverse", "firebrick", inv)};
  if (cfg.phi.window) {
    HarmonicOptions ho;
    ho.grid_points = cfg.phi.grid_points ? cfg.phi.grid_points : default_grid_points(*cfg.phi.window);
    ho.tol = cfg.phi.tol;
    ho.workers = cfg.sim.workers;
    GridFunction g = solve_phi_window(sys, cfg.phi.window->lo, cfg.phi.window->hi, ho);
    CsvTable t({"x", "phi"});
    for (std::size_t k = 0; k < g.x.size(); ++k) t.add({g.x[k], g.values[k]});
    out.files["harmonic.csv"] = t.str();
    Json cmp = Json::array();
    for (const auto& e : fwd) {
      if (!cfg.phi.window->contains(e.x)) continue;
      double det = g(e.x);
      cmp.push_back({{"x", e.x}, {"monte_carlo", e.phi_plus}, {"harmonic", det},
                     {"difference", std::abs(e.phi_plus - det)}, {"ci", e.ci_halfwidth}});
    }
    out.results["harmonic"] = {{"window", {cfg.phi.window->lo, cfg.phi.window->hi}},
                               {"grid_points", g.x.size()},
                               {"residual", g.residual},
                               {"iterations", g.iterations},
                               {"residual_monotone", g.residual_monotone},
                               {"monotone", g.monotone()},
                               {"comparison", cmp}};
    series.push_back({"harmonic", "darkgreen", g.x, g.values, false});
  }
  if (plot) out.files["phi.svg"] = svg_plot("escape probability to +infinity", series);
  return out;
}

inline CommandOutput cmd_classify(const RunConfig& cfg, bool plot) {
  const RandomSystem& sys = need_system(cfg);
  CommandOutput out;
  ClassVerdict v = classify_system(sys, cfg.sim, cfg.classify);
  out.results = verdict_json(v);
  out.files["phi.csv"] = phi_csv(v.forward);
  out.files["phi_inverse.csv"] = phi_csv(v.inverse);
  if (plot && !v.forward.empty()) {
    out.files["phi.svg"] = svg_plot("escape probability to +infinity",
                                    {phi_series("forward", "steelblue", v.forward),
                                     phi_series("inverse", "firebrick", v.inverse)});
  }
  if (v.refused()) {
    out.status = "refused";
    out.reason = v.refusal;
  }
  return out;
}

inline MeasureParams measure_params(const RunConfig& cfg) {
  MeasureParams mp;
  mp.sim = cfg.sim;
  mp.classify = cfg.classify;
  mp.a = cfg.measure.a;
  mp.b = cfg.measure.b;
  mp.grid_step = cfg.measure.grid_step;
  mp.ci_level = cfg.classify.ci_level;
  return mp;
}

inline void run_radon(const RunConfig& cfg, CommandOutput& out, bool plot) {
  RadonParams rp = cfg.measure.radon;
  rp.sim = cfg.sim;
  RadonResult r = build_case3_radon(need_system(cfg), rp);
  out.results["construction"] = "case3";
  emit_measure(out, r.measure, plot);
  CsvTable h({"plateau", "center", "count"});
  Json levels = Json::array();
  for (const auto& level : r.levels) {
    for (std::size_t j = 0; j < level.histogram.counts.size(); ++j) {
      h.add({level.plateau, level.histogram.center(j), static_cast<double>(level.histogram.counts[j])});
    }
    levels.push_back({{"plateau", level.plateau}, {"cycles", level.cycles}, {"failed_cycles", level.failed_cycles}});
  }
  out.files["histogram.csv"] = h.str();
  out.results["levels"] = levels;
  out.results["consistency"] = r.consistency;
  out.results["consistent"] = r.consistent;
  out.results["atoms"] = r.atoms;
  if (!r.consistent) {
    out.status = "refused";
    out.reason = "cross-level inconsistency beyond tolerance; see histogram.csv for all levels";
  }
}

inline CommandOutput cmd_measure(const RunConfig& cfg, bool plot) {
  const RandomSystem& sys = need_system(cfg);
  CommandOutput out;
  Construction c = cfg.measure.construction;
  if (c == Construction::Case3) {
    run_radon(cfg, out, plot);
    return out;
  }
  MeasureParams mp = measure_params(cfg);
  ClassVerdict v = classify_system(sys, cfg.sim, cfg.classify);
  out.results["classification"] = verdict_json(v);
  if (v.refused()) throw Refusal("classification refused: " + v.refusal);
  if (c == Construction::Auto) {
    switch (v.class_id) {
      case 4: c = Construction::Case4; break;
      case 2: c = Construction::Case2; break;
      case 3: c = Construction::Case3; break;
      default: throw Refusal("class 1 has no recurrent side and hence no stationary measure to build");
    }
  }
  if (c == Construction::Case3) {
    if (v.class_id != 3) throw Refusal("Radon construction needs class 3; got class " + std::to_string(v.class_id));
    run_radon(cfg, out, plot);
  } else if (c == Construction::Case4) {
    GridMeasure nu = case4_from_verdict(sys, v, mp);
    out.results["construction"] = "case4";
    emit_measure(out, nu, plot);
  } else {
    SemiInfiniteParams sp;
    sp.base = mp;
    sp.y = cfg.measure.y;
    sp.trials = cfg.measure.psi_trials;
    SemiInfiniteResult r = semi_from_verdict(sys, v, sp);
    out.results["construction"] = "case2";
    emit_measure(out, r.measure, plot);
    CsvTable t({"x", "psi"});
    for (std::size_t i = 0; i < r.measure.x.size(); ++i) t.add({r.measure.x[i], r.psi[i]});
    out.files["psi.csv"] = t.str();
    out.results["y"] = sp.y;
    out.results["psi_at_zero"] = r.psi_at_zero;
    out.results["truncated_fraction"] = r.truncated_fraction;
  }
  return out;
}

inline Json frequency_json(const FrequencyTest& t) {
  return {{"events", t.events}, {"observed", t.observed}, {"expected", t.expected}, {"variance", t.variance}, {"z", t.z()}};
}

inline CommandOutput cmd_monster(const RunConfig& cfg) {
  CommandOutput out;
  const MonsterConfig& mc = cfg.monster;
  auto traces = run_monster_batch(mc.options, cfg.seed, 0, mc.seeds, cfg.sim.workers);
  Json runs = Json::array();
  FrequencyTest repeat, doubling;
  std::uint64_t clean_1e3 = 0, clean_1e4 = 0, small_max_ok = 0;
  CsvTable kn({"run", "n", "K_n"});
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const RankTrace& t = traces[i];
    RankLemmaReport r = check_rank_lemmas(t);
    repeat.merge(r.repeat);
    doubling.merge(r.doubling);
    if (!t.last_inside || *t.last_inside < 1000) ++clean_1e3;
    if (!t.last_inside || *t.last_inside <= 10000) ++clean_1e4;
    if (r.last_small_max < 10000) ++small_max_ok;
    Json run = {{"run", i},
                {"seed", t.seed},
                {"inside_count", t.inside_count},
                {"last_inside", t.last_inside ? Json(*t.last_inside) : Json(nullptr)},
                {"max_rank", t.max_rank()},
                {"records", r.records},
                {"last_small_max", r.last_small_max},
                {"last_tie_record", r.last_tie_record},
                {"last_slow_record", r.last_slow_record}};
    runs.push_back(run);
    for (double e = 0.0;; e += 0.25) {
      auto n = static_cast<std::uint64_t>(std::llround(std::pow(10.0, e)));
      if (n > t.steps) break;
      kn.add({static_cast<double>(i), static_cast<double>(n), static_cast<double>(t.running_max(n))});
    }
  }
  if (mc.extra_runs > 0) {
    MonsterOptions extra = mc.options;
    extra.steps = mc.extra_steps;
    extra.track_position = false;
    auto more = run_monster_batch(extra, cfg.seed, mc.seeds, mc.extra_runs, cfg.sim.workers);
    for (const auto& t : more) {
      RankLemmaReport r = check_rank_lemmas(t);
      repeat.merge(r.repeat);
      doubling.merge(r.doubling);
    }
  }
  out.files["kn.csv"] = kn.str();
  out.results = {{"variant", to_string(mc.options.variant)},
                 {"steps", mc.options.steps},
                 {"interval", {mc.options.a, mc.options.b}},
                 {"perturbed", mc.options.perturbed},
                 {"runs", runs},
                 {"runs_without_inside_from_1000", clean_1e3},
                 {"runs_without_inside_after_10000", clean_1e4},
                 {"runs_with_last_small_max_below_10000", small_max_ok},
                 {"record_events", repeat.events},
                 {"repeat_test", frequency_json(repeat)},
                 {"doubling_test", frequency_json(doubling)}};
  return out;
}

inline void apply_overrides(RunConfig& cfg, const CliOptions& opt) {
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.trials) cfg.sim.trials = *opt.trials;
  if (opt.horizon) cfg.sim.horizon = *opt.horizon;
  if (opt.escape) cfg.sim.escape_threshold = *opt.escape;
  if (opt.window) {
    cfg.phi.window = *opt.window;
    cfg.measure.a = opt.window->lo;
    cfg.measure.b = opt.window->hi;
  }
  if (opt.variant) {
    if (*opt.variant == "alternating") cfg.monster.options.variant = MonsterVariant::Alternating;
    else if (*opt.variant == "symmetric") cfg.monster.options.variant = MonsterVariant::Symmetric;
    else throw ConfigError("--variant: expected alternating or symmetric");
  }
  if (opt.steps) cfg.monster.options.steps = *opt.steps;
  cfg.sim.master_seed = cfg.seed;
  cfg.sim.workers = std::max(1u, opt.workers);
  cfg.sim.check();
}

inline CommandOutput dispatch(const RunConfig& cfg, const CliOptions& opt) {
  if (opt.command == "check") return cmd_check(cfg);
  if (opt.command == "phi") return cmd_phi(cfg, opt.plot);
  if (opt.command == "classify") return cmd_classify(cfg, opt.plot);
  if (opt.command == "measure") return cmd_measure(cfg, opt.plot);
  if (opt.command == "monster") return cmd_monster(cfg);
  throw ConfigError("unknown command '" + opt.command + "'");
}

/// Runs the command once; never throws for module or config failures.
inline std::pair<CommandOutput, int> execute(const std::string& config_text, const CliOptions& opt) {
  CommandOutput out;
  int code = kExitOk;
  try {
    RunConfig cfg = parse_config(config_text);
    apply_overrides(cfg, opt);
    out = dispatch(cfg, opt);
    if (out.status == "refused") code = kExitRefused;
  } catch (const ConfigError& e) {
    out.status = "config_error";
    out.reason = e.what();
    code = kExitConfig;
  } catch (const InvalidSystem& e) {
    out.status = "config_error";
    out.reason = e.what();
    code = kExitConfig;
  } catch (const Refusal& e) {
    out.status = "refused";
    out.reason = e.what();
    code = kExitRefused;
  } catch (const std::exception& e) {
    out.status = "error";
    out.reason = e.what();
    code = kExitError;
  }
  return {std::move(out), code};
}

inline Json report_json(const CommandOutput& out, const CliOptions& opt, const std::string& config_text,
                        std::uint64_t seed) {
  Json r = {{"command", opt.command},
            {"status", out.status},
            {"config_hash", hex64(fnv1a64(config_text))},
            {"seed", seed},
            {"generator", std::string(kGeneratorId)},
            {"results", out.results}};
  if (!out.reason.empty()) r["reason"] = out.reason;
  return r;
}

}  // namespace detail

/// Seed actually used for a run: --seed if given, else the config's seed.
inline std::uint64_t effective_seed(const std::string& config_text, const CliOptions& opt) {
  if (opt.seed) return *opt.seed;
  try {
    Json j = Json::parse(config_text);
    if (j.is_object() && j.contains("seed") && j["seed"].is_number_unsigned()) return j["seed"].get<std::uint64_t>();
  } catch (const Json::exception&) {
  }
  return 0;
}

inline int run_cli(const CliOptions& opt, std::ostream& log) {
  std::string text;
  std::error_code ec;
  std::filesystem::create_directories(opt.out, ec);
  if (ec) {
    log << "error: cannot create output directory " << opt.out << ": " << ec.message() << "\n";
    return kExitConfig;
  }
  try {
    text = read_file(opt.config);
  } catch (const ConfigError& e) {
    CommandOutput out;
    out.status = "config_error";
    out.reason = e.what();
    Json r = detail::report_json(out, opt, "", opt.seed.value_or(0));
    r["wall_time_seconds"] = 0.0;
    write_atomic(opt.out / "report.json", r.dump(2) + "\n");
    log << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  const std::uint64_t seed = effective_seed(text, opt);

  auto start = std::chrono::steady_clock::now();
  auto [out, code] = detail::execute(text, opt);
  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  Json report = detail::report_json(out, opt, text, seed);

  if (opt.verify) {
    auto [again, again_code] = detail::execute(text, opt);
    Json second = detail::report_json(again, opt, text, seed);
    std::vector<std::string> mismatches;
    if (second != report || again_code != code) mismatches.push_back("report.json");
    for (const auto& [name, content] : out.files) {
      auto it = again.files.find(name);
      if (it == again.files.end() || it->second != content) mismatches.push_back(name);
    }
    for (const auto& [name, content] : again.files) {
      if (!out.files.count(name)) mismatches.push_back(name);
    }
    report["verify"] = {{"identical", mismatches.empty()}, {"mismatches", mismatches}};
    if (!mismatches.empty()) code = kExitVerify;
  }

  report["wall_time_seconds"] = wall;
  for (const auto& [name, content] : out.files) write_atomic(opt.out / name, content);
  write_atomic(opt.out / "report.json", report.dump(2) + "\n");

  log << opt.command << ": " << out.status;
  if (!out.reason.empty()) log << " (" << out.reason << ")";
  log << "\n";
  return code;
}

}  // namespace rdsline
