#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <random>
#include <sstream>

#include "crt/config.hpp"
#include "crt/engine.hpp"
#include "crt/errors.hpp"
#include "crt/glm.hpp"
#include "crt/rng.hpp"
#include "crt/simulation.hpp"

namespace crt {

namespace {

struct Common {
  std::string data, config, out;
  std::optional<std::size_t> B, workers;
  std::optional<std::uint64_t> seed;
  bool allow_ragged = false;
  std::ostream* err = nullptr;
};

struct StatFlags {
  std::string statistic;
  std::vector<std::string> target;
  std::optional<double> lambda;
  std::optional<std::size_t> cv_folds, I;
  bool include_v = false, cv_per_resample = false;
  std::vector<std::string> extra_main;  // "a:b"
};

void add_common(CLI::App* c, Common& o, bool needs_target_data = true) {
  c->add_option("--data", o.data, "Conjoint CSV")->required()->check(CLI::ExistingFile);
  c->add_option("--config", o.config, "Study TOML")->required()->check(CLI::ExistingFile);
  if (needs_target_data) {
    c->add_option("--B", o.B, "Resamples");
    c->add_option("--seed", o.seed, "Master seed (generated and printed when omitted)");
    c->add_option("--workers", o.workers, "Parallel resampling threads");
  }
  c->add_option("--out", o.out, "Write the JSON result here instead of stdout");
  c->add_flag("--allow-ragged", o.allow_ragged, "Accept respondents with differing task counts");
}

void add_stat(CLI::App* c, StatFlags& s, bool with_kind) {
  if (with_kind) c->add_option("--statistic", s.statistic, "Statistic kind (default from config, else hiernet)");
  c->add_option("--lambda", s.lambda, "Fixed penalty; omitted selects it by cross-validation");
  c->add_option("--cv-folds", s.cv_folds, "Cross-validation folds");
  c->add_option("--I", s.I, "Screened factors for the dicrt statistic");
  c->add_flag("--include-v", s.include_v, "Add respondent covariates to the model");
  c->add_flag("--cv-per-resample", s.cv_per_resample, "Re-run cross-validation on every resample");
  c->add_option("--extra-main", s.extra_main, "Extra main-effect term a:b (repeatable)");
}

void apply_stat(const StatFlags& f, StatisticSpec& s) {
  if (!f.statistic.empty()) s.kind = statistic_kind_from_string(f.statistic);
  if (!f.target.empty()) s.target = f.target;
  if (f.lambda) {
    if (*f.lambda < 0) throw ValidationError("--lambda must be nonnegative");
    s.options.lambda = *f.lambda;
  }
  if (f.cv_folds) s.options.cv_folds = *f.cv_folds;
  if (f.I) s.options.I = *f.I;
  if (f.include_v) s.options.include_v = true;
  if (f.cv_per_resample) s.options.cv_per_resample = true;
  for (const auto& e : f.extra_main) {
    const auto c = e.find(':');
    if (c == std::string::npos || c == 0 || c + 1 == e.size())
      throw ValidationError("--extra-main expects factor_a:factor_b, got '" + e + "'");
    s.options.extra_main.emplace_back(e.substr(0, c), e.substr(c + 1));
  }
}

std::uint64_t fresh_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

// Fills plan settings: CLI flags, then config, then defaults.
ResamplePlan make_plan(const Common& c, const StudyConfig& cfg, std::ostream& out) {
  ResamplePlan plan = cfg.plan;
  if (c.B) plan.B = *c.B;
  if (c.workers) plan.workers = *c.workers;
  if (plan.B < 1) throw ValidationError("B must be at least 1");
  if (plan.workers < 1) throw ValidationError("workers must be at least 1");
  if (c.seed) {
    plan.master_seed = *c.seed;
  } else if (!cfg.has_seed) {
    plan.master_seed = fresh_seed();
    out << "seed=" << plan.master_seed << '\n';
  }
  return plan;
}

void emit(const std::string& json, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << json << '\n';
    return;
  }
  std::ofstream f(path);
  if (!f) throw ValidationError("cannot write '" + path + "'");
  f << json << '\n';
}

void report(const CrtResult& r, const std::string& path, std::ostream& out, std::ostream& err) {
  for (const auto& n : r.notes) err << "warning: " << n << '\n';
  emit(to_json(r), path, out);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", r.wall_time);
  out << "wall_time=" << buf << '\n';
  out << "p_value=" << r.p_value_string() << '\n';
}

ConjointDataset load(const Common& c, const StudyConfig& cfg, std::vector<std::string> targets) {
  LoadOptions lo;
  lo.allow_ragged = c.allow_ragged;
  lo.targets = std::move(targets);
  ConjointDataset ds = load_dataset(c.data, cfg.schema, lo);
  if (ds.dropped_respondents && c.err)
    *c.err << "warning: dropped " << ds.dropped_respondents << " respondent(s) (missing covariates or ragged task counts); n=" << ds.n
           << '\n';
  return ds;
}

int cmd_test(const Common& c, const StatFlags& f, const std::string& coarsen, const std::string& group,
             std::ostream& out, std::ostream& err) {
  const StudyConfig cfg = load_config(c.config);
  StatisticSpec spec = cfg.statistic.value_or(StatisticSpec{});
  apply_stat(f, spec);
  if (!coarsen.empty()) {
    spec.coarsening = load_coarsening(coarsen, cfg.schema);
  } else if (cfg.coarsening &&
             (spec.kind == StatisticKind::hiernet_coarsened || (!group.empty() && spec.kind == StatisticKind::lasso_main))) {
    spec.coarsening = cfg.coarsening;
  }
  if (!group.empty() && !spec.coarsening) throw ValidationError("--group needs a coarsening (--coarsen or [coarsen])");
  std::vector<std::string> load_targets = spec.target;
  ResampleKind kind = required_resample(spec.kind);
  if (spec.coarsening) {
    if (!group.empty()) spec.coarsening->tested_group = group;
    validate_coarsening(*spec.coarsening);
    if (spec.kind != StatisticKind::lasso_main) spec.kind = StatisticKind::hiernet_coarsened;
    kind = ResampleKind::coarsened;
    load_targets = spec.coarsening->source_factors;
    spec.target.clear();
  } else if (spec.target.empty()) {
    throw ValidationError("no target factor (use --target or [statistic] target)");
  }
  const ConjointDataset ds = load(c, cfg, load_targets);
  ResamplePlan plan = make_plan(c, cfg, out);
  plan.kind = kind;
  report(run_crt(ds, cfg.scheme, plan, spec), c.out, out, err);
  return 0;
}

int cmd_regularity(const Common& c, const StatFlags& f, const std::string& which, std::ostream& out,
                   std::ostream& err) {
  const StudyConfig cfg = load_config(c.config);
  StatisticSpec spec;
  if (cfg.statistic) spec.options = cfg.statistic->options;
  StatFlags g = f;
  g.statistic = which;
  g.target.clear();
  apply_stat(g, spec);
  spec.target.clear();
  const ConjointDataset ds = load(c, cfg, {});
  if (spec.kind == StatisticKind::fatigue && ds.J < 2) throw ValidationError("fatigue test requires J ≥ 2");
  ResamplePlan plan = make_plan(c, cfg, out);
  plan.kind = required_resample(spec.kind);
  report(run_crt(ds, cfg.scheme, plan, spec), c.out, out, err);
  return 0;
}

int cmd_amce(const Common& c, const std::string& target, const std::vector<std::string>& extra,
             const std::string& cluster, std::ostream& out) {
  const StudyConfig cfg = load_config(c.config);
  const ConjointDataset ds = load(c, cfg, {target});
  AmceOptions o;
  o.extra_terms = extra;
  if (cluster == "respondent")
    o.cluster = ClusterBy::respondent;
  else if (cluster != "task")
    throw ValidationError("--cluster must be task or respondent");
  const AmceResult r = amce_test(ds, target, o);
  nlohmann::ordered_json j;
  j["target"] = target;
  j["cluster"] = cluster;
  j["terms"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    j["terms"].push_back({{"name", r.names[i]}, {"estimate", r.coef[ii]}, {"se", std::sqrt(r.cov(ii, ii))}});
  }
  j["tested"] = nlohmann::ordered_json::array();
  for (auto t : r.tested) j["tested"].push_back(r.names[t]);
  j["estimate"] = r.estimate;
  j["F"] = r.test.statistic;
  j["df1"] = r.test.df1;
  j["df2"] = r.test.df2;
  j["p_value"] = r.p_value;
  emit(j.dump(2), c.out, out);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", r.p_value);
  out << "p_value=" << buf << '\n';
  return 0;
}

int cmd_screen(const Common& c, const StatFlags& f, std::vector<std::string> vars, std::ostream& out,
               std::ostream& err) {
  const StudyConfig cfg = load_config(c.config);
  StatisticSpec base;
  if (cfg.statistic) {
    base.options = cfg.statistic->options;
    base.target = cfg.statistic->target;
  }
  apply_stat(f, base);
  base.kind = StatisticKind::interaction_screen;
  if (base.target.empty()) throw ValidationError("no target factor (use --target or [statistic] target)");
  const ConjointDataset ds = load(c, cfg, base.target);
  if (vars.empty()) {
    for (std::size_t k = 0; k < ds.p(); ++k)
      if (!ds.is_target(k)) vars.push_back(ds.factors[k].name);
    for (const auto& v : ds.covariates) vars.push_back(v.name);
  }
  if (vars.empty()) throw ValidationError("nothing to screen");
  ResamplePlan plan = make_plan(c, cfg, out);
  plan.kind = ResampleKind::main;
  std::ostringstream table;
  table << "variable,statistic,p_value,p_value_numeric\n";
  table.precision(10);
  std::size_t best = 0;
  std::vector<CrtResult> results;
  for (std::size_t i = 0; i < vars.size(); ++i) {
    StatisticSpec s = base;
    s.options.screen_variable = vars[i];
    results.push_back(run_crt(ds, cfg.scheme, plan, s));
    const auto& r = results.back();
    table << vars[i] << ',' << r.observed_statistic << ',' << r.p_value_string() << ',' << r.p_value() << '\n';
    if (r.p_value() < results[best].p_value()) best = i;
    if (!r.notes.empty()) err << "warning: " << r.notes.front() << '\n';
  }
  if (c.out.empty()) {
    out << table.str();
  } else {
    emit(table.str(), c.out, out);
  }
  out << "selected=" << vars[best] << '\n';
  out << "p_value=" << results[best].p_value_string() << '\n';
  return 0;
}

struct SimFlags {
  std::string study;
  std::size_t reps = 200, B = 100, n = 0, workers = 1;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> methods;
  std::vector<double> sizes;
  bool verbose = false;
};

int cmd_simulate(const SimFlags& s, std::ostream& out, std::ostream& err) {
  static const std::vector<std::string> studies{"power", "power-hetero", "power-unconstrained", "power-dicrt",
                                                "inflation"};
  if (std::find(studies.begin(), studies.end(), s.study) == studies.end())
    throw ValidationError("unknown study '" + s.study + "' (expected power, power-hetero, power-unconstrained, "
                          "power-dicrt or inflation)");
  if (s.reps < 1) throw ValidationError("--reps must be positive");
  std::uint64_t seed = 0;
  if (s.seed) {
    seed = *s.seed;
  } else {
    seed = fresh_seed();
    err << "seed=" << seed << '\n';
  }
  auto progress = [&](const std::string& m) {
    if (s.verbose) err << m << '\n';
  };
  if (s.study == "inflation") {
    InflationOptions o;
    o.reps = s.reps;
    o.seed = seed;
    if (s.n) o.n = s.n;
    if (!s.sizes.empty()) {
      o.num_z.clear();
      for (double z : s.sizes) o.num_z.push_back(static_cast<std::size_t>(z));
    }
    o.progress = progress;
    const auto rows = logistic_inflation_study(o);
    std::ostringstream csv;
    write_inflation_csv(rows, csv);
    out << csv.str();
    if (!s.out.empty()) {
      std::ofstream f(s.out + ".csv");
      if (!f) throw ValidationError("cannot write '" + s.out + ".csv'");
      f << csv.str();
    }
    return 0;
  }
  const std::size_t n = s.n ? s.n : 1000;
  PowerStudyOptions o;
  o.reps = s.reps;
  o.B = s.B;
  o.seed = seed;
  o.workers = s.workers;
  o.progress = progress;
  std::vector<PowerGridPoint> grid;
  std::vector<double> sizes = s.sizes;
  if (s.study == "power") {
    if (sizes.empty()) sizes = {0, 0.025, 0.05, 0.075, 0.1};
    grid = interaction_size_grid(seed, n, sizes);
    o.methods = {PowerMethod::crt_hiernet, PowerMethod::amce};
  } else if (s.study == "power-unconstrained") {
    if (sizes.empty()) sizes = {0, 0.05, 0.1};
    grid = interaction_size_grid(seed, n, sizes);
    o.methods = {PowerMethod::crt_hiernet, PowerMethod::crt_hiernet_unconstrained};
  } else if (s.study == "power-hetero") {
    if (sizes.empty()) sizes = {0.05, 0.1};
    grid = heterogeneous_grid(seed, n, sizes);
    o.methods = {PowerMethod::crt_hiernet};
  } else {
    std::vector<std::size_t> counts;
    for (double c : sizes.empty() ? std::vector<double>{0, 4, 8, 12} : sizes) counts.push_back(static_cast<std::size_t>(c));
    grid = interaction_count_grid(seed, n, 0.1, counts);
    o.methods = {PowerMethod::crt_hiernet, PowerMethod::crt_dicrt, PowerMethod::amce};
  }
  if (!s.methods.empty()) {
    o.methods.clear();
    for (const auto& m : s.methods) o.methods.push_back(power_method_from_string(m));
  }
  const PowerStudyResult r = power_study(grid, o);
  std::ostringstream summary;
  write_power_summary_csv(r, summary);
  out << summary.str();
  if (!s.out.empty()) {
    std::ofstream f(s.out + "_summary.csv"), g(s.out + "_rows.csv");
    if (!f || !g) throw ValidationError("cannot write under '" + s.out + "'");
    f << summary.str();
    write_power_rows_csv(r, g);
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conditional randomization tests for forced-choice conjoint experiments", "crt"};
  app.require_subcommand(1);

  Common common;
  common.err = &err;
  StatFlags stat;
  std::string coarsen, group, which, cluster = "task";
  std::vector<std::string> extra_terms, vars;
  SimFlags sim;

  auto* test = app.add_subcommand("test", "CRT of a factor (or coarsened group) against the main-effect-free null");
  add_common(test, common);
  add_stat(test, stat, true);
  test->add_option("--target", stat.target, "Factor(s) of interest");
  test->add_option("--coarsen", coarsen, "TOML file with a [coarsen] table")->check(CLI::ExistingFile);
  test->add_option("--group", group, "Coarse group to test");

  auto* reg = app.add_subcommand("regularity", "Profile-order, carryover or fatigue test");
  reg->add_option("which", which, "order | carryover | fatigue")
      ->required()
      ->check(CLI::IsMember({"order", "carryover", "fatigue"}));
  add_common(reg, common);
  add_stat(reg, stat, false);

  auto* amce = app.add_subcommand("amce", "Stacked-regression AMCE test with clustered errors");
  add_common(amce, common, false);
  std::string amce_target;
  amce->add_option("--target", amce_target, "Factor of interest")->required();
  amce->add_option("--extra-term", extra_terms, "Factor interacted with the target (repeatable)");
  amce->add_option("--cluster", cluster, "task | respondent");

  auto* screen = app.add_subcommand("screen", "Per-variable interaction screening CRTs");
  add_common(screen, common);
  add_stat(screen, stat, false);
  screen->add_option("--target", stat.target, "Factor(s) of interest");
  screen->add_option("--variables", vars, "Candidate variables (default: every other factor and covariate)");

  auto* simulate = app.add_subcommand("simulate", "Monte-Carlo studies");
  simulate->add_option("study", sim.study, "power | power-hetero | power-unconstrained | power-dicrt | inflation")
      ->required();
  simulate->add_option("--reps", sim.reps, "Monte-Carlo replications");
  simulate->add_option("--B", sim.B, "Resamples per CRT");
  simulate->add_option("--n", sim.n, "Respondents per dataset (power: 1000, inflation: 5000)");
  simulate->add_option("--seed", sim.seed, "Master seed");
  simulate->add_option("--workers", sim.workers, "Parallel resampling threads");
  simulate->add_option("--out", sim.out, "Prefix for CSV files");
  simulate->add_option("--methods", sim.methods, "crt_hiernet crt_hiernet_unconstrained crt_dicrt amce");
  simulate->add_option("--grid", sim.sizes, "Grid values (interaction sizes; counts for power-dicrt; num_z for inflation)");
  simulate->add_flag("--verbose", sim.verbose, "Progress on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*test) return cmd_test(common, stat, coarsen, group, out, err);
    if (*reg) return cmd_regularity(common, stat, which, out, err);
    if (*amce) return cmd_amce(common, amce_target, extra_terms, cluster, out);
    if (*screen) return cmd_screen(common, stat, vars, out, err);
    if (*simulate) return cmd_simulate(sim, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"crt"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace crt
