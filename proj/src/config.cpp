#include "crt/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <toml.hpp>

#include "crt/errors.hpp"

namespace crt {

namespace {

std::string where(const std::string& src, const toml::node& n) {
  const auto& s = n.source();
  return src + ":" + std::to_string(s.begin.line) + ": ";
}

[[noreturn]] void fail(const std::string& src, const toml::node& n, const std::string& msg) {
  throw ValidationError(where(src, n) + msg);
}

std::vector<std::string> strings(const std::string& src, const toml::node& n, const std::string& what) {
  const auto* a = n.as_array();
  if (!a) fail(src, n, what + " must be an array of strings");
  std::vector<std::string> out;
  for (const auto& e : *a) {
    const auto v = e.value<std::string>();
    if (!v) fail(src, e, what + " must contain strings");
    out.push_back(*v);
  }
  return out;
}

// Table entries sorted by their position in the file.
std::vector<std::pair<std::string, const toml::node*>> ordered(const toml::table& t) {
  std::vector<std::pair<std::string, const toml::node*>> v;
  for (auto&& [k, n] : t) v.emplace_back(std::string(k.str()), &n);
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    const auto& sa = a.second->source().begin;
    const auto& sb = b.second->source().begin;
    return sa.line != sb.line ? sa.line < sb.line : sa.column < sb.column;
  });
  return v;
}

const toml::table& as_table(const std::string& src, const toml::node& n, const std::string& what) {
  const auto* t = n.as_table();
  if (!t) fail(src, n, what + " must be a table");
  return *t;
}

template <class T>
T number(const std::string& src, const toml::node& n, const std::string& what) {
  if constexpr (std::is_floating_point_v<T>) {
    if (const auto v = n.value<double>()) return static_cast<T>(*v);
  } else {
    if (const auto v = n.value<std::int64_t>()) {
      if (*v < 0) fail(src, n, what + " must be nonnegative");
      return static_cast<T>(*v);
    }
  }
  fail(src, n, what + " has the wrong type");
}

bool boolean(const std::string& src, const toml::node& n, const std::string& what) {
  const auto v = n.value<bool>();
  if (!v) fail(src, n, what + " must be true or false");
  return *v;
}

std::vector<int> level_ids(const std::string& src, const toml::node& n, const FactorSpec& f, const std::string& what) {
  std::vector<int> out;
  for (const auto& l : strings(src, n, what)) {
    const int k = f.level_index(l);
    if (k < 0) fail(src, n, "unknown level '" + l + "' of factor '" + f.name + "'");
    out.push_back(k);
  }
  return out;
}

CoarseningSpec coarsening_from(const std::string& src, const toml::table& c, const Schema& schema) {
  CoarseningSpec spec;
  if (const auto* f = c.get("factor")) {
    const auto v = f->value<std::string>();
    if (!v) fail(src, *f, "coarsen.factor must be a string");
    spec.source_factors = {*v};
  } else if (const auto* fs = c.get("factors")) {
    spec.source_factors = strings(src, *fs, "coarsen.factors");
  } else {
    fail(src, c, "[coarsen] needs 'factor' or 'factors'");
  }
  std::vector<const FactorSpec*> srcs;
  for (const auto& name : spec.source_factors) {
    const int i = schema.factor_index(name);
    if (i < 0) fail(src, c, "coarsen names unknown factor '" + name + "'");
    srcs.push_back(&schema.factors[static_cast<std::size_t>(i)]);
  }
  spec.name = spec.source_factors.size() == 1 ? spec.source_factors[0] : "";
  if (spec.name.empty())
    for (const auto& s : spec.source_factors) spec.name += (spec.name.empty() ? "" : ":") + s;
  if (const auto* n = c.get("name")) {
    const auto v = n->value<std::string>();
    if (!v) fail(src, *n, "coarsen.name must be a string");
    spec.name = *v;
  }
  const bool keep = c.get("keep_others") ? boolean(src, *c.get("keep_others"), "coarsen.keep_others") : false;
  if (const auto* m = c.get("map")) {
    if (srcs.size() != 1) fail(src, *m, "[coarsen.map] needs a single source factor; use [[coarsen.entry]]");
    std::map<std::string, std::string> fine_to_coarse;
    for (const auto& [coarse, node] : ordered(as_table(src, *m, "coarsen.map")))
      for (const auto& l : strings(src, *node, "coarsen.map." + coarse)) {
        if (srcs[0]->level_index(l) < 0) fail(src, *node, "unknown level '" + l + "' of factor '" + srcs[0]->name + "'");
        if (fine_to_coarse.count(l)) fail(src, *node, "level '" + l + "' mapped twice");
        fine_to_coarse[l] = coarse;
      }
    for (const auto& l : srcs[0]->levels) {
      const auto it = fine_to_coarse.find(l);
      if (it != fine_to_coarse.end())
        spec.c_map.push_back({{l}, it->second});
      else if (keep)
        spec.c_map.push_back({{l}, l});
    }
  }
  if (const auto* e = c.get("entry")) {
    const auto* arr = e->as_array();
    if (!arr) fail(src, *e, "coarsen.entry must be an array of tables");
    for (const auto& item : *arr) {
      const auto& t = as_table(src, item, "coarsen.entry");
      if (!t.get("from") || !t.get("to")) fail(src, item, "coarsen.entry needs 'from' and 'to'");
      auto from = strings(src, *t.get("from"), "coarsen.entry.from");
      if (from.size() != srcs.size()) fail(src, item, "coarsen.entry.from must list one level per source factor");
      for (std::size_t i = 0; i < from.size(); ++i)
        if (srcs[i]->level_index(from[i]) < 0)
          fail(src, item, "unknown level '" + from[i] + "' of factor '" + srcs[i]->name + "'");
      const auto to = t.get("to")->value<std::string>();
      if (!to) fail(src, item, "coarsen.entry.to must be a string");
      spec.c_map.push_back({from, *to});
    }
  }
  if (keep && srcs.size() == 1 && !c.get("map")) {
    for (const auto& l : srcs[0]->levels) {
      const bool have = std::any_of(spec.c_map.begin(), spec.c_map.end(), [&](const auto& p) { return p.first[0] == l; });
      if (!have) spec.c_map.push_back({{l}, l});
    }
  }
  if (spec.c_map.empty()) fail(src, c, "[coarsen] defines no level mapping");
  std::map<std::string, std::string> groups;
  if (const auto* g = c.get("groups"))
    for (const auto& [id, node] : ordered(as_table(src, *g, "coarsen.groups")))
      for (const auto& l : strings(src, *node, "coarsen.groups." + id)) groups[l] = id;
  for (const auto& l : spec.coarse_levels()) spec.h_map[l] = groups.count(l) ? groups[l] : l;
  for (const auto& [l, id] : groups)
    if (!spec.h_map.count(l)) fail(src, c, "group lists unknown coarse level '" + l + "'");
  if (const auto* t = c.get("tested_group")) {
    const auto v = t->value<std::string>();
    if (!v) fail(src, *t, "coarsen.tested_group must be a string");
    spec.tested_group = *v;
  }
  return spec;
}

toml::table parse_text(const std::string& text, const std::string& source) {
  try {
    return toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << source << ":" << e.source().begin.line << ": " << e.description();
    throw ValidationError(os.str());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

StudyConfig parse_config(const std::string& text, const std::string& src) {
  const toml::table root = parse_text(text, src);
  StudyConfig cfg;
  std::vector<std::vector<double>> probs;
  if (const auto* f = root.get("factor")) {
    for (const auto& [name, node] : ordered(as_table(src, *f, "factor"))) {
      const auto& t = as_table(src, *node, "factor." + name);
      FactorSpec fs;
      fs.name = name;
      if (!t.get("levels")) fail(src, *node, "factor '" + name + "' needs levels");
      fs.levels = strings(src, *t.get("levels"), "levels");
      try {
        validate_factor(fs);
      } catch (const ValidationError& e) {
        fail(src, *node, e.what());
      }
      std::vector<double> p(fs.size(), 1.0 / static_cast<double>(fs.size()));
      if (const auto* pr = t.get("probs")) {
        const auto* a = pr->as_array();
        if (!a || a->size() != fs.size()) fail(src, *pr, "probs must have one entry per level");
        for (std::size_t i = 0; i < a->size(); ++i) p[i] = number<double>(src, *a->get(i), "probs");
      }
      cfg.schema.factors.push_back(std::move(fs));
      probs.push_back(std::move(p));
    }
  }
  if (cfg.schema.factors.empty()) throw ValidationError(src + ": no [factor.<name>] tables");
  if (const auto* c = root.get("covariate")) {
    for (const auto& [name, node] : ordered(as_table(src, *c, "covariate"))) {
      const auto& t = as_table(src, *node, "covariate." + name);
      FactorSpec fs;
      fs.name = name;
      fs.kind = FactorKind::covariate;
      fs.numeric = t.get("numeric") ? boolean(src, *t.get("numeric"), "numeric") : false;
      if (!fs.numeric) {
        if (!t.get("levels")) fail(src, *node, "covariate '" + name + "' needs levels or numeric = true");
        fs.levels = strings(src, *t.get("levels"), "levels");
      }
      cfg.schema.covariates.push_back(std::move(fs));
    }
  }
  cfg.scheme.marginals = probs;
  if (const auto* r = root.get("restriction")) {
    const auto* arr = r->as_array();
    if (!arr) fail(src, *r, "restriction must be an array of tables ([[restriction]])");
    for (const auto& item : *arr) {
      const auto& t = as_table(src, item, "restriction");
      for (const char* key : {"if_factor", "if_levels", "then_factor", "allowed_levels"})
        if (!t.get(key)) fail(src, item, std::string("restriction needs '") + key + "'");
      const auto fa = t.get("if_factor")->value<std::string>();
      const auto fb = t.get("then_factor")->value<std::string>();
      const int ia = fa ? cfg.schema.factor_index(*fa) : -1, ib = fb ? cfg.schema.factor_index(*fb) : -1;
      if (ia < 0) fail(src, item, "restriction names an unknown if_factor");
      if (ib < 0) fail(src, item, "restriction names an unknown then_factor");
      RestrictionRule rule;
      rule.if_factor = static_cast<std::size_t>(ia);
      rule.then_factor = static_cast<std::size_t>(ib);
      rule.if_levels = level_ids(src, *t.get("if_levels"), cfg.schema.factors[rule.if_factor], "if_levels");
      rule.allowed = level_ids(src, *t.get("allowed_levels"), cfg.schema.factors[rule.then_factor], "allowed_levels");
      cfg.scheme.restrictions.push_back(std::move(rule));
    }
  }
  try {
    validate_scheme(cfg.scheme, cfg.schema.factors);
  } catch (const ValidationError& e) {
    throw ValidationError(src + ": " + e.what());
  }

  if (const auto* s = root.get("statistic")) {
    const auto& t = as_table(src, *s, "statistic");
    StatisticSpec spec;
    if (const auto* k = t.get("kind")) {
      const auto v = k->value<std::string>();
      if (!v) fail(src, *k, "statistic.kind must be a string");
      try {
        spec.kind = statistic_kind_from_string(*v);
      } catch (const ValidationError& e) {
        fail(src, *k, e.what());
      }
    }
    if (const auto* tg = t.get("target")) {
      if (const auto v = tg->value<std::string>())
        spec.target = {*v};
      else
        spec.target = strings(src, *tg, "statistic.target");
      for (const auto& name : spec.target)
        if (cfg.schema.factor_index(name) < 0) fail(src, *tg, "target '" + name + "' is not a declared factor");
    }
    if (const auto* on = t.get("options")) {
      auto& o = spec.options;
      for (const auto& [key, node] : ordered(as_table(src, *on, "statistic.options"))) {
        if (key == "I") o.I = number<std::size_t>(src, *node, key);
        else if (key == "lambda") o.lambda = number<double>(src, *node, key);
        else if (key == "cv_folds") o.cv_folds = number<std::size_t>(src, *node, key);
        else if (key == "grid_size") o.grid_size = number<std::size_t>(src, *node, key);
        else if (key == "grid_ratio") o.grid_ratio = number<double>(src, *node, key);
        else if (key == "cv_per_resample") o.cv_per_resample = boolean(src, *node, key);
        else if (key == "include_v") o.include_v = boolean(src, *node, key);
        else if (key == "cv_seed") o.cv_seed = number<std::uint64_t>(src, *node, key);
        else if (key == "tol") o.tol = number<double>(src, *node, key);
        else if (key == "screen_variable") {
          const auto v = node->value<std::string>();
          if (!v) fail(src, *node, "screen_variable must be a string");
          o.screen_variable = *v;
        } else if (key == "tested_levels") {
          o.tested_levels = strings(src, *node, key);
        } else if (key == "extra_main") {
          const auto* a = node->as_array();
          if (!a) fail(src, *node, "extra_main must be an array of [factor, factor] pairs");
          for (const auto& e : *a) {
            const auto pr = strings(src, e, "extra_main entry");
            if (pr.size() != 2) fail(src, e, "extra_main entries name two factors");
            o.extra_main.emplace_back(pr[0], pr[1]);
          }
        } else {
          fail(src, *node, "unknown statistic option '" + key + "'");
        }
      }
    }
    cfg.statistic = std::move(spec);
  }
  if (const auto* c = root.get("coarsen")) cfg.coarsening = coarsening_from(src, as_table(src, *c, "coarsen"), cfg.schema);
  if (const auto* p = root.get("plan")) {
    const auto& t = as_table(src, *p, "plan");
    if (const auto* b = t.get("B")) cfg.plan.B = number<std::size_t>(src, *b, "B");
    if (const auto* s = t.get("seed")) {
      cfg.plan.master_seed = number<std::uint64_t>(src, *s, "seed");
      cfg.has_seed = true;
    }
    if (const auto* w = t.get("workers")) cfg.plan.workers = number<std::size_t>(src, *w, "workers");
    if (cfg.plan.B < 1) fail(src, *p, "B must be at least 1");
    if (cfg.plan.workers < 1) fail(src, *p, "workers must be at least 1");
  }
  return cfg;
}

StudyConfig load_config(const std::string& path) { return parse_config(read_file(path), path); }

CoarseningSpec parse_coarsening(const std::string& text, const Schema& schema, const std::string& source) {
  const toml::table root = parse_text(text, source);
  const auto* c = root.get("coarsen");
  if (!c) throw ValidationError(source + ": no [coarsen] table");
  return coarsening_from(source, as_table(source, *c, "coarsen"), schema);
}

CoarseningSpec load_coarsening(const std::string& path, const Schema& schema) {
  return parse_coarsening(read_file(path), schema, path);
}

static toml::array str_array(const std::vector<std::string>& v) {
  toml::array a;
  for (const auto& s : v) a.push_back(s);
  return a;
}

static std::vector<std::string> labels(const FactorSpec& f, const std::vector<int>& ids) {
  std::vector<std::string> out;
  for (int k : ids) out.push_back(f.levels[static_cast<std::size_t>(k)]);
  return out;
}

// Sections are written by hand so factor order survives (toml++ sorts keys).
std::string to_toml(const StudyConfig& cfg) {
  std::ostringstream os;
  auto kv = [&](const std::string& key, auto&& value) {
    toml::table t;
    t.insert(key, std::forward<decltype(value)>(value));
    os << toml::toml_formatter(t) << "\n";
  };
  auto quoted = [](const std::string& k) {
    std::ostringstream q;
    q << toml::table{{"x", k}};
    std::string s = q.str();
    return s.substr(s.find('=') + 2);
  };
  for (std::size_t f = 0; f < cfg.schema.factors.size(); ++f) {
    const auto& fs = cfg.schema.factors[f];
    os << "[factor." << quoted(fs.name) << "]\n";
    kv("levels", str_array(fs.levels));
    toml::array p;
    for (double v : cfg.scheme.marginals[f]) p.push_back(v);
    kv("probs", p);
    os << "\n";
  }
  for (const auto& c : cfg.schema.covariates) {
    os << "[covariate." << quoted(c.name) << "]\n";
    if (c.numeric)
      kv("numeric", true);
    else
      kv("levels", str_array(c.levels));
    os << "\n";
  }
  for (const auto& r : cfg.scheme.restrictions) {
    const auto& a = cfg.schema.factors[r.if_factor];
    const auto& b = cfg.schema.factors[r.then_factor];
    os << "[[restriction]]\n";
    kv("if_factor", a.name);
    kv("if_levels", str_array(labels(a, r.if_levels)));
    kv("then_factor", b.name);
    kv("allowed_levels", str_array(labels(b, r.allowed)));
    os << "\n";
  }
  if (cfg.statistic) {
    const auto& s = *cfg.statistic;
    os << "[statistic]\n";
    kv("kind", std::string(to_string(s.kind)));
    kv("target", str_array(s.target));
    os << "\n[statistic.options]\n";
    const auto& o = s.options;
    kv("I", static_cast<std::int64_t>(o.I));
    kv("lambda", o.lambda);
    kv("cv_folds", static_cast<std::int64_t>(o.cv_folds));
    kv("grid_size", static_cast<std::int64_t>(o.grid_size));
    kv("grid_ratio", o.grid_ratio);
    kv("cv_per_resample", o.cv_per_resample);
    kv("include_v", o.include_v);
    kv("cv_seed", static_cast<std::int64_t>(o.cv_seed));
    kv("tol", o.tol);
    if (!o.screen_variable.empty()) kv("screen_variable", o.screen_variable);
    if (!o.tested_levels.empty()) kv("tested_levels", str_array(o.tested_levels));
    toml::array em;
    for (const auto& [a, b] : o.extra_main) em.push_back(str_array({a, b}));
    kv("extra_main", em);
    os << "\n";
  }
  if (cfg.coarsening) {
    const auto& c = *cfg.coarsening;
    os << "[coarsen]\n";
    kv("factors", str_array(c.source_factors));
    kv("name", c.name);
    if (!c.tested_group.empty()) kv("tested_group", c.tested_group);
    os << "\n";
    for (const auto& [from, to] : c.c_map) {
      os << "[[coarsen.entry]]\n";
      kv("from", str_array(from));
      kv("to", to);
      os << "\n";
    }
    std::map<std::string, std::vector<std::string>> groups;
    for (const auto& l : c.coarse_levels()) groups[c.h_map.at(l)].push_back(l);
    os << "[coarsen.groups]\n";
    for (const auto& [id, members] : groups) os << quoted(id) << " = " << toml::array(str_array(members)) << "\n";
    os << "\n";
  }
  os << "[plan]\n";
  kv("B", static_cast<std::int64_t>(cfg.plan.B));
  if (cfg.has_seed) kv("seed", static_cast<std::int64_t>(cfg.plan.master_seed));
  kv("workers", static_cast<std::int64_t>(cfg.plan.workers));
  return os.str();
}

bool same_config(const StudyConfig& a, const StudyConfig& b) {
  auto same_factor = [](const FactorSpec& x, const FactorSpec& y) {
    return x.name == y.name && x.levels == y.levels && x.numeric == y.numeric && x.kind == y.kind;
  };
  auto same_factors = [&](const std::vector<FactorSpec>& x, const std::vector<FactorSpec>& y) {
    return x.size() == y.size() && std::equal(x.begin(), x.end(), y.begin(), same_factor);
  };
  if (!same_factors(a.schema.factors, b.schema.factors) || !same_factors(a.schema.covariates, b.schema.covariates))
    return false;
  if (a.scheme.marginals != b.scheme.marginals) return false;
  if (a.scheme.restrictions.size() != b.scheme.restrictions.size()) return false;
  for (std::size_t i = 0; i < a.scheme.restrictions.size(); ++i) {
    const auto &x = a.scheme.restrictions[i], &y = b.scheme.restrictions[i];
    if (x.if_factor != y.if_factor || x.then_factor != y.then_factor || x.if_levels != y.if_levels ||
        x.allowed != y.allowed)
      return false;
  }
  if (a.statistic.has_value() != b.statistic.has_value()) return false;
  if (a.statistic && (a.statistic->kind != b.statistic->kind || a.statistic->target != b.statistic->target ||
                      !(a.statistic->options == b.statistic->options)))
    return false;
  if (a.coarsening.has_value() != b.coarsening.has_value()) return false;
  if (a.coarsening) {
    const auto &x = *a.coarsening, &y = *b.coarsening;
    if (x.source_factors != y.source_factors || x.name != y.name || x.c_map != y.c_map || x.h_map != y.h_map ||
        x.tested_group != y.tested_group)
      return false;
  }
  return a.plan.B == b.plan.B && a.plan.workers == b.plan.workers && a.has_seed == b.has_seed &&
         (!a.has_seed || a.plan.master_seed == b.plan.master_seed);
}

}  // namespace crt
