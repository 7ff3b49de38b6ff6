#include "crt/design_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "crt/errors.hpp"

namespace crt {

int FactorSpec::level_index(std::string_view label) const {
  for (std::size_t k = 0; k < levels.size(); ++k)
    if (levels[k] == label) return static_cast<int>(k);
  return -1;
}

void validate_factor(const FactorSpec& f) {
  if (f.name.empty()) throw ValidationError("factor with empty name");
  if (f.numeric) {
    if (f.kind != FactorKind::covariate)
      throw ValidationError("factor '" + f.name + "': numeric flag only allowed on covariates");
    return;
  }
  if (f.kind == FactorKind::profile && f.levels.size() < 2)
    throw ValidationError("factor '" + f.name + "' needs at least 2 levels");
  if (f.levels.empty()) throw ValidationError("covariate '" + f.name + "' has no levels");
  std::set<std::string> seen;
  for (const auto& l : f.levels)
    if (!seen.insert(l).second)
      throw ValidationError("factor '" + f.name + "': duplicate level '" + l + "'");
}

static int find_by_name(const std::vector<FactorSpec>& v, std::string_view name) {
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i].name == name) return static_cast<int>(i);
  return -1;
}

int Schema::factor_index(std::string_view name) const { return find_by_name(factors, name); }
int Schema::covariate_index(std::string_view name) const { return find_by_name(covariates, name); }
int ConjointDataset::factor_index(std::string_view name) const { return find_by_name(factors, name); }
int ConjointDataset::covariate_index(std::string_view name) const {
  return find_by_name(covariates, name);
}

bool ConjointDataset::is_target(std::size_t f) const {
  return std::find(targets.begin(), targets.end(), f) != targets.end();
}

std::vector<std::size_t> ConjointDataset::nontargets() const {
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < factors.size(); ++f)
    if (!is_target(f)) out.push_back(f);
  return out;
}

void validate(const ConjointDataset& ds) {
  for (const auto& f : ds.factors) validate_factor(f);
  for (const auto& c : ds.covariates) validate_factor(c);
  const std::size_t N = ds.rows();
  const auto p = static_cast<Eigen::Index>(ds.factors.size());
  if (ds.J == 0) throw ValidationError("dataset has J = 0");
  if (ds.left.rows() != static_cast<Eigen::Index>(N) || ds.right.rows() != ds.left.rows() ||
      ds.left.cols() != p || ds.right.cols() != p)
    throw ValidationError("profile matrices have wrong shape");
  if (ds.y.size() != N || ds.task.size() != N) throw ValidationError("Y or F has wrong length");
  if (ds.V.rows() != static_cast<Eigen::Index>(N) ||
      ds.V.cols() != static_cast<Eigen::Index>(ds.covariates.size()))
    throw ValidationError("covariate matrix has wrong shape");
  if (ds.targets.empty()) throw ValidationError("no factor of interest selected");
  for (auto t : ds.targets)
    if (t >= ds.factors.size()) throw ValidationError("target index out of range");
  for (std::size_t r = 0; r < N; ++r) {
    for (Eigen::Index f = 0; f < p; ++f) {
      const int K = static_cast<int>(ds.factors[f].size());
      if (ds.left(r, f) < 0 || ds.left(r, f) >= K || ds.right(r, f) < 0 || ds.right(r, f) >= K)
        throw ValidationError("level index out of range for factor '" + ds.factors[f].name + "'");
    }
    if (ds.y[r] != 0 && ds.y[r] != 1) throw ValidationError("non-binary response");
    const std::size_t j = r % ds.J;
    if (j == 0) {
      std::vector<int> t(ds.task.begin() + static_cast<std::ptrdiff_t>(r),
                         ds.task.begin() + static_cast<std::ptrdiff_t>(r + ds.J));
      std::sort(t.begin(), t.end());
      for (std::size_t k = 0; k < ds.J; ++k)
        if (t[k] != static_cast<int>(k + 1)) throw ValidationError("task indices are not 1..J within a respondent");
    }
    if (j > 0 && ds.V.cols() > 0 && (ds.V.row(r) - ds.V.row(r - 1)).cwiseAbs().maxCoeff() > 0)
      throw ValidationError("covariate varies within respondent");
  }
}

std::vector<std::size_t> resolve_targets(const ConjointDataset& ds,
                                         const std::vector<std::string>& names) {
  std::vector<std::size_t> out;
  for (const auto& n : names) {
    const int f = ds.factor_index(n);
    if (f < 0) throw ValidationError("unknown factor '" + n + "'");
    if (std::find(out.begin(), out.end(), static_cast<std::size_t>(f)) == out.end())
      out.push_back(static_cast<std::size_t>(f));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

static std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

static std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

static bool is_missing(const std::string& s) { return s.empty() || s == "NA" || s == "na"; }

namespace {
struct RawRow {
  int task;
  int y;
  std::vector<int> left, right;
  std::vector<double> v;
  std::vector<bool> v_missing;
  std::size_t line;
};
}  // namespace

ConjointDataset parse_dataset(std::istream& in, const Schema& schema, const LoadOptions& opt) {
  for (const auto& f : schema.factors) validate_factor(f);
  for (const auto& c : schema.covariates) validate_factor(c);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty CSV");
  const auto header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  auto need = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw ValidationError("missing column '" + name + "'");
    return it->second;
  };
  const std::size_t c_id = need("respondent_id"), c_task = need("task"), c_y = need("Y");
  const std::size_t p = schema.factors.size(), r = schema.covariates.size();
  std::vector<std::size_t> cl(p), cr(p), cv(r);
  for (std::size_t f = 0; f < p; ++f) {
    cl[f] = need(schema.factors[f].name + "_L");
    cr[f] = need(schema.factors[f].name + "_R");
  }
  for (std::size_t m = 0; m < r; ++m) cv[m] = need(schema.covariates[m].name);

  std::vector<std::string> ids;
  std::vector<std::vector<RawRow>> groups;
  std::unordered_map<std::string, std::size_t> id_pos;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() < header.size())
      throw ValidationError("line " + std::to_string(lineno) + ": too few fields");
    const auto where = " (line " + std::to_string(lineno) + ")";
    RawRow row;
    row.line = lineno;
    try {
      std::size_t used = 0;
      row.task = std::stoi(cells[c_task], &used);
      if (used != cells[c_task].size()) throw std::invalid_argument("task");
    } catch (const std::exception&) {
      throw ValidationError("bad task value '" + cells[c_task] + "'" + where);
    }
    if (cells[c_y] == "1")
      row.y = 1;
    else if (cells[c_y] == "0")
      row.y = 0;
    else
      throw ValidationError("non-binary response '" + cells[c_y] + "'" + where);
    row.left.resize(p);
    row.right.resize(p);
    for (std::size_t f = 0; f < p; ++f) {
      const auto& fs = schema.factors[f];
      row.left[f] = fs.level_index(cells[cl[f]]);
      row.right[f] = fs.level_index(cells[cr[f]]);
      if (row.left[f] < 0)
        throw ValidationError("unknown level '" + cells[cl[f]] + "' for factor '" + fs.name + "'" + where);
      if (row.right[f] < 0)
        throw ValidationError("unknown level '" + cells[cr[f]] + "' for factor '" + fs.name + "'" + where);
    }
    row.v.assign(r, 0.0);
    row.v_missing.assign(r, false);
    for (std::size_t m = 0; m < r; ++m) {
      const auto& cs = schema.covariates[m];
      const auto& cell = cells[cv[m]];
      if (is_missing(cell)) {
        row.v_missing[m] = true;
        continue;
      }
      if (cs.numeric) {
        double x = 0;
        auto res = std::from_chars(cell.data(), cell.data() + cell.size(), x);
        if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(x))
          throw ValidationError("bad numeric value '" + cell + "' for covariate '" + cs.name + "'" + where);
        row.v[m] = x;
      } else {
        const int k = cs.level_index(cell);
        if (k < 0)
          throw ValidationError("unknown level '" + cell + "' for covariate '" + cs.name + "'" + where);
        row.v[m] = k;
      }
    }
    const auto& id = cells[c_id];
    auto it = id_pos.find(id);
    if (it == id_pos.end()) {
      id_pos[id] = groups.size();
      ids.push_back(id);
      groups.emplace_back();
      groups.back().push_back(std::move(row));
    } else {
      if (it->second + 1 != groups.size())
        throw ValidationError("rows of respondent '" + id + "' are not contiguous" + where);
      groups.back().push_back(std::move(row));
    }
  }
  if (groups.empty()) throw ValidationError("CSV has no data rows");

  std::size_t J = 0;
  for (auto& g : groups) {
    std::stable_sort(g.begin(), g.end(), [](const RawRow& a, const RawRow& b) { return a.task < b.task; });
    J = std::max(J, g.size());
  }
  ConjointDataset ds;
  ds.factors = schema.factors;
  ds.covariates = schema.covariates;
  ds.J = J;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    auto& g = groups[i];
    for (std::size_t j = 0; j < g.size(); ++j)
      if (g[j].task != static_cast<int>(j + 1))
        throw ValidationError("respondent '" + ids[i] + "': tasks must be numbered 1..J (line " +
                              std::to_string(g[j].line) + ")");
    if (g.size() != J) {
      if (!opt.allow_ragged)
        throw ValidationError("ragged task counts: respondent '" + ids[i] + "' has " +
                              std::to_string(g.size()) + " tasks, expected " + std::to_string(J));
      ++ds.dropped_respondents;
      continue;
    }
    bool missing = false;
    for (std::size_t m = 0; m < r; ++m) {
      bool any_missing = false;
      for (const auto& row : g) any_missing = any_missing || row.v_missing[m];
      if (any_missing) {
        missing = true;
        continue;
      }
      for (const auto& row : g)
        if (row.v[m] != g.front().v[m])
          throw ValidationError("covariate varies within respondent '" + ids[i] + "' (" +
                                schema.covariates[m].name + ")");
    }
    if (missing) {
      ++ds.dropped_respondents;
      continue;
    }
    keep.push_back(i);
  }
  if (keep.empty()) throw ValidationError("no complete respondents");

  ds.n = keep.size();
  const std::size_t N = ds.n * J;
  ds.left.resize(N, p);
  ds.right.resize(N, p);
  ds.V.resize(N, r);
  ds.y.resize(N);
  ds.task.resize(N);
  std::size_t row = 0;
  for (auto i : keep) {
    ds.respondent_ids.push_back(ids[i]);
    for (const auto& raw : groups[i]) {
      for (std::size_t f = 0; f < p; ++f) {
        ds.left(row, f) = raw.left[f];
        ds.right(row, f) = raw.right[f];
      }
      for (std::size_t m = 0; m < r; ++m) ds.V(row, m) = raw.v[m];
      ds.y[row] = raw.y;
      ds.task[row] = raw.task;
      ++row;
    }
  }
  ds.v_center.assign(r, 0.0);
  ds.v_scale.assign(r, 1.0);
  for (std::size_t m = 0; m < r; ++m) {
    if (!ds.covariates[m].numeric) continue;
    const double mean = ds.V.col(m).mean();
    const double sd = std::sqrt((ds.V.col(m).array() - mean).square().mean());
    ds.v_center[m] = mean;
    ds.v_scale[m] = sd > 0 ? sd : 1.0;
    ds.V.col(m) = (ds.V.col(m).array() - mean) / ds.v_scale[m];
  }
  if (opt.targets.empty()) {
    ds.targets = {0};
  } else {
    ds.targets = resolve_targets(ds, opt.targets);
  }
  validate(ds);
  return ds;
}

ConjointDataset load_dataset(const std::string& csv_path, const Schema& schema, const LoadOptions& opt) {
  std::ifstream in(csv_path);
  if (!in) throw ValidationError("cannot open data file '" + csv_path + "'");
  return parse_dataset(in, schema, opt);
}

void save_dataset(const ConjointDataset& ds, std::ostream& out) {
  out << "respondent_id,task,Y";
  for (const auto& f : ds.factors) out << ',' << csv_field(f.name + "_L") << ',' << csv_field(f.name + "_R");
  for (const auto& c : ds.covariates) out << ',' << csv_field(c.name);
  out << '\n';
  char buf[64];
  for (std::size_t row = 0; row < ds.rows(); ++row) {
    const std::size_t i = ds.respondent(row);
    out << csv_field(i < ds.respondent_ids.size() ? ds.respondent_ids[i] : std::to_string(i + 1));
    out << ',' << ds.task[row] << ',' << ds.y[row];
    for (std::size_t f = 0; f < ds.factors.size(); ++f)
      out << ',' << csv_field(ds.factors[f].levels[ds.left(row, f)]) << ','
          << csv_field(ds.factors[f].levels[ds.right(row, f)]);
    for (std::size_t m = 0; m < ds.covariates.size(); ++m) {
      const auto& c = ds.covariates[m];
      if (c.numeric) {
        const double raw = ds.V(row, m) * ds.v_scale[m] + ds.v_center[m];
        std::snprintf(buf, sizeof buf, "%.17g", raw);
        out << ',' << buf;
      } else {
        out << ',' << csv_field(c.levels[static_cast<std::size_t>(ds.V(row, m))]);
      }
    }
    out << '\n';
  }
}

void save_dataset(const ConjointDataset& ds, const std::string& csv_path) {
  std::ofstream out(csv_path);
  if (!out) throw ValidationError("cannot write '" + csv_path + "'");
  save_dataset(ds, out);
}

// ---------------------------------------------------------------------------
// Coarsening

std::vector<std::string> CoarseningSpec::coarse_levels() const {
  std::vector<std::string> out;
  for (const auto& [from, to] : c_map)
    if (std::find(out.begin(), out.end(), to) == out.end()) out.push_back(to);
  return out;
}

std::vector<std::string> CoarseningSpec::group_members() const {
  std::vector<std::string> out;
  for (const auto& l : coarse_levels()) {
    auto it = h_map.find(l);
    if (it != h_map.end() && it->second == tested_group) out.push_back(l);
  }
  return out;
}

CoarseningSpec identity_coarsening(const FactorSpec& f, const std::string& tested_level) {
  CoarseningSpec s;
  s.source_factors = {f.name};
  s.name = f.name;
  for (const auto& l : f.levels) {
    s.c_map.push_back({{l}, l});
    s.h_map[l] = l;
  }
  s.tested_group = tested_level;
  return s;
}

void validate_coarsening(const CoarseningSpec& spec) {
  if (spec.source_factors.empty()) throw ValidationError("coarsening has no source factors");
  if (spec.name.empty()) throw ValidationError("coarsening has no name");
  std::set<std::vector<std::string>> seen;
  for (const auto& [from, to] : spec.c_map) {
    if (from.size() != spec.source_factors.size())
      throw ValidationError("coarsening entry arity differs from source factor count");
    if (!seen.insert(from).second) throw ValidationError("coarsening maps a level tuple twice");
  }
  for (const auto& l : spec.coarse_levels())
    if (!spec.h_map.count(l)) throw ValidationError("group map missing coarse level '" + l + "'");
  if (spec.group_members().empty())
    throw ValidationError("tested group '" + spec.tested_group + "' has no levels");
}

std::size_t ResolvedCoarsening::tuple_index(const LevelMatrix& m, std::size_t row) const {
  std::size_t idx = 0;
  for (std::size_t s = 0; s < sources.size(); ++s)
    idx = idx * radix[s] + static_cast<std::size_t>(m(row, sources[s]));
  return idx;
}

ResolvedCoarsening resolve_coarsening(const ConjointDataset& ds, const CoarseningSpec& spec) {
  validate_coarsening(spec);
  ResolvedCoarsening rc;
  std::size_t total = 1;
  for (const auto& name : spec.source_factors) {
    const int f = ds.factor_index(name);
    if (f < 0) throw ValidationError("coarsening references unknown factor '" + name + "'");
    rc.sources.push_back(static_cast<std::size_t>(f));
    rc.radix.push_back(ds.factors[f].size());
    total *= ds.factors[f].size();
  }
  rc.levels = spec.coarse_levels();
  rc.image.assign(total, -1);
  for (const auto& [from, to] : spec.c_map) {
    std::size_t idx = 0;
    for (std::size_t s = 0; s < from.size(); ++s) {
      const int k = ds.factors[rc.sources[s]].level_index(from[s]);
      if (k < 0)
        throw ValidationError("coarsening: unknown level '" + from[s] + "' of factor '" +
                              spec.source_factors[s] + "'");
      idx = idx * rc.radix[s] + static_cast<std::size_t>(k);
    }
    rc.image[idx] = static_cast<int>(std::find(rc.levels.begin(), rc.levels.end(), to) - rc.levels.begin());
  }
  for (const auto& l : rc.levels) rc.in_group.push_back(spec.h_map.at(l) == spec.tested_group);
  rc.position = *std::min_element(rc.sources.begin(), rc.sources.end());
  return rc;
}

ConjointDataset apply_coarsening(const ConjointDataset& ds, const CoarseningSpec& spec) {
  const auto rc = resolve_coarsening(ds, spec);
  const std::size_t N = ds.rows();
  std::vector<int> cl(N), cr(N);
  bool any_group = false;
  for (std::size_t r = 0; r < N; ++r) {
    cl[r] = rc.image[rc.tuple_index(ds.left, r)];
    cr[r] = rc.image[rc.tuple_index(ds.right, r)];
    if (cl[r] < 0 || cr[r] < 0) throw ValidationError("coarsening: level tuple absent from map");
    any_group = any_group || rc.in_group[cl[r]] || rc.in_group[cr[r]];
  }
  if (!any_group) throw ValidationError("tested group '" + spec.tested_group + "' is empty in data");

  // Keep factor order; the coarse factor takes the slot of the first source.
  std::vector<std::size_t> kept;
  ConjointDataset out;
  std::vector<std::size_t> new_index(ds.factors.size(), SIZE_MAX);
  for (std::size_t f = 0; f < ds.factors.size(); ++f) {
    const bool is_source = std::find(rc.sources.begin(), rc.sources.end(), f) != rc.sources.end();
    if (f == rc.position) {
      FactorSpec cf;
      cf.name = spec.name;
      cf.levels = rc.levels;
      new_index[f] = out.factors.size();
      out.factors.push_back(cf);
      kept.push_back(SIZE_MAX);
    } else if (!is_source) {
      new_index[f] = out.factors.size();
      out.factors.push_back(ds.factors[f]);
      kept.push_back(f);
    }
  }
  const std::size_t coarse = new_index[rc.position];
  bool target_hit = false;
  for (auto t : ds.targets)
    target_hit = target_hit || std::find(rc.sources.begin(), rc.sources.end(), t) != rc.sources.end();
  if (target_hit) out.targets.push_back(coarse);
  for (auto t : ds.targets)
    if (new_index[t] != SIZE_MAX && new_index[t] != coarse) out.targets.push_back(new_index[t]);
  if (out.targets.empty()) out.targets.push_back(coarse);

  out.covariates = ds.covariates;
  out.n = ds.n;
  out.J = ds.J;
  out.left.resize(N, out.factors.size());
  out.right.resize(N, out.factors.size());
  for (std::size_t r = 0; r < N; ++r) {
    for (std::size_t c = 0; c < kept.size(); ++c) {
      if (kept[c] == SIZE_MAX) {
        out.left(r, c) = cl[r];
        out.right(r, c) = cr[r];
      } else {
        out.left(r, c) = ds.left(r, kept[c]);
        out.right(r, c) = ds.right(r, kept[c]);
      }
    }
  }
  out.V = ds.V;
  out.v_center = ds.v_center;
  out.v_scale = ds.v_scale;
  out.y = ds.y;
  out.task = ds.task;
  out.respondent_ids = ds.respondent_ids;
  out.dropped_respondents = ds.dropped_respondents;
  return out;
}

ConjointDataset make_dataset(std::vector<FactorSpec> factors, std::size_t n, std::size_t J,
                             LevelMatrix left, LevelMatrix right, std::vector<int> y,
                             std::vector<std::size_t> targets) {
  ConjointDataset ds;
  ds.factors = std::move(factors);
  ds.n = n;
  ds.J = J;
  ds.left = std::move(left);
  ds.right = std::move(right);
  ds.y = std::move(y);
  ds.targets = std::move(targets);
  ds.V.resize(static_cast<Eigen::Index>(n * J), 0);
  ds.task.resize(n * J);
  for (std::size_t r = 0; r < n * J; ++r) ds.task[r] = static_cast<int>(r % J + 1);
  for (std::size_t i = 0; i < n; ++i) ds.respondent_ids.push_back(std::to_string(i + 1));
  validate(ds);
  return ds;
}

}  // namespace crt
