#include "crt/encoding.hpp"

#include <cmath>

#include "crt/errors.hpp"
#include "crt/randomization.hpp"

namespace crt {

DesignMatrix::DesignMatrix(std::size_t rows, std::vector<ColumnGroup> groups)
    : rows_(rows), groups_(std::move(groups)) {
  for (auto& g : groups_) {
    g.offset = cols_;
    cols_ += g.width();
  }
  lev_.assign(rows_ * groups_.size(), 0);
  val_.assign(rows_ * groups_.size(), 0.0);
  clusters.assign(rows_, 0);
}

double DesignMatrix::entry(std::size_t r, std::size_t col) const {
  const std::size_t g = group_of_column(col);
  if (groups_[g].numeric) return value(r, g);
  return level(r, g) == static_cast<int>(col - groups_[g].offset) ? 1.0 : 0.0;
}

std::size_t DesignMatrix::group_of_column(std::size_t col) const {
  for (std::size_t g = 0; g < groups_.size(); ++g)
    if (col < groups_[g].offset + groups_[g].width()) return g;
  throw std::out_of_range("column index");
}

std::string DesignMatrix::column_label(std::size_t col) const {
  const auto& g = groups_[group_of_column(col)];
  if (g.numeric) return g.name;
  return g.name + "=" + g.labels[col - g.offset];
}

Eigen::MatrixXd DesignMatrix::dense() const {
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      if (groups_[g].numeric)
        X(r, groups_[g].offset) = value(r, g);
      else
        X(r, groups_[g].offset + level(r, g)) = 1.0;
    }
  return X;
}

int DesignMatrix::find_group(GroupRole role, Side side, int source) const {
  for (std::size_t g = 0; g < groups_.size(); ++g)
    if (groups_[g].role == role && groups_[g].side == side && groups_[g].source == source)
      return static_cast<int>(g);
  return -1;
}

DesignMatrix DesignMatrix::subset(const std::vector<std::size_t>& rows) const {
  DesignMatrix out(rows.size(), groups_);
  const std::size_t G = groups_.size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(&lev_[rows[i] * G], G, &out.lev_[i * G]);
    std::copy_n(&val_[rows[i] * G], G, &out.val_[i * G]);
    out.clusters[i] = clusters[rows[i]];
  }
  out.symmetry_augmented = symmetry_augmented;
  out.carryover_augmented = carryover_augmented;
  return out;
}

DesignMatrix DesignMatrix::concat(const DesignMatrix& a, const DesignMatrix& b) {
  if (a.groups_.size() != b.groups_.size()) throw std::invalid_argument("concat: group mismatch");
  DesignMatrix out(a.rows_ + b.rows_, a.groups_);
  std::copy(a.lev_.begin(), a.lev_.end(), out.lev_.begin());
  std::copy(b.lev_.begin(), b.lev_.end(), out.lev_.begin() + static_cast<std::ptrdiff_t>(a.lev_.size()));
  std::copy(a.val_.begin(), a.val_.end(), out.val_.begin());
  std::copy(b.val_.begin(), b.val_.end(), out.val_.begin() + static_cast<std::ptrdiff_t>(a.val_.size()));
  std::copy(a.clusters.begin(), a.clusters.end(), out.clusters.begin());
  std::copy(b.clusters.begin(), b.clusters.end(), out.clusters.begin() + static_cast<std::ptrdiff_t>(a.rows_));
  return out;
}

// ---------------------------------------------------------------------------

static const char* side_suffix(Side s) { return s == Side::left ? "_L" : s == Side::right ? "_R" : ""; }

static std::vector<ColumnGroup> profile_groups(const ConjointDataset& ds, const DesignOptions& opt,
                                               GroupRole role, const std::string& prefix) {
  std::vector<ColumnGroup> gs;
  for (std::size_t f = 0; f < ds.p(); ++f)
    for (Side s : {Side::left, Side::right}) {
      ColumnGroup g;
      g.name = prefix + ds.factors[f].name + side_suffix(s);
      g.role = role;
      g.side = s;
      g.source = static_cast<int>(f);
      g.levels = ds.factors[f].size();
      g.labels = ds.factors[f].levels;
      gs.push_back(std::move(g));
    }
  for (std::size_t e = 0; e < opt.extra_products.size(); ++e) {
    const auto [f1, f2] = opt.extra_products[e];
    if (f1 >= ds.p() || f2 >= ds.p() || f1 == f2) throw ValidationError("bad extra main-effect term");
    for (Side s : {Side::left, Side::right}) {
      ColumnGroup g;
      g.name = ds.factors[f1].name + ":" + ds.factors[f2].name + side_suffix(s);
      g.role = GroupRole::extra;
      g.side = s;
      g.source = static_cast<int>(e);
      g.pair_first = static_cast<int>(f1);
      g.pair_second = static_cast<int>(f2);
      g.levels = ds.factors[f1].size() * ds.factors[f2].size();
      for (const auto& a : ds.factors[f1].levels)
        for (const auto& b : ds.factors[f2].levels) g.labels.push_back(a + ":" + b);
      gs.push_back(std::move(g));
    }
  }
  return gs;
}

static void standardize_numeric(DesignMatrix& dm) {
  for (std::size_t g = 0; g < dm.num_groups(); ++g) {
    if (!dm.group(g).numeric || dm.rows() == 0) continue;
    double mean = 0;
    for (std::size_t r = 0; r < dm.rows(); ++r) mean += dm.value(r, g);
    mean /= static_cast<double>(dm.rows());
    double var = 0;
    for (std::size_t r = 0; r < dm.rows(); ++r) var += (dm.value(r, g) - mean) * (dm.value(r, g) - mean);
    const double sd = std::sqrt(var / static_cast<double>(dm.rows()));
    for (std::size_t r = 0; r < dm.rows(); ++r) dm.set_value(r, g, sd > 0 ? (dm.value(r, g) - mean) / sd : 0.0);
  }
}

DesignMatrix build_design(const ConjointDataset& ds, const DesignOptions& opt) {
  auto gs = profile_groups(ds, opt, GroupRole::profile, "");
  if (opt.include_v) {
    for (std::size_t m = 0; m < ds.covariates.size(); ++m) {
      ColumnGroup g;
      g.name = ds.covariates[m].name;
      g.role = GroupRole::covariate;
      g.source = static_cast<int>(m);
      g.numeric = ds.covariates[m].numeric;
      g.levels = g.numeric ? 1 : ds.covariates[m].size();
      g.labels = ds.covariates[m].levels;
      gs.push_back(std::move(g));
    }
  }
  if (opt.include_task) {
    ColumnGroup g;
    g.name = "task";
    g.role = GroupRole::task_index;
    g.numeric = true;
    gs.push_back(std::move(g));
  }
  const std::size_t N = ds.rows();
  DesignMatrix dm(N, gs);
  const std::size_t p = ds.p();
  for (std::size_t r = 0; r < N; ++r) {
    dm.clusters[r] = static_cast<int>(ds.respondent(r));
    std::size_t g = 0;
    for (std::size_t f = 0; f < p; ++f) {
      dm.set_level(r, g++, ds.left(r, f));
      dm.set_level(r, g++, ds.right(r, f));
    }
    for (const auto& [f1, f2] : opt.extra_products) {
      const int K2 = static_cast<int>(ds.factors[f2].size());
      dm.set_level(r, g++, ds.left(r, f1) * K2 + ds.left(r, f2));
      dm.set_level(r, g++, ds.right(r, f1) * K2 + ds.right(r, f2));
    }
    if (opt.include_v)
      for (std::size_t m = 0; m < ds.covariates.size(); ++m, ++g) {
        if (ds.covariates[m].numeric)
          dm.set_value(r, g, ds.V(r, m));
        else
          dm.set_level(r, g, static_cast<int>(ds.V(r, m)));
      }
    if (opt.include_task) dm.set_value(r, g++, ds.task[r]);
  }
  standardize_numeric(dm);
  return dm;
}

std::vector<double> response(const ConjointDataset& ds) { return std::vector<double>(ds.y.begin(), ds.y.end()); }

AugmentedDesign build_symmetry_augmented(const ConjointDataset& ds, const DesignOptions& opt) {
  const auto swapped = swap_rows(ds, std::vector<char>(ds.rows(), 1));
  AugmentedDesign out;
  out.dm = DesignMatrix::concat(build_design(ds, opt), build_design(swapped, opt));
  out.dm.symmetry_augmented = true;
  out.y.reserve(2 * ds.rows());
  for (int v : ds.y) out.y.push_back(v);
  for (int v : ds.y) out.y.push_back(1.0 - v);
  return out;
}

AugmentedDesign build_carryover_augmented(const ConjointDataset& ds) {
  if (ds.J < 2) throw ValidationError("carryover test requires J >= 2");
  if (ds.J % 2 != 0) throw ValidationError("carryover design needs an even number of tasks");
  auto gs = profile_groups(ds, {}, GroupRole::lag_profile, "lag.");
  auto cur = profile_groups(ds, {}, GroupRole::profile, "");
  gs.insert(gs.end(), cur.begin(), cur.end());
  const std::size_t pairs = ds.n * ds.J / 2;
  const std::size_t p = ds.p();
  AugmentedDesign out;
  out.dm = DesignMatrix(4 * pairs, gs);
  out.dm.carryover_augmented = true;
  out.y.assign(4 * pairs, 0.0);
  // copy c: (swap lag, swap current, flip response)
  const bool pattern[4][3] = {{false, false, false}, {true, true, true}, {false, true, true}, {true, false, false}};
  for (int c = 0; c < 4; ++c) {
    for (std::size_t k = 0; k < pairs; ++k) {
      const std::size_t cur_row = 2 * k + 1, lag_row = 2 * k;  // J even: pairs never straddle respondents
      const std::size_t r = c * pairs + k;
      const bool sx = pattern[c][0], sz = pattern[c][1];
      for (std::size_t f = 0; f < p; ++f) {
        out.dm.set_level(r, 2 * f, (sx ? ds.right : ds.left)(lag_row, f));
        out.dm.set_level(r, 2 * f + 1, (sx ? ds.left : ds.right)(lag_row, f));
        out.dm.set_level(r, 2 * p + 2 * f, (sz ? ds.right : ds.left)(cur_row, f));
        out.dm.set_level(r, 2 * p + 2 * f + 1, (sz ? ds.left : ds.right)(cur_row, f));
      }
      out.dm.clusters[r] = static_cast<int>(ds.respondent(cur_row));
      const double y = ds.y[cur_row];
      out.y[r] = pattern[c][2] ? 1.0 - y : y;
    }
  }
  return out;
}

}  // namespace crt
