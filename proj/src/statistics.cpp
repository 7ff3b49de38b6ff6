#include "crt/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "crt/encoding.hpp"
#include "crt/errors.hpp"

namespace crt {

const char* to_string(StatisticKind k) {
  switch (k) {
    case StatisticKind::hiernet_main: return "hiernet_main";
    case StatisticKind::hiernet_respondent: return "hiernet_respondent";
    case StatisticKind::hiernet_coarsened: return "hiernet_coarsened";
    case StatisticKind::hiernet_unconstrained: return "hiernet_unconstrained";
    case StatisticKind::order: return "order";
    case StatisticKind::carryover: return "carryover";
    case StatisticKind::fatigue: return "fatigue";
    case StatisticKind::dicrt: return "dicrt";
    case StatisticKind::lasso_main: return "lasso_main";
    case StatisticKind::interaction_screen: return "interaction_screen";
  }
  return "?";
}

StatisticKind statistic_kind_from_string(const std::string& s) {
  static const std::map<std::string, StatisticKind> m = {
      {"hiernet", StatisticKind::hiernet_main},
      {"hiernet_main", StatisticKind::hiernet_main},
      {"hiernet_respondent", StatisticKind::hiernet_respondent},
      {"hiernet_coarsened", StatisticKind::hiernet_coarsened},
      {"hiernet_unconstrained", StatisticKind::hiernet_unconstrained},
      {"order", StatisticKind::order},
      {"carryover", StatisticKind::carryover},
      {"fatigue", StatisticKind::fatigue},
      {"dicrt", StatisticKind::dicrt},
      {"lasso_main", StatisticKind::lasso_main},
      {"interaction_screen", StatisticKind::interaction_screen},
  };
  const auto it = m.find(s);
  if (it == m.end()) throw ValidationError("unknown statistic '" + s + "'");
  return it->second;
}

ResampleKind required_resample(StatisticKind k) {
  switch (k) {
    case StatisticKind::hiernet_coarsened: return ResampleKind::coarsened;
    case StatisticKind::order: return ResampleKind::order;
    case StatisticKind::carryover: return ResampleKind::carryover;
    case StatisticKind::fatigue: return ResampleKind::fatigue;
    default: return ResampleKind::main;
  }
}

double demeaned_sum_sq(const std::vector<double>& values, const std::vector<int>& keys) {
  std::map<int, std::pair<double, double>> acc;  // key -> (sum, count)
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto& a = acc[keys[i]];
    a.first += values[i];
    a.second += 1;
  }
  double s = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto& a = acc[keys[i]];
    const double d = values[i] - a.first / a.second;
    s += d * d;
  }
  return s;
}

double demeaned_sum_sq(const std::vector<double>& values) {
  return demeaned_sum_sq(values, std::vector<int>(values.size(), 0));
}

namespace {

double th(const HierNetFit& fit, std::size_t a, std::size_t b) {
  return fit.theta(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
}

// A target column group with each level split into (target level k, slice s).
// Extra product groups a:b contribute one slice per level of the partner.
struct Block {
  std::size_t g = 0;
  std::vector<int> k_of, s_of;
};

std::vector<Block> target_blocks(const HierNetFit& fit, std::size_t f, Side side) {
  const int g = fit.find_group(GroupRole::profile, side, static_cast<int>(f));
  if (g < 0) throw ValidationError("target factor absent from fit");
  std::vector<Block> out;
  Block b;
  b.g = static_cast<std::size_t>(g);
  for (std::size_t l = 0; l < fit.groups[b.g].levels; ++l) {
    b.k_of.push_back(static_cast<int>(l));
    b.s_of.push_back(0);
  }
  out.push_back(std::move(b));
  for (std::size_t h = 0; h < fit.groups.size(); ++h) {
    const auto& grp = fit.groups[h];
    if (grp.role != GroupRole::extra || grp.side != side) continue;
    if (grp.pair_first != static_cast<int>(f) && grp.pair_second != static_cast<int>(f)) continue;
    const int g2 = fit.find_group(GroupRole::profile, side, grp.pair_second);
    if (g2 < 0) throw ValidationError("extra term factor absent from fit");
    const int K2 = static_cast<int>(fit.groups[static_cast<std::size_t>(g2)].levels);
    Block e;
    e.g = h;
    for (int l = 0; l < static_cast<int>(grp.levels); ++l) {
      const int a = l / K2, c = l % K2;
      const bool first = grp.pair_first == static_cast<int>(f);
      e.k_of.push_back(first ? a : c);
      e.s_of.push_back(first ? c : a);
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<char> level_filter(const HierNetFit& fit, const TargetLevels& t, Side side) {
  const int g = fit.find_group(GroupRole::profile, side, static_cast<int>(t.factor));
  if (g < 0) throw ValidationError("target factor absent from fit");
  const std::size_t K = fit.groups[static_cast<std::size_t>(g)].levels;
  std::vector<char> in(K, t.levels.empty() ? 1 : 0);
  for (int k : t.levels) {
    if (k < 0 || static_cast<std::size_t>(k) >= K) throw ValidationError("tested level out of range");
    in[static_cast<std::size_t>(k)] = 1;
  }
  return in;
}

double block_terms(const HierNetFit& fit, const TargetLevels& t, Side side) {
  const auto in = level_filter(fit, t, side);
  double total = 0;
  for (const auto& B : target_blocks(fit, t.factor, side)) {
    const std::size_t off = fit.groups[B.g].offset;
    std::vector<double> v;
    std::vector<int> key;
    for (std::size_t l = 0; l < B.k_of.size(); ++l) {
      if (!in[static_cast<std::size_t>(B.k_of[l])]) continue;
      v.push_back(fit.main(off + l));
      key.push_back(B.s_of[l]);
    }
    total += demeaned_sum_sq(v, key);
    for (std::size_t h = 0; h < fit.groups.size(); ++h) {
      const auto& gh = fit.groups[h];
      if (h == B.g) continue;
      if (gh.role != GroupRole::profile && gh.role != GroupRole::extra && gh.role != GroupRole::covariate) continue;
      const int W = static_cast<int>(gh.width());
      v.clear();
      key.clear();
      for (std::size_t l = 0; l < B.k_of.size(); ++l) {
        if (!in[static_cast<std::size_t>(B.k_of[l])]) continue;
        for (int kp = 0; kp < W; ++kp) {
          v.push_back(th(fit, off + l, gh.offset + static_cast<std::size_t>(kp)));
          key.push_back(B.s_of[l] * W + kp);
        }
      }
      total += demeaned_sum_sq(v, key);
    }
  }
  return total;
}

bool has_role(const HierNetFit& fit, GroupRole r) {
  return std::any_of(fit.groups.begin(), fit.groups.end(), [&](const ColumnGroup& g) { return g.role == r; });
}

}  // namespace

double t_hiernet(const HierNetFit& fit, const std::vector<TargetLevels>& targets) {
  if (targets.empty()) throw ValidationError("no target factor");
  double s = 0;
  for (const auto& t : targets) s += block_terms(fit, t, Side::left);
  return s;
}

double t_hiernet_respondent(const HierNetFit& fit, const std::vector<TargetLevels>& targets) {
  if (!has_role(fit, GroupRole::covariate)) throw ValidationError("respondent statistic needs covariates in the fit");
  return t_hiernet(fit, targets);
}

double t_hiernet_coarsened(const HierNetFit& fit, std::size_t factor, const std::vector<int>& group_levels) {
  if (group_levels.empty()) throw ValidationError("tested_group is empty");
  return t_hiernet(fit, {TargetLevels{factor, group_levels}});
}

double t_hiernet_unconstrained(const HierNetFit& fit, const std::vector<TargetLevels>& targets) {
  if (targets.empty()) throw ValidationError("no target factor");
  double s = 0;
  for (const auto& t : targets) s += block_terms(fit, t, Side::left) + block_terms(fit, t, Side::right);
  return s;
}

double t_order(const HierNetFit& fit) {
  if (fit.symmetry_augmented) throw ValidationError("order statistic needs a fit on the original (non-augmented) design");
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (left group, right group)
  for (std::size_t g = 0; g < fit.groups.size(); ++g) {
    const auto& G = fit.groups[g];
    if ((G.role != GroupRole::profile && G.role != GroupRole::extra) || G.side != Side::left) continue;
    const int r = fit.find_group(G.role, Side::right, G.source);
    if (r >= 0) pairs.emplace_back(g, static_cast<std::size_t>(r));
  }
  std::vector<std::size_t> covs;
  for (std::size_t g = 0; g < fit.groups.size(); ++g)
    if (fit.groups[g].role == GroupRole::covariate) covs.push_back(g);
  double s = 0;
  for (const auto& [aL, aR] : pairs) {
    const std::size_t oL = fit.groups[aL].offset, oR = fit.groups[aR].offset, K = fit.groups[aL].width();
    for (std::size_t k = 0; k < K; ++k) s += std::pow(fit.main(oL + k) + fit.main(oR + k), 2);
    for (const auto& [bL, bR] : pairs) {
      if (bL == aL) continue;
      const std::size_t pL = fit.groups[bL].offset, pR = fit.groups[bR].offset, K2 = fit.groups[bL].width();
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t kp = 0; kp < K2; ++kp) {
          s += std::pow(th(fit, oL + k, pL + kp) + th(fit, oR + k, pR + kp), 2);
          s += std::pow(th(fit, oL + k, pR + kp) + th(fit, oR + k, pL + kp), 2);
        }
    }
    for (std::size_t c : covs) {
      const std::size_t oc = fit.groups[c].offset, W = fit.groups[c].width();
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t w = 0; w < W; ++w) s += std::pow(th(fit, oL + k, oc + w) + th(fit, oR + k, oc + w), 2);
    }
  }
  return s;
}

double t_carryover(const HierNetFit& fit) {
  if (!fit.carryover_augmented) throw ValidationError("carryover statistic needs the lagged design");
  double s = 0;
  for (const auto& a : fit.groups) {
    if (a.role != GroupRole::lag_profile || a.side != Side::left) continue;
    for (const auto& b : fit.groups) {
      if (b.role != GroupRole::profile || b.side != Side::left) continue;
      for (std::size_t k = 0; k < a.width(); ++k)
        for (std::size_t kp = 0; kp < b.width(); ++kp) s += std::pow(th(fit, a.offset + k, b.offset + kp), 2);
    }
  }
  return s;
}

double t_fatigue(const HierNetFit& fit) {
  const auto it = std::find_if(fit.groups.begin(), fit.groups.end(),
                               [](const ColumnGroup& g) { return g.role == GroupRole::task_index; });
  if (it == fit.groups.end()) throw ValidationError("fatigue statistic needs the task-index column");
  double s = 0;
  for (const auto& b : fit.groups) {
    if ((b.role != GroupRole::profile && b.role != GroupRole::extra) || b.side != Side::left) continue;
    for (std::size_t k = 0; k < b.width(); ++k) s += std::pow(th(fit, it->offset, b.offset + k), 2);
  }
  return s;
}

double t_dicrt(const std::vector<double>& beta, const std::vector<std::vector<double>>& gamma_slices,
               const std::vector<std::vector<double>>& delta_slices) {
  double inter = 0;
  std::size_t M = 0;
  for (const auto* slices : {&gamma_slices, &delta_slices})
    for (const auto& sl : *slices) {
      inter += demeaned_sum_sq(sl);
      M += static_cast<std::size_t>(std::count_if(sl.begin(), sl.end(), [](double v) { return v != 0; }));
    }
  return demeaned_sum_sq(beta) + (M > 0 ? inter / static_cast<double>(M) : 0.0);
}

double t_lasso_main(const std::vector<double>& beta) { return demeaned_sum_sq(beta); }

// ---------------------------------------------------------------------------

namespace {

int dc_level(const ConjointDataset& ds, std::size_t i, int f, bool left) {
  const std::size_t N = ds.rows();
  const bool swapped = i >= N;
  const std::size_t r = swapped ? i - N : i;
  const bool use_left = left != swapped;
  return use_left ? ds.left(static_cast<Eigen::Index>(r), f) : ds.right(static_cast<Eigen::Index>(r), f);
}

std::size_t block_width(const ConjointDataset& ds, const DcBlock& b) {
  auto width1 = [&](int f) -> std::size_t {
    if (f >= 0) return ds.factors[static_cast<std::size_t>(f)].size();
    const auto& c = ds.covariates[static_cast<std::size_t>(-2 - f)];
    return c.numeric ? 1 : c.size();
  };
  const std::size_t w1 = width1(b.f1);
  return b.f2 == -1 ? w1 : w1 * width1(b.f2);
}

}  // namespace

Eigen::MatrixXd dc_columns(const ConjointDataset& ds, const std::vector<DcBlock>& blocks,
                           std::vector<std::size_t>* offsets) {
  const std::size_t N = ds.rows();
  std::size_t P = 0;
  std::vector<std::size_t> off;
  for (const auto& b : blocks) {
    if (b.f1 < 0 && b.f2 != -1) throw ValidationError("covariate blocks cannot lead a product");
    off.push_back(P);
    P += block_width(ds, b);
  }
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(2 * N), static_cast<Eigen::Index>(P));
  // one "level, weight" per row for a covariate or factor side
  auto item = [&](std::size_t i, int f, bool left) -> std::pair<int, double> {
    if (f >= 0) return {dc_level(ds, i, f, left), 1.0};
    const auto m = static_cast<std::size_t>(-2 - f);
    const double v = ds.V(static_cast<Eigen::Index>(i % N), static_cast<Eigen::Index>(m));
    if (ds.covariates[m].numeric) return {0, v};
    return {static_cast<int>(v), 1.0};
  };
  for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
    const auto& b = blocks[bi];
    const std::size_t w2 = b.f2 == -1 ? 1 : block_width(ds, DcBlock{b.f2, true, -1, true});
    for (std::size_t i = 0; i < 2 * N; ++i) {
      const auto [l1, v1] = item(i, b.f1, b.left1);
      std::size_t col = static_cast<std::size_t>(l1);
      double v = v1;
      if (b.f2 != -1) {
        const auto [l2, v2] = item(i, b.f2, b.left2);
        col = col * w2 + static_cast<std::size_t>(l2);
        v *= v2;
      }
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(off[bi] + col)) = v;
    }
  }
  if (offsets) *offsets = off;
  return X;
}

Eigen::VectorXd dc_response(const ConjointDataset& ds) {
  const std::size_t N = ds.rows();
  Eigen::VectorXd y(static_cast<Eigen::Index>(2 * N));
  for (std::size_t r = 0; r < N; ++r) {
    y[static_cast<Eigen::Index>(r)] = ds.y[r];
    y[static_cast<Eigen::Index>(N + r)] = 1 - ds.y[r];
  }
  return y;
}

std::vector<int> dc_clusters(const ConjointDataset& ds) {
  const std::size_t N = ds.rows();
  std::vector<int> c(2 * N);
  for (std::size_t r = 0; r < N; ++r) c[r] = c[N + r] = static_cast<int>(ds.respondent(r));
  return c;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<TargetLevels> resolve_target_levels(const StatisticSpec& spec, const ConjointDataset& obs) {
  std::vector<std::string> names = spec.target;
  if (names.empty() && spec.coarsening) names = {spec.coarsening->name};
  const std::vector<std::size_t> idx = names.empty() ? obs.targets : resolve_targets(obs, names);
  if (idx.empty()) throw ValidationError("no target factor");
  std::vector<std::string> labels = spec.options.tested_levels;
  if (spec.coarsening && labels.empty()) {
    labels = spec.coarsening->group_members();
    if (labels.empty()) throw ValidationError("tested_group is empty");
  }
  std::vector<TargetLevels> out;
  for (auto f : idx) out.push_back({f, {}});
  if (!labels.empty()) {
    if (out.size() != 1) throw ValidationError("tested levels need exactly one target factor");
    for (const auto& l : labels) {
      const int k = obs.factors[out[0].factor].level_index(l);
      if (k < 0) throw ValidationError("unknown level '" + l + "' of '" + obs.factors[out[0].factor].name + "'");
      out[0].levels.push_back(k);
    }
  }
  return out;
}

DesignOptions design_options(const StatisticSpec& spec, const ConjointDataset& obs) {
  DesignOptions d;
  d.include_v = spec.options.include_v || spec.kind == StatisticKind::hiernet_respondent;
  if (d.include_v && obs.covariates.empty()) throw ValidationError("respondent statistic needs covariates (V absent)");
  for (const auto& [a, b] : spec.options.extra_main) {
    const int fa = obs.factor_index(a), fb = obs.factor_index(b);
    if (fa < 0 || fb < 0) throw ValidationError("extra main-effect term names an unknown factor");
    d.extra_products.emplace_back(static_cast<std::size_t>(fa), static_cast<std::size_t>(fb));
  }
  return d;
}

class HierNetStatistic : public Statistic {
 public:
  HierNetStatistic(const StatisticSpec& spec, const ConjointDataset& obs) : kind_(spec.kind) {
    const auto& o = spec.options;
    if (kind_ != StatisticKind::order && kind_ != StatisticKind::carryover && kind_ != StatisticKind::fatigue)
      targets_ = resolve_target_levels(spec, obs);
    dopt_ = design_options(spec, obs);
    if (kind_ == StatisticKind::fatigue) {
      if (obs.J < 2) throw ValidationError("fatigue test requires J ≥ 2");
      dopt_.include_task = true;
    }
    if (kind_ == StatisticKind::carryover) {
      if (obs.J < 2) throw ValidationError("carryover test requires J ≥ 2");
      if (obs.J % 2) throw ValidationError("carryover statistic needs an even number of tasks");
    }
    cfg_.cv_folds = o.cv_folds;
    cfg_.grid_size = o.grid_size;
    cfg_.grid_ratio = o.grid_ratio;
    cfg_.fold_seed = o.cv_seed;
    cfg_.tol = o.tol;

    const AugmentedDesign null_design = kind_ == StatisticKind::order ? build_symmetry_augmented(obs, dopt_) : design(obs);
    const auto& groups = null_design.dm.groups();
    std::vector<char> null_mode(groups.size(), group_free);
    fit_mode_.assign(groups.size(), group_free);
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const auto& G = groups[g];
      switch (kind_) {
        case StatisticKind::order: break;
        case StatisticKind::carryover:
          if (G.role == GroupRole::lag_profile) {
            null_mode[g] = group_zero;
            fit_mode_[g] = group_interaction_only;
          }
          break;
        case StatisticKind::fatigue:
          if (G.role == GroupRole::task_index) null_mode[g] = group_zero;
          break;
        default:
          for (const auto& t : targets_) {
            const int f = static_cast<int>(t.factor);
            if ((G.role == GroupRole::profile && G.source == f) ||
                (G.role == GroupRole::extra && (G.pair_first == f || G.pair_second == f)))
              null_mode[g] = group_zero;
          }
      }
    }
    per_resample_ = o.lambda <= 0 && o.cv_per_resample;
    if (o.lambda > 0) {
      lambda_ = o.lambda;
    } else if (!per_resample_) {
      HierNetConfig c = cfg_;
      c.group_mode = null_mode;
      lambda_ = cross_validate(null_design.dm, null_design.y, c).lambda_selected;
    }
    cfg_.group_mode = fit_mode_;
    if (!per_resample_) {
      warm_ = fit_hiernet(null_design.dm, null_design.y, lambda_, cfg_, nullptr, &null_mode);
      has_warm_ = true;
    }
  }

  double operator()(const ConjointDataset& ds) const override {
    const AugmentedDesign d = design(ds);
    HierNetFit fit;
    if (per_resample_) {
      fit = fit_hiernet_cv(d.dm, d.y, cfg_);
    } else {
      fit = fit_hiernet(d.dm, d.y, lambda_, cfg_, has_warm_ ? &warm_ : nullptr);
    }
    switch (kind_) {
      case StatisticKind::hiernet_respondent: return t_hiernet_respondent(fit, targets_);
      case StatisticKind::hiernet_unconstrained: return t_hiernet_unconstrained(fit, targets_);
      case StatisticKind::order: return t_order(fit);
      case StatisticKind::carryover: return t_carryover(fit);
      case StatisticKind::fatigue: return t_fatigue(fit);
      default: return t_hiernet(fit, targets_);
    }
  }

  double lambda() const override { return lambda_; }

 private:
  AugmentedDesign design(const ConjointDataset& ds) const {
    switch (kind_) {
      case StatisticKind::hiernet_unconstrained:
      case StatisticKind::order: return {build_design(ds, dopt_), response(ds)};
      case StatisticKind::carryover: return build_carryover_augmented(ds);
      default: return build_symmetry_augmented(ds, dopt_);
    }
  }

  StatisticKind kind_;
  std::vector<TargetLevels> targets_;
  DesignOptions dopt_;
  HierNetConfig cfg_;
  std::vector<char> fit_mode_;
  double lambda_ = 0;
  bool per_resample_ = false;
  HierNetFit warm_;
  bool has_warm_ = false;
};

// Lasso-logistic statistics on the doubled design. Penalties not fixed by the
// user come from a cross-validated fit on the non-target columns only.
class LassoStatistic : public Statistic {
 public:
  LassoStatistic(const StatisticSpec& spec, const ConjointDataset& obs) : kind_(spec.kind), opt_(spec.options) {
    targets_ = resolve_target_levels(spec, obs);
    std::vector<DcBlock> base;
    for (std::size_t f = 0; f < obs.p(); ++f) {
      if (is_target(f)) continue;
      base.push_back({static_cast<int>(f), true, -1, true});
      base.push_back({static_cast<int>(f), false, -1, true});
    }
    if (kind_ == StatisticKind::interaction_screen) {
      for (std::size_t m = 0; m < obs.covariates.size(); ++m) base.push_back({-2 - static_cast<int>(m), true, -1, true});
      const auto& w = opt_.screen_variable;
      const int f = obs.factor_index(w), m = obs.covariate_index(w);
      if (f >= 0 && !is_target(static_cast<std::size_t>(f)))
        screen_ = f;
      else if (m >= 0)
        screen_ = -2 - m;
      else
        throw ValidationError("unknown screening variable '" + w + "'");
    }
    if (kind_ == StatisticKind::dicrt) {
      const std::size_t avail = obs.p() - targets_.size();
      if (opt_.I > avail) throw ValidationError("I exceeds the number of available factors");
    }
    const Eigen::VectorXd y = dc_response(obs);
    const auto cl = dc_clusters(obs);
    stage1_lambda_ = 0;
    if (!base.empty() && (opt_.lambda <= 0 || kind_ == StatisticKind::dicrt)) {
      std::vector<std::size_t> off;
      const Eigen::MatrixXd Z = dc_columns(obs, base, &off);
      LassoCvOptions cvo;
      cvo.folds = opt_.cv_folds;
      cvo.grid_size = opt_.grid_size;
      cvo.grid_ratio = opt_.grid_ratio;
      cvo.seed = opt_.cv_seed;
      stage1_lambda_ = cv_lasso_logistic(Z, y, cl, {}, cvo).lambda_selected;
      if (kind_ == StatisticKind::dicrt) {
        const auto fit1 = fit_lasso_logistic(Z, y, stage1_lambda_);
        offset_ = predict_link(fit1, Z, {});
        stage1_coef_ = fit1.beta;
        std::vector<std::pair<double, int>> score;
        for (std::size_t b = 0; b < base.size(); b += 2) {
          const auto f = static_cast<std::size_t>(base[b].f1);
          const auto K = static_cast<Eigen::Index>(obs.factors[f].size());
          const double s = fit1.beta.segment(static_cast<Eigen::Index>(off[b]), K).squaredNorm() +
                           fit1.beta.segment(static_cast<Eigen::Index>(off[b + 1]), K).squaredNorm();
          score.emplace_back(s, static_cast<int>(f));
        }
        std::stable_sort(score.begin(), score.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t i = 0; i < opt_.I; ++i) selected_.push_back(score[i].second);
      }
    }
    lambda_ = opt_.lambda > 0 ? opt_.lambda : stage1_lambda_;
    if (!(lambda_ > 0)) lambda_ = 1e-4;
    // the main-effect blocks used in every evaluation
    if (kind_ == StatisticKind::lasso_main || kind_ == StatisticKind::interaction_screen) {
      for (std::size_t f = 0; f < obs.p(); ++f) {
        blocks_.push_back({static_cast<int>(f), true, -1, true});
        blocks_.push_back({static_cast<int>(f), false, -1, true});
      }
      if (kind_ == StatisticKind::interaction_screen)
        for (std::size_t m = 0; m < obs.covariates.size(); ++m) blocks_.push_back({-2 - static_cast<int>(m), true, -1, true});
    }
    for (const auto& t : targets_) {
      const int x = static_cast<int>(t.factor);
      TargetCols tc;
      if (kind_ == StatisticKind::dicrt) {
        tc.main = blocks_.size();
        blocks_.push_back({x, true, -1, true});
        blocks_.push_back({x, false, -1, true});
        for (int l : selected_) add_pair_blocks(tc, x, l);
      } else if (kind_ == StatisticKind::lasso_main) {
        tc.main = 2 * t.factor;
      } else if (screen_ >= 0) {
        add_pair_blocks(tc, x, screen_);
      } else {
        tc.partner.push_back(blocks_.size());
        blocks_.push_back({x, true, screen_, true});
        blocks_.push_back({x, false, screen_, true});
      }
      cols_.push_back(tc);
    }
  }

  double operator()(const ConjointDataset& ds) const override {
    std::vector<std::size_t> off;
    const Eigen::MatrixXd X = dc_columns(ds, blocks_, &off);
    const Eigen::VectorXd y = dc_response(ds);
    LassoLogisticOptions lo;
    lo.offset = offset_;
    double lam = lambda_;
    if (opt_.cv_per_resample && opt_.lambda <= 0) {
      LassoCvOptions cvo;
      cvo.folds = opt_.cv_folds;
      cvo.grid_size = opt_.grid_size;
      cvo.grid_ratio = opt_.grid_ratio;
      cvo.seed = opt_.cv_seed;
      lam = cv_lasso_logistic(X, y, dc_clusters(ds), lo, cvo).lambda_selected;
    }
    const auto fit = fit_lasso_logistic(X, y, lam, lo);
    auto coef = [&](std::size_t block, std::size_t col) { return fit.beta[static_cast<Eigen::Index>(off[block] + col)]; };
    double total = 0;
    for (std::size_t i = 0; i < targets_.size(); ++i) {
      const auto& t = targets_[i];
      const auto& tc = cols_[i];
      const std::size_t K = ds.factors[t.factor].size();
      std::vector<int> levels = t.levels;
      if (levels.empty()) {
        levels.resize(K);
        std::iota(levels.begin(), levels.end(), 0);
      }
      std::vector<double> beta;
      if (kind_ != StatisticKind::interaction_screen)
        for (int k : levels) beta.push_back(coef(tc.main, static_cast<std::size_t>(k)));
      // partner blocks come as (X_L x W_L, X_L x W_R, ...) or a single X_L x V
      std::vector<std::vector<double>> gam, del;
      for (std::size_t pb : tc.partner) {
        const std::size_t W = block_width(ds, blocks_[pb]) / K;
        const bool covariate = blocks_[pb].f2 < -1;
        for (std::size_t kp = 0; kp < W; ++kp) {
          std::vector<double> g, d;
          for (int k : levels) {
            g.push_back(coef(pb, static_cast<std::size_t>(k) * W + kp));
            if (!covariate) d.push_back(coef(pb + 1, static_cast<std::size_t>(k) * W + kp));
          }
          gam.push_back(std::move(g));
          if (!covariate) del.push_back(std::move(d));
        }
      }
      if (kind_ == StatisticKind::dicrt) {
        total += t_dicrt(beta, gam, del);
      } else if (kind_ == StatisticKind::lasso_main) {
        total += t_lasso_main(beta);
      } else {
        for (const auto& s : gam) total += demeaned_sum_sq(s);
        for (const auto& s : del) total += demeaned_sum_sq(s);
      }
    }
    return total;
  }

  double lambda() const override { return lambda_; }
  const std::vector<int>& selected() const { return selected_; }

 private:
  struct TargetCols {
    std::size_t main = 0;
    std::vector<std::size_t> partner;  // first of each (L x L, L x R) block pair
  };

  bool is_target(std::size_t f) const {
    return std::any_of(targets_.begin(), targets_.end(), [&](const TargetLevels& t) { return t.factor == f; });
  }

  void add_pair_blocks(TargetCols& tc, int x, int l) {
    tc.partner.push_back(blocks_.size());
    blocks_.push_back({x, true, l, true});
    blocks_.push_back({x, true, l, false});
    blocks_.push_back({x, false, l, false});
    blocks_.push_back({x, false, l, true});
  }

  StatisticKind kind_;
  StatisticOptions opt_;
  std::vector<TargetLevels> targets_;
  int screen_ = -1;
  std::vector<int> selected_;
  Eigen::VectorXd offset_, stage1_coef_;
  double stage1_lambda_ = 0, lambda_ = 0;
  std::vector<DcBlock> blocks_;
  std::vector<TargetCols> cols_;
};

}  // namespace

std::unique_ptr<Statistic> make_statistic(const StatisticSpec& spec, const ConjointDataset& observed) {
  switch (spec.kind) {
    case StatisticKind::dicrt:
    case StatisticKind::lasso_main:
    case StatisticKind::interaction_screen: return std::make_unique<LassoStatistic>(spec, observed);
    default: return std::make_unique<HierNetStatistic>(spec, observed);
  }
}

double select_lambda(const StatisticSpec& spec, const ConjointDataset& ds) {
  if (spec.kind != StatisticKind::hiernet_main && spec.kind != StatisticKind::hiernet_unconstrained &&
      spec.kind != StatisticKind::hiernet_respondent)
    throw ValidationError(std::string("no pilot penalty for statistic ") + to_string(spec.kind));
  const DesignOptions d = design_options(spec, ds);
  const AugmentedDesign a = spec.kind == StatisticKind::hiernet_unconstrained
                                ? AugmentedDesign{build_design(ds, d), response(ds)}
                                : build_symmetry_augmented(ds, d);
  HierNetConfig c;
  c.cv_folds = spec.options.cv_folds;
  c.grid_size = spec.options.grid_size;
  c.grid_ratio = spec.options.grid_ratio;
  c.fold_seed = spec.options.cv_seed;
  c.tol = spec.options.tol;
  return cross_validate(a.dm, a.y, c).lambda_selected;
}

}  // namespace crt
