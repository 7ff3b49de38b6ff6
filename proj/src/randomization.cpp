#include "crt/randomization.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crt/errors.hpp"

namespace crt {

namespace {
enum StreamTag : std::uint64_t { kMain = 1, kCoarse = 2, kOrder = 3, kCarry = 4, kFatigue = 5 };
}

RandomizationScheme RandomizationScheme::uniform(const std::vector<FactorSpec>& factors) {
  RandomizationScheme s;
  for (const auto& f : factors) s.marginals.emplace_back(f.size(), 1.0 / static_cast<double>(f.size()));
  return s;
}

void validate_scheme(const RandomizationScheme& scheme, const std::vector<FactorSpec>& factors) {
  if (scheme.marginals.size() != factors.size())
    throw ValidationError("randomization scheme has " + std::to_string(scheme.marginals.size()) +
                          " marginals for " + std::to_string(factors.size()) + " factors");
  for (std::size_t f = 0; f < factors.size(); ++f) {
    const auto& m = scheme.marginals[f];
    if (m.size() != factors[f].size())
      throw ValidationError("marginal of factor '" + factors[f].name + "' has wrong length");
    double s = 0;
    for (double x : m) {
      if (!(x >= 0) || !std::isfinite(x))
        throw ValidationError("marginal of factor '" + factors[f].name + "' has a negative entry");
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-12)
      throw ValidationError("marginal of factor '" + factors[f].name + "' does not sum to 1");
  }
  for (const auto& r : scheme.restrictions) {
    if (r.if_factor >= factors.size() || r.then_factor >= factors.size())
      throw ValidationError("restriction references unknown factor");
    if (r.if_factor == r.then_factor) throw ValidationError("restriction conditions a factor on itself");
    const auto& cf = factors[r.if_factor];
    const auto& tf = factors[r.then_factor];
    for (int k : r.if_levels)
      if (k < 0 || k >= static_cast<int>(cf.size()))
        throw ValidationError("restriction references unknown level of '" + cf.name + "'");
    if (r.allowed.empty()) throw ValidationError("restriction on '" + tf.name + "' allows no level");
    double mass = 0;
    for (int k : r.allowed) {
      if (k < 0 || k >= static_cast<int>(tf.size()))
        throw ValidationError("restriction references unknown level of '" + tf.name + "'");
      mass += scheme.marginals[r.then_factor][k];
    }
    if (mass <= 0) throw ValidationError("restriction on '" + tf.name + "' allows only zero-probability levels");
  }
  ProfileLaw check(scheme, factors);  // rejects cyclic rules
}

ProfileLaw::ProfileLaw(const RandomizationScheme& scheme, const std::vector<FactorSpec>& factors)
    : marginals_(scheme.marginals), rules_(scheme.restrictions), rules_for_(factors.size()) {
  const std::size_t p = factors.size();
  if (marginals_.size() != p) throw ValidationError("randomization scheme does not match factors");
  std::vector<std::vector<std::size_t>> children(p);
  std::vector<std::size_t> indeg(p, 0);
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    const auto& r = rules_[i];
    if (r.if_factor >= p || r.then_factor >= p) throw ValidationError("restriction references unknown factor");
    rules_for_[r.then_factor].push_back(i);
    children[r.if_factor].push_back(r.then_factor);
    ++indeg[r.then_factor];
  }
  std::vector<bool> done(p, false);
  while (order_.size() < p) {
    bool progressed = false;
    for (std::size_t f = 0; f < p; ++f) {
      if (done[f] || indeg[f] != 0) continue;
      done[f] = true;
      order_.push_back(f);
      for (auto c : children[f]) --indeg[c];
      progressed = true;
      break;
    }
    if (!progressed) throw ValidationError("restriction rules are cyclic");
  }
}

double ProfileLaw::conditional(std::size_t f, int k, const int* levels) const {
  const auto& m = marginals_[f];
  if (rules_for_[f].empty()) return m[k];
  std::vector<char> ok(m.size(), 1);
  for (auto ri : rules_for_[f]) {
    const auto& r = rules_[ri];
    if (std::find(r.if_levels.begin(), r.if_levels.end(), levels[r.if_factor]) == r.if_levels.end()) continue;
    std::vector<char> allow(m.size(), 0);
    for (int a : r.allowed) allow[a] = 1;
    for (std::size_t l = 0; l < m.size(); ++l) ok[l] = static_cast<char>(ok[l] && allow[l]);
  }
  double total = 0;
  for (std::size_t l = 0; l < m.size(); ++l)
    if (ok[l]) total += m[l];
  if (total <= 0) throw ValidationError("restrictions leave a factor with no allowed level");
  return ok[k] ? m[k] / total : 0.0;
}

double ProfileLaw::probability(const int* levels) const {
  double p = 1;
  for (auto f : order_) {
    p *= conditional(f, levels[f], levels);
    if (p == 0) return 0;
  }
  return p;
}

void ProfileLaw::draw(CounterRng& rng, int* levels) const {
  std::vector<double> w;
  for (auto f : order_) {
    const std::size_t K = marginals_[f].size();
    w.assign(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) w[k] = conditional(f, static_cast<int>(k), levels);
    levels[f] = static_cast<int>(rng.categorical(w));
  }
}

const char* to_string(ResampleKind k) {
  switch (k) {
    case ResampleKind::main: return "main";
    case ResampleKind::coarsened: return "coarsened";
    case ResampleKind::order: return "order";
    case ResampleKind::carryover: return "carryover";
    case ResampleKind::fatigue: return "fatigue";
  }
  return "?";
}

ResampleKind resample_kind_from_string(const std::string& s) {
  for (auto k : {ResampleKind::main, ResampleKind::coarsened, ResampleKind::order, ResampleKind::carryover,
                 ResampleKind::fatigue})
    if (s == to_string(k)) return k;
  throw ValidationError("unknown resample kind '" + s + "'");
}

// ---------------------------------------------------------------------------

static std::vector<int> profile_row(const LevelMatrix& m, std::size_t r) {
  return std::vector<int>(m.row(r).data(), m.row(r).data() + m.cols());
}

ConditionalSampler::ConditionalSampler(const ConjointDataset& ds, const RandomizationScheme& scheme)
    : targets_(ds.targets) {
  validate_scheme(scheme, ds.factors);
  ProfileLaw law(scheme, ds.factors);
  for (auto t : targets_) {
    radix_.push_back(ds.factors[t].size());
    tuples_ *= ds.factors[t].size();
  }
  const std::size_t N = ds.rows();
  cdf_.assign(N * 2 * tuples_, 0.0);
  for (std::size_t r = 0; r < N; ++r) {
    for (int side = 0; side < 2; ++side) {
      auto lv = profile_row(side ? ds.right : ds.left, r);
      double* c = &cdf_[(r * 2 + side) * tuples_];
      double total = 0;
      for (std::size_t t = 0; t < tuples_; ++t) {
        std::size_t rest = t;
        for (std::size_t q = targets_.size(); q-- > 0;) {
          lv[targets_[q]] = static_cast<int>(rest % radix_[q]);
          rest /= radix_[q];
        }
        total += law.probability(lv.data());
        c[t] = total;
      }
      if (total <= 0)
        throw ValidationError("row " + std::to_string(r + 1) +
                              " has a profile with zero probability under the randomization scheme");
      for (std::size_t t = 0; t < tuples_; ++t) c[t] /= total;
      c[tuples_ - 1] = 1.0;
    }
  }
}

std::vector<double> ConditionalSampler::distribution(std::size_t row, bool right) const {
  const double* c = &cdf_[(row * 2 + (right ? 1 : 0)) * tuples_];
  std::vector<double> p(tuples_);
  for (std::size_t t = 0; t < tuples_; ++t) p[t] = c[t] - (t ? c[t - 1] : 0.0);
  return p;
}

ConjointDataset ConditionalSampler::draw(const ConjointDataset& ds, std::uint64_t seed, std::uint64_t b) const {
  ConjointDataset out = ds;
  const std::size_t N = ds.rows();
  for (std::size_t r = 0; r < N; ++r) {
    CounterRng rng(stream_key({seed, b, r, kMain}));
    for (int side = 0; side < 2; ++side) {
      const double* c = &cdf_[(r * 2 + side) * tuples_];
      const double u = rng.uniform();
      std::size_t t = static_cast<std::size_t>(std::upper_bound(c, c + tuples_, u) - c);
      if (t >= tuples_) t = tuples_ - 1;
      auto& m = side ? out.right : out.left;
      for (std::size_t q = targets_.size(); q-- > 0;) {
        m(r, targets_[q]) = static_cast<int>(t % radix_[q]);
        t /= radix_[q];
      }
    }
  }
  return out;
}

ConjointDataset sample_x_given_z(const ConjointDataset& ds, const RandomizationScheme& scheme, std::uint64_t b,
                                 std::uint64_t seed) {
  return ConditionalSampler(ds, scheme).draw(ds, seed, b);
}

// ---------------------------------------------------------------------------

CoarsenedSampler::CoarsenedSampler(const ConjointDataset& original, const RandomizationScheme& scheme,
                                   const CoarseningSpec& spec) {
  validate_scheme(scheme, original.factors);
  coarse_ = apply_coarsening(original, spec);
  const auto rc = resolve_coarsening(original, spec);
  column_ = rc.position;
  // position counts factors before the first source, all of which survive
  levels_ = rc.levels.size();
  ProfileLaw law(scheme, original.factors);
  const std::size_t N = original.rows();
  const std::size_t tuples = rc.image.size();
  probs_.assign(N * 2 * levels_, 0.0);
  redraw_.assign(N * 2, 0);
  for (std::size_t r = 0; r < N; ++r) {
    for (int side = 0; side < 2; ++side) {
      const auto& src = side ? original.right : original.left;
      const int obs = rc.image[rc.tuple_index(src, r)];
      if (obs < 0 || !rc.in_group[obs]) continue;
      redraw_[r * 2 + side] = 1;
      auto lv = profile_row(src, r);
      double* p = &probs_[(r * 2 + side) * levels_];
      double total = 0;
      for (std::size_t t = 0; t < tuples; ++t) {
        std::size_t rest = t;
        for (std::size_t s = rc.sources.size(); s-- > 0;) {
          lv[rc.sources[s]] = static_cast<int>(rest % rc.radix[s]);
          rest /= rc.radix[s];
        }
        const double pr = law.probability(lv.data());
        if (pr <= 0) continue;
        const int img = rc.image[t];
        if (img < 0) throw ValidationError("coarsening map is not total on the design support");
        if (!rc.in_group[img]) continue;
        p[img] += pr;
        total += pr;
      }
      if (total <= 0) throw ValidationError("tested group has zero probability on row " + std::to_string(r + 1));
      for (std::size_t k = 0; k < levels_; ++k) p[k] /= total;
    }
  }
}

std::vector<double> CoarsenedSampler::distribution(std::size_t row, bool right) const {
  const std::size_t i = row * 2 + (right ? 1 : 0);
  if (!redraw_[i]) return {};
  return std::vector<double>(probs_.begin() + static_cast<std::ptrdiff_t>(i * levels_),
                             probs_.begin() + static_cast<std::ptrdiff_t>((i + 1) * levels_));
}

ConjointDataset CoarsenedSampler::draw(std::uint64_t seed, std::uint64_t b) const {
  ConjointDataset out = coarse_;
  const std::size_t N = out.rows();
  std::vector<double> w(levels_);
  for (std::size_t r = 0; r < N; ++r) {
    CounterRng rng(stream_key({seed, b, r, kCoarse}));
    for (int side = 0; side < 2; ++side) {
      const double u = rng.uniform();  // consumed either way so streams line up
      if (!redraw_[r * 2 + side]) continue;
      const double* p = &probs_[(r * 2 + side) * levels_];
      double acc = 0;
      std::size_t pick = levels_;
      for (std::size_t k = 0; k < levels_; ++k) {
        if (p[k] <= 0) continue;
        acc += p[k];
        pick = k;
        if (u < acc) break;
      }
      (side ? out.right : out.left)(r, column_) = static_cast<int>(pick);
    }
  }
  return out;
}

ConjointDataset sample_coarsened(const ConjointDataset& ds, const RandomizationScheme& scheme,
                                 const CoarseningSpec& spec, std::uint64_t b, std::uint64_t seed) {
  return CoarsenedSampler(ds, scheme, spec).draw(seed, b);
}

// ---------------------------------------------------------------------------

ConjointDataset swap_rows(const ConjointDataset& ds, const std::vector<char>& E) {
  ConjointDataset out = ds;
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    if (!E[r]) continue;
    out.left.row(r) = ds.right.row(r);
    out.right.row(r) = ds.left.row(r);
    out.y[r] = 1 - ds.y[r];
  }
  return out;
}

std::vector<char> draw_swap_set(std::size_t rows, std::uint64_t b, std::uint64_t seed) {
  std::vector<char> E(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    CounterRng rng(stream_key({seed, b, r, kOrder}));
    E[r] = rng.coin() ? 1 : 0;
  }
  return E;
}

ConjointDataset sample_order_swap(const ConjointDataset& ds, std::uint64_t b, std::uint64_t seed,
                                  std::vector<char>* E_out) {
  auto E = draw_swap_set(ds.rows(), b, seed);
  auto out = swap_rows(ds, E);
  if (E_out) *E_out = std::move(E);
  return out;
}

ConjointDataset trim_to_even_tasks(const ConjointDataset& ds, bool* dropped) {
  if (ds.J < 2) throw ValidationError("carryover test requires J >= 2");
  if (dropped) *dropped = ds.J % 2 == 1;
  if (ds.J % 2 == 0) return ds;
  const std::size_t J = ds.J - 1;
  ConjointDataset out = ds;
  out.J = J;
  const std::size_t N = ds.n * J;
  out.left.resize(N, ds.p());
  out.right.resize(N, ds.p());
  out.V.resize(N, ds.V.cols());
  out.y.resize(N);
  out.task.resize(N);
  for (std::size_t i = 0; i < ds.n; ++i)
    for (std::size_t j = 0; j < J; ++j) {
      const std::size_t s = i * ds.J + j, d = i * J + j;
      out.left.row(d) = ds.left.row(s);
      out.right.row(d) = ds.right.row(s);
      out.V.row(d) = ds.V.row(s);
      out.y[d] = ds.y[s];
      out.task[d] = ds.task[s];
    }
  return out;
}

ConjointDataset sample_carryover(const ConjointDataset& ds, const RandomizationScheme& scheme, std::uint64_t b,
                                 std::uint64_t seed) {
  if (ds.J < 2) throw ValidationError("carryover test requires J >= 2");
  validate_scheme(scheme, ds.factors);
  ProfileLaw law(scheme, ds.factors);
  ConjointDataset out = ds;
  std::vector<int> lv(ds.p());
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    if ((r % ds.J) % 2 != 0) continue;  // tasks 2, 4, ... stay fixed
    CounterRng rng(stream_key({seed, b, r, kCarry}));
    for (int side = 0; side < 2; ++side) {
      law.draw(rng, lv.data());
      auto& m = side ? out.right : out.left;
      for (std::size_t f = 0; f < ds.p(); ++f) m(r, f) = lv[f];
    }
  }
  return out;
}

ConjointDataset sample_fatigue_permutation(const ConjointDataset& ds, std::uint64_t b, std::uint64_t seed) {
  ConjointDataset out = ds;
  std::vector<int> perm(ds.J);
  for (std::size_t i = 0; i < ds.n; ++i) {
    std::iota(perm.begin(), perm.end(), 1);
    CounterRng rng(stream_key({seed, b, i, kFatigue}));
    for (std::size_t j = ds.J; j > 1; --j) std::swap(perm[j - 1], perm[rng.below(j)]);
    for (std::size_t j = 0; j < ds.J; ++j) out.task[i * ds.J + j] = perm[j];
  }
  return out;
}

}  // namespace crt
