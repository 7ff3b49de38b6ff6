#include "crt/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "crt/engine.hpp"
#include "crt/errors.hpp"
#include "crt/glm.hpp"
#include "crt/rng.hpp"
#include "crt/statistics.hpp"

namespace crt {

namespace {

double logistic_noise(CounterRng& rng) {
  double u = rng.uniform();
  while (u <= 0) u = rng.uniform();
  return std::log(u) - std::log1p(-u);
}

double code(int level) { return level == 0 ? -0.5 : 0.5; }

FactorSpec binary_factor(std::string name) {
  FactorSpec f;
  f.name = std::move(name);
  f.levels = {"lo", "hi"};
  return f;
}

std::vector<double> sized(const std::vector<double>& v, std::size_t n, const char* what) {
  if (v.empty()) return std::vector<double>(n, 0.0);
  if (v.size() != n) throw ValidationError(std::string(what) + " must have num_z entries");
  return v;
}

// k distinct indices from [0, n), uniformly.
std::vector<std::size_t> choose(CounterRng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(k);
  return idx;
}

}  // namespace

ForcedChoiceDgp default_dgp(std::uint64_t seed, std::size_t n) {
  ForcedChoiceDgp d;
  d.n = n;
  d.beta_z.assign(d.num_z, 0.0);
  for (std::size_t k = 0; k < 8; ++k) d.beta_z[k] = (k % 2 == 0) ? 0.1 : -0.1;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t a = 0; a < d.num_z; ++a)
    for (std::size_t b = a + 1; b < d.num_z; ++b) pairs.emplace_back(a, b);
  CounterRng rng(stream_key({seed, 0x9a77e5}));
  auto pick = choose(rng, pairs.size(), 15);
  std::sort(pick.begin(), pick.end());
  for (auto i : pick) d.gamma_tilde.push_back({pairs[i].first, pairs[i].second, 0.05});
  return d;
}

double linear_predictor(const ForcedChoiceDgp& d, const std::vector<double>& gamma, const std::vector<double>& delta,
                        const int* L, const int* R) {
  const double xl = code(L[0]), xr = code(R[0]);
  double eta = d.beta_x * (xl - xr);
  for (std::size_t k = 0; k < d.num_z; ++k) {
    const double zl = code(L[k + 1]), zr = code(R[k + 1]);
    if (!d.beta_z.empty()) eta += d.beta_z[k] * (zl - zr);
    eta += 2 * gamma[k] * (xl * zl - xr * zr);
    eta += 2 * delta[k] * (xl * zr - xr * zl);
  }
  for (const auto& p : d.gamma_tilde)
    eta += 2 * p.coef * (code(L[p.a + 1]) * code(L[p.b + 1]) - code(R[p.a + 1]) * code(R[p.b + 1]));
  return eta;
}

DgpDraw generate(const ForcedChoiceDgp& d, std::uint64_t seed) {
  if (d.n == 0) throw ValidationError("sample size must be positive");
  if (!d.beta_z.empty() && d.beta_z.size() != d.num_z) throw ValidationError("beta_z must have num_z entries");
  for (const auto& p : d.gamma_tilde)
    if (p.a >= d.num_z || p.b >= d.num_z || p.a == p.b) throw ValidationError("gamma_tilde pair out of range");
  DgpDraw out;
  CounterRng rng(stream_key({seed, 0xd6e}));
  if (d.random_positions()) {
    if (d.n_within > d.num_z || d.n_between > d.num_z)
      throw ValidationError("more interactions requested than available slots");
    out.gamma.assign(d.num_z, 0.0);
    out.delta.assign(d.num_z, 0.0);
    for (auto k : choose(rng, d.num_z, d.n_within)) out.gamma[k] = d.within_size;
    for (auto k : choose(rng, d.num_z, d.n_between)) out.delta[k] = -d.between_size;
  } else {
    out.gamma = sized(d.gamma, d.num_z, "gamma");
    out.delta = sized(d.delta, d.num_z, "delta");
  }
  const std::size_t p = d.num_z + 1;
  LevelMatrix left(static_cast<Eigen::Index>(d.n), static_cast<Eigen::Index>(p));
  LevelMatrix right(static_cast<Eigen::Index>(d.n), static_cast<Eigen::Index>(p));
  std::vector<int> y(d.n);
  out.latent.resize(d.n);
  for (std::size_t i = 0; i < d.n; ++i) {
    int* L = left.row(static_cast<Eigen::Index>(i)).data();
    int* R = right.row(static_cast<Eigen::Index>(i)).data();
    for (std::size_t f = 0; f < p; ++f) L[f] = rng.coin() ? 1 : 0;
    for (std::size_t f = 0; f < p; ++f) R[f] = rng.coin() ? 1 : 0;
    out.latent[i] = linear_predictor(d, out.gamma, out.delta, L, R) + logistic_noise(rng);
    y[i] = out.latent[i] > 0 ? 1 : 0;
  }
  std::vector<FactorSpec> factors{binary_factor("x")};
  for (std::size_t k = 0; k < d.num_z; ++k) factors.push_back(binary_factor("z" + std::to_string(k + 1)));
  out.ds = make_dataset(std::move(factors), d.n, 1, std::move(left), std::move(right), std::move(y), {0});
  return out;
}

// Each term c (a^L - a^R) with independent +-1/2 parts has variance c^2 / 2;
// the factor 2 on products makes 2c (a^L b^L - a^R b^R) have the same.
VarianceDecomposition variance_decomposition(const ForcedChoiceDgp& d) {
  // long double so decimal coefficients round once, at the end
  using ld = long double;
  const auto sq = [](double c) { return static_cast<ld>(c) * static_cast<ld>(c); };
  VarianceDecomposition v;
  ld rem = sq(d.beta_x);
  for (double b : d.beta_z) rem += sq(b);
  for (const auto& p : d.gamma_tilde) rem += sq(p.coef);
  v.remaining = static_cast<double>(rem / 2);
  ld inter = 0;
  if (d.random_positions()) {
    inter = static_cast<ld>(d.n_within) * sq(d.within_size) + static_cast<ld>(d.n_between) * sq(d.between_size);
  } else {
    for (double g : d.gamma) inter += sq(g);
    for (double g : d.delta) inter += sq(g);
  }
  v.interaction = static_cast<double>(inter / 2);
  const double total = v.interaction + v.remaining;
  v.fraction = total > 0 ? v.interaction / total : 0;
  return v;
}

std::pair<double, double> heterogeneous_coefficients(double I) {
  if (I < 0) throw ValidationError("interaction size must be nonnegative");
  return {std::sqrt(4.0 / 3.0) * I, std::sqrt(2.0 / 3.0) * I};
}

// ---------------------------------------------------------------------------

const char* to_string(PowerMethod m) {
  switch (m) {
    case PowerMethod::crt_hiernet: return "crt_hiernet";
    case PowerMethod::crt_hiernet_unconstrained: return "crt_hiernet_unconstrained";
    case PowerMethod::crt_dicrt: return "crt_dicrt";
    case PowerMethod::amce: return "amce";
  }
  return "?";
}

PowerMethod power_method_from_string(const std::string& s) {
  for (auto m : {PowerMethod::crt_hiernet, PowerMethod::crt_hiernet_unconstrained, PowerMethod::crt_dicrt,
                 PowerMethod::amce})
    if (s == to_string(m)) return m;
  throw ValidationError("unknown method '" + s + "'");
}

const PowerSummary& PowerStudyResult::at(std::size_t grid_id, PowerMethod m) const {
  for (const auto& s : summary)
    if (s.grid_id == grid_id && s.method == m) return s;
  throw std::out_of_range("no such grid point / method");
}

std::vector<double> PowerStudyResult::p_values(std::size_t grid_id, PowerMethod m) const {
  std::vector<double> out;
  for (const auto& r : rows)
    if (r.grid_id == grid_id && r.method == m) out.push_back(r.p_value);
  return out;
}

namespace {

StatisticSpec spec_for(PowerMethod m, double lambda, std::size_t grid_size) {
  StatisticSpec s;
  s.target = {"x"};
  s.options.lambda = lambda;
  s.options.grid_size = grid_size;
  switch (m) {
    case PowerMethod::crt_hiernet: s.kind = StatisticKind::hiernet_main; break;
    case PowerMethod::crt_hiernet_unconstrained: s.kind = StatisticKind::hiernet_unconstrained; break;
    case PowerMethod::crt_dicrt: s.kind = StatisticKind::dicrt; break;
    case PowerMethod::amce: break;
  }
  return s;
}

}  // namespace

PowerStudyResult power_study(const std::vector<PowerGridPoint>& grid, const PowerStudyOptions& opt) {
  if (opt.methods.empty()) throw ValidationError("power study needs at least one method");
  if (opt.reps == 0) throw ValidationError("reps must be positive");
  PowerStudyResult res;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto& gp = grid[g];
    const RandomizationScheme sch = RandomizationScheme::uniform(
        std::vector<FactorSpec>(gp.dgp.num_z + 1, binary_factor("f")));
    std::vector<double> lambdas(opt.methods.size(), 0.0);
    for (std::size_t mi = 0; mi < opt.methods.size(); ++mi) {
      const auto m = opt.methods[mi];
      if (m != PowerMethod::crt_hiernet && m != PowerMethod::crt_hiernet_unconstrained) continue;
      if (opt.lambda > 0) {
        lambdas[mi] = opt.lambda;
        continue;
      }
      ForcedChoiceDgp pilot = gp.dgp;
      if (opt.pilot_n) pilot.n = opt.pilot_n;
      const DgpDraw pd = generate(pilot, stream_key({opt.seed, g, 0x9110f}));
      lambdas[mi] = select_lambda(spec_for(m, 0, opt.grid_size), pd.ds);
      if (opt.progress)
        opt.progress("grid " + std::to_string(g) + " " + to_string(m) + " pilot lambda " + std::to_string(lambdas[mi]));
    }
    std::vector<std::size_t> hits(opt.methods.size(), 0);
    for (std::size_t r = 0; r < opt.reps; ++r) {
      const std::uint64_t seed = stream_key({opt.seed, g, r});
      const DgpDraw draw = generate(gp.dgp, seed);
      for (std::size_t mi = 0; mi < opt.methods.size(); ++mi) {
        const auto m = opt.methods[mi];
        double p = 1;
        if (m == PowerMethod::amce) {
          p = amce_test(draw.ds, "x").p_value;
        } else {
          ResamplePlan plan;
          plan.B = opt.B;
          plan.master_seed = stream_key({seed, static_cast<std::uint64_t>(m)});
          plan.workers = opt.workers;
          p = run_crt(draw.ds, sch, plan, spec_for(m, lambdas[mi], opt.grid_size)).p_value();
        }
        if (p <= opt.alpha) ++hits[mi];
        res.rows.push_back({g, m, r, seed, p});
      }
      if (opt.progress && (r + 1) % 10 == 0)
        opt.progress("grid " + std::to_string(g) + " rep " + std::to_string(r + 1) + "/" + std::to_string(opt.reps));
    }
    const double frac = variance_decomposition(gp.dgp).fraction;
    for (std::size_t mi = 0; mi < opt.methods.size(); ++mi) {
      PowerSummary s;
      s.grid_id = g;
      s.label = gp.label;
      s.x = gp.x;
      s.method = opt.methods[mi];
      s.reps = opt.reps;
      s.power = static_cast<double>(hits[mi]) / static_cast<double>(opt.reps);
      s.se = std::sqrt(s.power * (1 - s.power) / static_cast<double>(opt.reps));
      s.variance_fraction = frac;
      s.lambda = lambdas[mi];
      res.summary.push_back(s);
    }
  }
  return res;
}

void write_power_rows_csv(const PowerStudyResult& r, std::ostream& out) {
  out << "grid_id,method,rep,seed,p_value\n";
  out.precision(17);
  for (const auto& row : r.rows)
    out << row.grid_id << ',' << to_string(row.method) << ',' << row.rep << ',' << row.seed << ',' << row.p_value
        << '\n';
}

void write_power_summary_csv(const PowerStudyResult& r, std::ostream& out) {
  out << "grid_id,label,x,method,reps,power,se,variance_fraction,lambda\n";
  out.precision(10);
  for (const auto& s : r.summary)
    out << s.grid_id << ',' << s.label << ',' << s.x << ',' << to_string(s.method) << ',' << s.reps << ',' << s.power
        << ',' << s.se << ',' << s.variance_fraction << ',' << s.lambda << '\n';
}

std::vector<PowerGridPoint> interaction_size_grid(std::uint64_t seed, std::size_t n, const std::vector<double>& sizes,
                                                  std::size_t n_interactions) {
  std::vector<PowerGridPoint> out;
  for (double I : sizes) {
    PowerGridPoint gp;
    gp.dgp = default_dgp(seed, n);
    gp.dgp.n_within = n_interactions / 2;
    gp.dgp.n_between = n_interactions - n_interactions / 2;
    gp.dgp.within_size = gp.dgp.between_size = I;
    if (I == 0) gp.dgp.n_within = gp.dgp.n_between = 0;
    gp.x = I;
    gp.label = "size=" + std::to_string(I).substr(0, 6);
    out.push_back(std::move(gp));
  }
  return out;
}

std::vector<PowerGridPoint> interaction_count_grid(std::uint64_t seed, std::size_t n, double size,
                                                   const std::vector<std::size_t>& counts) {
  std::vector<PowerGridPoint> out;
  for (auto c : counts) {
    PowerGridPoint gp;
    gp.dgp = default_dgp(seed, n);
    gp.dgp.n_within = c / 2;
    gp.dgp.n_between = c - c / 2;
    gp.dgp.within_size = gp.dgp.between_size = size;
    gp.x = static_cast<double>(c);
    gp.label = "count=" + std::to_string(c);
    out.push_back(std::move(gp));
  }
  return out;
}

std::vector<PowerGridPoint> heterogeneous_grid(std::uint64_t seed, std::size_t n, const std::vector<double>& sizes,
                                               std::size_t n_interactions) {
  std::vector<PowerGridPoint> out;
  for (double I : sizes) {
    for (int het = 0; het < 2; ++het) {
      PowerGridPoint gp;
      gp.dgp = default_dgp(seed, n);
      gp.dgp.n_within = n_interactions / 2;
      gp.dgp.n_between = n_interactions - n_interactions / 2;
      if (het) {
        const auto [s, w] = heterogeneous_coefficients(I);
        gp.dgp.within_size = s;
        gp.dgp.between_size = w;
      } else {
        gp.dgp.within_size = gp.dgp.between_size = I;
      }
      gp.x = I;
      gp.label = std::string(het ? "heterogeneous" : "homogeneous") + " size=" + std::to_string(I).substr(0, 6);
      out.push_back(std::move(gp));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

double logistic_inflation_p_value(std::size_t num_z, std::size_t n, std::size_t levels, std::uint64_t seed) {
  if (levels < 2) throw ValidationError("factors need at least two levels");
  const std::size_t p = num_z + 1;
  CounterRng rng(stream_key({seed, 0x1f1a7}));
  std::vector<int> lev(n * p);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < p; ++f) lev[i * p + f] = static_cast<int>(rng.below(levels));
    y[static_cast<Eigen::Index>(i)] = rng.coin() ? 1.0 : 0.0;
  }
  const std::size_t K = levels - 1;
  const std::size_t pairs = p * (p - 1) / 2;
  const std::size_t cols = 1 + p * K + pairs * K * K;
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols));
  std::vector<std::size_t> tested;
  for (std::size_t k = 0; k < K; ++k) tested.push_back(1 + k);  // factor 0 mains
  std::size_t off = 1 + p * K;
  std::vector<std::size_t> pair_off;
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = a + 1; b < p; ++b) {
      if (a == 0)
        for (std::size_t j = 0; j < K * K; ++j) tested.push_back(off + j);
      pair_off.push_back(off);
      off += K * K;
    }
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const int* L = &lev[i * p];
    X(r, 0) = 1;
    for (std::size_t f = 0; f < p; ++f)
      if (L[f] > 0) X(r, static_cast<Eigen::Index>(1 + f * K + static_cast<std::size_t>(L[f] - 1))) = 1;
    std::size_t q = 0;
    for (std::size_t a = 0; a < p; ++a)
      for (std::size_t b = a + 1; b < p; ++b, ++q)
        if (L[a] > 0 && L[b] > 0)
          X(r, static_cast<Eigen::Index>(pair_off[q] + static_cast<std::size_t>(L[a] - 1) * K +
                                         static_cast<std::size_t>(L[b] - 1))) = 1;
  }
  const LogisticFit fit = fit_logistic(X, y, 100, 1e-8);
  return logistic_subset_test(fit, tested, static_cast<double>(n) - static_cast<double>(cols)).p_value;
}

std::vector<InflationRow> logistic_inflation_study(const InflationOptions& opt) {
  std::vector<InflationRow> out;
  for (auto nz : opt.num_z) {
    InflationRow row;
    row.num_z = nz;
    for (std::size_t r = 0; r < opt.reps; ++r) {
      try {
        row.p_values.push_back(logistic_inflation_p_value(nz, opt.n, opt.levels, stream_key({opt.seed, nz, r})));
      } catch (const NumericalError&) {
        ++row.failed;
      }
    }
    row.reps = row.p_values.size();
    std::size_t hit = 0;
    row.histogram.assign(opt.bins, 0.0);
    for (double p : row.p_values) {
      if (p <= opt.alpha) ++hit;
      const auto b = std::min(opt.bins - 1, static_cast<std::size_t>(p * static_cast<double>(opt.bins)));
      row.histogram[b] += 1;
    }
    const double m = static_cast<double>(std::max<std::size_t>(row.reps, 1));
    for (auto& h : row.histogram) h /= m;
    row.rejection = static_cast<double>(hit) / m;
    row.se = std::sqrt(row.rejection * (1 - row.rejection) / m);
    if (opt.progress) opt.progress("num_z " + std::to_string(nz) + " rejection " + std::to_string(row.rejection));
    out.push_back(std::move(row));
  }
  return out;
}

void write_inflation_csv(const std::vector<InflationRow>& rows, std::ostream& out) {
  const std::size_t bins = rows.empty() ? 0 : rows[0].histogram.size();
  out << "num_z,reps,failed,rejection,se";
  for (std::size_t b = 0; b < bins; ++b) out << ",bin" << b;
  out << '\n';
  out.precision(10);
  for (const auto& r : rows) {
    out << r.num_z << ',' << r.reps << ',' << r.failed << ',' << r.rejection << ',' << r.se;
    for (double h : r.histogram) out << ',' << h;
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

RandomizationScheme task_scheme(const TaskDgp& d) {
  std::vector<FactorSpec> f;
  for (std::size_t k = 0; k < d.levels.size(); ++k) {
    FactorSpec s;
    s.name = "f" + std::to_string(k + 1);
    for (std::size_t l = 0; l < d.levels[k]; ++l) s.levels.push_back("l" + std::to_string(l + 1));
    f.push_back(std::move(s));
  }
  return RandomizationScheme::uniform(f);
}

ConjointDataset generate_tasks(const TaskDgp& d, std::uint64_t seed) {
  if (d.levels.empty()) throw ValidationError("at least one factor required");
  for (auto k : d.levels)
    if (k < 2) throw ValidationError("factors need at least two levels");
  std::vector<FactorSpec> factors;
  for (std::size_t k = 0; k < d.levels.size(); ++k) {
    FactorSpec s;
    s.name = "f" + std::to_string(k + 1);
    for (std::size_t l = 0; l < d.levels[k]; ++l) s.levels.push_back("l" + std::to_string(l + 1));
    factors.push_back(std::move(s));
  }
  const std::size_t p = factors.size(), rows = d.n * d.J;
  auto c = [&](std::size_t f, int k) { return static_cast<double>(k) / static_cast<double>(d.levels[f] - 1) - 0.5; };
  CounterRng rng(stream_key({seed, 0x7a5c}));
  LevelMatrix L(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(p));
  LevelMatrix R(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(p));
  std::vector<int> y(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    for (std::size_t f = 0; f < p; ++f) L(ri, static_cast<Eigen::Index>(f)) = static_cast<int>(rng.below(d.levels[f]));
    for (std::size_t f = 0; f < p; ++f) R(ri, static_cast<Eigen::Index>(f)) = static_cast<int>(rng.below(d.levels[f]));
    const std::size_t j = r % d.J;  // 0-based task
    double eta = 0;
    for (std::size_t f = 0; f < p; ++f) {
      double b = d.main;
      if (f == 0 && d.J > 1)
        b += d.fatigue_main * static_cast<double>(d.J - 1 - j) / static_cast<double>(d.J - 1);
      eta += b * (c(f, L(ri, static_cast<Eigen::Index>(f))) - c(f, R(ri, static_cast<Eigen::Index>(f))));
    }
    eta += d.order * c(0, L(ri, 0));
    if (j % 2 == 1) {
      const auto pr = ri - 1;
      eta += d.carryover * (c(0, L(pr, 0)) + c(0, R(pr, 0))) * (c(0, L(ri, 0)) - c(0, R(ri, 0)));
    }
    y[r] = eta + logistic_noise(rng) > 0 ? 1 : 0;
  }
  return make_dataset(std::move(factors), d.n, d.J, std::move(L), std::move(R), std::move(y), {0});
}

}  // namespace crt
