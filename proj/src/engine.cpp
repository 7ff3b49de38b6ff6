#include "crt/engine.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <json.hpp>
#include <mutex>
#include <thread>

#include "crt/errors.hpp"
#include "crt/rng.hpp"
#include "crt/stat_util.hpp"

namespace crt {

std::string CrtResult::p_value_string() const {
  return std::to_string(p_numerator) + "/" + std::to_string(p_denominator);
}

void set_p_value(CrtResult& r) {
  std::uint64_t ge = 0;
  for (double t : r.resampled_statistics)
    if (t >= r.observed_statistic) ++ge;
  r.B = r.resampled_statistics.size();
  r.p_numerator = 1 + ge;
  r.p_denominator = r.B + 1;
}

CrtResult run_crt(const std::function<double()>& observed, const std::function<double(std::size_t)>& resampled,
                  std::size_t B, std::size_t workers) {
  if (B < 1) throw ValidationError("B must be at least 1");
  if (workers < 1) throw ValidationError("workers must be at least 1");
  const auto t0 = std::chrono::steady_clock::now();
  CrtResult r;
  r.observed_statistic = observed();
  if (std::isnan(r.observed_statistic)) throw NumericalError("observed statistic is NaN");
  r.resampled_statistics.assign(B, 0.0);
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t err_b = B + 1;
  std::exception_ptr err;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= B) return;
      try {
        const double t = resampled(i + 1);
        if (std::isnan(t)) throw NumericalError("statistic is NaN for resample " + std::to_string(i + 1));
        r.resampled_statistics[i] = t;
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (i < err_b) {
          err_b = i;
          err = std::current_exception();
        }
        next.store(B);
      }
    }
  };
  const std::size_t nt = std::min(workers, B);
  if (nt == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < nt; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (err) std::rethrow_exception(err);
  set_p_value(r);
  r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

void check_compatible(ResampleKind plan, StatisticKind stat) {
  if (required_resample(stat) == plan) return;
  if (plan == ResampleKind::coarsened && stat == StatisticKind::lasso_main) return;
  throw ValidationError(std::string("statistic '") + to_string(stat) + "' is incompatible with resampling plan '" +
                        to_string(plan) + "'");
}

CrtResult run_crt(const ConjointDataset& ds, const RandomizationScheme& scheme, const ResamplePlan& plan,
                  const StatisticSpec& spec) {
  check_compatible(plan.kind, spec.kind);
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t seed = plan.master_seed;
  std::unique_ptr<Statistic> stat;
  CrtResult r;
  std::vector<std::string> notes;
  switch (plan.kind) {
    case ResampleKind::main: {
      const ConditionalSampler sampler(ds, scheme);
      stat = make_statistic(spec, ds);
      r = run_crt([&] { return (*stat)(ds); }, [&](std::size_t b) { return (*stat)(sampler.draw(ds, seed, b)); },
                  plan.B, plan.workers);
      break;
    }
    case ResampleKind::coarsened: {
      if (!spec.coarsening) throw ValidationError("coarsened test needs a coarsening specification");
      const CoarsenedSampler sampler(ds, scheme, *spec.coarsening);
      stat = make_statistic(spec, sampler.observed());
      r = run_crt([&] { return (*stat)(sampler.observed()); },
                  [&](std::size_t b) { return (*stat)(sampler.draw(seed, b)); }, plan.B, plan.workers);
      break;
    }
    case ResampleKind::order: {
      stat = make_statistic(spec, ds);
      r = run_crt([&] { return (*stat)(ds); }, [&](std::size_t b) { return (*stat)(sample_order_swap(ds, b, seed)); },
                  plan.B, plan.workers);
      break;
    }
    case ResampleKind::carryover: {
      bool dropped = false;
      const ConjointDataset even = trim_to_even_tasks(ds, &dropped);
      if (dropped) notes.push_back("dropping final task");
      stat = make_statistic(spec, even);
      r = run_crt([&] { return (*stat)(even); },
                  [&](std::size_t b) { return (*stat)(sample_carryover(even, scheme, b, seed)); }, plan.B,
                  plan.workers);
      break;
    }
    case ResampleKind::fatigue: {
      if (ds.J < 2) throw ValidationError("fatigue test requires J ≥ 2");
      stat = make_statistic(spec, ds);
      r = run_crt([&] { return (*stat)(ds); },
                  [&](std::size_t b) { return (*stat)(sample_fatigue_permutation(ds, b, seed)); }, plan.B,
                  plan.workers);
      break;
    }
  }
  r.master_seed = seed;
  r.resample = plan.kind;
  r.spec = spec;
  r.lambda = stat->lambda();
  r.notes = notes;
  r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

static nlohmann::ordered_json options_json(const StatisticOptions& o) {
  nlohmann::ordered_json j;
  j["I"] = o.I;
  j["lambda"] = o.lambda;
  j["cv_folds"] = o.cv_folds;
  j["grid_size"] = o.grid_size;
  j["grid_ratio"] = o.grid_ratio;
  j["cv_per_resample"] = o.cv_per_resample;
  j["include_v"] = o.include_v;
  j["extra_main"] = nlohmann::ordered_json::array();
  for (const auto& [a, b] : o.extra_main) j["extra_main"].push_back(a + ":" + b);
  if (!o.screen_variable.empty()) j["screen_variable"] = o.screen_variable;
  if (!o.tested_levels.empty()) j["tested_levels"] = o.tested_levels;
  j["cv_seed"] = o.cv_seed;
  j["tol"] = o.tol;
  return j;
}

std::string to_json(const CrtResult& r, int indent) {
  nlohmann::ordered_json j;
  j["statistic"]["kind"] = to_string(r.spec.kind);
  j["statistic"]["target"] = r.spec.target;
  j["statistic"]["options"] = options_json(r.spec.options);
  if (r.spec.coarsening) {
    j["statistic"]["coarsening"]["name"] = r.spec.coarsening->name;
    j["statistic"]["coarsening"]["tested_group"] = r.spec.coarsening->tested_group;
    j["statistic"]["coarsening"]["members"] = r.spec.coarsening->group_members();
  }
  j["resample"] = to_string(r.resample);
  j["B"] = r.B;
  j["master_seed"] = r.master_seed;
  j["lambda"] = r.lambda;
  j["observed_statistic"] = r.observed_statistic;
  j["resampled_statistics"] = r.resampled_statistics;
  j["p_value"] = r.p_value_string();
  j["p_value_numeric"] = r.p_value();
  if (!r.notes.empty()) j["notes"] = r.notes;
  j["wall_time"] = r.wall_time;
  return j.dump(indent);
}

double ValidityResult::rejection_at(double alpha) const {
  std::size_t c = 0;
  for (double p : p_values)
    if (p <= alpha) ++c;
  return p_values.empty() ? 0.0 : static_cast<double>(c) / static_cast<double>(p_values.size());
}

ValidityResult summarize_p_values(std::vector<double> p_values, std::vector<double> alphas) {
  ValidityResult v;
  v.p_values = std::move(p_values);
  v.alphas = std::move(alphas);
  for (double a : v.alphas) v.rejection.push_back(v.rejection_at(a));
  if (!v.p_values.empty()) {
    v.ks_one_sided_p = ks_uniform_one_sided(v.p_values).p_value;
    v.ks_two_sided_p = ks_uniform_two_sided(v.p_values).p_value;
  }
  return v;
}

ValidityResult run_validity_suite(const std::function<ConjointDataset(std::size_t)>& dgp,
                                  const RandomizationScheme& scheme, const ResamplePlan& plan,
                                  const StatisticSpec& spec, std::size_t reps) {
  std::vector<double> ps;
  for (std::size_t rep = 0; rep < reps; ++rep) {
    ResamplePlan p = plan;
    p.master_seed = stream_key({plan.master_seed, rep});
    ps.push_back(run_crt(dgp(rep), scheme, p, spec).p_value());
  }
  return summarize_p_values(std::move(ps));
}

}  // namespace crt
