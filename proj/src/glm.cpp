#include "crt/glm.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "crt/errors.hpp"
#include "crt/rng.hpp"

namespace crt {

WaldTest wald_f_test(const Eigen::VectorXd& coef, const Eigen::MatrixXd& cov, const Eigen::MatrixXd& R,
                     const Eigen::VectorXd& r, double df2) {
  const Eigen::VectorXd d = R * coef - r;
  const Eigen::MatrixXd M = R * cov * R.transpose();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
  if (ldlt.info() != Eigen::Success) throw NumericalError("singular covariance in Wald test");
  const double q = static_cast<double>(R.rows());
  WaldTest w;
  w.df1 = q;
  w.df2 = df2;
  w.statistic = d.dot(ldlt.solve(d)) / q;
  if (!std::isfinite(w.statistic)) throw NumericalError("Wald statistic is not finite");
  if (df2 > 0) {
    boost::math::fisher_f_distribution<double> F(q, df2);
    w.p_value = boost::math::cdf(boost::math::complement(F, std::max(0.0, w.statistic)));
  } else {
    boost::math::chi_squared_distribution<double> C(q);
    w.p_value = boost::math::cdf(boost::math::complement(C, std::max(0.0, q * w.statistic)));
  }
  return w;
}

ClusteredOlsFit fit_ols_clustered(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<int>& clusters,
                                  const std::vector<std::string>& names) {
  const auto n = X.rows(), k = X.cols();
  if (n < k) throw ValidationError("OLS needs at least as many rows as columns");
  if (y.size() != n || static_cast<Eigen::Index>(clusters.size()) != n) throw ValidationError("OLS shape mismatch");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < k) {
    std::string msg = "rank-deficient design; aliased columns:";
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index i = qr.rank(); i < k; ++i) {
      const auto c = static_cast<std::size_t>(perm[i]);
      msg += " " + (c < names.size() ? names[c] : std::to_string(c));
    }
    throw ValidationError(msg);
  }
  ClusteredOlsFit fit;
  fit.coef = qr.solve(y);
  fit.residuals = y - X * fit.coef;
  const Eigen::MatrixXd bread = (X.transpose() * X).ldlt().solve(Eigen::MatrixXd::Identity(k, k));
  std::unordered_map<int, Eigen::Index> slot;
  for (int c : clusters) slot.emplace(c, static_cast<Eigen::Index>(slot.size()));
  fit.clusters = slot.size();
  if (fit.clusters < 2) throw ValidationError("need at least 2 clusters");
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(fit.clusters), k);
  for (Eigen::Index i = 0; i < n; ++i) S.row(slot[clusters[i]]) += X.row(i) * fit.residuals[i];
  const Eigen::MatrixXd meat = S.transpose() * S;
  fit.cov = bread * meat * bread;
  fit.cov = 0.5 * (fit.cov + fit.cov.transpose());
  fit.df = static_cast<double>(fit.clusters - 1);
  fit.se = fit.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  fit.t.resize(k);
  fit.p.resize(k);
  boost::math::students_t_distribution<double> T(fit.df);
  for (Eigen::Index j = 0; j < k; ++j) {
    fit.t[j] = fit.se[j] > 0 ? fit.coef[j] / fit.se[j] : 0.0;
    fit.p[j] = fit.se[j] > 0 ? 2 * boost::math::cdf(boost::math::complement(T, std::abs(fit.t[j]))) : 1.0;
  }
  return fit;
}

AmceResult amce_test(const ConjointDataset& ds, const std::string& target, const AmceOptions& opt) {
  const int t = ds.factor_index(target);
  if (t < 0) throw ValidationError("factor '" + target + "' absent");
  std::vector<std::size_t> extra;
  for (const auto& e : opt.extra_terms) {
    const int f = ds.factor_index(e);
    if (f < 0) throw ValidationError("factor '" + e + "' absent");
    if (f == t) throw ValidationError("extra term repeats the target factor");
    extra.push_back(static_cast<std::size_t>(f));
  }
  const auto& tf = ds.factors[t];
  const std::size_t Kt = tf.size();
  std::vector<std::string> names{"(Intercept)"};
  for (std::size_t k = 1; k < Kt; ++k) names.push_back(tf.name + "=" + tf.levels[k]);
  std::vector<std::size_t> extra_main_off, inter_off;
  for (auto e : extra) {
    const auto& ef = ds.factors[e];
    extra_main_off.push_back(names.size());
    for (std::size_t m = 1; m < ef.size(); ++m) names.push_back(ef.name + "=" + ef.levels[m]);
  }
  for (auto e : extra) {
    const auto& ef = ds.factors[e];
    inter_off.push_back(names.size());
    for (std::size_t k = 1; k < Kt; ++k)
      for (std::size_t m = 1; m < ef.size(); ++m)
        names.push_back(tf.name + "=" + tf.levels[k] + ":" + ef.name + "=" + ef.levels[m]);
  }
  const std::size_t N = ds.rows();
  const auto rows = static_cast<Eigen::Index>(2 * N);
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(names.size()));
  Eigen::VectorXd y(rows);
  std::vector<int> cl(2 * N);
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t r = 0; r < N; ++r) {
      const auto i = static_cast<Eigen::Index>(s * N + r);
      const auto& m = s == 0 ? ds.left : ds.right;
      y[i] = s == 0 ? ds.y[r] : 1 - ds.y[r];
      cl[i] = opt.cluster == ClusterBy::task ? static_cast<int>(r) : static_cast<int>(ds.respondent(r));
      X(i, 0) = 1;
      const int kt = m(r, t);
      if (kt > 0) X(i, kt) = 1;
      for (std::size_t e = 0; e < extra.size(); ++e) {
        const int ke = m(r, extra[e]);
        const std::size_t Ke = ds.factors[extra[e]].size();
        if (ke > 0) X(i, static_cast<Eigen::Index>(extra_main_off[e] + ke - 1)) = 1;
        if (ke > 0 && kt > 0)
          X(i, static_cast<Eigen::Index>(inter_off[e] + (kt - 1) * (Ke - 1) + ke - 1)) = 1;
      }
    }
  // Cells never observed (e.g. forbidden by a restriction) carry no information.
  std::vector<std::size_t> keep;
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    if (X.col(j).cwiseAbs().maxCoeff() > 0) keep.push_back(static_cast<std::size_t>(j));
  std::vector<long> new_pos(names.size(), -1);
  Eigen::MatrixXd Xk(rows, static_cast<Eigen::Index>(keep.size()));
  std::vector<std::string> kept_names;
  for (std::size_t j = 0; j < keep.size(); ++j) {
    Xk.col(static_cast<Eigen::Index>(j)) = X.col(static_cast<Eigen::Index>(keep[j]));
    new_pos[keep[j]] = static_cast<long>(j);
    kept_names.push_back(names[keep[j]]);
  }
  const auto fit = fit_ols_clustered(Xk, y, cl, kept_names);

  AmceResult res;
  res.names = kept_names;
  res.coef = fit.coef;
  res.cov = fit.cov;
  for (std::size_t k = 1; k < Kt; ++k)
    if (new_pos[k] >= 0) res.tested.push_back(static_cast<std::size_t>(new_pos[k]));
  for (std::size_t e = 0; e < extra.size(); ++e) {
    const std::size_t cnt = (Kt - 1) * (ds.factors[extra[e]].size() - 1);
    for (std::size_t i = 0; i < cnt; ++i)
      if (new_pos[inter_off[e] + i] >= 0) res.tested.push_back(static_cast<std::size_t>(new_pos[inter_off[e] + i]));
  }
  if (res.tested.empty()) throw ValidationError("target factor has no estimable coefficients");
  const auto P = static_cast<Eigen::Index>(keep.size());

  if (!opt.contrast_a.empty() || !opt.contrast_b.empty()) {
    auto amce_row = [&](std::size_t k) {
      Eigen::RowVectorXd a = Eigen::RowVectorXd::Zero(P);
      if (k == 0) return a;
      if (new_pos[k] >= 0) a[new_pos[k]] = 1;
      for (std::size_t e = 0; e < extra.size(); ++e) {
        const std::size_t Ke = ds.factors[extra[e]].size();
        for (std::size_t m = 1; m < Ke; ++m) {
          const long pos = new_pos[inter_off[e] + (k - 1) * (Ke - 1) + m - 1];
          if (pos >= 0) a[pos] += 1.0 / static_cast<double>(Ke);
        }
      }
      return a;
    };
    auto side = [&](const std::vector<std::string>& labels) {
      if (labels.empty()) throw ValidationError("contrast needs levels on both sides");
      Eigen::RowVectorXd a = Eigen::RowVectorXd::Zero(P);
      for (const auto& l : labels) {
        const int k = tf.level_index(l);
        if (k < 0) throw ValidationError("unknown level '" + l + "' of '" + tf.name + "'");
        a += amce_row(static_cast<std::size_t>(k));
      }
      return Eigen::RowVectorXd(a / static_cast<double>(labels.size()));
    };
    Eigen::MatrixXd R(1, P);
    R.row(0) = side(opt.contrast_a) - side(opt.contrast_b);
    res.estimate = (R * fit.coef)(0);
    res.test = wald_f_test(fit.coef, fit.cov, R, Eigen::VectorXd::Zero(1), fit.df);
  } else {
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(res.tested.size()), P);
    for (std::size_t i = 0; i < res.tested.size(); ++i) R(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(res.tested[i])) = 1;
    res.estimate = fit.coef[static_cast<Eigen::Index>(res.tested[0])];
    res.test = wald_f_test(fit.coef, fit.cov, R, Eigen::VectorXd::Zero(R.rows()), fit.df);
  }
  res.p_value = res.test.p_value;
  return res;
}

// ---------------------------------------------------------------------------

static double log1pexp(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
static double sigmoid(double x) { return x >= 0 ? 1 / (1 + std::exp(-x)) : std::exp(x) / (1 + std::exp(x)); }

LogisticFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::size_t max_iter, double tol) {
  const auto n = X.rows(), k = X.cols();
  if (n <= k) throw ValidationError("logistic regression needs more rows than columns");
  if (y.size() != n) throw ValidationError("logistic shape mismatch");
  LogisticFit fit;
  fit.coef = Eigen::VectorXd::Zero(k);
  auto loglik = [&](const Eigen::VectorXd& eta) {
    double s = 0;
    for (Eigen::Index i = 0; i < n; ++i) s += y[i] * eta[i] - log1pexp(eta[i]);
    return s;
  };
  Eigen::VectorXd eta = X * fit.coef;
  fit.loglik = loglik(eta);
  Eigen::MatrixXd H(k, k);
  Eigen::MatrixXd Xw(n, k);
  for (fit.iterations = 1; fit.iterations <= max_iter; ++fit.iterations) {
    Eigen::VectorXd p(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p[i] = sigmoid(eta[i]);
      w[i] = p[i] * (1 - p[i]);
    }
    fit.gradient = X.transpose() * (y - p);
    Xw = X.array().colwise() * w.array().sqrt();
    H.setZero();
    H.selfadjointView<Eigen::Lower>().rankUpdate(Xw.transpose());
    H = H.selfadjointView<Eigen::Lower>();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 1e-12 * ldlt.vectorD().maxCoeff())
      throw NumericalError("logistic information matrix is singular (rank-deficient design or separation)");
    fit.cov = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
    if (fit.gradient.cwiseAbs().maxCoeff() <= tol * static_cast<double>(n)) {
      fit.converged = true;
      break;
    }
    const Eigen::VectorXd step = ldlt.solve(fit.gradient);
    double s = 1;
    Eigen::VectorXd cand, eta_c;
    double ll = 0;
    for (int h = 0; h < 40; ++h, s /= 2) {
      cand = fit.coef + s * step;
      eta_c = X * cand;
      ll = loglik(eta_c);
      if (ll >= fit.loglik - 1e-12 * std::abs(fit.loglik)) break;
    }
    fit.coef = cand;
    eta = eta_c;
    fit.loglik = ll;
    if (eta.cwiseAbs().maxCoeff() > 35) throw NumericalError("complete separation detected");
  }
  if (!fit.converged) throw NumericalError("logistic regression did not converge");
  return fit;
}

WaldTest logistic_subset_test(const LogisticFit& fit, const std::vector<std::size_t>& subset, double df2) {
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(subset.size()), fit.coef.size());
  for (std::size_t i = 0; i < subset.size(); ++i) R(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(subset[i])) = 1;
  return wald_f_test(fit.coef, fit.cov, R, Eigen::VectorXd::Zero(R.rows()), df2);
}

// ---------------------------------------------------------------------------

Eigen::VectorXd LassoLogisticFit::original_coef() const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(beta.size());
  for (Eigen::Index j = 0; j < beta.size(); ++j)
    if (scale[j] > 0) out[j] = beta[j] / scale[j];
  return out;
}

double LassoLogisticFit::original_intercept() const {
  double b = intercept;
  for (Eigen::Index j = 0; j < beta.size(); ++j)
    if (scale[j] > 0) b -= beta[j] * center[j] / scale[j];
  return b;
}

namespace {

struct Standardized {
  Eigen::MatrixXd Xs;
  Eigen::VectorXd center, scale;
};

Standardized standardize(const Eigen::MatrixXd& X) {
  Standardized s;
  const double n = static_cast<double>(X.rows());
  s.center = X.colwise().mean().transpose();
  s.scale.resize(X.cols());
  s.Xs = X.rowwise() - s.center.transpose();
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double sd = std::sqrt(s.Xs.col(j).squaredNorm() / n);
    s.scale[j] = sd > 1e-12 ? sd : 0.0;
    if (s.scale[j] > 0)
      s.Xs.col(j) /= sd;
    else
      s.Xs.col(j).setZero();
  }
  return s;
}

double penalized_objective(const Eigen::VectorXd& y, const Eigen::VectorXd& eta, const Eigen::VectorXd& beta,
                           const std::vector<double>& pf, double lambda) {
  double nll = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) nll += log1pexp(eta[i]) - y[i] * eta[i];
  double pen = 0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) pen += pf[static_cast<std::size_t>(j)] * std::abs(beta[j]);
  return nll / static_cast<double>(y.size()) + lambda * pen;
}

// Intercept-only maximum likelihood with offset (1-d Newton).
double intercept_only(const Eigen::VectorXd& y, const Eigen::VectorXd& off) {
  const double ybar = y.mean();
  double b = std::log(std::max(ybar, 1e-12) / std::max(1 - ybar, 1e-12));
  for (int it = 0; it < 100; ++it) {
    double g = 0, h = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double p = sigmoid(off[i] + b);
      g += y[i] - p;
      h += p * (1 - p);
    }
    if (h <= 0) break;
    const double step = g / h;
    b += step;
    if (std::abs(step) < 1e-13) break;
  }
  return b;
}

LassoLogisticFit fit_standardized(const Standardized& S, const Eigen::VectorXd& y, double lambda,
                                  const LassoLogisticOptions& opt, const LassoLogisticFit* warm) {
  const auto n = S.Xs.rows(), P = S.Xs.cols();
  const double N = static_cast<double>(n);
  if (!(lambda >= 0) || !std::isfinite(lambda)) throw ValidationError("lambda must be finite and >= 0");
  const Eigen::VectorXd off = opt.offset.size() ? opt.offset : Eigen::VectorXd::Zero(n);
  std::vector<double> pf = opt.penalty_factor;
  if (pf.empty()) pf.assign(static_cast<std::size_t>(P), 1.0);
  LassoLogisticFit fit;
  fit.center = S.center;
  fit.scale = S.scale;
  fit.lambda = lambda;
  fit.beta = Eigen::VectorXd::Zero(P);
  fit.intercept = intercept_only(y, off);
  if (warm && warm->beta.size() == P) {
    fit.beta = warm->beta;
    fit.intercept = warm->intercept;
  }
  for (Eigen::Index j = 0; j < P; ++j)
    if (S.scale[j] == 0) fit.beta[j] = 0;
  Eigen::VectorXd eta = (off + S.Xs * fit.beta).array() + fit.intercept;
  fit.objective = penalized_objective(y, eta, fit.beta, pf, lambda);
  if (opt.record_trace) fit.objective_trace.push_back(fit.objective);
  Eigen::VectorXd w(n), r(n), a(P);
  for (fit.iterations = 1; fit.iterations <= opt.max_iter; ++fit.iterations) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = sigmoid(eta[i]);
      w[i] = std::max(p * (1 - p), 1e-5);
      r[i] = (y[i] - p) / w[i];
    }
    for (Eigen::Index j = 0; j < P; ++j) a[j] = S.scale[j] > 0 ? S.Xs.col(j).cwiseAbs2().dot(w) / N : 0.0;
    // coordinate descent on the weighted quadratic model
    Eigen::VectorXd nb = fit.beta;
    double nb0 = fit.intercept;
    const double wsum = w.sum();
    for (int sweep = 0; sweep < 1000; ++sweep) {
      double dmax = 0;
      const double d0 = r.dot(w) / wsum;
      nb0 += d0;
      r.array() -= d0;
      dmax = std::max(dmax, std::abs(d0));
      for (Eigen::Index j = 0; j < P; ++j) {
        if (a[j] <= 0) continue;
        const double g = S.Xs.col(j).cwiseProduct(w).dot(r) / N + a[j] * nb[j];
        const double thr = lambda * pf[static_cast<std::size_t>(j)];
        const double v = std::abs(g) <= thr ? 0.0 : (g - std::copysign(thr, g)) / a[j];
        const double d = v - nb[j];
        if (d != 0) {
          r -= d * S.Xs.col(j);
          nb[j] = v;
          dmax = std::max(dmax, std::abs(d) * std::sqrt(a[j]));
        }
      }
      if (dmax < 1e-10) break;
    }
    // backtracking along the proximal Newton direction keeps the true
    // penalized objective non-increasing
    const Eigen::VectorXd db = nb - fit.beta;
    const double dint = nb0 - fit.intercept;
    double s = 1, obj = 0;
    Eigen::VectorXd cb, ceta;
    bool moved = false;
    for (int h = 0; h < 40; ++h, s /= 2) {
      cb = fit.beta + s * db;
      ceta = (off + S.Xs * cb).array() + (fit.intercept + s * dint);
      obj = penalized_objective(y, ceta, cb, pf, lambda);
      if (obj <= fit.objective) {
        moved = true;
        break;
      }
    }
    const double old = fit.objective;
    if (moved) {
      fit.beta = cb;
      fit.intercept += s * dint;
      eta = ceta;
      fit.objective = obj;
    }
    if (opt.record_trace) fit.objective_trace.push_back(fit.objective);
    if (!moved || (old - fit.objective) <= opt.tol * std::max(1.0, std::abs(fit.objective))) {
      fit.converged = true;
      break;
    }
  }
  if (!std::isfinite(fit.objective)) throw NumericalError("lasso logistic objective is not finite");
  return fit;
}

}  // namespace

LassoLogisticFit fit_lasso_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                                    const LassoLogisticOptions& opt, const LassoLogisticFit* warm) {
  if (!X.allFinite() || !y.allFinite()) throw ValidationError("non-finite input to lasso logistic");
  if (y.size() != X.rows()) throw ValidationError("lasso logistic shape mismatch");
  return fit_standardized(standardize(X), y, lambda, opt, warm);
}

double lasso_logistic_lambda_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const LassoLogisticOptions& opt) {
  const auto S = standardize(X);
  const Eigen::VectorXd off = opt.offset.size() ? opt.offset : Eigen::VectorXd::Zero(X.rows());
  const double b = intercept_only(y, off);
  Eigen::VectorXd res(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) res[i] = y[i] - sigmoid(off[i] + b);
  const Eigen::VectorXd g = (S.Xs.transpose() * res).cwiseAbs() / static_cast<double>(X.rows());
  double lmax = 0;
  for (Eigen::Index j = 0; j < g.size(); ++j) {
    const double pf = opt.penalty_factor.empty() ? 1.0 : opt.penalty_factor[static_cast<std::size_t>(j)];
    if (pf > 0) lmax = std::max(lmax, g[j] / pf);
  }
  return lmax;
}

Eigen::VectorXd predict_link(const LassoLogisticFit& fit, const Eigen::MatrixXd& X, const Eigen::VectorXd& offset) {
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(X.rows(), fit.intercept);
  if (offset.size()) eta += offset;
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    if (fit.scale[j] > 0 && fit.beta[j] != 0) eta += ((X.col(j).array() - fit.center[j]) / fit.scale[j] * fit.beta[j]).matrix();
  return eta;
}

LassoCv cv_lasso_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<int>& clusters,
                          const LassoLogisticOptions& opt, const LassoCvOptions& cv) {
  if (cv.folds < 2) throw ValidationError("cv folds must be at least 2");
  std::vector<int> ids(clusters.begin(), clusters.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < cv.folds) throw ValidationError("fewer respondents than cross-validation folds");
  CounterRng rng(stream_key({cv.seed, 0x1a55c0ULL}));
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
  std::unordered_map<int, std::size_t> fold;
  for (std::size_t i = 0; i < ids.size(); ++i) fold[ids[i]] = i % cv.folds;

  LassoCv out;
  const double lmax = std::max(lasso_logistic_lambda_max(X, y, opt), 1e-10);
  const std::size_t nl = std::max<std::size_t>(cv.grid_size, 2);
  for (std::size_t i = 0; i < nl; ++i)
    out.lambdas.push_back(lmax * std::pow(cv.grid_ratio, -static_cast<double>(i) / static_cast<double>(nl - 1)));
  out.cv_deviance.assign(nl, 0.0);
  for (std::size_t f = 0; f < cv.folds; ++f) {
    std::vector<Eigen::Index> tr, te;
    for (Eigen::Index i = 0; i < X.rows(); ++i) (fold[clusters[static_cast<std::size_t>(i)]] == f ? te : tr).push_back(i);
    const Eigen::MatrixXd Xtr = X(tr, Eigen::all), Xte = X(te, Eigen::all);
    const Eigen::VectorXd ytr = y(tr), yte = y(te);
    LassoLogisticOptions o = opt;
    Eigen::VectorXd offte;
    if (opt.offset.size()) {
      o.offset = opt.offset(tr);
      offte = opt.offset(te);
    }
    const auto S = standardize(Xtr);
    LassoLogisticFit prev;
    for (std::size_t i = 0; i < nl; ++i) {
      auto fit = fit_standardized(S, ytr, out.lambdas[i], o, i ? &prev : nullptr);
      const Eigen::VectorXd eta = predict_link(fit, Xte, offte);
      double dev = 0;
      for (Eigen::Index k = 0; k < eta.size(); ++k) dev += 2 * (log1pexp(eta[k]) - yte[k] * eta[k]);
      out.cv_deviance[i] += dev;
      prev = std::move(fit);
    }
  }
  for (auto& d : out.cv_deviance) d /= static_cast<double>(X.rows());
  out.best = static_cast<std::size_t>(std::min_element(out.cv_deviance.begin(), out.cv_deviance.end()) -
                                      out.cv_deviance.begin());
  out.lambda_selected = out.lambdas[out.best];
  return out;
}

}  // namespace crt
