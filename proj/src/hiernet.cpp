#include "crt/hiernet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "crt/errors.hpp"
#include "crt/rng.hpp"

namespace crt {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Each group is treated as a small table: categorical groups index it by
// level with weight 1, numeric groups use level 0 and weight = standardized
// value. S(k, a) is the standardized value of column a at level k.
struct Layout {
  std::size_t N = 0, G = 0, P = 0;
  std::vector<std::size_t> K, off;
  std::vector<int> lev;
  std::vector<double> w;
  std::vector<Eigen::MatrixXd> S;
  Eigen::VectorXd center, scale;
  std::vector<char> active;
};

Layout make_layout(const DesignMatrix& dm, const Eigen::VectorXd* center, const Eigen::VectorXd* scale) {
  Layout L;
  L.N = dm.rows();
  L.G = dm.num_groups();
  L.P = dm.cols();
  const double n = static_cast<double>(L.N);
  if (center) {
    L.center = *center;
    L.scale = *scale;
  } else {
    L.center = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.P));
    L.scale = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.P));
    for (std::size_t g = 0; g < L.G; ++g) {
      const auto& grp = dm.group(g);
      if (grp.numeric) {
        double m = 0, v = 0;
        for (std::size_t r = 0; r < L.N; ++r) m += dm.value(r, g);
        m /= n;
        for (std::size_t r = 0; r < L.N; ++r) v += (dm.value(r, g) - m) * (dm.value(r, g) - m);
        L.center[grp.offset] = m;
        L.scale[grp.offset] = std::sqrt(v / n);
      } else {
        std::vector<double> cnt(grp.levels, 0.0);
        for (std::size_t r = 0; r < L.N; ++r) cnt[dm.level(r, g)] += 1;
        for (std::size_t k = 0; k < grp.levels; ++k) {
          const double mu = cnt[k] / n;
          L.center[grp.offset + k] = mu;
          L.scale[grp.offset + k] = std::sqrt(std::max(0.0, mu * (1 - mu)));
        }
      }
    }
  }
  L.active.assign(L.P, 0);
  for (std::size_t a = 0; a < L.P; ++a) L.active[a] = L.scale[a] > 1e-10 ? 1 : 0;
  L.K.resize(L.G);
  L.off.resize(L.G);
  L.S.resize(L.G);
  for (std::size_t g = 0; g < L.G; ++g) {
    const auto& grp = dm.group(g);
    L.off[g] = grp.offset;
    L.K[g] = grp.width();
    const auto K = static_cast<Eigen::Index>(L.K[g]);
    L.S[g] = Eigen::MatrixXd::Zero(K, K);
    if (grp.numeric) {
      L.S[g](0, 0) = L.active[grp.offset] ? 1.0 : 0.0;
    } else {
      for (Eigen::Index a = 0; a < K; ++a) {
        if (!L.active[grp.offset + a]) continue;
        const double mu = L.center[grp.offset + a], sd = L.scale[grp.offset + a];
        for (Eigen::Index k = 0; k < K; ++k) L.S[g](k, a) = ((k == a ? 1.0 : 0.0) - mu) / sd;
      }
    }
  }
  L.lev.assign(L.N * L.G, 0);
  L.w.assign(L.N * L.G, 1.0);
  for (std::size_t r = 0; r < L.N; ++r)
    for (std::size_t g = 0; g < L.G; ++g) {
      const auto& grp = dm.group(g);
      if (grp.numeric) {
        const std::size_t a = grp.offset;
        L.w[r * L.G + g] = L.active[a] ? (dm.value(r, g) - L.center[a]) / L.scale[a] : 0.0;
      } else {
        L.lev[r * L.G + g] = dm.level(r, g);
      }
    }
  return L;
}

struct Pairs {
  std::vector<int> g, h;
  std::vector<std::size_t> coff;
  std::size_t total = 0;
  std::vector<int> id;  // G*G
};

std::vector<char> resolve_mode(const Layout& L, const std::vector<char>& mode) {
  if (mode.empty()) return std::vector<char>(L.G, group_free);
  if (mode.size() != L.G) throw ValidationError("group mode length does not match design groups");
  return mode;
}

Pairs make_pairs(const Layout& L, const std::vector<char>& mode) {
  Pairs P;
  P.id.assign(L.G * L.G, -1);
  for (std::size_t g = 0; g < L.G; ++g)
    for (std::size_t h = g + 1; h < L.G; ++h) {
      if (mode[g] == group_zero || mode[h] == group_zero) continue;
      if (mode[g] == group_interaction_only && mode[h] == group_interaction_only) continue;
      P.id[g * L.G + h] = P.id[h * L.G + g] = static_cast<int>(P.g.size());
      P.g.push_back(static_cast<int>(g));
      P.h.push_back(static_cast<int>(h));
      P.coff.push_back(P.total);
      P.total += L.K[g] * L.K[h];
    }
  return P;
}

// Cm[col] = sum_r res_r * w_rg [lev_rg == k]; Cp likewise for each listed pair.
void accumulate(const Layout& L, const Pairs& PI, const std::vector<int>& plist, const double* res,
                std::vector<double>& Cm, std::vector<double>& Cp) {
  std::fill(Cm.begin(), Cm.end(), 0.0);
  for (int p : plist) std::fill_n(&Cp[PI.coff[p]], L.K[PI.g[p]] * L.K[PI.h[p]], 0.0);
  const std::size_t G = L.G, np = plist.size();
  std::vector<int> pg(np), ph(np), pk(np);
  std::vector<double*> pc(np);
  for (std::size_t i = 0; i < np; ++i) {
    pg[i] = PI.g[plist[i]];
    ph[i] = PI.h[plist[i]];
    pk[i] = static_cast<int>(L.K[ph[i]]);
    pc[i] = &Cp[PI.coff[plist[i]]];
  }
  std::vector<double*> mc(G);
  for (std::size_t g = 0; g < G; ++g) mc[g] = &Cm[L.off[g]];
  for (std::size_t r = 0; r < L.N; ++r) {
    const int* lv = &L.lev[r * G];
    const double* wv = &L.w[r * G];
    const double rr = res[r];
    for (std::size_t g = 0; g < G; ++g) mc[g][lv[g]] += rr * wv[g];
    for (std::size_t i = 0; i < np; ++i) pc[i][lv[pg[i]] * pk[i] + lv[ph[i]]] += rr * wv[pg[i]] * wv[ph[i]];
  }
}

struct Params {
  Eigen::VectorXd bp, bn;
  Eigen::MatrixXd th;
};

void combine(Params& out, const Params& a, double ca, const Params& b, double cb, const Params& c, double cc) {
  out.bp = ca * a.bp + cb * b.bp + cc * c.bp;
  out.bn = ca * a.bn + cb * b.bn + cc * c.bn;
  out.th = ca * a.th + cb * b.th + cc * c.th;
}

template <class M>
auto blk(const Layout& L, M& m, int g, int h) {
  return m.block(static_cast<Eigen::Index>(L.off[g]), static_cast<Eigen::Index>(L.off[h]),
                 static_cast<Eigen::Index>(L.K[g]), static_cast<Eigen::Index>(L.K[h]));
}

class Solver {
 public:
  Solver(const DesignMatrix& dm, const std::vector<double>& y, double lambda, const HierNetConfig& cfg,
         const std::vector<char>* mode)
      : L_(make_layout(dm, nullptr, nullptr)), lambda_(lambda), cfg_(cfg) {
    if (y.size() != L_.N) throw ValidationError("response length does not match design rows");
    if (L_.N == 0) throw ValidationError("empty design matrix");
    if (!(lambda >= 0) || !std::isfinite(lambda)) throw ValidationError("lambda must be finite and >= 0");
    for (double v : y)
      if (!std::isfinite(v)) throw ValidationError("non-finite response");
    const auto N = static_cast<double>(L_.N);
    ybar_ = std::accumulate(y.begin(), y.end(), 0.0) / N;
    yc_.resize(L_.N);
    for (std::size_t r = 0; r < L_.N; ++r) yc_[r] = y[r] - ybar_;
    mode_ = resolve_mode(L_, mode ? *mode : cfg.group_mode);
    free_.assign(L_.P, 0);
    main_.assign(L_.P, 0);
    for (std::size_t g = 0; g < L_.G; ++g)
      for (std::size_t k = 0; k < L_.K[g]; ++k) {
        const bool act = L_.active[L_.off[g] + k];
        free_[L_.off[g] + k] = static_cast<char>(mode_[g] != group_zero && act);
        main_[L_.off[g] + k] = static_cast<char>(mode_[g] == group_free && act);
      }
    PI_ = make_pairs(L_, mode_);
    all_.resize(PI_.g.size());
    std::iota(all_.begin(), all_.end(), 0);
    Cm_.assign(L_.P, 0.0);
    Cp_.assign(PI_.total, 0.0);
    const auto P = static_cast<Eigen::Index>(L_.P);
    pair_mean_ = Eigen::MatrixXd::Zero(P, P);
    std::vector<double> ones(L_.N, 1.0);
    accumulate(L_, PI_, all_, ones.data(), Cm_, Cp_);
    for (std::size_t p = 0; p < all_.size(); ++p) {
      const int g = PI_.g[p], h = PI_.h[p];
      Eigen::Map<RowMat> C(&Cp_[PI_.coff[p]], static_cast<Eigen::Index>(L_.K[g]), static_cast<Eigen::Index>(L_.K[h]));
      Eigen::MatrixXd M = L_.S[g].transpose() * C * L_.S[h] / N;
      blk(L_, pair_mean_, g, h) = M;
      blk(L_, pair_mean_, h, g) = M.transpose();
    }
    alpha_ = Eigen::VectorXd::Zero(P);
    rows_.resize(L_.P);
  }

  HierNetFit run(const HierNetFit* warm) {
    const auto P = static_cast<Eigen::Index>(L_.P);
    Params x{Eigen::VectorXd::Zero(P), Eigen::VectorXd::Zero(P), Eigen::MatrixXd::Zero(P, P)};
    inW_.assign(PI_.g.size(), 0);
    W_.clear();
    Lip_ = 1.0;
    if (warm) {
      if (warm->beta_pos.size() != P || warm->theta.rows() != P)
        throw ValidationError("warm start has a different column layout");
      Lip_ = std::max(warm->lipschitz, 1e-3);
      for (Eigen::Index a = 0; a < P; ++a) {
        if (!main_[a]) continue;
        x.bp[a] = warm->beta_pos[a];
        x.bn[a] = warm->beta_neg[a];
      }
      for (std::size_t p = 0; p < all_.size(); ++p) {
        const int g = PI_.g[p], h = PI_.h[p];
        Eigen::MatrixXd B = blk(L_, warm->theta, g, h);
        for (Eigen::Index i = 0; i < B.rows(); ++i)
          for (Eigen::Index j = 0; j < B.cols(); ++j)
            if (!free_[L_.off[g] + i] || !free_[L_.off[h] + j]) B(i, j) = 0;
        if (B.cwiseAbs().maxCoeff() > 0) {
          blk(L_, x.th, g, h) = B;
          blk(L_, x.th, h, g) = B.transpose();
          add_to_working_set(static_cast<int>(p));
        }
      }
      repair(x);
    }

    std::vector<double> pred(L_.N);
    predict_into(x, W_, pred);
    double Fx = objective(x, pred);
    trace_.clear();
    if (cfg_.record_trace) trace_.push_back(Fx);
    std::size_t iters = 0;
    bool converged = false;
    for (int outer = 0; outer < 50; ++outer) {
      converged = mfista(x, pred, Fx, iters);
      // Full-gradient check: one prox step over every pair from x; any pair
      // outside the working set that moves off zero joins it.
      std::vector<double> res(L_.N);
      for (std::size_t r = 0; r < L_.N; ++r) res[r] = yc_[r] - pred[r];
      Eigen::VectorXd gb;
      Eigen::MatrixXd GT;
      gradient(res, all_, gb, GT);
      Params z;
      prox_step(x, gb, GT, all_, z);
      bool added = false;
      for (std::size_t p = 0; p < all_.size(); ++p) {
        if (inW_[p]) continue;
        if (blk(L_, z.th, PI_.g[p], PI_.h[p]).cwiseAbs().maxCoeff() > 0) {
          add_to_working_set(static_cast<int>(p));
          added = true;
        }
      }
      if (!added || iters >= cfg_.max_iter) break;
      converged = false;
    }

    HierNetFit fit;
    fit.beta_pos = x.bp;
    fit.beta_neg = x.bn;
    fit.theta = x.th;
    fit.center = L_.center;
    fit.scale = L_.scale;
    fit.pair_mean = pair_mean_;
    fit.intercept = ybar_;
    fit.lambda = lambda_;
    fit.converged = converged;
    fit.iterations = iters;
    fit.objective = Fx;
    fit.lipschitz = Lip_;
    fit.objective_trace = trace_;
    fit.group_mode = mode_;
    return fit;
  }

 private:
  void add_to_working_set(int p) {
    if (inW_[p]) return;
    inW_[p] = 1;
    W_.push_back(p);
  }

  void predict_into(const Params& x, const std::vector<int>& plist, std::vector<double>& pred) const {
    const std::size_t G = L_.G;
    std::vector<double> Mt(L_.P);
    const Eigen::VectorXd beta = x.bp - x.bn;
    for (std::size_t g = 0; g < G; ++g) {
      const auto K = static_cast<Eigen::Index>(L_.K[g]);
      Eigen::Map<Eigen::VectorXd>(&Mt[L_.off[g]], K) = L_.S[g] * beta.segment(static_cast<Eigen::Index>(L_.off[g]), K);
    }
    std::vector<int> pg, ph, pk;
    std::vector<std::vector<double>> tabs;
    double c0 = 0;
    for (int p : plist) {
      const int g = PI_.g[p], h = PI_.h[p];
      auto B = blk(L_, x.th, g, h);
      if (B.cwiseAbs().maxCoeff() == 0) continue;
      c0 += B.cwiseProduct(blk(L_, pair_mean_, g, h)).sum();
      RowMat T = L_.S[g] * B * L_.S[h].transpose();
      tabs.emplace_back(T.data(), T.data() + T.size());
      pg.push_back(g);
      ph.push_back(h);
      pk.push_back(static_cast<int>(L_.K[h]));
    }
    const std::size_t np = tabs.size();
    std::vector<const double*> tp(np);
    for (std::size_t i = 0; i < np; ++i) tp[i] = tabs[i].data();
    std::vector<const double*> mp(G);
    for (std::size_t g = 0; g < G; ++g) mp[g] = &Mt[L_.off[g]];
    for (std::size_t r = 0; r < L_.N; ++r) {
      const int* lv = &L_.lev[r * G];
      const double* wv = &L_.w[r * G];
      double s = -c0;
      for (std::size_t g = 0; g < G; ++g) s += mp[g][lv[g]] * wv[g];
      for (std::size_t i = 0; i < np; ++i) s += tp[i][lv[pg[i]] * pk[i] + lv[ph[i]]] * wv[pg[i]] * wv[ph[i]];
      pred[r] = s;
    }
  }

  // Gradient of (1/2N)||yc - pred||^2 with respect to beta and theta (theta
  // blocks of the listed pairs, stored in both triangles).
  void gradient(const std::vector<double>& res, const std::vector<int>& plist, Eigen::VectorXd& gb,
                Eigen::MatrixXd& GT) {
    const auto P = static_cast<Eigen::Index>(L_.P);
    const double N = static_cast<double>(L_.N);
    accumulate(L_, PI_, plist, res.data(), Cm_, Cp_);
    const double rsum = std::accumulate(res.begin(), res.end(), 0.0);
    gb.resize(P);
    for (std::size_t g = 0; g < L_.G; ++g) {
      const auto K = static_cast<Eigen::Index>(L_.K[g]);
      gb.segment(static_cast<Eigen::Index>(L_.off[g]), K) =
          -(L_.S[g].transpose() * Eigen::Map<Eigen::VectorXd>(&Cm_[L_.off[g]], K)) / N;
    }
    GT = Eigen::MatrixXd::Zero(P, P);
    for (int p : plist) {
      const int g = PI_.g[p], h = PI_.h[p];
      Eigen::Map<RowMat> C(&Cp_[PI_.coff[p]], static_cast<Eigen::Index>(L_.K[g]), static_cast<Eigen::Index>(L_.K[h]));
      Eigen::MatrixXd B = -(L_.S[g].transpose() * C * L_.S[h]) / N + blk(L_, pair_mean_, g, h) * (rsum / N);
      blk(L_, GT, g, h) = B;
      blk(L_, GT, h, g) = B.transpose();
    }
  }

  double penalty(const Params& x) const {
    double s = 0;
    for (std::size_t a = 0; a < L_.P; ++a) s += x.bp[a] + x.bn[a];
    for (int p : W_) s += blk(L_, x.th, PI_.g[p], PI_.h[p]).cwiseAbs().sum();
    return s;
  }

  double loss(const std::vector<double>& pred) const {
    double s = 0;
    for (std::size_t r = 0; r < L_.N; ++r) s += (yc_[r] - pred[r]) * (yc_[r] - pred[r]);
    return s / (2.0 * static_cast<double>(L_.N));
  }

  double objective(const Params& x, const std::vector<double>& pred) const {
    return loss(pred) + lambda_ * penalty(x);
  }

  // Raise beta_pos and beta_neg equally wherever the hierarchy budget is short;
  // beta itself (hence the loss) is unchanged.
  void repair(Params& x) const {
    for (std::size_t a = 0; a < L_.P; ++a) {
      if (!main_[a]) continue;
      const double used = x.th.row(static_cast<Eigen::Index>(a)).cwiseAbs().sum();
      const double excess = used - (x.bp[a] + x.bn[a]);
      if (excess > 0) {
        x.bp[a] += excess / 2;
        x.bn[a] += excess / 2;
      }
    }
  }

  // Projection-type step: argmin over the hierarchy-feasible set of
  // (1/2t)||w - (x - t grad)||^2 + lambda * penalty(w), solved through its dual.
  void prox_step(const Params& y, const Eigen::VectorXd& gb, const Eigen::MatrixXd& GT,
                 const std::vector<int>& plist, Params& z) {
    const double t = 1.0 / Lip_;
    const double tl = t * lambda_;
    const Eigen::VectorXd cp = y.bp - t * gb;
    const Eigen::VectorXd cn = y.bn + t * gb;
    const auto P = static_cast<Eigen::Index>(L_.P);
    for (auto& row : rows_) row.clear();
    for (int p : plist) {
      const int g = PI_.g[p], h = PI_.h[p];
      for (std::size_t i = 0; i < L_.K[g]; ++i) {
        const std::size_t a = L_.off[g] + i;
        if (!free_[a]) continue;
        for (std::size_t j = 0; j < L_.K[h]; ++j) {
          const std::size_t b = L_.off[h] + j;
          if (!free_[b]) continue;
          const double u = y.th(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) -
                           t * GT(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
          if (std::abs(u) <= tl) continue;
          rows_[a].push_back({static_cast<int>(b), u});
          rows_[b].push_back({static_cast<int>(a), u});
        }
      }
    }
    std::vector<int> live;
    for (std::size_t a = 0; a < L_.P; ++a) {
      if (rows_[a].empty() || !main_[a])
        alpha_[static_cast<Eigen::Index>(a)] = 0;
      else
        live.push_back(static_cast<int>(a));
    }
    for (int sweep = 0; sweep < 1000 && !live.empty(); ++sweep) {
      double change = 0, amax = 0;
      for (int a : live) {
        const double na = solve_row(a, cp[a] - tl, cn[a] - tl, tl);
        change = std::max(change, std::abs(na - alpha_[a]));
        alpha_[a] = na;
        amax = std::max(amax, na);
      }
      if (change <= 1e-15 + 1e-13 * amax) break;
    }
    z.bp = Eigen::VectorXd::Zero(P);
    z.bn = Eigen::VectorXd::Zero(P);
    z.th = Eigen::MatrixXd::Zero(P, P);
    for (Eigen::Index a = 0; a < P; ++a) {
      if (!main_[a]) continue;
      z.bp[a] = std::max(0.0, cp[a] - tl + alpha_[a]);
      z.bn[a] = std::max(0.0, cn[a] - tl + alpha_[a]);
    }
    for (Eigen::Index a = 0; a < P; ++a)
      for (const auto& e : rows_[a]) {
        if (e.b < a) continue;
        const double mag = std::abs(e.u) - tl - alpha_[a] - alpha_[e.b];
        if (mag <= 0) continue;
        const double v = std::copysign(mag, e.u);
        z.th(a, e.b) = v;
        z.th(e.b, a) = v;
      }
    repair(z);
  }

  // Root in alpha >= 0 of
  //   sum_b (|u_ab| - tl - alpha_b - alpha)_+ = (cpa + alpha)_+ + (cna + alpha)_+.
  double solve_row(int a, double cpa, double cna, double tl) {
    events_.clear();
    double val = -std::max(0.0, cpa) - std::max(0.0, cna);
    double slope = -(cpa > 0 ? 1.0 : 0.0) - (cna > 0 ? 1.0 : 0.0);
    for (const auto& e : rows_[a]) {
      const double ex = std::abs(e.u) - tl - alpha_[e.b];
      if (ex <= 0) continue;
      val += ex;
      slope -= 1;
      events_.push_back({ex, 1.0});
    }
    if (val <= 0) return 0.0;
    if (cpa < 0) events_.push_back({-cpa, -1.0});
    if (cna < 0) events_.push_back({-cna, -1.0});
    std::sort(events_.begin(), events_.end(), [](const Event& x, const Event& y) { return x.pos < y.pos; });
    double cur = 0;
    for (const auto& ev : events_) {
      const double v = val + slope * (ev.pos - cur);
      if (v <= 0) return cur - val / slope;
      cur = ev.pos;
      val = v;
      slope += ev.delta;
    }
    return cur - val / slope;
  }

  // Monotone FISTA over the working set. Returns true on convergence.
  bool mfista(Params& x, std::vector<double>& pred_x, double& Fx, std::size_t& iters) {
    Params xprev = x, y = x, z, gstep;
    std::vector<double> pred_prev = pred_x, pred_y = pred_x, pred_z(L_.N), res(L_.N);
    double t = 1;
    int streak = 0, rejects = 0;
    Eigen::VectorXd gb;
    Eigen::MatrixXd GT;
    while (iters < cfg_.max_iter) {
      ++iters;
      for (std::size_t r = 0; r < L_.N; ++r) res[r] = yc_[r] - pred_y[r];
      const double fy = loss(pred_y);
      gradient(res, W_, gb, GT);
      double fz = 0;
      for (int bt = 0; bt < 60; ++bt) {
        prox_step(y, gb, GT, W_, z);
        predict_into(z, W_, pred_z);
        fz = loss(pred_z);
        const Eigen::VectorXd dbp = z.bp - y.bp, dbn = z.bn - y.bn;
        double lin = gb.dot(dbp - dbn), quad = dbp.squaredNorm() + dbn.squaredNorm();
        for (int p : W_) {
          const int g = PI_.g[p], h = PI_.h[p];
          const Eigen::MatrixXd d = blk(L_, z.th, g, h) - blk(L_, y.th, g, h);
          lin += blk(L_, GT, g, h).cwiseProduct(d).sum();
          quad += d.squaredNorm();
        }
        if (fz <= fy + lin + 0.5 * Lip_ * quad + 1e-13 * std::max(1.0, fy)) break;
        Lip_ *= 2;
      }
      const double Fz = fz + lambda_ * penalty(z);
      const double Fold = Fx;
      const bool accept = Fz <= Fx;
      xprev = x;
      pred_prev = pred_x;
      if (accept) {
        x = z;
        pred_x = pred_z;
        Fx = Fz;
      }
      if (cfg_.record_trace) trace_.push_back(Fx);
      const double tn = (1 + std::sqrt(1 + 4 * t * t)) / 2;
      if (accept) {
        rejects = 0;
        const double rel = (Fold - Fx) / std::max(std::abs(Fx), 1e-300);
        streak = rel <= cfg_.tol ? streak + 1 : 0;
        if (streak >= 2) return true;
        // y = x + (t/tn)(z - x) + ((t-1)/tn)(x - xprev), with z == x here
        const double c = (t - 1) / tn;
        combine(y, x, 1 + c, xprev, -c, z, 0.0);
        for (std::size_t r = 0; r < L_.N; ++r) pred_y[r] = (1 + c) * pred_x[r] - c * pred_prev[r];
        t = tn;
      } else {
        // momentum overshoot: restart from x
        if (++rejects >= 5) return true;
        y = x;
        pred_y = pred_x;
        t = 1;
      }
    }
    return false;
  }

  struct Entry {
    int b;
    double u;
  };
  struct Event {
    double pos;
    double delta;
  };

  Layout L_;
  double lambda_;
  HierNetConfig cfg_;
  double ybar_ = 0;
  std::vector<double> yc_;
  std::vector<char> mode_;
  std::vector<char> free_, main_;
  Pairs PI_;
  std::vector<int> all_, W_;
  std::vector<char> inW_;
  std::vector<double> Cm_, Cp_;
  Eigen::MatrixXd pair_mean_;
  Eigen::VectorXd alpha_;
  std::vector<std::vector<Entry>> rows_;
  std::vector<Event> events_;
  double Lip_ = 1;
  std::vector<double> trace_;
};

}  // namespace

int HierNetFit::find_group(GroupRole role, Side side, int source) const {
  for (std::size_t g = 0; g < groups.size(); ++g)
    if (groups[g].role == role && groups[g].side == side && groups[g].source == source) return static_cast<int>(g);
  return -1;
}

double HierNetFit::hierarchy_violation() const {
  double worst = 0;
  for (Eigen::Index a = 0; a < theta.rows(); ++a) {
    if (!group_mode.empty()) {
      std::size_t g = 0;
      while (g + 1 < groups.size() && static_cast<std::size_t>(a) >= groups[g].offset + groups[g].width()) ++g;
      if (group_mode[g] != group_free) continue;
    }
    worst = std::max(worst, theta.row(a).cwiseAbs().sum() - (beta_pos[a] + beta_neg[a]));
  }
  return worst;
}

HierNetFit fit_hiernet(const DesignMatrix& dm, const std::vector<double>& y, double lambda, const HierNetConfig& cfg,
                       const HierNetFit* warm, const std::vector<char>* mode) {
  Solver s(dm, y, lambda, cfg, mode);
  auto fit = s.run(warm);
  fit.groups = dm.groups();
  fit.symmetry_augmented = dm.symmetry_augmented;
  fit.carryover_augmented = dm.carryover_augmented;
  for (double v : fit.objective_trace)
    if (!std::isfinite(v)) throw NumericalError("HierNet objective is not finite");
  return fit;
}

Eigen::VectorXd predict(const HierNetFit& fit, const DesignMatrix& dm) {
  const Layout L = make_layout(dm, &fit.center, &fit.scale);
  const std::size_t G = L.G;
  const Eigen::VectorXd beta = fit.beta();
  std::vector<Eigen::VectorXd> Mt(G);
  for (std::size_t g = 0; g < G; ++g)
    Mt[g] = L.S[g] * beta.segment(static_cast<Eigen::Index>(L.off[g]), static_cast<Eigen::Index>(L.K[g]));
  std::vector<std::size_t> pg, ph;
  std::vector<RowMat> tabs;
  double c0 = 0;
  for (std::size_t g = 0; g < G; ++g)
    for (std::size_t h = g + 1; h < G; ++h) {
      const auto rg = static_cast<Eigen::Index>(L.off[g]), rh = static_cast<Eigen::Index>(L.off[h]);
      const auto kg = static_cast<Eigen::Index>(L.K[g]), kh = static_cast<Eigen::Index>(L.K[h]);
      Eigen::MatrixXd B = fit.theta.block(rg, rh, kg, kh);
      if (B.cwiseAbs().maxCoeff() == 0) continue;
      c0 += B.cwiseProduct(fit.pair_mean.block(rg, rh, kg, kh)).sum();
      tabs.emplace_back(L.S[g] * B * L.S[h].transpose());
      pg.push_back(g);
      ph.push_back(h);
    }
  Eigen::VectorXd out(static_cast<Eigen::Index>(L.N));
  for (std::size_t r = 0; r < L.N; ++r) {
    const int* lv = &L.lev[r * G];
    const double* wv = &L.w[r * G];
    double s = fit.intercept - c0;
    for (std::size_t g = 0; g < G; ++g) s += Mt[g][lv[g]] * wv[g];
    for (std::size_t i = 0; i < tabs.size(); ++i) s += tabs[i](lv[pg[i]], lv[ph[i]]) * wv[pg[i]] * wv[ph[i]];
    out[static_cast<Eigen::Index>(r)] = s;
  }
  return out;
}

double lambda_max(const DesignMatrix& dm, const std::vector<double>& y, const std::vector<char>& group_mode) {
  // Gradient at zero: g_a = -<yc, s_a>/N, g_ab = -<yc, s_a s_b - m_ab>/N. The
  // zero fit is optimal iff lambda >= max(|g_a|, (|g_ab| + |g_a| + |g_b|) / 3),
  // where a budget-free (interaction-only) side drops out of the bound.
  const Layout L = make_layout(dm, nullptr, nullptr);
  const auto mode = resolve_mode(L, group_mode);
  const Pairs PI = make_pairs(L, mode);
  std::vector<int> all(PI.g.size());
  std::iota(all.begin(), all.end(), 0);
  const double N = static_cast<double>(L.N);
  const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / N;
  std::vector<double> yc(L.N);
  for (std::size_t r = 0; r < L.N; ++r) yc[r] = y[r] - ybar;
  std::vector<double> Cm(L.P), Cp(PI.total);
  accumulate(L, PI, all, yc.data(), Cm, Cp);
  Eigen::VectorXd gm(static_cast<Eigen::Index>(L.P));
  for (std::size_t g = 0; g < L.G; ++g) {
    const auto K = static_cast<Eigen::Index>(L.K[g]);
    gm.segment(static_cast<Eigen::Index>(L.off[g]), K) =
        (L.S[g].transpose() * Eigen::Map<Eigen::VectorXd>(&Cm[L.off[g]], K)).cwiseAbs() / N;
  }
  double lmax = 0;
  for (std::size_t g = 0; g < L.G; ++g)
    if (mode[g] == group_free)
      lmax = std::max(lmax, gm.segment(static_cast<Eigen::Index>(L.off[g]), static_cast<Eigen::Index>(L.K[g])).maxCoeff());
  for (std::size_t p = 0; p < all.size(); ++p) {
    const int g = PI.g[p], h = PI.h[p];
    Eigen::Map<RowMat> C(&Cp[PI.coff[p]], static_cast<Eigen::Index>(L.K[g]), static_cast<Eigen::Index>(L.K[h]));
    const Eigen::MatrixXd B = (L.S[g].transpose() * C * L.S[h]).cwiseAbs() / N;
    const bool fg = mode[g] == group_free, fh = mode[h] == group_free;
    for (Eigen::Index i = 0; i < B.rows(); ++i)
      for (Eigen::Index j = 0; j < B.cols(); ++j) {
        double num = B(i, j), den = 1;
        if (fg) num += gm[static_cast<Eigen::Index>(L.off[g]) + i], den += 1;
        if (fh) num += gm[static_cast<Eigen::Index>(L.off[h]) + j], den += 1;
        lmax = std::max(lmax, num / den);
      }
  }
  return lmax;
}

std::vector<double> lambda_grid(const DesignMatrix& dm, const std::vector<double>& y, const HierNetConfig& cfg) {
  if (!cfg.lambda_grid.empty()) {
    for (std::size_t i = 0; i < cfg.lambda_grid.size(); ++i) {
      if (!(cfg.lambda_grid[i] > 0)) throw ValidationError("lambda grid must be positive");
      if (i > 0 && !(cfg.lambda_grid[i] < cfg.lambda_grid[i - 1]))
        throw ValidationError("lambda grid must be strictly descending");
    }
    return cfg.lambda_grid;
  }
  const double lmax = std::max(lambda_max(dm, y, cfg.group_mode), 1e-12);
  const std::size_t n = std::max<std::size_t>(cfg.grid_size, 2);
  std::vector<double> grid(n);
  for (std::size_t i = 0; i < n; ++i)
    grid[i] = lmax * std::pow(cfg.grid_ratio, -static_cast<double>(i) / static_cast<double>(n - 1));
  return grid;
}

CvResult cross_validate(const DesignMatrix& dm, const std::vector<double>& y, const HierNetConfig& cfg) {
  if (cfg.cv_folds < 2) throw ValidationError("cv_folds must be at least 2");
  std::vector<int> ids(dm.clusters.begin(), dm.clusters.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < cfg.cv_folds) throw ValidationError("fewer respondents than cross-validation folds");
  CounterRng rng(stream_key({cfg.fold_seed, 0xcf01d5ULL}));
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
  std::unordered_map<int, std::size_t> fold_map;
  for (std::size_t i = 0; i < ids.size(); ++i) fold_map[ids[i]] = i % cfg.cv_folds;
  auto fold_of = [&](int cluster) { return fold_map.at(cluster); };

  CvResult out;
  out.lambdas = lambda_grid(dm, y, cfg);
  const std::size_t nl = out.lambdas.size();
  std::vector<std::vector<double>> fold_err(cfg.cv_folds, std::vector<double>(nl, 0.0));
  std::vector<double> total(nl, 0.0);
  double null_total = 0;
  for (std::size_t f = 0; f < cfg.cv_folds; ++f) {
    std::vector<std::size_t> train, test;
    for (std::size_t r = 0; r < dm.rows(); ++r) (fold_of(dm.clusters[r]) == f ? test : train).push_back(r);
    const DesignMatrix dtr = dm.subset(train), dte = dm.subset(test);
    std::vector<double> ytr, yte;
    for (auto r : train) ytr.push_back(y[r]);
    for (auto r : test) yte.push_back(y[r]);
    const double ybar = std::accumulate(ytr.begin(), ytr.end(), 0.0) / static_cast<double>(ytr.size());
    for (double v : yte) null_total += (v - ybar) * (v - ybar);
    HierNetFit prev;
    bool have = false;
    for (std::size_t i = 0; i < nl; ++i) {
      HierNetFit fit = fit_hiernet(dtr, ytr, out.lambdas[i], cfg, have ? &prev : nullptr);
      const Eigen::VectorXd pr = predict(fit, dte);
      double se = 0;
      for (std::size_t k = 0; k < yte.size(); ++k) se += (yte[k] - pr[static_cast<Eigen::Index>(k)]) * (yte[k] - pr[static_cast<Eigen::Index>(k)]);
      fold_err[f][i] = se / static_cast<double>(std::max<std::size_t>(yte.size(), 1));
      total[i] += se;
      prev = std::move(fit);
      have = true;
    }
  }
  const double N = static_cast<double>(dm.rows());
  out.null_error = null_total / N;
  out.cv_error.resize(nl);
  out.cv_se.resize(nl);
  for (std::size_t i = 0; i < nl; ++i) {
    out.cv_error[i] = total[i] / N;
    double m = 0, v = 0;
    for (std::size_t f = 0; f < cfg.cv_folds; ++f) m += fold_err[f][i];
    m /= static_cast<double>(cfg.cv_folds);
    for (std::size_t f = 0; f < cfg.cv_folds; ++f) v += (fold_err[f][i] - m) * (fold_err[f][i] - m);
    out.cv_se[i] = std::sqrt(v / static_cast<double>(cfg.cv_folds - 1) / static_cast<double>(cfg.cv_folds));
  }
  out.best = static_cast<std::size_t>(std::min_element(out.cv_error.begin(), out.cv_error.end()) - out.cv_error.begin());
  out.lambda_selected = out.lambdas[out.best];
  return out;
}

HierNetFit fit_hiernet_cv(const DesignMatrix& dm, const std::vector<double>& y, const HierNetConfig& cfg, CvResult* cv_out) {
  CvResult cv = cross_validate(dm, y, cfg);
  HierNetFit fit = fit_hiernet(dm, y, cv.lambda_selected, cfg);
  if (cv_out) *cv_out = std::move(cv);
  return fit;
}

}  // namespace crt
