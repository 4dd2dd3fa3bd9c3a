#include "gpemc/adaptation.hpp"

#include <algorithm>
#include <numeric>

namespace gpemc {

std::vector<Index> maxmin_filter(const Matrix& candidates, double radius, const Matrix& existing) {
  if (!(radius > 0.0)) throw ShapeMismatch("maxmin_filter: radius must be positive");
  if (existing.size() > 0 && existing.cols() != candidates.cols()) throw ShapeMismatch("maxmin_filter: dimension");
  const double r2 = radius * radius;
  std::vector<Index> kept;
  for (Index i = 0; i < candidates.rows(); ++i) {
    bool ok = true;
    for (Index e = 0; ok && e < existing.rows(); ++e)
      ok = (candidates.row(i) - existing.row(e)).squaredNorm() > r2;
    for (std::size_t k = 0; ok && k < kept.size(); ++k)
      ok = (candidates.row(i) - candidates.row(kept[k])).squaredNorm() > r2;
    if (ok) kept.push_back(i);
  }
  return kept;
}

void MiceConfig::validate() const {
  if (!(nugget >= 0.0) || !(candidate_nugget > 0.0)) throw ShapeMismatch("mice: nuggets must be positive");
  if (candidate_nugget < nugget) throw ShapeMismatch("mice: candidate_nugget must be >= nugget");
  if (init_keep < 1) throw ShapeMismatch("mice: init_keep must be >= 1");
  if (!(maxmin_radius > 0.0)) throw ShapeMismatch("mice: maxmin_radius must be positive");
  if (max_size < 1 || max_candidates < 1) throw ShapeMismatch("mice: sizes must be positive");
}

Vector mice_criteria(const Emulator& em, const Matrix& cand, const MiceConfig& cfg) {
  const Index m = cand.rows(), q = basis_size(cand.cols());
  if (m == 0) throw ShapeMismatch("mice_select: empty candidate set");
  const Vector num = em.predictive_correlation(cand);
  const Vector& rho = em.hyper().rho;
  Matrix K = corr_block(cand, cand, 0, 0, rho);
  K.diagonal().array() += cfg.candidate_nugget;

  // Leave-one-out kriging variance of the latent value at each candidate:
  // universal kriging gives 1/Q_ii for the noisy value, simple kriging 1/(K^-1)_ii.
  Vector den(m);
  bool universal = m - 1 > q;
  if (universal) {
    try {
      const GlsSystem g = factor_gls(K, basis_block(cand, 0));
      for (Index i = 0; i < m; ++i) den(i) = 1.0 / g.Q(i, i) - cfg.candidate_nugget;
    } catch (const IllConditioned&) {
      universal = false;
    }
  }
  if (!universal) {
    Eigen::LDLT<Matrix> ldlt(K);
    const Matrix Ki = ldlt.solve(Matrix::Identity(m, m));
    for (Index i = 0; i < m; ++i) den(i) = 1.0 / Ki(i, i) - cfg.candidate_nugget;
  }
  Vector out(m);
  for (Index i = 0; i < m; ++i)
    out(i) = (std::isfinite(den(i)) && den(i) > 1e-300) ? std::max(num(i), 0.0) / den(i)
                                                          : -std::numeric_limits<double>::infinity();
  return out;
}

MiceChoice mice_select(const Emulator& em, const Matrix& cand, const MiceConfig& cfg) {
  const Vector v = mice_criteria(em, cand, cfg);
  const double best = v.maxCoeff();
  if (!std::isfinite(best)) throw AllDegenerate("mice_select: every candidate is degenerate");
  const double tol = 1e-12 * std::abs(best);
  for (Index i = 0; i < v.size(); ++i)
    if (v(i) >= best - tol) return {i, v(i)};
  return {};
}

double holdout_mspe(const Emulator& em, const Holdout& h) {
  if (h.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  const Vector pred = em.predict(h.points, 0, false).mean;
  return (pred - h.potentials).squaredNorm() / static_cast<double>(h.size());
}

double mspe_threshold(const Holdout& h, double rel) {
  if (h.size() < 2) return 0.0;
  const double mean = h.potentials.mean();
  const double var = (h.potentials.array() - mean).square().sum() / static_cast<double>(h.size() - 1);
  return rel * var;
}

namespace {

// Smallest design size the emulator can be built on.
Index min_points(const DesignSet& d) {
  const Index q = basis_size(d.dim()), per = d.has_gradients() ? 1 + d.dim() : 1;
  return (q + 2) / per + 1;
}

std::vector<Index> choose_kept(const DesignSet& d, Index k, KeepRule rule) {
  const Index n = d.size();
  std::vector<Index> idx;
  if (rule == KeepRule::recent) {
    for (Index i = n - k; i < n; ++i) idx.push_back(i);
    return idx;
  }
  // Farthest-point sampling from the most recent point.
  idx.push_back(n - 1);
  Vector dist = (d.points.rowwise() - d.points.row(n - 1)).rowwise().squaredNorm();
  while (static_cast<Index>(idx.size()) < k) {
    Index j = 0;
    dist.maxCoeff(&j);
    idx.push_back(j);
    dist = dist.cwiseMin((d.points.rowwise() - d.points.row(j)).rowwise().squaredNorm());
  }
  std::sort(idx.begin(), idx.end());
  return idx;
}

Candidate design_row(const DesignSet& d, Index i) {
  Candidate c;
  c.theta = d.points.row(i).transpose();
  c.potential = d.potentials(i);
  if (d.gradients) c.gradient = d.gradients->row(i).transpose();
  if (d.per_datum_values) c.pd_values = d.per_datum_values->row(i).transpose();
  if (d.per_datum_gradients) {
    Matrix g(d.dim(), d.data_count());
    for (Index k = 0; k < d.dim(); ++k) g.row(k) = (*d.per_datum_gradients)[static_cast<std::size_t>(k)].row(i);
    c.pd_gradients = std::move(g);
  }
  return c;
}

}  // namespace

MiceResult mice_refine(const DesignSet& design, const Hyperparameters& hyper, const std::vector<Candidate>& candidates,
                       const Holdout& holdout, const TargetModel& target, const MiceConfig& cfg,
                       const MleOptions& mle) {
  cfg.validate();
  design.validate();
  MiceResult res;
  res.design = design;
  res.hyper = hyper;
  const BuildOptions bo;
  const double thr = holdout.size() > 0 ? mspe_threshold(holdout, cfg.mspe_rel_threshold) : 0.0;
  auto mspe_of = [&](const DesignSet& d, const Hyperparameters& h) {
    return holdout.size() > 0 ? holdout_mspe(Emulator::build(d, h, bo), holdout) : std::numeric_limits<double>::quiet_NaN();
  };
  res.holdout_mspe = mspe_of(design, hyper);
  if (design.size() >= cfg.max_size) return res;
  if (holdout.size() > 0 && res.holdout_mspe < thr) return res;

  const Index k = std::clamp(cfg.init_keep, min_points(design), design.size());
  const std::vector<Index> kept = choose_kept(design, k, cfg.keep_rule);
  DesignSet cur = design.subset(kept);

  // Pool: remaining design points first, then the thinned candidates.
  std::vector<Candidate> pool;
  std::vector<Index> origin;  // candidate index, or -1 for a design point
  for (Index i = 0; i < design.size(); ++i)
    if (!std::binary_search(kept.begin(), kept.end(), i)) {
      pool.push_back(design_row(design, i));
      origin.push_back(-1);
    }
  const Index nc = static_cast<Index>(candidates.size());
  const Index stride = std::max<Index>(1, (nc + cfg.max_candidates - 1) / cfg.max_candidates);
  for (Index i = 0; i < nc; i += stride) {
    pool.push_back(candidates[static_cast<std::size_t>(i)]);
    origin.push_back(i);
  }
  Matrix pts(static_cast<Index>(pool.size()), design.dim());
  for (Index i = 0; i < pts.rows(); ++i) pts.row(i) = pool[static_cast<std::size_t>(i)].theta.transpose();
  const std::vector<Index> keep = maxmin_filter(pts, cfg.maxmin_radius, cur.points);
  std::vector<Candidate> live;
  std::vector<Index> live_origin;
  for (Index i : keep) {
    live.push_back(pool[static_cast<std::size_t>(i)]);
    live_origin.push_back(origin[static_cast<std::size_t>(i)]);
  }
  if (std::none_of(live_origin.begin(), live_origin.end(), [](Index o) { return o >= 0; })) return res;

  const bool grads = design.has_gradients(), pd = design.has_per_datum();
  while (cur.size() < cfg.max_size && !live.empty()) {
    Emulator em = Emulator::build(cur, hyper, bo);
    if (holdout.size() > 0 && holdout_mspe(em, holdout) < thr) break;
    Matrix lp(static_cast<Index>(live.size()), design.dim());
    for (Index i = 0; i < lp.rows(); ++i) lp.row(i) = live[static_cast<std::size_t>(i)].theta.transpose();
    MiceChoice ch;
    try {
      ch = mice_select(em, lp, cfg);
    } catch (const AllDegenerate& e) {
      res.warning = e.what();
      break;
    }
    Candidate c = live[static_cast<std::size_t>(ch.index)];
    if ((grads && !c.gradient) || (pd && (!c.pd_values || !c.pd_gradients))) {
      TargetEval ev = target.evaluate(c.theta, pd);
      ++res.target_evaluations;
      c.gradient = ev.gradient;
      if (pd) {
        c.pd_values = ev.per_datum_values;
        c.pd_gradients = ev.per_datum_gradients;
      }
    }
    cur.append(c.theta, c.potential, grads ? &*c.gradient : nullptr, pd ? &*c.pd_values : nullptr,
               pd ? &*c.pd_gradients : nullptr);
    if (live_origin[static_cast<std::size_t>(ch.index)] >= 0) res.added.push_back(live_origin[static_cast<std::size_t>(ch.index)]);
    live.erase(live.begin() + ch.index);
    live_origin.erase(live_origin.begin() + ch.index);
  }

  Hyperparameters h = hyper;
  if (cfg.rerun_mle) {
    const MleResult m = mle_hyper(cur, hyper.tau(), hyper.nugget, mle);
    if (std::isfinite(m.loglik)) h = m.hyper;
    if (!m.warning.empty()) res.warning = m.warning;
  }
  res.design = std::move(cur);
  res.hyper = h;
  res.changed = true;
  res.holdout_mspe = mspe_of(res.design, res.hyper);
  return res;
}

}  // namespace gpemc
