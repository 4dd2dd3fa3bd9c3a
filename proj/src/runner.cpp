#include "gpemc/runner.hpp"

#include "gpemc/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <ostream>

namespace gpemc {

namespace fs = std::filesystem;
using nlohmann::json;

BuiltTarget build_target(const TargetConfig& cfg, std::uint64_t seed) {
  BuiltTarget out;
  if (cfg.type == "banana" || cfg.type == "bbd") {
    auto t = std::make_shared<BbdTarget>(
        BbdTarget::synthetic(cfg.dim, cfg.n_data, cfg.mu_true, cfg.sigma_y, cfg.sigma_theta, seed));
    out.data_columns = {"y"};
    out.data = t->data();
    out.model = std::move(t);
  } else if (cfg.type == "elliptic") {
    auto [t, truth] = EllipticTarget::synthetic(cfg.elliptic, seed);
    const auto& nodes = t.solver().obs_nodes();
    const Matrix& xy = t.solver().node_coords();
    out.data_columns = {"x1", "x2", "u_obs"};
    out.data.resize(static_cast<Index>(nodes.size()), 3);
    for (Index o = 0; o < out.data.rows(); ++o) {
      out.data(o, 0) = xy(nodes[static_cast<std::size_t>(o)], 0);
      out.data(o, 1) = xy(nodes[static_cast<std::size_t>(o)], 1);
      out.data(o, 2) = t.observations()(o);
    }
    out.theta_true = truth;
    out.model = std::make_shared<EllipticTarget>(std::move(t));
  } else if (cfg.type == "gaussian") {
    out.model = std::make_shared<GaussianTarget>(cfg.mean, cfg.cov);
    out.data_columns = {"y"};
    out.data.resize(0, 1);
  } else {
    throw ConfigError("/target/type", "unknown target '" + cfg.type + "'");
  }
  return out;
}

DesignSet evaluate_design(const TargetModel& target, const Matrix& points) {
  const bool pd = target.data_count() > 0;
  DesignSet d;
  d.points.resize(0, target.dim());
  d.gradients = Matrix(0, target.dim());
  if (pd) {
    d.per_datum_values = Matrix(0, target.data_count());
    d.per_datum_gradients = std::vector<Matrix>(static_cast<std::size_t>(target.dim()), Matrix(0, target.data_count()));
  }
  for (Index i = 0; i < points.rows(); ++i) {
    const Vector x = points.row(i).transpose();
    const TargetEval ev = target.evaluate(x, pd);
    d.append(x, ev.potential, &ev.gradient, pd ? &ev.per_datum_values : nullptr,
             pd ? &ev.per_datum_gradients : nullptr);
  }
  return d;
}

std::vector<Candidate> prior_candidates(const TargetModel& target, Index n, Rng& rng) {
  std::vector<Candidate> out;
  for (Index i = 0; i < n; ++i) {
    Candidate c;
    c.theta = target.sample_prior(rng);
    c.potential = target.potential(c.theta);
    if (std::isfinite(c.potential)) out.push_back(std::move(c));
  }
  return out;
}

namespace {

std::vector<Candidate> thin_distinct(const Matrix& theta, const Vector& potential, Index n) {
  std::vector<Index> rows;
  for (Index i = 0; i < theta.rows(); ++i)
    if (std::isfinite(potential(i)) && (rows.empty() || theta.row(i) != theta.row(rows.back()))) rows.push_back(i);
  const Index m = static_cast<Index>(rows.size());
  const Index stride = std::max<Index>(1, (m + n - 1) / n);
  std::vector<Candidate> out;
  for (Index k = 0; k < m; k += stride) {
    Candidate c;
    c.theta = theta.row(rows[static_cast<std::size_t>(k)]).transpose();
    c.potential = potential(rows[static_cast<std::size_t>(k)]);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace

std::vector<Candidate> chain_candidates(const fs::path& chain_csv, Index n) {
  const io::ChainData c = io::read_chain(chain_csv);
  return thin_distinct(c.theta, -c.logpost, n);
}

std::vector<Candidate> pilot_candidates(std::shared_ptr<const TargetModel> target, const InitialDesignConfig& cfg,
                                        std::uint64_t seed) {
  SamplerConfig sc;
  sc.kernel = KernelType::rwm;
  sc.rwm_scale = cfg.pilot_scale;
  Sampler s(target, std::make_shared<ExactGeometry>(target), sc);
  ChainState st = s.init(target->prior_mean(), make_rng(seed, Stream::pilot));
  const int half = cfg.pilot_iters / 2;
  s.begin_adaptation();
  for (int i = 0; i < half; ++i) s.step(st);
  s.end_adaptation();
  const int keep = cfg.pilot_iters - half;
  Matrix th(keep, target->dim());
  Vector u(keep);
  for (int i = 0; i < keep; ++i) {
    s.step(st);
    th.row(i) = st.theta.transpose();
    u(i) = st.potential;
  }
  return thin_distinct(th, u, cfg.candidates);
}

DesignBuild build_design(const TargetModel& target, const std::vector<Candidate>& candidates, Index size,
                         const std::optional<std::pair<DesignSet, Hyperparameters>>& initial,
                         const AdaptiveConfig& acfg, std::uint64_t seed) {
  DesignBuild out;
  MleOptions mle = acfg.mle;
  mle.seed = stream_seed(seed, Stream::mle);
  const double nugget = acfg.mice.nugget;

  if (initial) {
    out.design = initial->first;
    out.hyper = initial->second;
  } else {
    if (candidates.empty()) throw TooFewPoints("design: no candidates");
    const Index n = static_cast<Index>(candidates.size());
    const Index m0 = std::min({size, n, std::max<Index>(3, target.dim() + 1)});
    Matrix pts(n, target.dim());
    for (Index i = 0; i < n; ++i) pts.row(i) = candidates[static_cast<std::size_t>(i)].theta.transpose();
    // Farthest-point seed starting from the lowest potential.
    Index best = 0;
    for (Index i = 1; i < n; ++i)
      if (candidates[static_cast<std::size_t>(i)].potential < candidates[static_cast<std::size_t>(best)].potential)
        best = i;
    std::vector<Index> idx{best};
    Vector dist = (pts.rowwise() - pts.row(best)).rowwise().squaredNorm();
    while (static_cast<Index>(idx.size()) < m0) {
      Index j = 0;
      if (dist.maxCoeff(&j) <= 0.0) break;
      idx.push_back(j);
      dist = dist.cwiseMin((pts.rowwise() - pts.row(j)).rowwise().squaredNorm());
    }
    Matrix seed_pts(static_cast<Index>(idx.size()), target.dim());
    for (std::size_t k = 0; k < idx.size(); ++k) seed_pts.row(static_cast<Index>(k)) = pts.row(idx[k]);
    out.design = evaluate_design(target, seed_pts);
    out.target_evaluations += static_cast<int>(seed_pts.rows());
    const MleResult r = mle_hyper(out.design, default_init_tau(out.design), nugget, mle);
    out.hyper = r.hyper;
    out.warning = r.warning;
  }
  if (out.design.size() >= size) return out;

  MiceConfig mc = acfg.mice;
  mc.max_size = size;
  mc.init_keep = out.design.size();
  const MiceResult r = mice_refine(out.design, out.hyper, candidates, Holdout{}, target, mc, mle);
  out.design = r.design;
  out.hyper = r.hyper;
  out.target_evaluations += r.target_evaluations;
  if (!r.warning.empty()) out.warning = r.warning;
  return out;
}

void apply_overrides(RunConfig& cfg, const RunOverrides& ov) {
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.chains) {
    if (*ov.chains < 1) throw ConfigError("/chains", "must be >= 1");
    cfg.chains = *ov.chains;
  }
  if (ov.output_dir) cfg.output_dir = *ov.output_dir;
}

namespace {

using Clock = std::chrono::steady_clock;

std::string suffixed(const std::string& stem, const std::string& ext, int chain, int chains) {
  return chains > 1 ? stem + "_c" + std::to_string(chain) + ext : stem + ext;
}

struct SharedDesign {
  DesignSet design;
  Hyperparameters hyper;
  int evaluations = 0;
  std::string warning;
};

SharedDesign initial_design(const RunConfig& cfg, const BuiltTarget& bt, std::ostream* log) {
  SharedDesign sd;
  if (cfg.geometry.design_path) {
    auto [d, h] = io::load_design(*cfg.geometry.design_path);
    if (d.dim() != bt.model->dim()) throw ConfigError("/geometry/design", "design dimension does not match target");
    if (bt.model->data_count() > 0 && d.data_count() != bt.model->data_count())
      throw ConfigError("/geometry/design", "design lacks per-datum terms for this target");
    sd.design = std::move(d);
    sd.hyper = std::move(h);
    return sd;
  }
  const auto& ic = cfg.geometry.initial;
  std::vector<Candidate> cands;
  if (ic.source == "pilot") {
    cands = pilot_candidates(bt.model, ic, cfg.seed);
  } else {
    Rng rng = make_rng(cfg.seed, Stream::design);
    cands = prior_candidates(*bt.model, ic.candidates, rng);
  }
  if (log) *log << "design: " << cands.size() << " candidates from " << ic.source << '\n';
  DesignBuild b = build_design(*bt.model, cands, ic.size, std::nullopt, cfg.geometry.adaptation, cfg.seed);
  if (log) *log << "design: " << b.design.size() << " points, " << b.target_evaluations << " target evaluations\n";
  sd.design = std::move(b.design);
  sd.hyper = std::move(b.hyper);
  sd.evaluations = b.target_evaluations;
  sd.warning = std::move(b.warning);
  return sd;
}

Vector start_point(const RunConfig& cfg, const BuiltTarget& bt, const SharedDesign* sd) {
  if (sd && sd->design.size() > 0) {
    Index best = 0;
    sd->design.potentials.minCoeff(&best);
    return sd->design.points.row(best).transpose();
  }
  (void)cfg;
  return bt.model->prior_mean();
}

struct ChainRun {
  ChainOutcome outcome;
  std::vector<AdaptEvent> events;
  std::optional<std::pair<DesignSet, Hyperparameters>> final_design;
};

ChainRun run_chain(const RunConfig& cfg, const BuiltTarget& bt, const SharedDesign* sd, int c, const fs::path& dir) {
  ChainRun cr;
  const bool emulated = cfg.geometry.mode == "emulated";
  const bool adaptive = emulated && cfg.geometry.adaptive;
  const bool timed = cfg.timing == "wall";
  const Index D = bt.model->dim();
  std::string tag = to_string(cfg.sampler.kernel);
  if (emulated) tag = (adaptive ? "adp-gpe-" : "gpe-") + tag;

  std::unique_ptr<AdaptiveChain> ac;
  std::unique_ptr<Sampler> plain;
  if (adaptive) {
    AdaptiveConfig acfg = cfg.geometry.adaptation;
    acfg.active = true;
    acfg.mle.seed = stream_seed(cfg.seed, Stream::mle, static_cast<std::uint64_t>(c));
    ac = std::make_unique<AdaptiveChain>(bt.model, sd->design, sd->hyper, cfg.sampler, acfg,
                                         stream_seed(cfg.seed, Stream::adaptation, static_cast<std::uint64_t>(c)));
  } else if (emulated) {
    auto em = std::make_shared<const Emulator>(Emulator::build(sd->design, sd->hyper));
    auto geo = std::make_shared<EmulatedGeometry>(em, bt.model->prior_precision(), cfg.geometry.adaptation.metric_reg);
    plain = std::make_unique<Sampler>(bt.model, geo, cfg.sampler);
    cr.final_design = std::make_pair(sd->design, sd->hyper);
  } else {
    plain = std::make_unique<Sampler>(bt.model, std::make_shared<ExactGeometry>(bt.model), cfg.sampler);
  }
  Sampler& sampler = adaptive ? ac->sampler() : *plain;
  ChainState st = sampler.init(start_point(cfg, bt, sd), make_rng(cfg.seed, Stream::chain, static_cast<std::uint64_t>(c)));

  cr.outcome.chain_csv = dir / suffixed("chain", ".csv", c, cfg.chains);
  io::ChainWriter writer(cr.outcome.chain_csv, D);
  const long long kept = cfg.iters - cfg.burnin;
  Matrix samples(kept, D);
  std::vector<int> accepted;
  accepted.reserve(static_cast<std::size_t>(kept));

  if (cfg.adapt_step && cfg.burnin > 0) sampler.begin_adaptation();
  const auto t0 = Clock::now();
  auto sample_clock = t0;
  for (long long it = 0; it < cfg.iters; ++it) {
    if (it == cfg.burnin) {
      if (sampler.adapting()) sampler.end_adaptation();
      sample_clock = Clock::now();
    }
    bool acc = false, regen = false;
    if (adaptive) {
      const AdaptiveIteration r = ac->iterate(st);
      acc = r.kernel1.accepted;
      regen = r.regenerated;
    } else {
      acc = sampler.step(st).accepted;
    }
    if (it < cfg.burnin) continue;
    const long long row = it - cfg.burnin;
    const long long ns =
        timed ? std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - sample_clock).count() : 0;
    writer.write(row + 1, st.theta, -st.potential, acc, tag, regen, ns);
    samples.row(row) = st.theta.transpose();
    accepted.push_back(acc ? 1 : 0);
  }
  writer.close();
  const double sampling_s = timed ? std::chrono::duration<double>(Clock::now() - sample_clock).count() : 0.0;
  cr.outcome.wall_seconds = timed ? std::chrono::duration<double>(Clock::now() - t0).count() : 0.0;
  cr.outcome.summary = summarize(samples, accepted, sampling_s, nullptr, tag);
  cr.outcome.counters = sampler.counters();
  if (adaptive) {
    cr.events = ac->events();
    cr.outcome.regenerations = ac->regenerations();
    cr.outcome.adaptations = ac->adaptations();
    cr.final_design = std::make_pair(ac->design(), ac->emulator().hyper());
  }
  return cr;
}

json counters_json(const ChainOutcome& o) {
  return {{"proposals", o.counters.proposals},
          {"accepted", o.counters.accepted},
          {"exact_potential_calls", o.counters.exact_potential_calls},
          {"numerical_rejects", o.counters.numerical_rejects},
          {"fixed_point_unconverged", o.counters.fixed_point_unconverged},
          {"regenerations", o.regenerations},
          {"adaptations", o.adaptations}};
}

}  // namespace

std::vector<ChainOutcome> run(const RunConfig& cfg, std::ostream* log) {
  const auto t0 = Clock::now();
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  const BuiltTarget bt = build_target(cfg.target, cfg.seed);
  io::write_data(dir / "data.csv", bt.data_columns, bt.data);

  std::optional<SharedDesign> sd;
  if (cfg.geometry.mode == "emulated") sd = initial_design(cfg, bt, log);

  std::vector<ChainRun> runs(static_cast<std::size_t>(cfg.chains));
  std::vector<std::string> errors(static_cast<std::size_t>(cfg.chains));
#pragma omp parallel for schedule(dynamic, 1) if (cfg.chains > 1)
  for (int c = 0; c < cfg.chains; ++c) {
    try {
      runs[static_cast<std::size_t>(c)] = run_chain(cfg, bt, sd ? &*sd : nullptr, c, dir);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(c)] = e.what();
    }
  }
  for (int c = 0; c < cfg.chains; ++c)
    if (!errors[static_cast<std::size_t>(c)].empty())
      throw Error("chain " + std::to_string(c) + ": " + errors[static_cast<std::size_t>(c)]);

  std::vector<ChainOutcome> out;
  for (int c = 0; c < cfg.chains; ++c) {
    ChainRun& r = runs[static_cast<std::size_t>(c)];
    if (sd) r.outcome.design_evaluations = sd->evaluations;
    io::write_events(dir / suffixed("events", ".csv", c, cfg.chains), r.events);
    if (r.final_design) io::save_design(dir / suffixed("design", ".json", c, cfg.chains), r.final_design->first,
                                        r.final_design->second);
    out.push_back(r.outcome);
  }
  {
    std::ofstream s(dir / "summary.csv");
    s << summary_csv_header() << '\n';
    for (std::size_t c = 0; c < out.size(); ++c) {
      ChainSummary row = out[c].summary;
      if (cfg.chains > 1) row.label += "_c" + std::to_string(c);
      s << summary_csv_row(row) << '\n';
    }
  }
  if (log) {
    std::vector<ChainSummary> rows;
    for (const auto& o : out) rows.push_back(o.summary);
    *log << format_table(rows);
  }

  json meta;
  meta["version"] = GPEMC_VERSION;
  meta["seed"] = cfg.seed;
  meta["config"] = json::parse(config_to_json(cfg));
  meta["wall_seconds"] = cfg.timing == "wall" ? std::chrono::duration<double>(Clock::now() - t0).count() : 0.0;
  meta["ess_method"] = "geyer_initial_monotone_fft";
  meta["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION);
#ifdef _OPENMP
  meta["openmp"] = _OPENMP;
#else
  meta["openmp"] = nullptr;
#endif
  if (sd && !sd->warning.empty()) meta["design_warning"] = sd->warning;
  if (sd) meta["initial_design_evaluations"] = sd->evaluations;
  if (bt.theta_true) {
    json tt = json::array();
    for (Index i = 0; i < bt.theta_true->size(); ++i) tt.push_back((*bt.theta_true)(i));
    meta["theta_true"] = tt;
  }
  json chains = json::array();
  for (std::size_t c = 0; c < out.size(); ++c) {
    json jc;
    jc["chain"] = c;
    jc["file"] = out[c].chain_csv.filename().string();
    jc["samples"] = out[c].summary.samples;
    jc["acceptance"] = out[c].summary.acceptance;
    jc["ess_min"] = out[c].summary.ess_min;
    jc["ess_flag"] = out[c].summary.ess_flag;
    jc["wall_seconds"] = out[c].wall_seconds;
    jc["counters"] = counters_json(out[c]);
    chains.push_back(jc);
  }
  meta["chains"] = chains;
  std::ofstream m(dir / "meta.json");
  m << meta.dump(2) << '\n';
  return out;
}

DesignBuild design_cmd(const RunConfig& cfg, std::ostream* log) {
  const BuiltTarget bt = build_target(cfg.target, cfg.seed);
  const auto& dc = cfg.design;
  std::vector<Candidate> cands;
  if (dc.candidates == "prior") {
    Rng rng = make_rng(cfg.seed, Stream::design);
    cands = prior_candidates(*bt.model, dc.n_candidates, rng);
  } else if (dc.candidates == "pilot") {
    InitialDesignConfig ic = cfg.geometry.initial;
    ic.candidates = dc.n_candidates;
    cands = pilot_candidates(bt.model, ic, cfg.seed);
  } else {
    cands = chain_candidates(dc.candidates, dc.n_candidates);
  }
  std::optional<std::pair<DesignSet, Hyperparameters>> init;
  if (dc.initial_design) init = io::load_design(*dc.initial_design);
  if (log) *log << "design: " << cands.size() << " candidates\n";
  DesignBuild b = build_design(*bt.model, cands, dc.size, init, cfg.geometry.adaptation, cfg.seed);
  fs::create_directories(cfg.output_dir);
  const fs::path out = cfg.output_dir / dc.output;
  io::save_design(out, b.design, b.hyper);
  if (log) *log << "design: wrote " << b.design.size() << " points to " << out.string() << '\n';
  return b;
}

std::string diagnose(const std::vector<fs::path>& chains, const std::optional<fs::path>& baseline) {
  auto summary_of = [](const fs::path& p) {
    const io::ChainData c = io::read_chain(p);
    const double wall = c.wall_ns.empty() ? 0.0 : static_cast<double>(c.wall_ns.back()) * 1e-9;
    std::string label = c.kernel.empty() ? p.stem().string() : c.kernel.front();
    return summarize(c.theta, c.accepted, wall, nullptr, label);
  };
  std::vector<ChainSummary> rows;
  std::optional<ChainSummary> base;
  if (baseline) {
    base = summary_of(*baseline);
    base->speedup = 1.0;
    rows.push_back(*base);
  }
  for (const fs::path& p : chains) {
    ChainSummary s = summary_of(p);
    if (base) s.speedup = base->min_ess_per_sec > 0.0 ? s.min_ess_per_sec / base->min_ess_per_sec : 0.0;
    rows.push_back(std::move(s));
  }
  std::string out = format_table(rows);
  for (const auto& r : rows)
    if (r.ess_flag) out += "note: " + r.label + " has an ESS flag (fewer than 10 samples or a constant coordinate)\n";
  return out;
}

}  // namespace gpemc
