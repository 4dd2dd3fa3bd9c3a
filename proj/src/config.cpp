#include "gpemc/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace gpemc {

namespace {

using nlohmann::json;

// Read-only cursor over a JSON object that knows its own pointer and rejects
// keys nobody asked about.
class Node {
 public:
  Node(const json& j, std::string ptr) : j_(j), ptr_(std::move(ptr)) {
    if (!j_.is_object()) throw ConfigError(where(), "expected an object");
  }

  std::string where() const { return ptr_.empty() ? "/" : ptr_; }
  std::string child(const std::string& key) const { return ptr_ + "/" + key; }
  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    return has(key) ? &j_.at(key) : nullptr;
  }

  Node object(const std::string& key) {
    static const json empty = json::object();
    const json* v = raw(key);
    return Node(v ? *v : empty, child(key));
  }

  double number(const std::string& key, double def, double lo, double hi, bool lo_open = false) {
    const json* v = raw(key);
    if (!v) return def;
    if (!v->is_number()) throw ConfigError(child(key), "expected a number");
    const double x = v->get<double>();
    if (!std::isfinite(x) || x < lo || x > hi || (lo_open && x == lo)) {
      std::ostringstream os;
      os << "value " << x << " outside " << (lo_open ? "(" : "[") << lo << ", " << hi << "]";
      throw ConfigError(child(key), os.str());
    }
    return x;
  }

  long long integer(const std::string& key, long long def, long long lo, long long hi) {
    const json* v = raw(key);
    if (!v) return def;
    if (!v->is_number_integer()) throw ConfigError(child(key), "expected an integer");
    const long long x = v->get<long long>();
    if (x < lo || x > hi) {
      std::ostringstream os;
      os << "value " << x << " outside [" << lo << ", " << hi << "]";
      throw ConfigError(child(key), os.str());
    }
    return x;
  }

  bool boolean(const std::string& key, bool def) {
    const json* v = raw(key);
    if (!v) return def;
    if (!v->is_boolean()) throw ConfigError(child(key), "expected a boolean");
    return v->get<bool>();
  }

  std::string string(const std::string& key, std::string def, const std::set<std::string>& allowed = {}) {
    const json* v = raw(key);
    if (!v) return def;
    if (!v->is_string()) throw ConfigError(child(key), "expected a string");
    std::string s = v->get<std::string>();
    if (!allowed.empty() && !allowed.count(s)) {
      std::string opts;
      for (const auto& a : allowed) opts += (opts.empty() ? "" : "|") + a;
      throw ConfigError(child(key), "'" + s + "' is not one of " + opts);
    }
    return s;
  }

  std::optional<std::string> optional_string(const std::string& key) {
    const json* v = raw(key);
    if (!v) return std::nullopt;
    if (!v->is_string()) throw ConfigError(child(key), "expected a string or null");
    return v->get<std::string>();
  }

  Vector vector(const std::string& key) {
    const json* v = raw(key);
    if (!v) return {};
    if (!v->is_array()) throw ConfigError(child(key), "expected an array of numbers");
    Vector out(static_cast<Index>(v->size()));
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number()) throw ConfigError(child(key) + "/" + std::to_string(i), "expected a number");
      out(static_cast<Index>(i)) = (*v)[i].get<double>();
    }
    return out;
  }

  Matrix matrix(const std::string& key) {
    const json* v = raw(key);
    if (!v) return {};
    if (!v->is_array() || v->empty()) throw ConfigError(child(key), "expected a non-empty array of rows");
    const std::size_t r = v->size();
    const std::size_t c = (*v)[0].is_array() ? (*v)[0].size() : 0;
    Matrix out(static_cast<Index>(r), static_cast<Index>(c));
    for (std::size_t i = 0; i < r; ++i) {
      const json& row = (*v)[i];
      const std::string rp = child(key) + "/" + std::to_string(i);
      if (!row.is_array() || row.size() != c) throw ConfigError(rp, "ragged or non-array row");
      for (std::size_t k = 0; k < c; ++k) {
        if (!row[k].is_number()) throw ConfigError(rp + "/" + std::to_string(k), "expected a number");
        out(static_cast<Index>(i), static_cast<Index>(k)) = row[k].get<double>();
      }
    }
    return out;
  }

  // Call after all reads.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(child(it.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string ptr_;
  std::set<std::string> seen_;
};

constexpr long long kBig = 1'000'000'000LL;

void parse_target(Node n, TargetConfig& t) {
  t.type = n.string("type", t.type, {"banana", "bbd", "elliptic", "gaussian"});
  if (t.type == "banana" || t.type == "bbd") {
    const Index default_dim = t.type == "banana" ? 2 : 4;
    t.dim = n.integer("dim", default_dim, 2, 1000);
    if (t.type == "banana" && t.dim != 2) throw ConfigError(n.child("dim"), "banana is two-dimensional");
    if (t.type == "bbd" && t.dim % 2) throw ConfigError(n.child("dim"), "bbd dimension must be even");
    t.n_data = n.integer("n_data", t.type == "banana" ? 100 : 3000, 1, kBig);
    t.mu_true = n.number("mu_true", 1.0, -1e6, 1e6);
    t.sigma_y = n.number("sigma_y", t.type == "banana" ? 2.0 : 10.0, 0.0, 1e12, true);
    t.sigma_theta = n.number("sigma_theta", 1.0, 0.0, 1e12, true);
  } else if (t.type == "elliptic") {
    Node e = n.object("elliptic");
    auto& o = t.elliptic;
    o.cells = e.integer("cells", o.cells, 2, 4096);
    o.obs_per_side = e.integer("obs_per_side", o.obs_per_side, 1, o.cells + 1);
    o.kl_terms = e.integer("kl_terms", o.kl_terms, 1, 400);
    o.kl_lengthscale = e.number("lengthscale", o.kl_lengthscale, 0.0, 1e6, true);
    o.kl_variance = e.number("variance", o.kl_variance, 0.0, 1e6, true);
    o.noise_sd = e.number("noise_sd", o.noise_sd, 0.0, 1e6, true);
    e.finish();
    t.dim = o.kl_terms;
    t.n_data = o.obs_per_side * o.obs_per_side;
  } else {
    Node g = n.object("gaussian");
    t.mean = g.vector("mean");
    if (t.mean.size() == 0) throw ConfigError(g.child("mean"), "required non-empty array");
    t.cov = g.matrix("cov");
    if (t.cov.size() == 0) t.cov = Matrix::Identity(t.mean.size(), t.mean.size());
    if (t.cov.rows() != t.mean.size() || t.cov.cols() != t.mean.size())
      throw ConfigError(g.child("cov"), "must be a square matrix matching mean");
    if (!t.cov.isApprox(t.cov.transpose(), 1e-12) || t.cov.llt().info() != Eigen::Success)
      throw ConfigError(g.child("cov"), "must be symmetric positive definite");
    g.finish();
    t.dim = t.mean.size();
    t.n_data = 0;
  }
  n.finish();
}

void parse_mice(Node n, MiceConfig& m) {
  m.nugget = n.number("nugget", m.nugget, 0.0, 1.0);
  m.candidate_nugget = n.number("candidate_nugget", m.candidate_nugget, 0.0, 1.0);
  m.init_keep = n.integer("init_keep", m.init_keep, 1, kBig);
  m.maxmin_radius = n.number("maxmin_radius", m.maxmin_radius, 0.0, 1e12, true);
  m.mspe_rel_threshold = n.number("mspe_rel_threshold", m.mspe_rel_threshold, 0.0, 1e12);
  m.max_size = n.integer("max_size", m.max_size, 2, kBig);
  m.max_candidates = n.integer("max_candidates", m.max_candidates, 1, kBig);
  m.keep_rule = n.string("keep_rule", "recent", {"recent", "spread"}) == "recent" ? KeepRule::recent : KeepRule::spread;
  m.rerun_mle = n.boolean("rerun_mle", m.rerun_mle);
  n.finish();
}

void parse_mle(Node n, MleOptions& m) {
  m.restarts = static_cast<int>(n.integer("restarts", m.restarts, 1, 1000));
  m.max_iters = static_cast<int>(n.integer("max_iters", m.max_iters, 1, 100000));
  m.tau_lo = n.number("tau_lo", m.tau_lo, -50.0, 50.0);
  m.tau_hi = n.number("tau_hi", m.tau_hi, -50.0, 50.0);
  if (m.tau_hi <= m.tau_lo) throw ConfigError(n.child("tau_hi"), "must exceed tau_lo");
  m.gtol = n.number("gtol", m.gtol, 0.0, 1.0, true);
  n.finish();
}

void parse_geometry(Node n, GeometryConfig& g) {
  g.mode = n.string("mode", g.mode, {"exact", "emulated"});
  if (auto p = n.optional_string("design")) g.design_path = *p;
  {
    Node i = n.object("initial_design");
    g.initial.source = i.string("source", g.initial.source, {"pilot", "prior"});
    g.initial.size = i.integer("size", g.initial.size, 3, kBig);
    g.initial.candidates = i.integer("candidates", g.initial.candidates, 1, kBig);
    g.initial.pilot_iters = static_cast<int>(i.integer("pilot_iters", g.initial.pilot_iters, 1, kBig));
    g.initial.pilot_scale = i.number("pilot_scale", g.initial.pilot_scale, 0.0, 1e6, true);
    i.finish();
  }
  {
    Node a = n.object("adaptation");
    auto& c = g.adaptation;
    g.adaptive = a.boolean("enabled", g.adaptive);
    c.test_interval = static_cast<int>(a.integer("test_interval", c.test_interval, 1, kBig));
    c.max_adaptations = static_cast<int>(a.integer("max_adaptations", c.max_adaptations, 0, kBig));
    c.holdout_size = a.integer("holdout_size", c.holdout_size, 1, kBig);
    c.q_max_tries = static_cast<int>(a.integer("q_max_tries", c.q_max_tries, 1, kBig));
    c.metric_reg = a.number("metric_reg", c.metric_reg, 0.0, 1.0);
    parse_mice(a.object("mice"), c.mice);
    parse_mle(a.object("mle"), c.mle);
    a.finish();
  }
  n.finish();
}

void parse_sampler(Node n, RunConfig& cfg) {
  SamplerConfig& s = cfg.sampler;
  s.kernel = kernel_from_string(n.string("type", "hmc", {"rwm", "hmc", "rhmc", "lmc"}));
  s.integrator.epsilon = n.number("epsilon", s.integrator.epsilon, 0.0, 1e6, true);
  s.integrator.steps = static_cast<int>(n.integer("steps", s.integrator.steps, 1, 100000));
  s.integrator.fixed_point_iters = static_cast<int>(n.integer("fixed_point_iters", s.integrator.fixed_point_iters, 1, 1000));
  s.integrator.fixed_point_tol = n.number("fixed_point_tol", s.integrator.fixed_point_tol, 0.0, 1.0, true);
  s.rwm_scale = n.number("rwm_scale", s.rwm_scale, 0.0, 1e6, true);
  cfg.adapt_step = n.boolean("adapt_step", cfg.adapt_step);
  s.target_accept = n.number("target_accept", s.target_accept, 0.0, 1.0, true);
  s.rwm_target_accept = n.number("rwm_target_accept", s.rwm_target_accept, 0.0, 1.0, true);
  n.finish();
}

void parse_design_cmd(Node n, DesignCmdConfig& d) {
  d.candidates = n.string("candidates", d.candidates);
  d.n_candidates = n.integer("n_candidates", d.n_candidates, 1, kBig);
  d.size = n.integer("size", d.size, 3, kBig);
  if (auto p = n.optional_string("initial_design")) d.initial_design = *p;
  d.output = n.string("output", d.output);
  n.finish();
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("/", std::string("invalid JSON: ") + e.what());
  }
  RunConfig cfg;
  Node root(j, "");
  parse_target(root.object("target"), cfg.target);
  parse_sampler(root.object("sampler"), cfg);
  parse_geometry(root.object("geometry"), cfg.geometry);
  parse_design_cmd(root.object("design"), cfg.design);

  if (const json* s = root.raw("seed")) {
    if (!s->is_number_unsigned() && !(s->is_number_integer() && s->get<long long>() >= 0))
      throw ConfigError("/seed", "expected a non-negative 64-bit integer");
    cfg.seed = s->get<std::uint64_t>();
  }
  cfg.iters = root.integer("iters", cfg.iters, 1, kBig);
  cfg.burnin = root.integer("burnin", cfg.burnin, 0, kBig);
  if (cfg.burnin >= cfg.iters) throw ConfigError("/burnin", "burnin must be smaller than iters");
  cfg.chains = static_cast<int>(root.integer("chains", cfg.chains, 1, 4096));
  cfg.output_dir = root.string("output_dir", cfg.output_dir.string());
  cfg.timing = root.string("timing", cfg.timing, {"wall", "none"});
  root.finish();

  // Cross-field rules.
  const bool riemann = cfg.sampler.kernel == KernelType::rhmc || cfg.sampler.kernel == KernelType::lmc;
  if (cfg.geometry.mode == "exact" && riemann && cfg.target.type == "elliptic")
    throw ConfigError("/sampler/type", "elliptic target has no analytic metric; use emulated geometry");
  if (cfg.geometry.mode == "emulated" && riemann && cfg.target.n_data == 0)
    throw ConfigError("/sampler/type", "emulated metric needs a target with per-datum likelihood terms");
  if (cfg.geometry.mode == "emulated" && cfg.sampler.kernel == KernelType::rwm)
    throw ConfigError("/sampler/type", "rwm does not use geometry; set geometry.mode to exact");
  if (cfg.geometry.adaptive && cfg.geometry.mode != "emulated")
    throw ConfigError("/geometry/adaptation/enabled", "adaptation requires emulated geometry");
  try {
    cfg.sampler.integrator.validate();
    cfg.geometry.adaptation.validate();
  } catch (const Error& e) {
    throw ConfigError("/", e.what());
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("/", "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const RunConfig& c) {
  json j;
  json t;
  t["type"] = c.target.type;
  if (c.target.type == "banana" || c.target.type == "bbd") {
    t["dim"] = c.target.dim;
    t["n_data"] = c.target.n_data;
    t["mu_true"] = c.target.mu_true;
    t["sigma_y"] = c.target.sigma_y;
    t["sigma_theta"] = c.target.sigma_theta;
  } else if (c.target.type == "elliptic") {
    const auto& o = c.target.elliptic;
    t["elliptic"] = {{"cells", o.cells},         {"obs_per_side", o.obs_per_side}, {"kl_terms", o.kl_terms},
                     {"lengthscale", o.kl_lengthscale}, {"variance", o.kl_variance},   {"noise_sd", o.noise_sd}};
  } else {
    json mean = json::array(), cov = json::array();
    for (Index i = 0; i < c.target.mean.size(); ++i) {
      mean.push_back(c.target.mean(i));
      json row = json::array();
      for (Index k = 0; k < c.target.cov.cols(); ++k) row.push_back(c.target.cov(i, k));
      cov.push_back(row);
    }
    t["gaussian"] = {{"mean", mean}, {"cov", cov}};
  }
  j["target"] = t;
  const auto& s = c.sampler;
  j["sampler"] = {{"type", to_string(s.kernel)},
                  {"epsilon", s.integrator.epsilon},
                  {"steps", s.integrator.steps},
                  {"fixed_point_iters", s.integrator.fixed_point_iters},
                  {"fixed_point_tol", s.integrator.fixed_point_tol},
                  {"rwm_scale", s.rwm_scale},
                  {"adapt_step", c.adapt_step},
                  {"target_accept", s.target_accept},
                  {"rwm_target_accept", s.rwm_target_accept}};
  const auto& g = c.geometry;
  const auto& a = g.adaptation;
  const auto& m = a.mice;
  j["geometry"] = {
      {"mode", g.mode},
      {"design", g.design_path ? json(g.design_path->string()) : json(nullptr)},
      {"initial_design",
       {{"source", g.initial.source},
        {"size", g.initial.size},
        {"candidates", g.initial.candidates},
        {"pilot_iters", g.initial.pilot_iters},
        {"pilot_scale", g.initial.pilot_scale}}},
      {"adaptation",
       {{"enabled", g.adaptive},
        {"test_interval", a.test_interval},
        {"max_adaptations", a.max_adaptations},
        {"holdout_size", a.holdout_size},
        {"q_max_tries", a.q_max_tries},
        {"metric_reg", a.metric_reg},
        {"mice",
         {{"nugget", m.nugget},
          {"candidate_nugget", m.candidate_nugget},
          {"init_keep", m.init_keep},
          {"maxmin_radius", m.maxmin_radius},
          {"mspe_rel_threshold", m.mspe_rel_threshold},
          {"max_size", m.max_size},
          {"max_candidates", m.max_candidates},
          {"keep_rule", m.keep_rule == KeepRule::recent ? "recent" : "spread"},
          {"rerun_mle", m.rerun_mle}}},
        {"mle",
         {{"restarts", a.mle.restarts},
          {"max_iters", a.mle.max_iters},
          {"tau_lo", a.mle.tau_lo},
          {"tau_hi", a.mle.tau_hi},
          {"gtol", a.mle.gtol}}}}}};
  j["design"] = {{"candidates", c.design.candidates},
                 {"n_candidates", c.design.n_candidates},
                 {"size", c.design.size},
                 {"initial_design", c.design.initial_design ? json(c.design.initial_design->string()) : json(nullptr)},
                 {"output", c.design.output}};
  j["seed"] = c.seed;
  j["iters"] = c.iters;
  j["burnin"] = c.burnin;
  j["chains"] = c.chains;
  j["output_dir"] = c.output_dir.string();
  j["timing"] = c.timing;
  return j.dump(2);
}

}  // namespace gpemc
