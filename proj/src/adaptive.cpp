#include "gpemc/adaptive.hpp"

#include <algorithm>
#include <numeric>

namespace gpemc {

void AdaptiveConfig::validate() const {
  if (test_interval < 1) throw ShapeMismatch("adaptive: test_interval must be >= 1");
  if (max_adaptations < 0) throw ShapeMismatch("adaptive: max_adaptations must be >= 0");
  if (holdout_size < 0) throw ShapeMismatch("adaptive: holdout_size must be >= 0");
  if (q_max_tries < 1) throw ShapeMismatch("adaptive: q_max_tries must be >= 1");
  mice.validate();
}

namespace {

std::shared_ptr<const Emulator> build_emulator(const DesignSet& d, const Hyperparameters& h) {
  return std::make_shared<const Emulator>(Emulator::build(d, h));
}

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2), v.end());
  double m = v[n / 2];
  if (n % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2)));
  return m;
}

}  // namespace

AdaptiveChain::AdaptiveChain(std::shared_ptr<const TargetModel> target, DesignSet design, Hyperparameters hyper,
                             SamplerConfig sampler, AdaptiveConfig cfg, std::uint64_t seed)
    : target_(std::move(target)),
      cfg_(std::move(cfg)),
      emulator_(build_emulator(design, hyper)),
      proposal_(std::make_unique<IndependenceProposal>(
          IndependenceProposal::from_design(design, target_->prior_precision(), cfg_.metric_reg))),
      sampler_(target_, std::make_shared<EmulatedGeometry>(emulator_, target_->prior_precision(), cfg_.metric_reg),
               std::move(sampler)),
      rng_(make_rng(seed, Stream::adaptation)),
      active_(cfg_.active) {
  cfg_.validate();
  refresh_log_c();
}

double AdaptiveChain::exact_u(const Vector& theta) { return sampler_.exact_potential(theta); }

void AdaptiveChain::refresh_log_c() {
  std::vector<double> lw;
  tour_lw_.resize(tour_theta_.size());
  for (std::size_t i = 0; i < tour_theta_.size(); ++i) {
    tour_lw_[i] = -tour_u_[i] - proposal_->log_density(tour_theta_[i]);
    if (std::isfinite(tour_lw_[i])) lw.push_back(tour_lw_[i]);
  }
  if (lw.empty()) {
    const DesignSet& d = emulator_->design();
    for (Index i = 0; i < d.size(); ++i) {
      const double v = -d.potentials(i) - proposal_->log_density(d.points.row(i).transpose());
      if (std::isfinite(v)) lw.push_back(v);
    }
  }
  proposal_->set_log_c(lw.empty() ? 0.0 : median(std::move(lw)));
}

void AdaptiveChain::rebuild(const DesignSet& design, const Hyperparameters& hyper) {
  emulator_ = build_emulator(design, hyper);
  sampler_.set_geometry(std::make_shared<EmulatedGeometry>(emulator_, target_->prior_precision(), cfg_.metric_reg));
  proposal_ = std::make_unique<IndependenceProposal>(
      IndependenceProposal::from_design(design, target_->prior_precision(), cfg_.metric_reg));
  ++rebuilds_;
  refresh_log_c();
}

void AdaptiveChain::adapt() {
  events_.push_back({iter_, "adapt_start", emulator_->design().size(), std::numeric_limits<double>::quiet_NaN()});
  const Index T = static_cast<Index>(tour_theta_.size());
  const Index nh = std::min(cfg_.holdout_size, T / 2);
  std::vector<Index> order(static_cast<std::size_t>(T));
  std::iota(order.begin(), order.end(), Index(0));
  std::shuffle(order.begin(), order.end(), rng_);
  std::vector<Index> hold(order.begin(), order.begin() + nh);
  std::sort(hold.begin(), hold.end());

  Holdout h;
  h.points.resize(nh, target_->dim());
  h.potentials.resize(nh);
  for (Index i = 0; i < nh; ++i) {
    h.points.row(i) = tour_theta_[static_cast<std::size_t>(hold[i])].transpose();
    h.potentials(i) = tour_u_[static_cast<std::size_t>(hold[i])];
  }
  std::vector<Candidate> cands;
  for (Index t = 0; t < T; ++t) {
    if (std::binary_search(hold.begin(), hold.end(), t)) continue;
    Candidate c;
    c.theta = tour_theta_[static_cast<std::size_t>(t)];
    c.potential = tour_u_[static_cast<std::size_t>(t)];
    cands.push_back(std::move(c));
  }

  MiceResult r = mice_refine(emulator_->design(), emulator_->hyper(), cands, h, *target_, cfg_.mice, cfg_.mle);
  rebuild(r.design, r.hyper);
  ++adaptations_;
  const double mspe = h.size() > 0 ? holdout_mspe(*emulator_, h) : std::numeric_limits<double>::quiet_NaN();
  events_.push_back({iter_, "adapt_done", emulator_->design().size(), mspe});
  if (h.size() > 0 && mspe < mspe_threshold(h, cfg_.mice.mspe_rel_threshold)) active_ = false;
  if (adaptations_ >= cfg_.max_adaptations) active_ = false;
}

AdaptiveIteration AdaptiveChain::iterate(ChainState& s) {
  ++iter_;
  AdaptiveIteration out;
  out.kernel1 = sampler_.step(s);

  const Vector prop = proposal_->sample(s.rng);
  const double u_accept = uniform01(s.rng);
  double U = std::numeric_limits<double>::infinity();
  try {
    U = exact_u(prop);
  } catch (const Error&) {
  }
  const double lw_cur = -s.potential - proposal_->log_density(s.theta);
  const double lw_new = -U - proposal_->log_density(prop);
  if (std::isfinite(lw_new) && std::log(u_accept) < std::min(0.0, lw_new - lw_cur)) {
    out.kernel2_accepted = true;
    ++k2_accepts_;
    if (iter_ % cfg_.test_interval == 0) {
      // Before the first regeneration c tracks the running tour.
      if (regenerations_ == 0) {
        std::vector<double> lw;
        for (double v : tour_lw_)
          if (std::isfinite(v)) lw.push_back(v);
        if (!lw.empty()) proposal_->set_log_c(median(std::move(lw)));
      }
      const double lr = log_regen_prob(lw_cur, lw_new, proposal_->log_c());
      out.regenerated = std::log(uniform01(s.rng)) < lr;
    }
    if (out.regenerated) {
      ++regenerations_;
      events_.push_back({iter_, "regen", emulator_->design().size(), std::numeric_limits<double>::quiet_NaN()});
      if (active_) {
        adapt();
        out.adapted = true;
      }
      tour_theta_.clear();
      tour_u_.clear();
      tour_lw_.clear();
      try {
        QDraw d = sample_Q(s.rng, [this](const Vector& x) { return exact_u(x); }, *proposal_, cfg_.q_max_tries);
        s.theta = std::move(d.theta);
        s.potential = d.potential;
      } catch (const RejectionBudgetExhausted&) {
        s.theta = prop;
        s.potential = U;
        events_.push_back({iter_, "q_exhausted", emulator_->design().size(), std::numeric_limits<double>::quiet_NaN()});
      }
    } else {
      s.theta = prop;
      s.potential = U;
    }
    s.grad.reset();
    s.riemann.reset();
  }
  tour_theta_.push_back(s.theta);
  tour_u_.push_back(s.potential);
  tour_lw_.push_back(-s.potential - proposal_->log_density(s.theta));
  return out;
}

}  // namespace gpemc
