#pragma once

#include "gpemc/geometry.hpp"
#include "gpemc/rng.hpp"
#include "gpemc/targets.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace gpemc {

enum class KernelType { rwm, hmc, rhmc, lmc };
std::string to_string(KernelType k);
/// Throws std::invalid_argument for unknown names.
KernelType kernel_from_string(const std::string& s);

struct IntegratorConfig {
  double epsilon = 0.1;
  int steps = 10;
  int fixed_point_iters = 6;
  double fixed_point_tol = 1e-8;
  void validate() const;
};

/// Metric quantities at one point, shared by the Riemannian integrators.
struct RiemannPoint {
  Vector theta;
  GeometryPoint geo;
  Eigen::LLT<Matrix> chol;  // G = L L^T
  Matrix Ginv;
  Vector grad_phi;          // grad U + tr(G^{-1} dG_k) / 2
  double logdet = 0.0;      // log det G
};

/// Throws NonFiniteGradient for non-finite geometry, IllConditioned for a non-SPD metric.
RiemannPoint riemann_point(const GeometryProvider& geo, const Vector& theta);

struct LeapfrogResult {
  Vector theta, p, grad;  // grad U at the end point
};
/// Stormer-Verlet with kinetic energy p^T M^{-1} p / 2. `grad0` is grad U at theta if known.
LeapfrogResult leapfrog(const GeometryProvider& geo, const Vector& theta, const Vector& p, double eps, int steps,
                        const Matrix& mass_inv, const Vector* grad0 = nullptr);

struct GeneralizedLeapfrogResult {
  Vector theta, p;
  RiemannPoint end;
  /// False if any implicit solve stopped at the iteration cap.
  bool converged = true;
  /// Successive-iterate sup-norms of every implicit solve, in order.
  std::vector<std::vector<double>> residual_traces;
};
/// Implicit symplectic integrator for H = U + log det G / 2 + p^T G^{-1} p / 2.
/// Throws FixedPointDivergence if an iterate becomes non-finite.
GeneralizedLeapfrogResult generalized_leapfrog(const GeometryProvider& geo, const Vector& theta, const Vector& p,
                                               const IntegratorConfig& cfg, const RiemannPoint* start = nullptr);

struct LmcResult {
  Vector theta, v;
  RiemannPoint end;
  /// log |d z_end / d z_start| accumulated over all steps.
  double logdet_jacobian = 0.0;
};
/// Explicit integrator of the Lagrangian dynamics in (theta, v).
/// Throws SingularUpdate if I + (eps/2) Omega is numerically singular.
LmcResult lmc_integrator(const GeometryProvider& geo, const Vector& theta, const Vector& v,
                         const IntegratorConfig& cfg, const RiemannPoint* start = nullptr);

/// Omega(theta, v)_{kj} = v^i Gamma^k_{ij}.
Matrix lmc_omega(const RiemannPoint& rp, const Vector& v);

double hmc_hamiltonian(double U, const Vector& p, const Matrix& mass_inv);
double rhmc_hamiltonian(double U, const RiemannPoint& rp, const Vector& p);
double lmc_energy(double U, const RiemannPoint& rp, const Vector& v);

/// Nesterov dual averaging of log step size toward a target acceptance rate.
class DualAveraging {
 public:
  DualAveraging(double initial, double target);
  void update(double accept_prob);
  double current() const { return std::exp(log_x_); }
  double averaged() const { return std::exp(log_x_bar_); }

 private:
  double mu_, target_, h_bar_ = 0.0, log_x_, log_x_bar_ = 0.0;
  int t_ = 0;
  static constexpr double kGamma = 0.05, kT0 = 10.0, kKappa = 0.75;
};

struct ChainState {
  Vector theta;
  double potential = 0.0;  // exact U(theta)
  Rng rng;
  // Geometry at theta under the sampler's current provider.
  std::optional<Vector> grad;
  std::optional<RiemannPoint> riemann;
  std::uint64_t cache_version = 0;
};

struct SamplerConfig {
  KernelType kernel = KernelType::hmc;
  IntegratorConfig integrator;
  double rwm_scale = 0.5;
  /// HMC mass matrix; identity when unset.
  std::optional<Matrix> mass;
  double target_accept = 0.7;
  double rwm_target_accept = 0.234;
};

struct StepResult {
  bool accepted = false;
  double log_ratio = -std::numeric_limits<double>::infinity();
  /// The proposal failed numerically and was rejected without an exact-U call.
  bool failed = false;
};

struct SamplerCounters {
  long long proposals = 0;
  long long accepted = 0;
  long long exact_potential_calls = 0;
  long long numerical_rejects = 0;
  long long fixed_point_unconverged = 0;
};

/// One transition kernel over a geometry provider. Acceptance tests always
/// use the exact target potential; each proposal costs one exact-U call.
class Sampler {
 public:
  Sampler(std::shared_ptr<const TargetModel> target, std::shared_ptr<const GeometryProvider> geometry,
          SamplerConfig cfg);

  ChainState init(const Vector& theta, Rng rng);
  StepResult step(ChainState& state);

  /// Swaps the provider between transitions; cached geometry is invalidated.
  void set_geometry(std::shared_ptr<const GeometryProvider> geometry);
  const GeometryProvider& geometry() const { return *geometry_; }
  const TargetModel& target() const { return *target_; }
  const SamplerConfig& config() const { return cfg_; }

  /// Step size (epsilon, or the RWM proposal scale).
  double step_size() const;
  void set_step_size(double s);
  void begin_adaptation();
  void end_adaptation();
  bool adapting() const { return adapt_.has_value(); }

  const SamplerCounters& counters() const { return counters_; }
  /// Exact potential through the counter.
  double exact_potential(const Vector& theta);

 private:
  StepResult step_rwm(ChainState& s);
  StepResult step_hmc(ChainState& s);
  StepResult step_rhmc(ChainState& s);
  StepResult step_lmc(ChainState& s);
  const RiemannPoint& cached_riemann(ChainState& s);
  const Vector& cached_grad(ChainState& s);
  bool metropolis(ChainState& s, double log_ratio);

  std::shared_ptr<const TargetModel> target_;
  std::shared_ptr<const GeometryProvider> geometry_;
  SamplerConfig cfg_;
  Matrix mass_chol_, mass_inv_;
  std::uint64_t version_ = 1;
  std::optional<DualAveraging> adapt_;
  SamplerCounters counters_;
};

}  // namespace gpemc
