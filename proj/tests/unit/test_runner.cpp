#include "../support.hpp"

#include "gpemc/io.hpp"
#include "gpemc/runner.hpp"

#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

using namespace gpemc;
using namespace gpemc::test;
namespace fs = std::filesystem;

namespace {

std::string pointer_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.pointer();
  }
  return "<no error>";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "gpemc_unit" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_SUITE("runner") {
  TEST_CASE("config defaults and echo") {
    const RunConfig c = parse_config("{}");
    CHECK(c.target.type == "banana");
    CHECK(c.target.dim == 2);
    CHECK(c.sampler.kernel == KernelType::hmc);
    CHECK(c.geometry.mode == "exact");
    const RunConfig b = parse_config(R"({"target":{"type":"bbd"}})");
    CHECK(b.target.dim == 4);
    CHECK(b.target.n_data == 3000);
    CHECK(b.target.sigma_y == 10.0);
    const std::string echo = config_to_json(b);
    CHECK(config_to_json(parse_config(echo)) == echo);
  }

  TEST_CASE("config errors carry JSON pointers") {
    CHECK(pointer_of(R"({"sampler":{"stepz":3}})") == "/sampler/stepz");
    CHECK(pointer_of(R"({"iters":"many"})") == "/iters");
    CHECK(pointer_of(R"({"iters":10,"burnin":10})") == "/burnin");
    CHECK(pointer_of(R"({"sampler":{"epsilon":-1}})") == "/sampler/epsilon");
    CHECK(pointer_of(R"({"target":{"type":"bbd","dim":3}})") == "/target/dim");
    CHECK(pointer_of(R"({"target":{"type":"gaussian","gaussian":{"mean":[0,0],"cov":[[1,2],[2,1]]}}})") ==
          "/target/gaussian/cov");
    CHECK(pointer_of(R"({"geometry":{"mode":"curved"}})") == "/geometry/mode");
    CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
    RunConfig c = parse_config("{}");
    CHECK_THROWS_AS(apply_overrides(c, RunOverrides{std::nullopt, 0, std::nullopt}), ConfigError);
    apply_overrides(c, RunOverrides{42, 3, fs::path("elsewhere")});
    CHECK(c.seed == 42);
    CHECK(c.chains == 3);
    CHECK(c.output_dir == "elsewhere");
  }

  TEST_CASE("exact run is reproducible byte for byte") {
    RunConfig c = parse_config(R"({"iters":300,"burnin":100,"seed":9,"timing":"none",
                                   "sampler":{"epsilon":0.2,"steps":5}})");
    const fs::path first = scratch("repro_a");
    c.output_dir = first;
    run(c);
    c.output_dir = scratch("repro_b");
    run(c);
    const std::string a = slurp(first / "chain.csv");
    CHECK_FALSE(a.empty());
    CHECK(a == slurp(c.output_dir / "chain.csv"));
    const io::ChainData d = io::read_chain(c.output_dir / "chain.csv");
    CHECK(d.theta.rows() == 200);
    CHECK(d.theta.cols() == 2);
    CHECK(std::all_of(d.wall_ns.begin(), d.wall_ns.end(), [](long long w) { return w == 0; }));
    CHECK(d.kernel.front() == "hmc");
  }

  TEST_CASE("one retained sample is flagged") {
    RunConfig c = parse_config(R"({"iters":11,"burnin":10,"timing":"none"})");
    c.output_dir = scratch("one");
    const std::vector<ChainOutcome> o = run(c);
    REQUIRE(o.size() == 1);
    CHECK(o[0].summary.samples == 1);
    CHECK(o[0].summary.ess_flag);
    const nlohmann::json meta = nlohmann::json::parse(slurp(c.output_dir / "meta.json"));
    CHECK(meta["chains"][0]["ess_flag"] == true);
  }

  TEST_CASE("emulated bbd run writes every output") {
    RunConfig c = parse_config(R"({"target":{"type":"bbd","dim":4,"n_data":300},
                                   "sampler":{"epsilon":0.1,"steps":5},
                                   "geometry":{"mode":"emulated","initial_design":{"source":"prior","size":12,"candidates":60}},
                                   "iters":200,"burnin":50,"seed":4})");
    c.output_dir = scratch("bbd");
    const std::vector<ChainOutcome> o = run(c);
    for (const char* f : {"chain.csv", "events.csv", "summary.csv", "design.json", "meta.json", "data.csv"})
      CHECK(fs::exists(c.output_dir / f));
    CHECK(o[0].design_evaluations > 0);
    const auto [d, h] = io::load_design(c.output_dir / "design.json");
    CHECK(d.size() == 12);
    CHECK(d.has_per_datum());
    CHECK(h.rho.size() == 4);
    const io::ChainData ch = io::read_chain(c.output_dir / "chain.csv");
    CHECK(ch.kernel.front() == "gpe-hmc");
    CHECK(o[0].counters.exact_potential_calls == 1 + o[0].counters.proposals - o[0].counters.numerical_rejects);
  }

  TEST_CASE("design save and load round trip") {
    auto t = std::make_shared<BbdTarget>(BbdTarget::synthetic(2, 30, 1.0, 2.0, 1.0, 3));
    Rng rng(1);
    const DesignSet d = design_from(*t, uniform_points(rng, 7, 2, -1, 1));
    const Hyperparameters h = hyper((Vector(2) << 0.3, 1.7).finished(), 1e-7);
    const fs::path dir = scratch("io");
    io::save_design(dir / "d.json", d, h);
    const auto [d2, h2] = io::load_design(dir / "d.json");
    CHECK(d2.points == d.points);
    CHECK(d2.potentials == d.potentials);
    CHECK(*d2.gradients == *d.gradients);
    CHECK(d2.stacked_per_datum() == d.stacked_per_datum());
    CHECK(h2.rho == h.rho);
    CHECK(h2.nugget == h.nugget);
  }

  TEST_CASE("design from its own points is unchanged") {
    auto t = std::make_shared<BbdTarget>(BbdTarget::synthetic(2, 100, 1.0, 2.0, 1.0, 5));
    Rng rng(2);
    const DesignSet d = design_from(*t, uniform_points(rng, 10, 2, -1, 1.5));
    std::vector<Candidate> cands;
    for (Index i = 0; i < d.size(); ++i) cands.push_back({d.points.row(i).transpose(), d.potentials(i), {}, {}, {}});
    const Hyperparameters h = hyper(Vector::Constant(2, 0.8));
    const DesignBuild b = build_design(*t, cands, 20, std::make_pair(d, h), AdaptiveConfig{}, 1);
    CHECK(b.design.points == d.points);
    CHECK(b.design.potentials == d.potentials);
    CHECK(b.target_evaluations == 0);
  }

  TEST_CASE("design command picks candidate points and beats random subsets") {
    auto t = std::make_shared<BbdTarget>(BbdTarget::synthetic(2, 100, 1.0, 2.0, 1.0, 6));
    AdaptiveConfig acfg;
    acfg.mle.restarts = 2;
    int wins = 0;
    for (std::uint64_t s = 1; s <= 10; ++s) {
      Rng rng = make_rng(s, Stream::design);
      const std::vector<Candidate> cands = prior_candidates(*t, 50, rng);
      const DesignBuild b = build_design(*t, cands, 20, std::nullopt, acfg, s);
      REQUIRE(b.design.size() == 20);
      for (Index i = 0; i < 20; ++i) {
        const bool found = std::any_of(cands.begin(), cands.end(),
                                       [&](const Candidate& c) { return c.theta == b.design.points.row(i).transpose(); });
        CHECK(found);
      }
      // Holdout from the same distribution.
      Holdout ho;
      ho.points.resize(200, 2);
      ho.potentials.resize(200);
      for (Index i = 0; i < 200; ++i) {
        const Vector x = t->sample_prior(rng);
        ho.points.row(i) = x.transpose();
        ho.potentials(i) = t->potential(x);
      }
      std::vector<Index> perm(50);
      std::iota(perm.begin(), perm.end(), Index(0));
      std::shuffle(perm.begin(), perm.end(), rng);
      Matrix rp(20, 2);
      for (Index i = 0; i < 20; ++i) rp.row(i) = cands[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])].theta.transpose();
      const DesignSet rd = evaluate_design(*t, rp);
      MleOptions mo = acfg.mle;
      mo.seed = s;
      const Hyperparameters rh = mle_hyper(rd, default_init_tau(rd), acfg.mice.nugget, mo).hyper;
      const double ours = holdout_mspe(Emulator::build(b.design, b.hyper), ho);
      const double rand = holdout_mspe(Emulator::build(rd, rh), ho);
      wins += ours <= rand;
    }
    CHECK(wins >= 8);
  }

  TEST_CASE("diagnose reports a unit speedup for the baseline") {
    RunConfig c = parse_config(R"({"iters":300,"burnin":100,"seed":2})");
    c.output_dir = scratch("diag");
    run(c);
    const std::string out = diagnose({c.output_dir / "chain.csv"}, c.output_dir / "chain.csv");
    CHECK(out.find("1.00") != std::string::npos);
    CHECK(out.find("minESS/s") != std::string::npos);
  }
}
