#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "psl/experiment.hpp"

namespace fs = std::filesystem;

namespace {

const char* kSmallConfig =
    "agents = 4\n"
    "hypotheses = 4\n"
    "theta0 = 1\n"
    "theta_tx = 1\n"
    "strategy = memory-aware\n"
    "horizon = 60\n"
    "seed = 12\n"
    "trials = 2\n"
    "graph = erdos-renyi\n"
    "graph.p = 0.8\n"
    "models = hypothesis-means\n"
    "indist = cardinalities\n"
    "indist.cardinalities = 1 2 1 0\n"
    "decision = uniform\n"
    "decision.epsilon = 0.05\n"
    "mc.samples = 10000\n";

fs::path fresh_dir(const std::string& tag) {
  const auto dir = fs::temp_directory_path() / ("psl_test_" + tag);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace

TEST_CASE("config parsing fills defaults and converts indices", "[experiment]") {
  const auto c = psl::ExperimentConfig::parse(kSmallConfig);
  REQUIRE(c.num_agents == 4);
  REQUIRE(c.num_hypotheses == 4);
  REQUIRE(c.theta0 == 0);
  REQUIRE(c.theta_tx == 0);
  REQUIRE(c.strategy == psl::Strategy::partial_memory_aware);
  REQUIRE(c.stride == 1);
  REQUIRE(c.trials == 2);
  REQUIRE(c.uniform_priors);
  REQUIRE_FALSE(c.diagnostics);
  REQUIRE(c.indist_cardinalities == std::vector<int>{1, 2, 1, 0});
}

TEST_CASE("config parsing lists every violation", "[experiment]") {
  try {
    psl::ExperimentConfig::parse(
        "agents = 0\n"
        "hypotheses = 1\n"
        "theta0 = 9\n"
        "strategy = warp\n"
        "horizon = -3\n"
        "mystery = 1\n");
    FAIL("expected ConfigError");
  } catch (const psl::ConfigError& e) {
    REQUIRE(e.problems.size() >= 6);  // agents, hypotheses, theta0, strategy,
                                      // horizon, missing seed, unknown key
    const std::string all = e.what();
    REQUIRE(all.find("'agents'") != std::string::npos);
    REQUIRE(all.find("'strategy'") != std::string::npos);
    REQUIRE(all.find("unknown key 'mystery'") != std::string::npos);
  }
}

TEST_CASE("config parsing validates referential consistency", "[experiment]") {
  // theta_tx out of range, cardinality too large, bad prior row
  try {
    psl::ExperimentConfig::parse(
        "agents = 2\n"
        "hypotheses = 3\n"
        "theta0 = 1\n"
        "theta_tx = 7\n"
        "strategy = memoryless\n"
        "horizon = 5\n"
        "seed = 1\n"
        "priors = explicit\n"
        "prior.1 = 0.5 0.4 0.1\n"
        "prior.2 = 0.5 0.5\n"
        "indist = cardinalities\n"
        "indist.cardinalities = 3 1\n");
    FAIL("expected ConfigError");
  } catch (const psl::ConfigError& e) {
    const std::string all = e.what();
    REQUIRE(all.find("'theta_tx'") != std::string::npos);
    REQUIRE(all.find("prior.2") != std::string::npos);
    REQUIRE(all.find("cardinalities") != std::string::npos);
  }
}

TEST_CASE("resolution is deterministic and honors the draw constraints",
          "[experiment]") {
  const auto c = psl::ExperimentConfig::parse(kSmallConfig);
  const auto a = psl::resolve(c);
  const auto b = psl::resolve(c);
  REQUIRE(a.structure.indistinguishable == b.structure.indistinguishable);
  for (int l = 0; l < 4; ++l)
    for (int k = 0; k < 4; ++k) REQUIRE(a.net.weight(l, k) == b.net.weight(l, k));
  REQUIRE(a.trial_seeds == b.trial_seeds);
  REQUIRE(a.trial_seeds.size() == 2);
  for (int k = 0; k < 4; ++k)
    REQUIRE(a.structure.cardinality(k) == c.indist_cardinalities[k]);
  for (double v : a.perron.v) REQUIRE_THAT(v, Catch::Matchers::WithinAbs(0.25, 1e-10));
  REQUIRE_THAT(a.rule.tau, Catch::Matchers::WithinAbs(0.2, 1e-15));
}

TEST_CASE("assumption audit passes on a well-posed scenario", "[experiment]") {
  const auto rx = psl::resolve(psl::ExperimentConfig::parse(kSmallConfig));
  const auto report = psl::check_assumptions(rx);
  REQUIRE(report.all_pass());
  REQUIRE(report.entries.size() == 5);
  // gaussian families leave the convex-combination check not applicable
  REQUIRE(report.entries[4].status == psl::AssumptionReport::Status::not_applicable);
}

TEST_CASE("assumption audit produces witnesses", "[experiment]") {
  SECTION("disconnected graph") {
    const auto dir = fresh_dir("audit_graph");
    fs::create_directories(dir);
    {
      std::ofstream edges(dir / "net.edges");
      edges << "2\n1 1 1\n2 2 1\n";
    }
    const auto c = psl::ExperimentConfig::parse(
        "agents = 2\nhypotheses = 2\ntheta0 = 1\nstrategy = full\n"
        "horizon = 1\nseed = 1\ngraph = explicit\ngraph.file = net.edges\n"
        "models = hypothesis-means\n",
        dir.string());
    const auto report = psl::check_assumptions(psl::resolve(c));
    REQUIRE_FALSE(report.all_pass());
    REQUIRE(report.entries[0].status == psl::AssumptionReport::Status::fail);
    REQUIRE(report.entries[0].detail.find("no path") != std::string::npos);
  }

  SECTION("infinite divergence and convex-combination failure") {
    const auto c = psl::ExperimentConfig::parse(
        "agents = 1\nhypotheses = 3\ntheta0 = 1\nstrategy = standalone\n"
        "horizon = 1\nseed = 1\ngraph = erdos-renyi\ngraph.p = 1\n"
        "models = discrete\n"
        "model.row.1.1 = 0.5 0.5\n"
        "model.row.1.2 = 1 0\n"
        "model.row.1.3 = 0 1\n");
    const auto report = psl::check_assumptions(psl::resolve(c));
    // rows 2 and 3 put zero mass where others are positive
    REQUIRE(report.entries[1].status == psl::AssumptionReport::Status::fail);
    // (0.5, 0.5) is the midpoint of (1,0) and (0,1)
    REQUIRE(report.entries[4].status == psl::AssumptionReport::Status::fail);
  }

  SECTION("globally unidentifiable sets") {
    const auto c = psl::ExperimentConfig::parse(
        "agents = 2\nhypotheses = 3\ntheta0 = 1\nstrategy = memory-aware\n"
        "theta_tx = 2\nhorizon = 1\nseed = 1\ngraph = erdos-renyi\ngraph.p = 1\n"
        "models = hypothesis-means\nindist = explicit\n"
        "indist.1 = 2\nindist.2 = 2 3\n");
    const auto report = psl::check_assumptions(psl::resolve(c));
    REQUIRE(report.entries[3].status == psl::AssumptionReport::Status::fail);
    REQUIRE(report.entries[3].detail.find("hypothesis 2") != std::string::npos);
  }

  SECTION("tampered priors fail the positivity audit") {
    auto rx = psl::resolve(psl::ExperimentConfig::parse(kSmallConfig));
    rx.priors[1][2] = 0.0;
    const auto report = psl::check_assumptions(rx);
    REQUIRE(report.entries[2].status == psl::AssumptionReport::Status::fail);
    REQUIRE(report.entries[2].detail.find("agent 2") != std::string::npos);
  }
}

TEST_CASE("run_experiment writes artifacts and reports exit codes", "[experiment]") {
  auto c = psl::ExperimentConfig::parse(kSmallConfig);
  const auto dir = fresh_dir("run");
  c.out_dir = dir.string();
  std::ostringstream log;
  REQUIRE(psl::run_experiment(c, log) == psl::kExitOk);
  REQUIRE(fs::exists(dir / "manifest.conf"));
  REQUIRE(fs::exists(dir / "network.edges"));
  REQUIRE(fs::exists(dir / "trajectory_trial1.csv"));
  REQUIRE(fs::exists(dir / "trajectory_trial2.csv"));
  REQUIRE(fs::exists(dir / "analysis.json"));

  const auto j = nlohmann::json::parse(slurp(dir / "analysis.json"));
  REQUIRE(j["scenario"]["strategy"] == "memory-aware");
  REQUIRE(j["confusion"].contains("rho"));
  REQUIRE(j["limits"]["regime"] == "tx-true");
  REQUIRE(j["trials"].size() == 2);
  REQUIRE(j["trials"][0].contains("observation_hash"));
  REQUIRE(j["memoryless_comparison"].contains("d_fict"));
}

TEST_CASE("manifests rerun byte-identically", "[experiment]") {
  auto c = psl::ExperimentConfig::parse(kSmallConfig);
  const auto dir_a = fresh_dir("manifest_a");
  c.out_dir = dir_a.string();
  std::ostringstream log;
  REQUIRE(psl::run_experiment(c, log) == psl::kExitOk);

  auto rerun = psl::ExperimentConfig::parse(slurp(dir_a / "manifest.conf"),
                                            dir_a.string());
  const auto dir_b = fresh_dir("manifest_b");
  rerun.out_dir = dir_b.string();
  REQUIRE(psl::run_experiment(rerun, log) == psl::kExitOk);

  for (int t = 1; t <= 2; ++t) {
    const auto name = "trajectory_trial" + std::to_string(t) + ".csv";
    REQUIRE(slurp(dir_a / name) == slurp(dir_b / name));
  }
  REQUIRE(slurp(dir_a / "analysis.json") == slurp(dir_b / "analysis.json"));
}

TEST_CASE("exit codes for broken configurations", "[experiment]") {
  std::ostringstream log;

  // missing graph file: validation error
  auto c = psl::ExperimentConfig::parse(
      "agents = 2\nhypotheses = 2\ntheta0 = 1\nstrategy = full\nhorizon = 1\n"
      "seed = 1\ngraph = explicit\ngraph.file = nowhere.edges\n"
      "models = hypothesis-means\n");
  REQUIRE(psl::run_experiment(c, log) == psl::kExitValidation);

  // unidentifiable scenario: assumption failure, waivable
  c = psl::ExperimentConfig::parse(
      "agents = 2\nhypotheses = 3\ntheta0 = 1\ntheta_tx = 2\n"
      "strategy = memory-aware\nhorizon = 5\nseed = 1\n"
      "graph = erdos-renyi\ngraph.p = 1\nmodels = hypothesis-means\n"
      "indist = explicit\nindist.1 = 2\nindist.2 = 2\n");
  const auto dir = fresh_dir("waive");
  c.out_dir = dir.string();
  REQUIRE(psl::run_experiment(c, log) == psl::kExitAssumption);
  c.waive_assumptions = true;
  REQUIRE(psl::run_experiment(c, log) == psl::kExitOk);

  // hopeless erdos-renyi connectivity: runtime failure
  c = psl::ExperimentConfig::parse(
      "agents = 40\nhypotheses = 2\ntheta0 = 1\nstrategy = full\nhorizon = 1\n"
      "seed = 1\ngraph = erdos-renyi\ngraph.p = 0.001\n"
      "models = hypothesis-means\n");
  REQUIRE(psl::run_experiment(c, log) == psl::kExitNumerical);
}

TEST_CASE("compare runs all strategies on one observation stream", "[experiment]") {
  auto c = psl::ExperimentConfig::parse(kSmallConfig);
  c.trials = 1;
  c.trial_seeds.clear();
  const auto dir = fresh_dir("compare");
  c.out_dir = dir.string();
  std::ostringstream log;
  REQUIRE(psl::compare_strategies(c, log) == psl::kExitOk);
  const auto j = nlohmann::json::parse(slurp(dir / "compare.json"));
  for (const char* name : {"full", "memoryless", "memory-aware", "standalone"}) {
    REQUIRE(j["strategies"].contains(name));
    REQUIRE(j["strategies"][name].size() == 1);
    REQUIRE(j["strategies"][name][0]["final_belief_tx"].size() == 4);
  }
  REQUIRE(j["observation_hashes"].size() == 1);
  REQUIRE(j["memoryless_comparison"].contains("predicted"));
}

TEST_CASE("canned scenarios parse, resolve and run end to end", "[experiment]") {
  for (const char* name : {"fig2-panel2", "fig2-panel3", "fig2-panel4"}) {
    auto c = psl::ExperimentConfig::parse(psl::canned_scenario(name));
    REQUIRE(c.num_agents == 20);
    REQUIRE(c.num_hypotheses == 10);
    REQUIRE(c.horizon == 2000);
    const auto rx = psl::resolve(c);
    REQUIRE(psl::check_assumptions(rx).all_pass());

    // shortened end-to-end run
    c.horizon = 10;
    c.diagnostics = false;
    c.mc_samples = 10000;
    const auto dir = fresh_dir(std::string("canned_") + name);
    c.out_dir = dir.string();
    std::ostringstream log;
    REQUIRE(psl::run_experiment(c, log) == psl::kExitOk);
    REQUIRE(fs::exists(dir / "analysis.json"));
  }
  REQUIRE_THROWS_AS(psl::canned_scenario("fig2-panel9"), psl::ConfigError);
}

TEST_CASE("canned panel 4 network confusion is zero", "[experiment]") {
  const auto rx =
      psl::resolve(psl::ExperimentConfig::parse(psl::canned_scenario("fig2-panel4")));
  REQUIRE(rx.structure.indistinguishable[0].empty());
  const auto cs = psl::confusion_summary(rx.priors, rx.structure, rx.perron);
  REQUIRE(cs.rho == 0.0);
}
