#pragma once

// Experiment runner: flat key=value scenario configs, assumption audits,
// single- and multi-trial execution with per-trial artifacts, the
// four-strategy comparison on shared observation streams, and the canned
// reproduction scenarios. Every run writes a manifest with all randomness
// resolved (graph, indistinguishable sets, trial seeds) so it can be
// re-executed bit-identically.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "psl/analysis.hpp"
#include "psl/learning.hpp"
#include "psl/models.hpp"
#include "psl/network.hpp"

namespace psl {

// Exit codes shared by the library entry points and the command line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitAssumption = 3;
inline constexpr int kExitNumerical = 4;

struct ConfigError : std::runtime_error {
  std::vector<std::string> problems;
  explicit ConfigError(std::vector<std::string> ps)
      : std::runtime_error(join(ps)), problems(std::move(ps)) {}

 private:
  static std::string join(const std::vector<std::string>& ps) {
    std::string all = "invalid configuration:";
    for (const auto& p : ps) all += "\n  - " + p;
    return all;
  }
};

enum class GraphSource { erdos_renyi, explicit_file };
enum class ModelSource { hypothesis_means, gaussian, discrete };
enum class IndistSource { none, cardinalities, explicit_sets };

struct ExperimentConfig {
  int num_agents = 0;
  int num_hypotheses = 0;
  int theta0 = -1;    // 0-based internally; 1-based in config text
  int theta_tx = -1;  // defaults to theta0
  Strategy strategy = Strategy::partial_memory_aware;
  long horizon = 0;
  std::uint64_t seed = 0;
  int trials = 1;
  int stride = 1;
  bool diagnostics = false;
  bool waive_assumptions = false;
  std::string out_dir = "out";
  std::string base_dir = ".";

  bool uniform_priors = true;
  std::vector<std::vector<double>> priors;  // filled when explicit

  GraphSource graph_source = GraphSource::erdos_renyi;
  double er_p = 0.0;
  std::optional<std::uint64_t> graph_seed;
  std::string graph_file;

  ModelSource model_source = ModelSource::hypothesis_means;
  std::vector<std::vector<double>> gaussian_means;                // [agent][hyp]
  std::vector<std::vector<std::vector<double>>> discrete_rows;    // [agent][hyp][symbol]

  IndistSource indist_source = IndistSource::none;
  std::vector<int> indist_cardinalities;
  std::optional<std::uint64_t> indist_seed;
  std::vector<std::vector<int>> indist_sets;  // 0-based hypotheses

  DecisionRule::Mode decision_mode = DecisionRule::Mode::uniform;
  double decision_epsilon = 0.01;
  double decision_tau = 0.0;

  long mc_samples = 1000000;
  std::vector<std::uint64_t> trial_seeds;  // resolved; empty = derive from seed

  static ExperimentConfig parse(const std::string& text, const std::string& base_dir = ".");
};

namespace detail {

struct KeyValueReader {
  std::map<std::string, std::string> entries;
  mutable std::vector<std::string> consumed;
  std::vector<std::string>* problems;

  bool has(const std::string& key) const {
    consumed.push_back(key);
    return entries.count(key) != 0;
  }

  std::string raw(const std::string& key) const { return entries.at(key); }

  void complain(const std::string& msg) const { problems->push_back(msg); }

  template <typename T>
  std::optional<T> get(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    std::istringstream in(entries.at(key));
    T value{};
    if (!(in >> value) || !(in >> std::ws).eof()) {
      complain("key '" + key + "': cannot parse '" + entries.at(key) + "'");
      return std::nullopt;
    }
    return value;
  }

  template <typename T>
  T get_or(const std::string& key, T fallback) const {
    auto v = get<T>(key);
    return v ? *v : fallback;
  }

  template <typename T>
  std::optional<std::vector<T>> get_list(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    std::istringstream in(entries.at(key));
    std::vector<T> values;
    T value{};
    while (in >> value) values.push_back(value);
    if (!in.eof()) {
      complain("key '" + key + "': cannot parse list '" + entries.at(key) + "'");
      return std::nullopt;
    }
    return values;
  }
};

inline std::map<std::string, std::string> read_key_values(const std::string& text,
                                                          std::vector<std::string>& problems) {
  std::map<std::string, std::string> entries;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(line_no) + ": expected 'key = value'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      problems.push_back("line " + std::to_string(line_no) + ": empty key");
      continue;
    }
    if (!entries.emplace(key, value).second)
      problems.push_back("duplicate key '" + key + "'");
  }
  return entries;
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::parse(const std::string& text,
                                                const std::string& base_dir) {
  std::vector<std::string> problems;
  detail::KeyValueReader r{detail::read_key_values(text, problems), {}, &problems};
  ExperimentConfig c;
  c.base_dir = base_dir;

  c.num_agents = r.get_or<int>("agents", 0);
  c.num_hypotheses = r.get_or<int>("hypotheses", 0);
  if (c.num_agents < 1) problems.push_back("'agents' must be >= 1");
  if (c.num_hypotheses < 2) problems.push_back("'hypotheses' must be >= 2");

  const int theta0_1 = r.get_or<int>("theta0", 0);
  if (theta0_1 < 1 || theta0_1 > c.num_hypotheses)
    problems.push_back("'theta0' must lie in 1.." + std::to_string(c.num_hypotheses));
  else
    c.theta0 = theta0_1 - 1;
  const int theta_tx_1 = r.get_or<int>("theta_tx", theta0_1);
  if (theta_tx_1 < 1 || theta_tx_1 > c.num_hypotheses)
    problems.push_back("'theta_tx' must lie in 1.." + std::to_string(c.num_hypotheses));
  else
    c.theta_tx = theta_tx_1 - 1;

  if (const auto s = r.get<std::string>("strategy")) {
    if (*s == "full") c.strategy = Strategy::full_sharing;
    else if (*s == "memoryless") c.strategy = Strategy::partial_memoryless;
    else if (*s == "memory-aware") c.strategy = Strategy::partial_memory_aware;
    else if (*s == "standalone") c.strategy = Strategy::standalone;
    else problems.push_back("'strategy' must be full | memoryless | memory-aware | standalone");
  } else {
    problems.push_back("missing required key 'strategy'");
  }

  c.horizon = r.get_or<long>("horizon", -1);
  if (c.horizon < 0) problems.push_back("'horizon' must be >= 0");
  if (const auto s = r.get<std::uint64_t>("seed")) c.seed = *s;
  else problems.push_back("missing required key 'seed'");
  c.trials = r.get_or<int>("trials", 1);
  if (c.trials < 1) problems.push_back("'trials' must be >= 1");
  c.stride = r.get_or<int>("stride", 1);
  if (c.stride < 1) problems.push_back("'stride' must be >= 1");

  const std::string diag = r.get_or<std::string>("diagnostics", "off");
  if (diag == "on") c.diagnostics = true;
  else if (diag != "off") problems.push_back("'diagnostics' must be on | off");
  if (r.has("out")) c.out_dir = r.raw("out");

  // priors
  const std::string priors_mode = r.get_or<std::string>("priors", "uniform");
  if (priors_mode == "uniform") {
    c.uniform_priors = true;
  } else if (priors_mode == "explicit") {
    c.uniform_priors = false;
    for (int k = 1; k <= c.num_agents; ++k) {
      const std::string key = "prior." + std::to_string(k);
      const auto row = r.get_list<double>(key);
      if (!row) {
        problems.push_back("missing '" + key + "' for explicit priors");
        continue;
      }
      if (static_cast<int>(row->size()) != c.num_hypotheses) {
        problems.push_back("'" + key + "' must list " + std::to_string(c.num_hypotheses) +
                           " values");
        continue;
      }
      double sum = 0.0;
      bool positive = true;
      for (double p : *row) {
        sum += p;
        positive = positive && p > 0.0;
      }
      if (!positive) problems.push_back("'" + key + "' must be strictly positive");
      else if (std::abs(sum - 1.0) > kSimplexTolerance)
        problems.push_back("'" + key + "' sums to " + num::format_g17(sum));
      c.priors.push_back(*row);
    }
  } else {
    problems.push_back("'priors' must be uniform | explicit");
  }

  // graph
  const std::string graph_mode = r.get_or<std::string>("graph", "erdos-renyi");
  if (graph_mode == "erdos-renyi") {
    c.graph_source = GraphSource::erdos_renyi;
    c.er_p = r.get_or<double>("graph.p", 0.0);
    if (!(c.er_p > 0.0 && c.er_p <= 1.0))
      problems.push_back("'graph.p' must lie in (0,1] for erdos-renyi graphs");
    c.graph_seed = r.get<std::uint64_t>("graph.seed");
  } else if (graph_mode == "explicit") {
    c.graph_source = GraphSource::explicit_file;
    if (r.has("graph.file")) c.graph_file = r.raw("graph.file");
    else problems.push_back("missing 'graph.file' for an explicit graph");
  } else {
    problems.push_back("'graph' must be erdos-renyi | explicit");
  }

  // models
  const std::string model_mode = r.get_or<std::string>("models", "hypothesis-means");
  if (model_mode == "hypothesis-means") {
    c.model_source = ModelSource::hypothesis_means;
  } else if (model_mode == "gaussian") {
    c.model_source = ModelSource::gaussian;
    for (int k = 1; k <= c.num_agents; ++k) {
      const std::string key = "model.means." + std::to_string(k);
      const auto means = r.get_list<double>(key);
      if (!means) {
        problems.push_back("missing '" + key + "' for gaussian models");
        continue;
      }
      if (static_cast<int>(means->size()) != c.num_hypotheses)
        problems.push_back("'" + key + "' must list " + std::to_string(c.num_hypotheses) +
                           " means");
      c.gaussian_means.push_back(*means);
    }
  } else if (model_mode == "discrete") {
    c.model_source = ModelSource::discrete;
    std::size_t alphabet = 0;
    for (int k = 1; k <= c.num_agents; ++k) {
      std::vector<std::vector<double>> rows;
      for (int h = 1; h <= c.num_hypotheses; ++h) {
        const std::string key = "model.row." + std::to_string(k) + "." + std::to_string(h);
        const auto row = r.get_list<double>(key);
        if (!row) {
          problems.push_back("missing '" + key + "' for discrete models");
          rows.clear();
          break;
        }
        if (alphabet == 0) alphabet = row->size();
        if (row->size() != alphabet)
          problems.push_back("'" + key + "' has a different alphabet size");
        rows.push_back(*row);
      }
      c.discrete_rows.push_back(std::move(rows));
    }
  } else {
    problems.push_back("'models' must be hypothesis-means | gaussian | discrete");
  }

  // indistinguishable sets
  const std::string indist_mode = r.get_or<std::string>("indist", "none");
  if (indist_mode == "none") {
    c.indist_source = IndistSource::none;
  } else if (indist_mode == "cardinalities") {
    c.indist_source = IndistSource::cardinalities;
    const auto cards = r.get_list<int>("indist.cardinalities");
    if (!cards) {
      problems.push_back("missing 'indist.cardinalities'");
    } else {
      if (static_cast<int>(cards->size()) != c.num_agents)
        problems.push_back("'indist.cardinalities' must list one value per agent");
      for (int card : *cards)
        if (card < 0 || card > c.num_hypotheses - 1)
          problems.push_back("indistinguishable cardinalities must lie in 0.." +
                             std::to_string(c.num_hypotheses - 1));
      c.indist_cardinalities = *cards;
    }
    c.indist_seed = r.get<std::uint64_t>("indist.seed");
  } else if (indist_mode == "explicit") {
    c.indist_source = IndistSource::explicit_sets;
    for (int k = 1; k <= c.num_agents; ++k) {
      const std::string key = "indist." + std::to_string(k);
      std::vector<int> set;
      if (const auto listed = r.get_list<int>(key)) {
        for (int theta : *listed) {
          if (theta < 1 || theta > c.num_hypotheses || theta == c.theta0 + 1)
            problems.push_back("'" + key + "': hypothesis " + std::to_string(theta) +
                               " invalid (out of range or equal to theta0)");
          else
            set.push_back(theta - 1);
        }
        std::sort(set.begin(), set.end());
        if (std::adjacent_find(set.begin(), set.end()) != set.end())
          problems.push_back("'" + key + "': duplicate hypothesis");
      }
      c.indist_sets.push_back(std::move(set));
    }
  } else {
    problems.push_back("'indist' must be none | cardinalities | explicit");
  }
  if (c.model_source != ModelSource::hypothesis_means &&
      c.indist_source != IndistSource::none)
    problems.push_back("explicit likelihoods derive their indistinguishable sets from "
                       "the data; use 'indist = none'");

  // decision rule
  const std::string decision_mode = r.get_or<std::string>("decision", "uniform");
  c.decision_epsilon = r.get_or<double>("decision.epsilon", 0.01);
  if (decision_mode == "uniform") {
    c.decision_mode = DecisionRule::Mode::uniform;
    if (c.num_hypotheses >= 2 &&
        !(c.decision_epsilon > 0.0 && c.decision_epsilon < 1.0 / c.num_hypotheses))
      problems.push_back("'decision.epsilon' must lie in (0, 1/H)");
  } else if (decision_mode == "min-prior") {
    c.decision_mode = DecisionRule::Mode::min_prior;
  } else if (decision_mode == "explicit") {
    c.decision_mode = DecisionRule::Mode::explicit_tau;
    c.decision_tau = r.get_or<double>("decision.tau", 0.0);
    if (!(c.decision_tau > 0.0 && c.decision_tau < 1.0))
      problems.push_back("'decision.tau' must lie in (0,1)");
  } else if (decision_mode == "max-belief") {
    c.decision_mode = DecisionRule::Mode::max_belief_comparison;
  } else {
    problems.push_back("'decision' must be uniform | min-prior | explicit | max-belief");
  }

  c.mc_samples = r.get_or<long>("mc.samples", 1000000);
  if (c.mc_samples < kMinMonteCarloSamples)
    problems.push_back("'mc.samples' must be >= " + std::to_string(kMinMonteCarloSamples));

  if (const auto seeds = r.get_list<std::uint64_t>("trial.seeds")) {
    if (static_cast<int>(seeds->size()) != c.trials)
      problems.push_back("'trial.seeds' must list exactly 'trials' values");
    c.trial_seeds = *seeds;
  }

  const std::string waive = r.get_or<std::string>("waive-assumptions", "off");
  if (waive == "on") c.waive_assumptions = true;
  else if (waive != "off") problems.push_back("'waive-assumptions' must be on | off");

  for (const auto& [key, value] : r.entries)
    if (std::find(r.consumed.begin(), r.consumed.end(), key) == r.consumed.end())
      problems.push_back("unknown key '" + key + "'");

  if (!problems.empty()) throw ConfigError(std::move(problems));
  return c;
}

struct ResolvedExperiment {
  ExperimentConfig config;
  Network net;
  std::vector<LikelihoodFamily> models;
  IdentifiabilityStructure structure;
  PerronVector perron;
  std::vector<std::vector<double>> priors;
  std::vector<std::uint64_t> trial_seeds;
  DecisionRule rule;
};

// Draws or loads everything random in the configuration. Deterministic in
// the seeds; a resolved experiment can be frozen into a manifest.
inline ResolvedExperiment resolve(const ExperimentConfig& c) {
  Network net = [&] {
    if (c.graph_source == GraphSource::erdos_renyi)
      return generate_erdos_renyi(c.num_agents, c.er_p, c.graph_seed.value_or(c.seed));
    const auto path = std::filesystem::path(c.base_dir) / c.graph_file;
    std::ifstream in(path);
    if (!in) throw ConfigError({"cannot open graph file '" + path.string() + "'"});
    Network loaded = load_edge_list(in);
    if (loaded.num_agents() != c.num_agents)
      throw ConfigError({"graph file has " + std::to_string(loaded.num_agents()) +
                         " agents, config says " + std::to_string(c.num_agents)});
    return loaded;
  }();

  std::vector<std::vector<int>> indist(c.num_agents);
  if (c.indist_source == IndistSource::cardinalities)
    indist = draw_indistinguishable_sets(c.num_hypotheses, c.theta0,
                                         c.indist_cardinalities,
                                         c.indist_seed.value_or(c.seed));
  else if (c.indist_source == IndistSource::explicit_sets)
    indist = c.indist_sets;

  std::vector<LikelihoodFamily> models;
  for (int k = 0; k < c.num_agents; ++k) {
    switch (c.model_source) {
      case ModelSource::hypothesis_means:
        models.push_back(make_hypothesis_mean_gaussian(c.num_hypotheses, c.theta0, indist[k]));
        break;
      case ModelSource::gaussian:
        models.push_back(LikelihoodFamily::gaussian(c.gaussian_means[k]));
        break;
      case ModelSource::discrete:
        models.push_back(LikelihoodFamily::discrete(c.discrete_rows[k]));
        break;
    }
  }

  IdentifiabilityStructure structure = derive_identifiability(models, c.theta0);
  PerronVector perron = perron_eigenvector(net);
  std::vector<std::vector<double>> priors;
  if (c.uniform_priors)
    priors.assign(c.num_agents,
                  std::vector<double>(c.num_hypotheses, 1.0 / c.num_hypotheses));
  else
    priors = c.priors;

  std::vector<std::uint64_t> trial_seeds = c.trial_seeds;
  if (trial_seeds.empty())
    for (int t = 0; t < c.trials; ++t)
      trial_seeds.push_back(rng::derive_trial_seed(c.seed, static_cast<std::uint64_t>(t)));

  DecisionRule rule = [&] {
    switch (c.decision_mode) {
      case DecisionRule::Mode::min_prior:
        return DecisionRule::min_prior(priors, c.decision_epsilon);
      case DecisionRule::Mode::explicit_tau:
        return DecisionRule::explicit_threshold(c.decision_tau);
      case DecisionRule::Mode::max_belief_comparison:
        return DecisionRule::max_belief();
      default:
        return DecisionRule::uniform(c.num_hypotheses, c.decision_epsilon);
    }
  }();

  return ResolvedExperiment{c,
                            std::move(net),
                            std::move(models),
                            std::move(structure),
                            std::move(perron),
                            std::move(priors),
                            std::move(trial_seeds),
                            rule};
}

struct AssumptionReport {
  enum class Status { pass, fail, not_applicable };
  struct Entry {
    int assumption = 0;
    Status status = Status::pass;
    std::string detail;
  };
  std::vector<Entry> entries;

  bool all_pass() const {
    for (const auto& e : entries)
      if (e.status == Status::fail) return false;
    return true;
  }
};

// Audits the five model/network assumptions against a resolved experiment,
// with a witness for every failure.
inline AssumptionReport check_assumptions(const ResolvedExperiment& rx) {
  AssumptionReport report;
  const int K = rx.net.num_agents();
  const int H = rx.config.num_hypotheses;

  const auto connectivity = check_strong_connectivity(rx.net);
  report.entries.push_back({1,
                            connectivity.ok() ? AssumptionReport::Status::pass
                                              : AssumptionReport::Status::fail,
                            connectivity.describe()});

  {
    AssumptionReport::Entry e{2, AssumptionReport::Status::pass,
                              "all pairwise KL divergences finite"};
    for (int k = 0; k < K && e.status == AssumptionReport::Status::pass; ++k)
      for (int a = 0; a < H && e.status == AssumptionReport::Status::pass; ++a)
        for (int b = 0; b < H; ++b)
          if (!std::isfinite(detail::kl_raw(rx.models[k], a, b))) {
            e.status = AssumptionReport::Status::fail;
            e.detail = "agent " + std::to_string(k + 1) + ": KL(" + std::to_string(a + 1) +
                       " || " + std::to_string(b + 1) + ") is infinite";
            break;
          }
    report.entries.push_back(std::move(e));
  }

  {
    AssumptionReport::Entry e{3, AssumptionReport::Status::pass,
                              "all initial beliefs strictly positive"};
    for (int k = 0; k < K && e.status == AssumptionReport::Status::pass; ++k)
      for (int h = 0; h < H; ++h)
        if (!(rx.priors[k][h] > 0.0)) {
          e.status = AssumptionReport::Status::fail;
          e.detail = "agent " + std::to_string(k + 1) + " assigns zero prior to hypothesis " +
                     std::to_string(h + 1);
          break;
        }
    report.entries.push_back(std::move(e));
  }

  {
    const auto gi = check_global_identifiability(rx.structure);
    AssumptionReport::Entry e{4, AssumptionReport::Status::pass,
                              "no hypothesis indistinguishable at every agent"};
    if (!gi.ok) {
      e.status = AssumptionReport::Status::fail;
      e.detail = "hypothesis " + std::to_string(*gi.witness + 1) +
                 " is indistinguishable at every agent";
    }
    report.entries.push_back(std::move(e));
  }

  {
    AssumptionReport::Entry e{5, AssumptionReport::Status::not_applicable,
                              "parametric families; satisfied by construction"};
    for (int k = 0; k < K; ++k) {
      if (rx.models[k].kind() != FamilyKind::discrete) continue;
      const auto& dk = rx.structure.distinguishable[k];
      if (static_cast<int>(dk.size()) > 4) {
        if (e.status != AssumptionReport::Status::fail) {
          e.status = AssumptionReport::Status::not_applicable;
          e.detail = "agent " + std::to_string(k + 1) +
                     ": distinguishable set too large for the desk-scale check";
        }
        continue;
      }
      const auto cc = check_convex_combination(rx.models[k], rx.structure.theta0, dk);
      if (cc.status == ConvexCombStatus::violated) {
        e.status = AssumptionReport::Status::fail;
        e.detail = "agent " + std::to_string(k + 1) +
                   ": true likelihood is a convex combination of distinguishable ones";
        break;
      }
      if (e.status == AssumptionReport::Status::not_applicable &&
          cc.status == ConvexCombStatus::holds) {
        e.status = AssumptionReport::Status::pass;
        e.detail = "no convex combination reproduces the true likelihood";
      }
    }
    report.entries.push_back(std::move(e));
  }
  return report;
}

inline void print_assumption_report(const AssumptionReport& report, std::ostream& out) {
  static const char* names[] = {"", "strongly connected network", "finite KL divergences",
                                "positive initial beliefs", "global identifiability",
                                "likelihood models"};
  for (const auto& e : report.entries) {
    const char* status = e.status == AssumptionReport::Status::pass ? "pass"
                         : e.status == AssumptionReport::Status::fail ? "FAIL"
                                                                      : "n/a ";
    out << "assumption " << e.assumption << " (" << names[e.assumption] << "): " << status
        << " - " << e.detail << "\n";
  }
}

namespace detail {

// Dispatches trial bodies to a small worker pool; the first exception wins.
inline void parallel_trials(int trials, const std::function<void(int)>& body) {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const int workers = static_cast<int>(std::min<unsigned>(hw, trials));
  if (workers <= 1) {
    for (int t = 0; t < trials; ++t) body(t);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const int t = next.fetch_add(1);
        if (t >= trials) return;
        try {
          body(t);
        } catch (...) {
          std::scoped_lock lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

inline ScenarioConfig trial_scenario(const ResolvedExperiment& rx, std::uint64_t trial_seed,
                                     std::optional<int> stride_override = std::nullopt) {
  ScenarioConfig sc;
  sc.num_hypotheses = rx.config.num_hypotheses;
  sc.theta0 = rx.config.theta0;
  sc.theta_tx = rx.config.theta_tx;
  sc.strategy = rx.config.strategy;
  sc.priors = rx.priors;
  sc.horizon = rx.config.horizon;
  sc.seed = trial_seed;
  sc.stride = stride_override.value_or(rx.config.stride);
  sc.record_psi = rx.config.diagnostics;
  return sc;
}

inline std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace detail

// Writes the fully resolved configuration: re-running the manifest
// reproduces every trajectory byte for byte.
inline void write_manifest(const ResolvedExperiment& rx, const std::string& graph_file,
                           std::ostream& out) {
  const auto& c = rx.config;
  out << "# resolved experiment manifest\n";
  out << "agents = " << c.num_agents << "\n";
  out << "hypotheses = " << c.num_hypotheses << "\n";
  out << "theta0 = " << (c.theta0 + 1) << "\n";
  out << "theta_tx = " << (c.theta_tx + 1) << "\n";
  out << "strategy = " << strategy_name(c.strategy) << "\n";
  out << "horizon = " << c.horizon << "\n";
  out << "seed = " << c.seed << "\n";
  out << "trials = " << c.trials << "\n";
  out << "stride = " << c.stride << "\n";
  out << "diagnostics = " << (c.diagnostics ? "on" : "off") << "\n";
  out << "waive-assumptions = " << (c.waive_assumptions ? "on" : "off") << "\n";
  if (c.uniform_priors) {
    out << "priors = uniform\n";
  } else {
    out << "priors = explicit\n";
    for (int k = 0; k < c.num_agents; ++k) {
      out << "prior." << (k + 1) << " =";
      for (double p : rx.priors[k]) out << " " << num::format_g17(p);
      out << "\n";
    }
  }
  out << "graph = explicit\n";
  out << "graph.file = " << graph_file << "\n";
  switch (c.model_source) {
    case ModelSource::hypothesis_means:
      out << "models = hypothesis-means\n";
      out << "indist = explicit\n";
      for (int k = 0; k < c.num_agents; ++k) {
        const auto& ik = rx.structure.indistinguishable[k];
        if (ik.empty()) continue;
        out << "indist." << (k + 1) << " =";
        for (int theta : ik) out << " " << (theta + 1);
        out << "\n";
      }
      break;
    case ModelSource::gaussian:
      out << "models = gaussian\n";
      for (int k = 0; k < c.num_agents; ++k) {
        out << "model.means." << (k + 1) << " =";
        for (double m : c.gaussian_means[k]) out << " " << num::format_g17(m);
        out << "\n";
      }
      break;
    case ModelSource::discrete:
      out << "models = discrete\n";
      for (int k = 0; k < c.num_agents; ++k)
        for (int h = 0; h < c.num_hypotheses; ++h) {
          out << "model.row." << (k + 1) << "." << (h + 1) << " =";
          for (double q : c.discrete_rows[k][h]) out << " " << num::format_g17(q);
          out << "\n";
        }
      break;
  }
  switch (c.decision_mode) {
    case DecisionRule::Mode::uniform:
      out << "decision = uniform\n";
      out << "decision.epsilon = " << num::format_g17(c.decision_epsilon) << "\n";
      break;
    case DecisionRule::Mode::min_prior:
      out << "decision = min-prior\n";
      out << "decision.epsilon = " << num::format_g17(c.decision_epsilon) << "\n";
      break;
    case DecisionRule::Mode::explicit_tau:
      out << "decision = explicit\n";
      out << "decision.tau = " << num::format_g17(c.decision_tau) << "\n";
      break;
    case DecisionRule::Mode::max_belief_comparison:
      out << "decision = max-belief\n";
      break;
  }
  out << "mc.samples = " << c.mc_samples << "\n";
  out << "trial.seeds =";
  for (auto s : rx.trial_seeds) out << " " << s;
  out << "\n";
}

namespace detail {

inline nlohmann::json limits_json(const LimitPrediction& p) {
  nlohmann::json j;
  j["regime"] = regime_name(p.regime);
  j["theta_tx"] = p.theta_tx + 1;
  j["per_agent"] = p.limits;
  return j;
}

inline nlohmann::json martingale_json(const MartingaleDiagnostics& diag) {
  const auto stats_json = [](const SeriesStats& st) {
    return nlohmann::json{{"first", st.first},
                          {"last", st.last},
                          {"mean_increment", st.mean_increment},
                          {"increment_se", st.increment_se},
                          {"nonpositive", st.nonpositive}};
  };
  nlohmann::json j;
  j["m"] = stats_json(diag.m_stats);
  j["n"] = stats_json(diag.n_stats);
  nlohmann::json ratios = nlohmann::json::array();
  for (std::size_t i = 0; i < diag.ratio_agents.size(); ++i) {
    auto r = stats_json(diag.psi_ratio_stats[i]);
    r.erase("nonpositive");
    r["agent"] = diag.ratio_agents[i] + 1;
    r["terminal"] = diag.terminal_psi_ratio[i];
    ratios.push_back(std::move(r));
  }
  j["psi_ratio"] = std::move(ratios);
  return j;
}

inline nlohmann::json trial_json(const ResolvedExperiment& rx, std::uint64_t trial_seed,
                                 const TrajectoryRecord& record) {
  nlohmann::json j;
  j["seed"] = trial_seed;
  j["observation_hash"] = hex64(record.observation_hash);
  nlohmann::json finals = nlohmann::json::array();
  nlohmann::json final_tx = nlohmann::json::array();
  nlohmann::json max_belief = nlohmann::json::array();
  for (int k = 0; k < record.num_agents; ++k) {
    nlohmann::json row = nlohmann::json::array();
    std::vector<double> mu(record.num_hypotheses);
    for (int h = 0; h < record.num_hypotheses; ++h) {
      mu[h] = record.final_belief(k, h);
      row.push_back(mu[h]);
    }
    finals.push_back(std::move(row));
    final_tx.push_back(mu[rx.config.theta_tx]);
    max_belief.push_back(max_belief_classify(mu, rx.config.theta_tx) == Decision::accept);
  }
  j["final_beliefs"] = std::move(finals);
  j["final_belief_tx"] = std::move(final_tx);
  j["final_max_belief_accept"] = std::move(max_belief);

  nlohmann::json iterations = nlohmann::json::array();
  nlohmann::json accepts = nlohmann::json::array();
  std::vector<double> mu_row(record.num_hypotheses);
  for (std::size_t s = 0; s < record.snapshot_iterations.size(); ++s) {
    iterations.push_back(record.snapshot_iterations[s]);
    nlohmann::json row = nlohmann::json::array();
    for (int k = 0; k < record.num_agents; ++k) {
      for (int h = 0; h < record.num_hypotheses; ++h) mu_row[h] = record.belief(s, k, h);
      row.push_back(classify(mu_row, rx.config.theta_tx, rx.rule) == Decision::accept);
    }
    accepts.push_back(std::move(row));
  }
  j["decisions_over_time"] = {{"iterations", std::move(iterations)},
                              {"accept", std::move(accepts)}};

  if (record.has_psi() && record.stride == 1) {
    const auto sets = default_diagnostic_sets(rx.structure, rx.config.theta_tx);
    bool all_nonempty = true;
    for (const auto& sk : sets) all_nonempty = all_nonempty && !sk.empty();
    if (all_nonempty)
      j["martingale"] =
          martingale_json(martingale_diagnostics(record, rx.structure, rx.perron, sets));
  }
  return j;
}

inline nlohmann::json analysis_json(const ResolvedExperiment& rx,
                                    const std::vector<TrajectoryRecord>& records) {
  const auto& c = rx.config;
  nlohmann::json j;
  j["scenario"] = {{"agents", c.num_agents},       {"hypotheses", c.num_hypotheses},
                   {"theta0", c.theta0 + 1},       {"theta_tx", c.theta_tx + 1},
                   {"strategy", strategy_name(c.strategy)}, {"horizon", c.horizon},
                   {"trials", c.trials},           {"seed", c.seed},
                   {"stride", c.stride}};
  j["perron"] = rx.perron.v;
  const auto summary = confusion_summary(rx.priors, rx.structure, rx.perron);
  j["confusion"] = {{"rho_k", summary.rho_k},
                    {"J_k", summary.j_k},
                    {"rho", summary.rho},
                    {"J", summary.j}};
  j["indistinguishable_sets"] = [&] {
    nlohmann::json sets = nlohmann::json::array();
    for (const auto& ik : rx.structure.indistinguishable) {
      nlohmann::json row = nlohmann::json::array();
      for (int theta : ik) row.push_back(theta + 1);
      sets.push_back(std::move(row));
    }
    return sets;
  }();
  j["decision_rule"] = {{"mode", [&] {
                           switch (rx.rule.mode) {
                             case DecisionRule::Mode::uniform: return "uniform";
                             case DecisionRule::Mode::min_prior: return "min-prior";
                             case DecisionRule::Mode::explicit_tau: return "explicit";
                             default: return "max-belief";
                           }
                         }()},
                        {"tau", rx.rule.tau},
                        {"epsilon", rx.rule.epsilon}};

  if (c.strategy == Strategy::partial_memory_aware || c.strategy == Strategy::standalone) {
    try {
      const Regime regime = c.strategy == Strategy::standalone ? Regime::standalone
                            : c.theta_tx == c.theta0           ? Regime::transmit_true
                                                               : Regime::transmit_false;
      j["limits"] = limits_json(predict_limits(summary, rx.structure, rx.priors, regime,
                                               c.theta_tx, &rx.net));
    } catch (const AssumptionError& e) {
      j["limits"] = {{"refused", e.what()}};
    }
  }

  if (is_partial(c.strategy)) {
    const auto mc = memoryless_comparison(rx.models, rx.perron, c.theta0, c.theta_tx,
                                          c.mc_samples, c.seed);
    const char* outcome = mc.predicted == MemorylessComparison::Outcome::learns ? "learns"
                          : mc.predicted == MemorylessComparison::Outcome::fooled
                              ? "fooled"
                              : "inconclusive";
    j["memoryless_comparison"] = {{"d_tx", mc.d_tx},
                                  {"d_fict", mc.d_fict},
                                  {"standard_error", mc.standard_error},
                                  {"predicted", outcome}};
  }

  nlohmann::json trials = nlohmann::json::array();
  for (int t = 0; t < c.trials; ++t)
    trials.push_back(trial_json(rx, rx.trial_seeds[t], records[t]));
  j["trials"] = std::move(trials);
  return j;
}

}  // namespace detail

// Runs the configured experiment and writes trajectory CSVs, the analysis
// report and a re-runnable manifest into the output directory. Returns a
// process exit code.
inline int run_experiment(const ExperimentConfig& config, std::ostream& log) {
  try {
    const ResolvedExperiment rx = resolve(config);
    const auto report = check_assumptions(rx);
    print_assumption_report(report, log);
    if (!report.all_pass()) {
      if (!config.waive_assumptions) {
        log << "assumption checks failed (use --waive-assumptions to run anyway)\n";
        return kExitAssumption;
      }
      log << "assumption failures waived\n";
    }

    const std::filesystem::path out_dir(config.out_dir);
    std::filesystem::create_directories(out_dir);
    {
      std::ofstream edges(out_dir / "network.edges");
      save_edge_list(rx.net, edges);
      std::ofstream manifest(out_dir / "manifest.conf");
      write_manifest(rx, "network.edges", manifest);
    }

    std::vector<TrajectoryRecord> records(config.trials);
    detail::parallel_trials(config.trials, [&](int t) {
      records[t] = run(detail::trial_scenario(rx, rx.trial_seeds[t]), rx.net, rx.models);
    });
    for (int t = 0; t < config.trials; ++t) {
      std::ofstream csv(out_dir / ("trajectory_trial" + std::to_string(t + 1) + ".csv"));
      records[t].write_csv(csv);
    }
    std::ofstream json_out(out_dir / "analysis.json");
    json_out << detail::analysis_json(rx, records).dump(2) << "\n";
    log << "wrote " << config.trials << " trial(s) to " << out_dir.string() << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    log << e.what() << "\n";
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    log << "invalid configuration: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    log << "fatal: " << e.what() << "\n";
    return kExitNumerical;
  }
}

// Validates the configuration and prints the assumption audit.
inline int check_experiment(const ExperimentConfig& config, std::ostream& log) {
  try {
    const ResolvedExperiment rx = resolve(config);
    const auto report = check_assumptions(rx);
    print_assumption_report(report, log);
    return report.all_pass() ? kExitOk : kExitAssumption;
  } catch (const ConfigError& e) {
    log << e.what() << "\n";
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    log << "invalid configuration: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    log << "fatal: " << e.what() << "\n";
    return kExitNumerical;
  }
}

// Runs the same scenario under all four strategies on shared observation
// streams (the counter-based generator keys observations by seed, agent and
// iteration only, so strategies see identical data; the per-run stream
// hashes are compared to verify it) and writes a side-by-side report.
inline int compare_strategies(const ExperimentConfig& config, std::ostream& log) {
  try {
    const ResolvedExperiment rx = resolve(config);
    const auto report = check_assumptions(rx);
    print_assumption_report(report, log);
    if (!report.all_pass()) {
      if (!config.waive_assumptions) {
        log << "assumption checks failed (use --waive-assumptions to run anyway)\n";
        return kExitAssumption;
      }
      log << "assumption failures waived\n";
    }

    static constexpr Strategy kAll[] = {Strategy::full_sharing, Strategy::partial_memoryless,
                                        Strategy::partial_memory_aware, Strategy::standalone};
    nlohmann::json strategies;
    std::vector<std::vector<std::uint64_t>> hashes(4);
    for (int s = 0; s < 4; ++s) {
      std::vector<TrajectoryRecord> records(config.trials);
      detail::parallel_trials(config.trials, [&](int t) {
        auto sc = detail::trial_scenario(rx, rx.trial_seeds[t],
                                         std::max<int>(1, static_cast<int>(config.horizon)));
        sc.strategy = kAll[s];
        sc.record_psi = false;
        records[t] = run(sc, rx.net, rx.models);
      });
      nlohmann::json per_trial = nlohmann::json::array();
      for (int t = 0; t < config.trials; ++t) {
        hashes[s].push_back(records[t].observation_hash);
        nlohmann::json final_tx = nlohmann::json::array();
        nlohmann::json accept = nlohmann::json::array();
        double min_tx = 1.0, max_tx = 0.0;
        std::vector<double> mu_row(records[t].num_hypotheses);
        for (int k = 0; k < records[t].num_agents; ++k) {
          for (int h = 0; h < records[t].num_hypotheses; ++h)
            mu_row[h] = records[t].final_belief(k, h);
          const double b = mu_row[rx.config.theta_tx];
          final_tx.push_back(b);
          accept.push_back(classify(mu_row, rx.config.theta_tx, rx.rule) ==
                           Decision::accept);
          min_tx = std::min(min_tx, b);
          max_tx = std::max(max_tx, b);
        }
        per_trial.push_back({{"final_belief_tx", std::move(final_tx)},
                             {"accept", std::move(accept)},
                             {"min_belief_tx", min_tx},
                             {"max_belief_tx", max_tx}});
      }
      strategies[strategy_name(kAll[s])] = std::move(per_trial);
    }
    for (int s = 1; s < 4; ++s)
      if (hashes[s] != hashes[0])
        throw std::logic_error("strategies saw different observation streams");

    nlohmann::json j;
    j["strategies"] = std::move(strategies);
    j["observation_hashes"] = [&] {
      nlohmann::json arr = nlohmann::json::array();
      for (auto h : hashes[0]) arr.push_back(detail::hex64(h));
      return arr;
    }();
    const auto mc = memoryless_comparison(rx.models, rx.perron, rx.config.theta0,
                                          rx.config.theta_tx, rx.config.mc_samples,
                                          rx.config.seed);
    const char* outcome = mc.predicted == MemorylessComparison::Outcome::learns ? "learns"
                          : mc.predicted == MemorylessComparison::Outcome::fooled
                              ? "fooled"
                              : "inconclusive";
    j["memoryless_comparison"] = {{"d_tx", mc.d_tx},
                                  {"d_fict", mc.d_fict},
                                  {"standard_error", mc.standard_error},
                                  {"predicted", outcome}};

    const std::filesystem::path out_dir(config.out_dir);
    std::filesystem::create_directories(out_dir);
    std::ofstream json_out(out_dir / "compare.json");
    json_out << j.dump(2) << "\n";
    log << "wrote strategy comparison to " << (out_dir / "compare.json").string() << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    log << e.what() << "\n";
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    log << "invalid configuration: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    log << "fatal: " << e.what() << "\n";
    return kExitNumerical;
  }
}

// Canned reproduction scenarios: a 20-agent Erdos-Renyi network with
// Metropolis weights, 10 hypotheses, uniform priors, unit-variance Gaussian
// likelihoods whose indistinguishable sets have cardinalities 4/8/2 across
// the agents, run under the memory-aware strategy.
inline std::string canned_scenario(const std::string& name) {
  const auto base = [](int theta_tx, const char* cards, const char* diagnostics) {
    std::ostringstream out;
    out << "agents = 20\n"
           "hypotheses = 10\n"
           "theta0 = 1\n"
        << "theta_tx = " << theta_tx << "\n"
        << "strategy = memory-aware\n"
           "horizon = 2000\n"
           "seed = 20230\n"
           "trials = 1\n"
           "stride = 1\n"
        << "diagnostics = " << diagnostics << "\n"
        << "priors = uniform\n"
           "graph = erdos-renyi\n"
           "graph.p = 0.33333333333333331\n"
           "models = hypothesis-means\n"
           "indist = cardinalities\n"
        << "indist.cardinalities = " << cards << "\n"
        << "decision = uniform\n"
           "decision.epsilon = 0.01\n";
    return out.str();
  };
  static const char* kCards = "4 4 4 4 4 4 4 4 4 4 8 8 8 8 8 2 2 2 2 2";
  static const char* kCardsRhoZero = "0 4 4 4 4 4 4 4 4 4 8 8 8 8 8 2 2 2 2 2";
  if (name == "fig2-panel2") return base(2, kCards, "off");
  if (name == "fig2-panel3") return base(1, kCards, "on");
  if (name == "fig2-panel4") return base(1, kCardsRhoZero, "off");
  throw ConfigError({"unknown scenario '" + name +
                     "' (available: fig2-panel2, fig2-panel3, fig2-panel4)"});
}

}  // namespace psl
