#pragma once

// The simulation engine. Each iteration is a synchronous two-phase update:
// every agent first folds its new observation into an intermediate belief
// (adapt), then combines neighbor information into the next belief
// (combine). Under partial information sharing the combine step may read
// one scalar per neighbor and nothing else; that restriction is enforced by
// routing all neighbor data through the TransmissionChannel interface.
//
// All belief arithmetic is in log domain. The transmitted scalar is carried
// as the log-odds of the hypothesis of interest, which survives beliefs
// exponentially close to 0 or 1 that underflow linear-domain doubles within
// a few hundred iterations.

#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "psl/models.hpp"
#include "psl/network.hpp"
#include "psl/numeric.hpp"
#include "psl/rng.hpp"

namespace psl {

inline constexpr double kSimplexTolerance = 1e-12;

enum class Strategy { full_sharing, partial_memoryless, partial_memory_aware, standalone };

inline bool is_partial(Strategy s) {
  return s == Strategy::partial_memoryless || s == Strategy::partial_memory_aware;
}

inline std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::full_sharing: return "full";
    case Strategy::partial_memoryless: return "memoryless";
    case Strategy::partial_memory_aware: return "memory-aware";
    case Strategy::standalone: return "standalone";
  }
  return "?";
}

struct EngineError : std::runtime_error {
  int agent;
  long iteration;
  EngineError(int agent_, long iteration_, const std::string& what)
      : std::runtime_error("agent " + std::to_string(agent_ + 1) + ", iteration " +
                           std::to_string(iteration_) + ": " + what),
        agent(agent_),
        iteration(iteration_) {}
};

// One transmitted belief component. Internally a (log p, log(1-p)) pair so
// that both tails keep full precision in log space; the information content
// is the single scalar p = psi_l(theta_tx), equivalently its log-odds.
class TransmittedScalar {
 public:
  static TransmittedScalar from_probability(double p) {
    if (!(p > 0.0 && p < 1.0))
      throw std::invalid_argument("transmitted belief component must lie in (0,1), got " +
                                  num::format_g17(p));
    return TransmittedScalar(std::log(p), std::log1p(-p));
  }

  static TransmittedScalar from_log_parts(double log_p, double log_1mp) {
    return TransmittedScalar(log_p, log_1mp);
  }

  static TransmittedScalar from_logit(double t) {
    const auto parts = num::logit_to_parts(t);
    return TransmittedScalar(parts.log_p, parts.log_1mp);
  }

  double logit() const { return log_p_ - log_1mp_; }
  double log_prob() const { return log_p_; }
  double log_complement() const { return log_1mp_; }
  double probability() const { return std::exp(log_p_); }

 private:
  TransmittedScalar(double log_p, double log_1mp) : log_p_(log_p), log_1mp_(log_1mp) {}
  double log_p_;
  double log_1mp_;
};

// Memoryless completion: trust the received component and spread the
// residual mass uniformly over the other hypotheses.
inline std::vector<double> fill_memoryless(const TransmittedScalar& received,
                                           int num_hypotheses, int theta_tx) {
  if (num_hypotheses < 2) throw std::invalid_argument("fill: need at least two hypotheses");
  if (theta_tx < 0 || theta_tx >= num_hypotheses)
    throw std::invalid_argument("fill: theta_tx out of range");
  std::vector<double> log_belief(num_hypotheses,
                                 received.log_complement() - std::log(num_hypotheses - 1.0));
  log_belief[theta_tx] = received.log_prob();
  return log_belief;
}

// Memory-aware completion: trust the received component and allocate the
// residual proportionally to one's own intermediate belief conditioned on
// the non-transmitted hypotheses. With one's own component this is the
// identity (self-awareness).
inline std::vector<double> fill_memory_aware(const TransmittedScalar& received,
                                             std::span<const double> own_log_psi,
                                             int theta_tx) {
  const int H = static_cast<int>(own_log_psi.size());
  if (H < 2) throw std::invalid_argument("fill: need at least two hypotheses");
  if (theta_tx < 0 || theta_tx >= H)
    throw std::invalid_argument("fill: theta_tx out of range");
  const double own_rest = num::log_sum_exp_excluding(own_log_psi, theta_tx);
  if (own_rest == num::kNegInf)
    throw std::domain_error("fill: own belief is degenerate at theta_tx");
  const double shift = received.log_complement() - own_rest;
  std::vector<double> log_belief(H);
  for (int theta = 0; theta < H; ++theta) log_belief[theta] = own_log_psi[theta] + shift;
  log_belief[theta_tx] = received.log_prob();
  return log_belief;
}

// The only data path from neighbor state into a partial combine step: the
// log-odds of the neighbor's intermediate belief in the transmitted
// hypothesis. Tests substitute instrumented implementations.
class TransmissionChannel {
 public:
  virtual ~TransmissionChannel() = default;
  virtual double transmitted_logit(int from_agent) = 0;
};

struct BeliefState {
  std::vector<std::vector<double>> log_mu;   // [agent][hypothesis]
  std::vector<std::vector<double>> log_psi;  // intermediate beliefs

  int num_agents() const { return static_cast<int>(log_mu.size()); }
  int num_hypotheses() const { return log_mu.empty() ? 0 : static_cast<int>(log_mu.front().size()); }

  static BeliefState from_priors(const std::vector<std::vector<double>>& priors) {
    if (priors.empty()) throw std::invalid_argument("belief state: no agents");
    BeliefState state;
    const std::size_t H = priors.front().size();
    for (std::size_t k = 0; k < priors.size(); ++k) {
      const auto& row = priors[k];
      if (row.size() != H || H < 2)
        throw std::invalid_argument("belief state: malformed prior for agent " +
                                    std::to_string(k + 1));
      double sum = 0.0;
      std::vector<double> log_row(H);
      for (std::size_t h = 0; h < H; ++h) {
        if (!(row[h] > 0.0))
          throw AssumptionError(3, "prior of agent " + std::to_string(k + 1) +
                                       " is not strictly positive");
        sum += row[h];
        log_row[h] = std::log(row[h]);
      }
      if (std::abs(sum - 1.0) > kSimplexTolerance)
        throw std::invalid_argument("belief state: prior of agent " +
                                    std::to_string(k + 1) + " sums to " +
                                    num::format_g17(sum));
      state.log_mu.push_back(log_row);
      state.log_psi.push_back(std::move(log_row));
    }
    return state;
  }
};

// Local Bayesian update: log psi = log mu + log L(obs | .), renormalized.
inline void adapt(BeliefState& state, std::span<const double> observations,
                  const std::vector<LikelihoodFamily>& models, long iteration = -1) {
  const int K = state.num_agents();
  const int H = state.num_hypotheses();
  for (int k = 0; k < K; ++k) {
    auto& psi = state.log_psi[k];
    bool any_finite = false;
    for (int h = 0; h < H; ++h) {
      psi[h] = state.log_mu[k][h] + models[k].log_likelihood(observations[k], h);
      any_finite = any_finite || std::isfinite(psi[h]);
    }
    if (!any_finite)
      throw EngineError(k, iteration,
                        "observation has zero likelihood under every hypothesis");
    num::normalize_log(psi);
  }
}

// Reads the current intermediate beliefs of the running state.
class StateChannel : public TransmissionChannel {
 public:
  StateChannel(const BeliefState& state, int theta_tx) : state_(state), theta_tx_(theta_tx) {}
  double transmitted_logit(int from_agent) override {
    const auto& psi = state_.log_psi[from_agent];
    return psi[theta_tx_] - num::log_sum_exp_excluding(psi, theta_tx_);
  }

 private:
  const BeliefState& state_;
  int theta_tx_;
};

// Weighted geometric pooling of full neighbor belief vectors (the
// traditional update; baseline).
inline void combine_full(BeliefState& state, const Network& net) {
  const int K = state.num_agents();
  const int H = state.num_hypotheses();
  for (int k = 0; k < K; ++k) {
    auto& mu = state.log_mu[k];
    for (int h = 0; h < H; ++h) mu[h] = 0.0;
    for (int l : net.neighborhood(k)) {
      const double a = net.weight(l, k);
      for (int h = 0; h < H; ++h) mu[h] += a * state.log_psi[l][h];
    }
    num::normalize_log(mu);
  }
}

// Partial-information pooling: each neighbor contributes one scalar, filled
// into a complete vector by the chosen strategy before geometric averaging.
// The own term never crosses the channel; under the memory-aware strategy
// it enters as the agent's own full intermediate belief (self-awareness).
inline void combine_partial(BeliefState& state, const Network& net, Strategy strategy,
                            int theta_tx, TransmissionChannel& channel,
                            long iteration = -1) {
  if (!is_partial(strategy))
    throw std::invalid_argument("combine_partial: not a partial-information strategy");
  const int K = state.num_agents();
  const int H = state.num_hypotheses();
  const double log_hm1 = std::log(static_cast<double>(H - 1));
  std::vector<double> acc(H);
  for (int k = 0; k < K; ++k) {
    const auto& own = state.log_psi[k];
    const double own_rest = num::log_sum_exp_excluding(own, theta_tx);
    if (own_rest == num::kNegInf)
      throw EngineError(k, iteration, "intermediate belief degenerate at theta_tx");
    for (int h = 0; h < H; ++h) acc[h] = 0.0;
    for (int l : net.neighborhood(k)) {
      const double a = net.weight(l, k);
      if (l == k && strategy == Strategy::partial_memory_aware) {
        for (int h = 0; h < H; ++h) acc[h] += a * own[h];
        continue;
      }
      double log_p, log_1mp;
      if (l == k) {  // own scalar, completed locally; no channel crossing
        log_p = own[theta_tx];
        log_1mp = own_rest;
      } else {
        const auto parts = num::logit_to_parts(channel.transmitted_logit(l));
        log_p = parts.log_p;
        log_1mp = parts.log_1mp;
      }
      if (strategy == Strategy::partial_memoryless) {
        const double other = log_1mp - log_hm1;
        for (int h = 0; h < H; ++h)
          acc[h] += a * (h == theta_tx ? log_p : other);
      } else {
        const double shift = log_1mp - own_rest;
        for (int h = 0; h < H; ++h)
          acc[h] += a * (h == theta_tx ? log_p : own[h] + shift);
      }
    }
    for (int h = 0; h < H; ++h) state.log_mu[k][h] = acc[h];
    num::normalize_log(state.log_mu[k]);
  }
}

// Pure per-agent Bayesian recursion, no communication.
inline void step_standalone(BeliefState& state, std::span<const double> observations,
                            const std::vector<LikelihoodFamily>& models,
                            long iteration = -1) {
  adapt(state, observations, models, iteration);
  state.log_mu = state.log_psi;
}

struct ScenarioConfig {
  int num_hypotheses = 0;
  int theta0 = -1;
  int theta_tx = -1;
  Strategy strategy = Strategy::partial_memory_aware;
  std::vector<std::vector<double>> priors;  // [agent][hypothesis]
  long horizon = 0;
  std::uint64_t seed = 0;
  int stride = 1;
  bool record_psi = false;  // per-iteration intermediate beliefs, for diagnostics
};

struct TrajectoryRecord {
  int num_agents = 0;
  int num_hypotheses = 0;
  long horizon = 0;
  int stride = 1;
  std::vector<long> snapshot_iterations;
  std::vector<std::vector<std::vector<double>>> log_mu;   // [snapshot][agent][hyp]
  std::vector<std::vector<std::vector<double>>> log_psi;  // [iteration-1][agent][hyp]
  std::uint64_t observation_hash = num::kFnvOffset;

  bool has_psi() const { return !log_psi.empty(); }

  double belief(std::size_t snapshot, int agent, int hypothesis) const {
    return std::exp(log_mu[snapshot][agent][hypothesis]);
  }

  const std::vector<std::vector<double>>& final_log_beliefs() const {
    return log_mu.back();
  }

  double final_belief(int agent, int hypothesis) const {
    return std::exp(log_mu.back()[agent][hypothesis]);
  }

  // CSV schema: iteration, agent, hypothesis, belief (linear domain, 17
  // significant digits; agent and hypothesis are 1-based).
  void write_csv(std::ostream& out) const {
    out << "iteration,agent,hypothesis,belief\n";
    for (std::size_t s = 0; s < snapshot_iterations.size(); ++s)
      for (int k = 0; k < num_agents; ++k)
        for (int h = 0; h < num_hypotheses; ++h)
          out << snapshot_iterations[s] << "," << (k + 1) << "," << (h + 1) << ","
              << num::format_g17(belief(s, k, h)) << "\n";
  }
};

namespace detail {
inline void validate_scenario(const ScenarioConfig& config, const Network& net,
                              const std::vector<LikelihoodFamily>& models) {
  std::string problems;
  const int K = net.num_agents();
  if (static_cast<int>(models.size()) != K) problems += "model count != agent count; ";
  if (static_cast<int>(config.priors.size()) != K) problems += "prior count != agent count; ";
  if (config.num_hypotheses < 2) problems += "need at least two hypotheses; ";
  for (const auto& fam : models)
    if (fam.num_hypotheses() != config.num_hypotheses) {
      problems += "model hypothesis count mismatch; ";
      break;
    }
  if (config.theta0 < 0 || config.theta0 >= config.num_hypotheses)
    problems += "theta0 out of range; ";
  if (config.theta_tx < 0 || config.theta_tx >= config.num_hypotheses)
    problems += "theta_tx out of range; ";
  if (config.horizon < 0) problems += "negative horizon; ";
  if (config.stride < 1) problems += "stride must be >= 1; ";
  if (!problems.empty()) throw std::invalid_argument("scenario: " + problems);
}
}  // namespace detail

// Runs the configured strategy for `horizon` iterations. Observations are
// drawn iid over time from each agent's true model on counter-based streams
// addressed by (seed, agent, iteration); results are bit-reproducible and
// independent of scheduling.
inline TrajectoryRecord run(const ScenarioConfig& config, const Network& net,
                            const std::vector<LikelihoodFamily>& models) {
  detail::validate_scenario(config, net, models);
  BeliefState state = BeliefState::from_priors(config.priors);
  const int K = net.num_agents();

  TrajectoryRecord record;
  record.num_agents = K;
  record.num_hypotheses = config.num_hypotheses;
  record.horizon = config.horizon;
  record.stride = config.stride;
  record.snapshot_iterations.push_back(0);
  record.log_mu.push_back(state.log_mu);

  StateChannel channel(state, config.theta_tx);
  std::vector<double> observations(K);
  for (long i = 1; i <= config.horizon; ++i) {
    for (int k = 0; k < K; ++k) {
      rng::Stream stream(config.seed, rng::kObservation, static_cast<std::uint64_t>(k),
                         static_cast<std::uint64_t>(i));
      observations[k] = models[k].sample(config.theta0, stream);
      record.observation_hash = num::hash_double(record.observation_hash, observations[k]);
    }
    try {
      switch (config.strategy) {
        case Strategy::standalone:
          step_standalone(state, observations, models, i);
          break;
        case Strategy::full_sharing:
          adapt(state, observations, models, i);
          combine_full(state, net);
          break;
        default:
          adapt(state, observations, models, i);
          combine_partial(state, net, config.strategy, config.theta_tx, channel, i);
          break;
      }
    } catch (const EngineError&) {
      throw;
    } catch (const std::exception& e) {
      throw EngineError(-1, i, e.what());
    }
    if (config.record_psi) record.log_psi.push_back(state.log_psi);
    if (i % config.stride == 0 || i == config.horizon) {
      record.snapshot_iterations.push_back(i);
      record.log_mu.push_back(state.log_mu);
    }
  }
  return record;
}

}  // namespace psl
