#pragma once

// Theoretical descriptors and decision machinery: confusion ratios, the
// closed-form asymptotic belief limits of the three learning regimes, the
// threshold and max-belief classification rules, the memoryless-strategy
// failure predictor, and empirical martingale diagnostics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "psl/learning.hpp"
#include "psl/models.hpp"
#include "psl/network.hpp"
#include "psl/numeric.hpp"
#include "psl/rng.hpp"

namespace psl {

struct ConfusionSummary {
  std::vector<double> rho_k;  // prior mass on I_k relative to theta0, per agent
  std::vector<int> j_k;       // |I_k|
  double rho = 0.0;           // Perron-weighted geometric average of rho_k
  double j = 0.0;             // same average of the cardinalities
  std::vector<double> perron;
};

// rho_k is accumulated as a sum of prior ratios mu(theta)/mu(theta0) so that
// uniform priors yield rho_k == J_k exactly, making the two geometric means
// run on identical inputs.
inline ConfusionSummary confusion_summary(const std::vector<std::vector<double>>& priors,
                                          const IdentifiabilityStructure& structure,
                                          const PerronVector& perron) {
  const int K = structure.num_agents();
  if (static_cast<int>(priors.size()) != K ||
      static_cast<int>(perron.v.size()) != K)
    throw std::invalid_argument("confusion summary: agent count mismatch");
  ConfusionSummary cs;
  cs.perron = perron.v;
  double log_rho = 0.0, log_j = 0.0;
  bool rho_zero = false, j_zero = false;
  for (int k = 0; k < K; ++k) {
    double rho_k = 0.0;
    for (int theta : structure.indistinguishable[k])
      rho_k += priors[k][theta] / priors[k][structure.theta0];
    const int j_k = structure.cardinality(k);
    cs.rho_k.push_back(rho_k);
    cs.j_k.push_back(j_k);
    if (rho_k == 0.0)
      rho_zero = true;
    else
      log_rho += perron.v[k] * std::log(rho_k);
    if (j_k == 0)
      j_zero = true;
    else
      log_j += perron.v[k] * std::log(static_cast<double>(j_k));
  }
  cs.rho = rho_zero ? 0.0 : std::exp(log_rho);
  cs.j = j_zero ? 0.0 : std::exp(log_j);
  return cs;
}

enum class Regime { transmit_false, transmit_true, standalone };

inline std::string regime_name(Regime r) {
  switch (r) {
    case Regime::transmit_false: return "tx-false";
    case Regime::transmit_true: return "tx-true";
    case Regime::standalone: return "standalone";
  }
  return "?";
}

struct LimitPrediction {
  Regime regime = Regime::transmit_true;
  int theta_tx = -1;
  std::vector<std::vector<double>> limits;  // [agent][hypothesis], each row a simplex
};

// Almost-sure belief limits per agent and hypothesis.
//
//   transmit_false: the transmitted and all other distinguishable hypotheses
//     vanish; the residual mass lands on {theta0} and the non-transmitted
//     indistinguishable hypotheses in proportion to the prior within that set.
//   transmit_true: the transmitted hypothesis tends to 1/(1+rho), the
//     distinguishable ones vanish, and I_k receives rho/(1+rho) allocated in
//     proportion to the prior within I_k.
//   standalone: the per-agent version of transmit_true with rho_k.
//
// Network regimes require a strongly connected network and global
// identifiability; violations are refused.
inline LimitPrediction predict_limits(const ConfusionSummary& summary,
                                      const IdentifiabilityStructure& structure,
                                      const std::vector<std::vector<double>>& priors,
                                      Regime regime, int theta_tx,
                                      const Network* net = nullptr) {
  const int K = structure.num_agents();
  const int H = structure.num_hypotheses;
  if (regime != Regime::standalone) {
    if (theta_tx < 0 || theta_tx >= H)
      throw std::invalid_argument("predict_limits: theta_tx out of range");
    if ((regime == Regime::transmit_true) != (theta_tx == structure.theta0))
      throw std::invalid_argument("predict_limits: regime inconsistent with theta_tx");
    if (net == nullptr)
      throw std::invalid_argument("predict_limits: network regimes need the network");
    const auto connectivity = check_strong_connectivity(*net);
    if (!connectivity.ok())
      throw AssumptionError(1, connectivity.describe());
    const auto gi = check_global_identifiability(structure);
    if (!gi.ok)
      throw AssumptionError(4, "hypothesis " + std::to_string(*gi.witness + 1) +
                                   " is indistinguishable at every agent");
  }

  LimitPrediction prediction;
  prediction.regime = regime;
  prediction.theta_tx = theta_tx;
  prediction.limits.assign(K, std::vector<double>(H, 0.0));
  for (int k = 0; k < K; ++k) {
    auto& row = prediction.limits[k];
    const auto& prior = priors[k];
    if (regime == Regime::transmit_false) {
      // I_{k,TXbar} = {theta0} plus I_k minus the transmitted hypothesis.
      std::vector<int> residual_set{structure.theta0};
      for (int theta : structure.indistinguishable[k])
        if (theta != theta_tx) residual_set.push_back(theta);
      double mass = 0.0;
      for (int theta : residual_set) mass += prior[theta];
      for (int theta : residual_set) row[theta] = prior[theta] / mass;
    } else {
      const double r = regime == Regime::transmit_true ? summary.rho : summary.rho_k[k];
      row[structure.theta0] = 1.0 / (1.0 + r);
      const auto& ik = structure.indistinguishable[k];
      if (!ik.empty() && r > 0.0) {
        double mass = 0.0;
        for (int theta : ik) mass += prior[theta];
        for (int theta : ik) row[theta] = (r / (1.0 + r)) * (prior[theta] / mass);
      }
    }
  }
  return prediction;
}

enum class Decision { accept, reject };

// Decision rule configuration: either the threshold test at some tau (which
// must stay below 1/(1+rho) for consistency; the min-prior and uniform modes
// achieve that without knowing rho) or the standard max-belief comparison,
// kept for demonstrating its failure.
struct DecisionRule {
  enum class Mode { explicit_tau, min_prior, uniform, max_belief_comparison };
  Mode mode = Mode::explicit_tau;
  double tau = 0.0;
  double epsilon = 0.0;

  static DecisionRule explicit_threshold(double tau) {
    if (!(tau > 0.0 && tau < 1.0))
      throw std::invalid_argument("decision rule: tau must lie in (0,1)");
    return {Mode::explicit_tau, tau, 0.0};
  }

  static DecisionRule max_belief() { return {Mode::max_belief_comparison, 0.0, 0.0}; }

  // tau = (smallest initial belief over all agents and hypotheses) - epsilon.
  static DecisionRule min_prior(const std::vector<std::vector<double>>& priors,
                                double epsilon) {
    double min_prior_value = std::numeric_limits<double>::infinity();
    for (const auto& row : priors)
      for (double p : row) min_prior_value = std::min(min_prior_value, p);
    if (!(epsilon > 0.0 && epsilon < min_prior_value))
      throw std::invalid_argument("decision rule: need 0 < epsilon < min prior " +
                                  num::format_g17(min_prior_value));
    return {Mode::min_prior, min_prior_value - epsilon, epsilon};
  }

  // tau = 1/H - epsilon, the unbiased-initialization setting.
  static DecisionRule uniform(int num_hypotheses, double epsilon) {
    const double u = 1.0 / num_hypotheses;
    if (!(epsilon > 0.0 && epsilon < u))
      throw std::invalid_argument("decision rule: need 0 < epsilon < 1/H");
    return {Mode::uniform, u - epsilon, epsilon};
  }
};

// Accept the transmitted hypothesis iff its belief exceeds the threshold;
// the boundary itself rejects.
inline Decision decide(double belief_tx, const DecisionRule& rule) {
  if (rule.mode == DecisionRule::Mode::max_belief_comparison)
    throw std::invalid_argument("decide: max-belief comparison needs the full "
                                "belief vector, use classify()");
  return belief_tx <= rule.tau ? Decision::reject : Decision::accept;
}

// The standard rule: accept iff the transmitted hypothesis maximizes the
// belief, with ties broken toward the lowest hypothesis index. Provided to
// demonstrate that it fails under partial information sharing.
inline Decision max_belief_classify(std::span<const double> mu, int theta_tx) {
  int argmax = 0;
  for (int h = 1; h < static_cast<int>(mu.size()); ++h)
    if (mu[h] > mu[argmax]) argmax = h;
  return argmax == theta_tx ? Decision::accept : Decision::reject;
}

// Applies whichever rule the configuration selects to a full belief vector.
inline Decision classify(std::span<const double> mu, int theta_tx,
                         const DecisionRule& rule) {
  if (rule.mode == DecisionRule::Mode::max_belief_comparison)
    return max_belief_classify(mu, theta_tx);
  return decide(mu[theta_tx], rule);
}

// log of the fictitious density the memoryless strategy implicitly tests
// against: the uniform mixture of the non-transmitted likelihoods.
inline double log_fictitious_density(const LikelihoodFamily& fam, int theta_tx, double x) {
  const int H = fam.num_hypotheses();
  std::vector<double> terms;
  terms.reserve(H - 1);
  for (int theta = 0; theta < H; ++theta)
    if (theta != theta_tx) terms.push_back(fam.log_likelihood(x, theta));
  return num::log_sum_exp(terms) - std::log(static_cast<double>(H - 1));
}

struct MemorylessComparison {
  double d_tx = 0.0;    // Perron-weighted KL to the transmitted likelihood
  double d_fict = 0.0;  // Perron-weighted KL to the fictitious mixture
  double standard_error = 0.0;
  std::vector<double> d_fict_per_agent;
  std::vector<double> se_per_agent;
  enum class Outcome { learns, fooled, inconclusive };
  Outcome predicted = Outcome::learns;
};

inline constexpr long kMinMonteCarloSamples = 10000;

// Predicts the memoryless strategy's behavior: it learns iff the true
// distribution is further from the transmitted likelihood than from the
// fictitious mixture. d_tx is closed form; d_fict is exact for discrete
// families and seeded Monte Carlo under the true model for Gaussians, with
// an inconclusive band of three standard errors.
inline MemorylessComparison memoryless_comparison(
    const std::vector<LikelihoodFamily>& models, const PerronVector& perron, int theta0,
    int theta_tx, long mc_samples, std::uint64_t seed) {
  if (mc_samples < kMinMonteCarloSamples)
    throw std::invalid_argument("memoryless comparison: need at least " +
                                std::to_string(kMinMonteCarloSamples) +
                                " Monte Carlo samples");
  const int K = static_cast<int>(models.size());
  if (static_cast<int>(perron.v.size()) != K)
    throw std::invalid_argument("memoryless comparison: agent count mismatch");
  MemorylessComparison mc;
  double se_sq = 0.0;
  for (int k = 0; k < K; ++k) {
    const auto& fam = models[k];
    mc.d_tx += perron.v[k] * detail::kl_raw(fam, theta0, theta_tx);
    double kl = 0.0, se = 0.0;
    if (fam.kind() == FamilyKind::discrete) {
      const auto& p = fam.row(theta0);
      for (int s = 0; s < fam.alphabet_size(); ++s) {
        if (p[s] == 0.0) continue;
        const double log_f = log_fictitious_density(fam, theta_tx, s);
        kl += p[s] * (std::log(p[s]) - log_f);
      }
    } else {
      rng::Stream stream(seed, rng::kMonteCarlo, static_cast<std::uint64_t>(k));
      const int H = fam.num_hypotheses();
      std::vector<double> terms(H - 1);
      const double log_hm1 = std::log(static_cast<double>(H - 1));
      double sum = 0.0, sum_sq = 0.0;
      for (long n = 0; n < mc_samples; ++n) {
        const double x = fam.sample(theta0, stream);
        int j = 0;
        for (int theta = 0; theta < H; ++theta)
          if (theta != theta_tx) terms[j++] = fam.log_likelihood(x, theta);
        const double w =
            fam.log_likelihood(x, theta0) - (num::log_sum_exp(terms) - log_hm1);
        sum += w;
        sum_sq += w * w;
      }
      kl = sum / mc_samples;
      const double var = std::max(0.0, sum_sq / mc_samples - kl * kl);
      se = std::sqrt(var / mc_samples);
    }
    mc.d_fict_per_agent.push_back(kl);
    mc.se_per_agent.push_back(se);
    mc.d_fict += perron.v[k] * kl;
    se_sq += perron.v[k] * perron.v[k] * se * se;
  }
  mc.standard_error = std::sqrt(se_sq);
  if (theta_tx == theta0)
    mc.predicted = MemorylessComparison::Outcome::learns;  // always learns well
  else if (std::abs(mc.d_tx - mc.d_fict) < 3.0 * mc.standard_error)
    mc.predicted = MemorylessComparison::Outcome::inconclusive;
  else
    mc.predicted = mc.d_tx > mc.d_fict ? MemorylessComparison::Outcome::learns
                                       : MemorylessComparison::Outcome::fooled;
  return mc;
}

// The default martingale-diagnostic sets: S_k = ({theta0} u I_k) \ {theta_tx}.
inline std::vector<std::vector<int>> default_diagnostic_sets(
    const IdentifiabilityStructure& structure, int theta_tx) {
  std::vector<std::vector<int>> sets;
  for (int k = 0; k < structure.num_agents(); ++k) {
    std::vector<int> sk;
    if (structure.theta0 != theta_tx) sk.push_back(structure.theta0);
    for (int theta : structure.indistinguishable[k])
      if (theta != theta_tx) sk.push_back(theta);
    std::sort(sk.begin(), sk.end());
    sets.push_back(std::move(sk));
  }
  return sets;
}

struct SeriesStats {
  double first = 0.0;
  double last = 0.0;
  double mean_increment = 0.0;
  double increment_se = 0.0;
  bool nonpositive = true;
};

struct MartingaleDiagnostics {
  std::vector<double> m;  // sum_k v_k log mu_{k,i}(theta0), i = 0..horizon
  std::vector<double> n;  // sum_k v_k log mu_{k,i}(S_k)
  SeriesStats m_stats;
  SeriesStats n_stats;
  // psi(D_k)/psi(I_k) per agent with nonempty I_k, i = 1..horizon.
  std::vector<int> ratio_agents;
  std::vector<std::vector<double>> psi_ratio;
  std::vector<SeriesStats> psi_ratio_stats;
  std::vector<double> terminal_psi_ratio;
};

namespace detail {
inline SeriesStats series_stats(std::span<const double> series, bool check_sign) {
  SeriesStats st;
  if (series.empty()) return st;
  st.first = series.front();
  st.last = series.back();
  if (check_sign)
    for (double x : series)
      if (x > 0.0) st.nonpositive = false;
  const std::size_t n = series.size();
  if (n < 2) return st;
  double sum = 0.0;
  for (std::size_t i = 1; i < n; ++i) sum += series[i] - series[i - 1];
  st.mean_increment = sum / static_cast<double>(n - 1);
  double ss = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    const double d = series[i] - series[i - 1] - st.mean_increment;
    ss += d * d;
  }
  st.increment_se = std::sqrt(ss / static_cast<double>(n - 1)) /
                    std::sqrt(static_cast<double>(n - 1));
  return st;
}
}  // namespace detail

// Computes the submartingale and martingale diagnostic sequences from a stride-1
// trajectory: the weighted log-belief submartingales of theta0 and of the
// sets S_k, and the per-agent psi(D_k)/psi(I_k) martingale. The trajectory
// must have been recorded with intermediate beliefs for the ratio series.
inline MartingaleDiagnostics martingale_diagnostics(
    const TrajectoryRecord& trajectory, const IdentifiabilityStructure& structure,
    const PerronVector& perron, const std::vector<std::vector<int>>& sets) {
  const int K = trajectory.num_agents;
  if (structure.num_agents() != K || static_cast<int>(perron.v.size()) != K ||
      static_cast<int>(sets.size()) != K)
    throw std::invalid_argument("diagnostics: agent count mismatch");
  for (std::size_t s = 0; s < trajectory.snapshot_iterations.size(); ++s)
    if (trajectory.snapshot_iterations[s] != static_cast<long>(s))
      throw std::invalid_argument("diagnostics: need a stride-1 trajectory");
  for (int k = 0; k < K; ++k) {
    if (sets[k].empty())
      throw std::invalid_argument("diagnostics: S_" + std::to_string(k + 1) + " is empty");
    for (int theta : sets[k])
      if (theta != structure.theta0 && !structure.is_indistinguishable(k, theta))
        throw std::invalid_argument("diagnostics: S_" + std::to_string(k + 1) +
                                    " leaves {theta0} u I_k");
  }

  MartingaleDiagnostics diag;
  std::vector<double> member_logs;
  for (const auto& snapshot : trajectory.log_mu) {
    double m = 0.0, n = 0.0;
    for (int k = 0; k < K; ++k) {
      m += perron.v[k] * snapshot[k][structure.theta0];
      n += perron.v[k] * num::subset_log_mass(snapshot[k], sets[k]);
    }
    diag.m.push_back(m);
    diag.n.push_back(n);
  }
  diag.m_stats = detail::series_stats(diag.m, true);
  diag.n_stats = detail::series_stats(diag.n, true);

  if (trajectory.has_psi()) {
    for (int k = 0; k < K; ++k) {
      if (structure.indistinguishable[k].empty()) continue;
      diag.ratio_agents.push_back(k);
      std::vector<double> series;
      series.reserve(trajectory.log_psi.size());
      for (const auto& psi : trajectory.log_psi) {
        member_logs.clear();
        for (int theta : structure.distinguishable[k]) member_logs.push_back(psi[k][theta]);
        const double log_d = num::log_sum_exp(member_logs);
        member_logs.clear();
        for (int theta : structure.indistinguishable[k]) member_logs.push_back(psi[k][theta]);
        const double log_i = num::log_sum_exp(member_logs);
        series.push_back(log_d == num::kNegInf ? 0.0 : std::exp(log_d - log_i));
      }
      diag.psi_ratio_stats.push_back(detail::series_stats(series, false));
      diag.terminal_psi_ratio.push_back(series.empty() ? 0.0 : series.back());
      diag.psi_ratio.push_back(std::move(series));
    }
  }
  return diag;
}

// Maximum relative drift of the conditional-belief ratios that the
// memory-aware strategy preserves exactly: the ratios among non-transmitted
// indistinguishable hypotheses and theta0 (when theta_tx != theta0), or
// among the indistinguishable hypotheses (when theta_tx == theta0), measured
// against the priors across all snapshots and agents.
inline double conditional_ratio_drift(const TrajectoryRecord& trajectory,
                                      const IdentifiabilityStructure& structure,
                                      int theta_tx) {
  const int K = trajectory.num_agents;
  if (structure.num_agents() != K)
    throw std::invalid_argument("ratio drift: agent count mismatch");
  double worst = 0.0;
  for (int k = 0; k < K; ++k) {
    std::vector<int> members;
    if (theta_tx != structure.theta0) members.push_back(structure.theta0);
    for (int theta : structure.indistinguishable[k])
      if (theta != theta_tx) members.push_back(theta);
    if (members.size() < 2) continue;
    const int base = members.front();
    const auto& prior = trajectory.log_mu.front();
    for (std::size_t s = 1; s < trajectory.log_mu.size(); ++s) {
      const auto& snapshot = trajectory.log_mu[s];
      for (std::size_t j = 1; j < members.size(); ++j) {
        const int theta = members[j];
        const double now = snapshot[k][theta] - snapshot[k][base];
        const double then = prior[k][theta] - prior[k][base];
        worst = std::max(worst, std::abs(std::expm1(now - then)));
      }
    }
  }
  return worst;
}

}  // namespace psl
