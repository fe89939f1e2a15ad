#pragma once

// Per-agent observation models: unit-variance Gaussian families (one mean
// per hypothesis) and finite discrete families (one probability row per
// hypothesis), the KL machinery on top of them, and the distinguishable /
// indistinguishable partition each agent derives from its own family.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "psl/numeric.hpp"
#include "psl/rng.hpp"

namespace psl {

inline constexpr double kRowSumTolerance = 1e-12;
inline constexpr double kKlZeroTolerance = 1e-12;
inline constexpr int kIndistDrawCap = 10000;

// Thrown when one of the five model/network assumptions is violated by data
// that a computation actually depends on.
struct AssumptionError : std::runtime_error {
  int assumption;
  AssumptionError(int which, const std::string& what)
      : std::runtime_error("assumption " + std::to_string(which) + ": " + what),
        assumption(which) {}
};

enum class FamilyKind { gaussian_unit_variance, discrete };

class LikelihoodFamily {
 public:
  static LikelihoodFamily gaussian(std::vector<double> means) {
    if (means.size() < 2)
      throw std::invalid_argument("likelihood family: need at least two hypotheses");
    LikelihoodFamily fam;
    fam.kind_ = FamilyKind::gaussian_unit_variance;
    fam.num_hypotheses_ = static_cast<int>(means.size());
    fam.means_ = std::move(means);
    return fam;
  }

  static LikelihoodFamily discrete(std::vector<std::vector<double>> rows) {
    if (rows.size() < 2)
      throw std::invalid_argument("likelihood family: need at least two hypotheses");
    const std::size_t alphabet = rows.front().size();
    if (alphabet == 0)
      throw std::invalid_argument("likelihood family: empty alphabet");
    for (std::size_t t = 0; t < rows.size(); ++t) {
      if (rows[t].size() != alphabet)
        throw std::invalid_argument("likelihood family: ragged probability table");
      double sum = 0.0;
      for (double q : rows[t]) {
        if (!(q >= 0.0))
          throw std::invalid_argument("likelihood family: negative mass in row " +
                                      std::to_string(t + 1));
        sum += q;
      }
      if (std::abs(sum - 1.0) > kRowSumTolerance)
        throw std::invalid_argument("likelihood family: row " + std::to_string(t + 1) +
                                    " sums to " + num::format_g17(sum));
    }
    LikelihoodFamily fam;
    fam.kind_ = FamilyKind::discrete;
    fam.num_hypotheses_ = static_cast<int>(rows.size());
    fam.rows_ = std::move(rows);
    return fam;
  }

  FamilyKind kind() const { return kind_; }
  int num_hypotheses() const { return num_hypotheses_; }
  int alphabet_size() const { return static_cast<int>(rows_.empty() ? 0 : rows_.front().size()); }
  double mean(int theta) const { return means_[theta]; }
  const std::vector<double>& row(int theta) const { return rows_[theta]; }

  // Natural log of the density / mass at x under hypothesis theta. Returns
  // -inf only for zero-mass discrete cells.
  double log_likelihood(double x, int theta) const {
    check_theta(theta);
    if (kind_ == FamilyKind::gaussian_unit_variance) {
      const double d = x - means_[theta];
      return -0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * d * d;
    }
    const int symbol = symbol_index(x);
    const double q = rows_[theta][symbol];
    return q > 0.0 ? std::log(q) : num::kNegInf;
  }

  // One draw from L(.|theta) at the stream's current position: standard
  // normal transform for Gaussians, inverse CDF for discrete rows.
  double sample(int theta, rng::Stream& stream) const {
    check_theta(theta);
    if (kind_ == FamilyKind::gaussian_unit_variance)
      return means_[theta] + stream.standard_normal();
    const double u = stream.uniform01();
    double cdf = 0.0;
    const auto& row = rows_[theta];
    for (std::size_t s = 0; s + 1 < row.size(); ++s) {
      cdf += row[s];
      if (u < cdf) return static_cast<double>(s);
    }
    return static_cast<double>(row.size() - 1);
  }

 private:
  void check_theta(int theta) const {
    if (theta < 0 || theta >= num_hypotheses_)
      throw std::invalid_argument("likelihood family: hypothesis index " +
                                  std::to_string(theta + 1) + " out of range");
  }

  int symbol_index(double x) const {
    const int s = static_cast<int>(x);
    if (static_cast<double>(s) != x || s < 0 || s >= alphabet_size())
      throw std::invalid_argument("likelihood family: symbol " + num::format_g17(x) +
                                  " outside alphabet of size " +
                                  std::to_string(alphabet_size()));
    return s;
  }

  FamilyKind kind_ = FamilyKind::gaussian_unit_variance;
  int num_hypotheses_ = 0;
  std::vector<double> means_;
  std::vector<std::vector<double>> rows_;
};

struct Observation {
  double value = 0.0;
  int agent = -1;
  long iteration = -1;
};

inline Observation sample_observation(const LikelihoodFamily& fam, int theta0,
                                      rng::Stream& stream) {
  return Observation{fam.sample(theta0, stream), -1, -1};
}

namespace detail {
// D_KL(L_p || L_q), possibly +inf.
inline double kl_raw(const LikelihoodFamily& fam, int theta_p, int theta_q) {
  if (fam.kind() == FamilyKind::gaussian_unit_variance) {
    const double d = fam.mean(theta_p) - fam.mean(theta_q);
    return 0.5 * d * d;
  }
  const auto& p = fam.row(theta_p);
  const auto& q = fam.row(theta_q);
  double kl = 0.0;
  for (std::size_t s = 0; s < p.size(); ++s) {
    if (p[s] == 0.0) continue;
    if (q[s] == 0.0) return std::numeric_limits<double>::infinity();
    kl += p[s] * (std::log(p[s]) - std::log(q[s]));
  }
  return kl;
}
}  // namespace detail

// D_KL(L(.|theta_p) || L(.|theta_q)); throws when infinite, which violates
// the KL-finiteness assumption.
inline double kl_divergence(const LikelihoodFamily& fam, int theta_p, int theta_q) {
  const double kl = detail::kl_raw(fam, theta_p, theta_q);
  if (!std::isfinite(kl))
    throw AssumptionError(2, "infinite KL divergence between hypotheses " +
                                 std::to_string(theta_p + 1) + " and " +
                                 std::to_string(theta_q + 1));
  return kl;
}

// Per-agent partition of the non-true hypotheses into those an agent can
// tell apart from theta0 (positive KL) and those it cannot (zero KL).
struct IdentifiabilityStructure {
  int num_hypotheses = 0;
  int theta0 = 0;
  std::vector<std::vector<int>> distinguishable;    // D_k, sorted
  std::vector<std::vector<int>> indistinguishable;  // I_k, sorted

  int num_agents() const { return static_cast<int>(indistinguishable.size()); }
  int cardinality(int k) const { return static_cast<int>(indistinguishable[k].size()); }

  bool is_indistinguishable(int k, int theta) const {
    const auto& ik = indistinguishable[k];
    return std::binary_search(ik.begin(), ik.end(), theta);
  }
};

inline IdentifiabilityStructure derive_identifiability(
    const std::vector<LikelihoodFamily>& families, int theta0) {
  if (families.empty()) throw std::invalid_argument("identifiability: no agents");
  const int H = families.front().num_hypotheses();
  if (theta0 < 0 || theta0 >= H)
    throw std::invalid_argument("identifiability: theta0 out of range");
  IdentifiabilityStructure st;
  st.num_hypotheses = H;
  st.theta0 = theta0;
  for (const auto& fam : families) {
    if (fam.num_hypotheses() != H)
      throw std::invalid_argument("identifiability: agents disagree on hypothesis count");
    std::vector<int> dk, ik;
    for (int theta = 0; theta < H; ++theta) {
      if (theta == theta0) continue;
      if (detail::kl_raw(fam, theta0, theta) <= kKlZeroTolerance)
        ik.push_back(theta);
      else
        dk.push_back(theta);
    }
    st.distinguishable.push_back(std::move(dk));
    st.indistinguishable.push_back(std::move(ik));
  }
  return st;
}

struct GlobalIdentifiabilityReport {
  bool ok = false;
  std::optional<int> witness;  // a hypothesis indistinguishable at every agent
};

inline GlobalIdentifiabilityReport check_global_identifiability(
    const IdentifiabilityStructure& st) {
  std::vector<char> in_all(st.num_hypotheses, 1);
  in_all[st.theta0] = 0;
  for (const auto& ik : st.indistinguishable) {
    std::vector<char> next(st.num_hypotheses, 0);
    for (int theta : ik)
      if (in_all[theta]) next[theta] = 1;
    in_all.swap(next);
  }
  for (int theta = 0; theta < st.num_hypotheses; ++theta)
    if (in_all[theta]) return {false, theta};
  return {true, std::nullopt};
}

enum class ConvexCombStatus { holds, violated, not_applicable };

struct ConvexCombReport {
  ConvexCombStatus status = ConvexCombStatus::not_applicable;
  double min_l1_distance = std::numeric_limits<double>::infinity();
  std::vector<double> best_alpha;  // over the distinguishable set, when searched
};

// Whether L(.|theta0) can be written as a convex combination of the
// distinguishable likelihoods. Decided for discrete families by a grid
// search over the weight simplex with local refinement (the objective is
// convex in the weights); parametric continuous families are outside the
// check's reach and report not_applicable.
inline ConvexCombReport check_convex_combination(const LikelihoodFamily& fam,
                                                 int theta0,
                                                 const std::vector<int>& distinguishable) {
  if (fam.kind() != FamilyKind::discrete) return {};
  const int d = static_cast<int>(distinguishable.size());
  if (d == 0)
    return {ConvexCombStatus::holds, std::numeric_limits<double>::infinity(), {}};
  if (d > 4)
    throw std::invalid_argument("convex-combination check: supports at most 4 "
                                "distinguishable hypotheses, got " + std::to_string(d));

  const auto& target = fam.row(theta0);
  const auto l1 = [&](const std::vector<double>& alpha) {
    double dist = 0.0;
    for (int s = 0; s < fam.alphabet_size(); ++s) {
      double mix = 0.0;
      for (int j = 0; j < d; ++j) mix += alpha[j] * fam.row(distinguishable[j])[s];
      dist += std::abs(mix - target[s]);
    }
    return dist;
  };

  // Coarse grid over the simplex.
  const int resolution = 60;
  std::vector<double> best_alpha(d, 0.0);
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> counts(d, 0);
  const auto visit = [&](const auto& self, int j, int remaining) -> void {
    if (j == d - 1) {
      counts[j] = remaining;
      std::vector<double> alpha(d);
      for (int i = 0; i < d; ++i) alpha[i] = static_cast<double>(counts[i]) / resolution;
      const double dist = l1(alpha);
      if (dist < best) {
        best = dist;
        best_alpha = alpha;
      }
      return;
    }
    for (int c = 0; c <= remaining; ++c) {
      counts[j] = c;
      self(self, j + 1, remaining - c);
    }
  };
  visit(visit, 0, resolution);

  // Local refinement along simplex edge directions with shrinking steps.
  for (double step = 1.0 / resolution; step > 1e-8; step *= 0.5) {
    bool improved = true;
    while (improved) {
      improved = false;
      for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
          if (i == j) continue;
          std::vector<double> alpha = best_alpha;
          const double delta = std::min(step, alpha[j]);
          if (delta <= 0.0) continue;
          alpha[i] += delta;
          alpha[j] -= delta;
          const double dist = l1(alpha);
          if (dist < best) {
            best = dist;
            best_alpha = std::move(alpha);
            improved = true;
          }
        }
      }
    }
  }

  ConvexCombReport report;
  report.min_l1_distance = best;
  report.best_alpha = best_alpha;
  report.status = best <= 1e-9 ? ConvexCombStatus::violated : ConvexCombStatus::holds;
  return report;
}

// The unit-variance Gaussian family whose mean is theta0's under the true
// and indistinguishable hypotheses and the hypothesis' own value otherwise.
// Hypothesis theta (0-based index) carries mean theta+1.
inline LikelihoodFamily make_hypothesis_mean_gaussian(int num_hypotheses, int theta0,
                                                      const std::vector<int>& indist) {
  std::vector<double> means(num_hypotheses);
  for (int theta = 0; theta < num_hypotheses; ++theta) means[theta] = theta + 1;
  for (int theta : indist) {
    if (theta == theta0)
      throw std::invalid_argument("indistinguishable set must not contain theta0");
    means[theta] = theta0 + 1;
  }
  return LikelihoodFamily::gaussian(std::move(means));
}

// Draws per-agent indistinguishable sets of the prescribed cardinalities,
// rejection-sampling until no hypothesis is indistinguishable everywhere.
// Deterministic in the seed.
inline std::vector<std::vector<int>> draw_indistinguishable_sets(
    int num_hypotheses, int theta0, const std::vector<int>& cardinalities,
    std::uint64_t seed) {
  const int K = static_cast<int>(cardinalities.size());
  std::vector<int> candidates;
  for (int theta = 0; theta < num_hypotheses; ++theta)
    if (theta != theta0) candidates.push_back(theta);
  for (int k = 0; k < K; ++k)
    if (cardinalities[k] < 0 || cardinalities[k] > static_cast<int>(candidates.size()))
      throw std::invalid_argument("indistinguishable cardinality for agent " +
                                  std::to_string(k + 1) + " out of range");

  for (int attempt = 0; attempt < kIndistDrawCap; ++attempt) {
    std::vector<std::vector<int>> sets(K);
    for (int k = 0; k < K; ++k) {
      rng::Stream stream(seed, rng::kIndist, static_cast<std::uint64_t>(attempt),
                         static_cast<std::uint64_t>(k));
      std::vector<int> pool = candidates;
      for (int i = 0; i < cardinalities[k]; ++i) {
        const auto j = i + static_cast<int>(stream.below(pool.size() - i));
        std::swap(pool[i], pool[j]);
      }
      pool.resize(cardinalities[k]);
      std::sort(pool.begin(), pool.end());
      sets[k] = std::move(pool);
    }
    std::vector<char> in_all(num_hypotheses, 1);
    in_all[theta0] = 0;
    for (const auto& ik : sets) {
      std::vector<char> next(num_hypotheses, 0);
      for (int theta : ik)
        if (in_all[theta]) next[theta] = 1;
      in_all.swap(next);
    }
    if (std::none_of(in_all.begin(), in_all.end(), [](char c) { return c != 0; }))
      return sets;
  }
  throw std::runtime_error("indistinguishable-set draw: no globally identifiable "
                           "assignment in " + std::to_string(kIndistDrawCap) +
                           " attempts");
}

}  // namespace psl
