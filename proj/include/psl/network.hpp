#pragma once

// Network topologies and combination matrices. The weight matrix A is
// left-stochastic: column k holds the weights agent k assigns to its
// neighbors, and every column sums to one. Agent indices are 0-based in
// code and 1-based in every text format.

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "psl/numeric.hpp"
#include "psl/rng.hpp"

namespace psl {

inline constexpr double kColumnSumTolerance = 1e-12;
inline constexpr double kPerronTolerance = 1e-12;
inline constexpr long kPerronIterationCap = 1000000;
inline constexpr int kErdosRenyiRetryCap = 1000;

class Network {
 public:
  // Validates nonnegativity and unit column sums; throws std::invalid_argument
  // listing every violation.
  static Network from_weights(int num_agents, std::vector<double> weights) {
    if (num_agents <= 0) throw std::invalid_argument("network: need at least one agent");
    if (weights.size() != static_cast<std::size_t>(num_agents) * num_agents)
      throw std::invalid_argument("network: weight matrix size mismatch");
    std::string problems;
    for (int k = 0; k < num_agents; ++k) {
      double col = 0.0;
      for (int l = 0; l < num_agents; ++l) {
        const double w = weights[static_cast<std::size_t>(l) * num_agents + k];
        if (!(w >= 0.0))
          problems += "entry (" + std::to_string(l + 1) + "," +
                      std::to_string(k + 1) + ") negative or NaN; ";
        col += w;
      }
      if (std::abs(col - 1.0) > kColumnSumTolerance)
        problems += "column " + std::to_string(k + 1) + " sums to " +
                    num::format_g17(col) + "; ";
    }
    if (!problems.empty())
      throw std::invalid_argument("network: not left-stochastic: " + problems);
    return Network(num_agents, std::move(weights));
  }

  int num_agents() const { return num_agents_; }

  // a(l, k): weight agent k assigns to neighbor l.
  double weight(int l, int k) const {
    return weights_[static_cast<std::size_t>(l) * num_agents_ + k];
  }

  // N_k: agents with nonzero weight into k, including k itself when a_kk > 0.
  const std::vector<int>& neighborhood(int k) const { return neighborhoods_[k]; }

  // |N_k \ {k}|: neighbors whose transmitted scalar must cross the network.
  int offdiagonal_degree(int k) const {
    int d = 0;
    for (int l : neighborhoods_[k])
      if (l != k) ++d;
    return d;
  }

  bool verified_strongly_connected = false;

 private:
  Network(int num_agents, std::vector<double> weights)
      : num_agents_(num_agents), weights_(std::move(weights)) {
    neighborhoods_.resize(num_agents_);
    for (int k = 0; k < num_agents_; ++k)
      for (int l = 0; l < num_agents_; ++l)
        if (weight(l, k) > 0.0) neighborhoods_[k].push_back(l);
  }

  int num_agents_ = 0;
  std::vector<double> weights_;  // row-major: weights_[l * K + k] = a(l, k)
  std::vector<std::vector<int>> neighborhoods_;
};

// Metropolis weights on an undirected graph: for l != k adjacent,
// a_lk = 1 / max(|N_l|, |N_k|) with self-plus-neighbors degrees, and the
// diagonal absorbs the residual. The result is symmetric doubly stochastic.
inline Network build_metropolis(int num_agents, const std::vector<std::uint8_t>& adjacency) {
  if (num_agents <= 0) throw std::invalid_argument("metropolis: need at least one agent");
  if (adjacency.size() != static_cast<std::size_t>(num_agents) * num_agents)
    throw std::invalid_argument("metropolis: adjacency size mismatch");
  const auto at = [&](int i, int j) {
    return adjacency[static_cast<std::size_t>(i) * num_agents + j] != 0;
  };
  for (int i = 0; i < num_agents; ++i)
    for (int j = i + 1; j < num_agents; ++j)
      if (at(i, j) != at(j, i))
        throw std::invalid_argument("metropolis: adjacency must be symmetric (pair " +
                                    std::to_string(i + 1) + "," + std::to_string(j + 1) + ")");

  std::vector<int> degree(num_agents, 1);  // neighbors plus self
  for (int i = 0; i < num_agents; ++i)
    for (int j = 0; j < num_agents; ++j)
      if (j != i && at(i, j)) ++degree[i];

  std::vector<double> w(static_cast<std::size_t>(num_agents) * num_agents, 0.0);
  for (int k = 0; k < num_agents; ++k) {
    double off = 0.0;
    for (int l = 0; l < num_agents; ++l) {
      if (l == k || !at(l, k)) continue;
      const double a = 1.0 / std::max(degree[l], degree[k]);
      w[static_cast<std::size_t>(l) * num_agents + k] = a;
      off += a;
    }
    w[static_cast<std::size_t>(k) * num_agents + k] = 1.0 - off;
  }
  return Network::from_weights(num_agents, std::move(w));
}

struct ConnectivityReport {
  bool one_component = false;
  bool has_self_loop = false;
  // Pair (from, to) with no directed path of nonzero weights, when not
  // strongly connected.
  std::optional<std::pair<int, int>> unreachable;

  bool ok() const { return one_component && has_self_loop; }

  std::string describe() const {
    if (ok()) return "strongly connected with a positive self-weight";
    if (!one_component && unreachable)
      return "no path from agent " + std::to_string(unreachable->first + 1) +
             " to agent " + std::to_string(unreachable->second + 1);
    return "no agent has a positive self-weight";
  }
};

// Assumption check: exactly one strongly connected component over the
// nonzero-weight digraph, and at least one positive self-weight.
inline ConnectivityReport check_strong_connectivity(const Network& net) {
  const int n = net.num_agents();
  ConnectivityReport report;
  for (int k = 0; k < n; ++k)
    if (net.weight(k, k) > 0.0) report.has_self_loop = true;

  // Strong connectivity == everything reachable from agent 0 in the edge
  // digraph (l -> k for a_lk > 0) and in its reverse.
  const auto reach = [&](bool forward) {
    std::vector<char> seen(n, 0);
    std::queue<int> q;
    q.push(0);
    seen[0] = 1;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int v = 0; v < n; ++v) {
        const double w = forward ? net.weight(u, v) : net.weight(v, u);
        if (w > 0.0 && !seen[v]) {
          seen[v] = 1;
          q.push(v);
        }
      }
    }
    return seen;
  };

  const auto fwd = reach(true);
  const auto bwd = reach(false);
  report.one_component = true;
  for (int v = 0; v < n && report.one_component; ++v) {
    if (!fwd[v]) {
      report.one_component = false;
      report.unreachable = {0, v};
    } else if (!bwd[v]) {
      report.one_component = false;
      report.unreachable = {v, 0};
    }
  }
  return report;
}

// Undirected Erdos-Renyi draw passed through the Metropolis construction,
// redrawn until strongly connected. Deterministic in the seed.
inline Network generate_erdos_renyi(int num_agents, double p, std::uint64_t seed) {
  if (num_agents <= 0) throw std::invalid_argument("erdos-renyi: need at least one agent");
  if (!(p > 0.0 && p <= 1.0))
    throw std::invalid_argument("erdos-renyi: p must lie in (0,1]");
  for (int attempt = 0; attempt < kErdosRenyiRetryCap; ++attempt) {
    rng::Stream stream(seed, rng::kGraph, static_cast<std::uint64_t>(attempt));
    std::vector<std::uint8_t> adj(static_cast<std::size_t>(num_agents) * num_agents, 0);
    for (int i = 0; i < num_agents; ++i)
      for (int j = i + 1; j < num_agents; ++j)
        if (stream.bernoulli(p)) {
          adj[static_cast<std::size_t>(i) * num_agents + j] = 1;
          adj[static_cast<std::size_t>(j) * num_agents + i] = 1;
        }
    Network net = build_metropolis(num_agents, adj);
    if (check_strong_connectivity(net).ok()) {
      net.verified_strongly_connected = true;
      return net;
    }
  }
  throw std::runtime_error("erdos-renyi: no strongly connected draw in " +
                           std::to_string(kErdosRenyiRetryCap) +
                           " attempts (K=" + std::to_string(num_agents) +
                           ", p=" + num::format_g17(p) + ")");
}

struct PerronVector {
  std::vector<double> v;
  long iterations = 0;
  double residual = 0.0;
};

// Power iteration for the unit-sum positive eigenvector at eigenvalue 1.
// Requires a primitive (strongly connected, aperiodic) matrix.
inline PerronVector perron_eigenvector(const Network& net) {
  const int n = net.num_agents();
  std::vector<double> v(n, 1.0 / n), next(n, 0.0);
  for (long it = 1; it <= kPerronIterationCap; ++it) {
    double residual = 0.0;
    for (int l = 0; l < n; ++l) {
      double s = 0.0;
      for (int k = 0; k < n; ++k) s += net.weight(l, k) * v[k];
      next[l] = s;
      residual = std::max(residual, std::abs(s - v[l]));
    }
    double total = 0.0;
    for (double x : next) total += x;
    for (int l = 0; l < n; ++l) v[l] = next[l] / total;
    if (residual <= kPerronTolerance) {
      for (double x : v)
        if (!(x > 0.0))
          throw std::runtime_error("perron: converged to a non-positive entry; "
                                   "matrix is not primitive");
      return {std::move(v), it, residual};
    }
  }
  double residual = 0.0;
  for (int l = 0; l < n; ++l) {
    double s = 0.0;
    for (int k = 0; k < n; ++k) s += net.weight(l, k) * v[k];
    residual = std::max(residual, std::abs(s - v[l]));
  }
  throw std::runtime_error("perron: no convergence within " +
                           std::to_string(kPerronIterationCap) +
                           " iterations, residual " + num::format_g17(residual));
}

// Plain-text edge list: header line "K", then one "l k weight" line per
// nonzero entry (1-based indices, 17 significant digits).
inline void save_edge_list(const Network& net, std::ostream& out) {
  const int n = net.num_agents();
  out << n << "\n";
  for (int l = 0; l < n; ++l)
    for (int k = 0; k < n; ++k)
      if (net.weight(l, k) > 0.0)
        out << (l + 1) << " " << (k + 1) << " " << num::format_g17(net.weight(l, k))
            << "\n";
}

inline Network load_edge_list(std::istream& in) {
  int n = 0;
  if (!(in >> n) || n <= 0)
    throw std::invalid_argument("edge list: bad or missing agent count header");
  std::vector<double> w(static_cast<std::size_t>(n) * n, 0.0);
  int l = 0, k = 0;
  double weight = 0.0;
  while (in >> l >> k >> weight) {
    if (l < 1 || l > n || k < 1 || k > n)
      throw std::invalid_argument("edge list: agent index out of range on line '" +
                                  std::to_string(l) + " " + std::to_string(k) + " ...'");
    w[static_cast<std::size_t>(l - 1) * n + (k - 1)] = weight;
  }
  if (!in.eof()) throw std::invalid_argument("edge list: malformed line");
  return Network::from_weights(n, std::move(w));
}

}  // namespace psl
