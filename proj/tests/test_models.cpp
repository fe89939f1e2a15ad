#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "psl/models.hpp"

using psl::LikelihoodFamily;

TEST_CASE("gaussian log likelihood closed forms", "[models]") {
  const auto fam = LikelihoodFamily::gaussian({1.0, 3.0});
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  REQUIRE_THAT(fam.log_likelihood(1.0, 0),
               Catch::Matchers::WithinAbs(-half_log_2pi, 1e-15));
  REQUIRE_THAT(fam.log_likelihood(1.0, 1),
               Catch::Matchers::WithinAbs(-half_log_2pi - 2.0, 1e-15));
}

TEST_CASE("discrete log likelihood and alphabet errors", "[models]") {
  const auto fam = LikelihoodFamily::discrete({{0.8, 0.2}, {0.5, 0.5}});
  REQUIRE_THAT(fam.log_likelihood(0.0, 0),
               Catch::Matchers::WithinAbs(std::log(0.8), 1e-15));
  REQUIRE_THROWS_AS(fam.log_likelihood(2.0, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(fam.log_likelihood(0.5, 0), std::invalid_argument);
  const auto zero_cell = LikelihoodFamily::discrete({{1.0, 0.0}, {0.5, 0.5}});
  REQUIRE(zero_cell.log_likelihood(1.0, 0) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("discrete rows must be simplex vectors", "[models]") {
  REQUIRE_THROWS_AS(LikelihoodFamily::discrete({{0.7, 0.2}, {0.5, 0.5}}),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(LikelihoodFamily::discrete({{1.2, -0.2}, {0.5, 0.5}}),
                    std::invalid_argument);
}

TEST_CASE("kl divergence closed forms", "[models]") {
  const auto gauss = LikelihoodFamily::gaussian({1.0, 1.0, 3.0});
  REQUIRE(psl::kl_divergence(gauss, 0, 1) == 0.0);
  REQUIRE_THAT(psl::kl_divergence(gauss, 0, 2), Catch::Matchers::WithinAbs(2.0, 1e-15));

  const auto disc = LikelihoodFamily::discrete({{1.0, 0.0}, {0.5, 0.5}});
  REQUIRE_THAT(psl::kl_divergence(disc, 0, 1),
               Catch::Matchers::WithinAbs(std::log(2.0), 1e-15));
  // q has a zero where p is positive: infinite divergence, assumption violation
  REQUIRE_THROWS_AS(psl::kl_divergence(disc, 1, 0), psl::AssumptionError);
}

TEST_CASE("kl divergence is nonnegative and zero on identical rows", "[models]") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    psl::rng::Stream stream(seed, 0x5EED);
    std::vector<std::vector<double>> rows;
    for (int h = 0; h < 3; ++h) {
      std::vector<double> row(4);
      double sum = 0.0;
      for (double& q : row) {
        q = 0.01 + stream.uniform01();
        sum += q;
      }
      for (double& q : row) q /= sum;
      rows.push_back(row);
    }
    rows.push_back(rows.front());  // duplicate: exactly zero divergence
    const auto fam = LikelihoodFamily::discrete(rows);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) REQUIRE(psl::kl_divergence(fam, a, b) >= 0.0);
    REQUIRE(psl::kl_divergence(fam, 0, 3) == 0.0);
    REQUIRE(psl::kl_divergence(fam, 3, 0) == 0.0);
  }
}

TEST_CASE("identifiability derivation recovers constructed sets", "[models]") {
  const int H = 10, theta0 = 0;
  std::vector<int> cards = {4, 4, 4, 4, 4, 4, 4, 4, 4, 4, 8, 8, 8, 8, 8, 2, 2, 2, 2, 2};
  for (std::uint64_t seed : {3ull, 17ull, 99ull}) {
    const auto sets = psl::draw_indistinguishable_sets(H, theta0, cards, seed);
    std::vector<LikelihoodFamily> families;
    for (const auto& ik : sets)
      families.push_back(psl::make_hypothesis_mean_gaussian(H, theta0, ik));
    const auto st = psl::derive_identifiability(families, theta0);
    REQUIRE(st.num_agents() == 20);
    for (int k = 0; k < 20; ++k) {
      REQUIRE(st.indistinguishable[k] == sets[k]);
      REQUIRE(st.cardinality(k) == cards[k]);
      REQUIRE(static_cast<int>(st.distinguishable[k].size()) == H - 1 - cards[k]);
    }
  }
}

TEST_CASE("identifiability partition covers all hypotheses", "[models]") {
  // all agents fully informative
  std::vector<LikelihoodFamily> informative(3, LikelihoodFamily::gaussian({1, 2, 3, 4}));
  auto st = psl::derive_identifiability(informative, 0);
  for (int k = 0; k < 3; ++k) {
    REQUIRE(st.indistinguishable[k].empty());
    REQUIRE(st.distinguishable[k] == std::vector<int>{1, 2, 3});
  }

  // one agent with all likelihoods identical
  std::vector<LikelihoodFamily> blind{LikelihoodFamily::gaussian({2, 2, 2})};
  st = psl::derive_identifiability(blind, 0);
  REQUIRE(st.indistinguishable[0] == std::vector<int>{1, 2});
  REQUIRE(st.distinguishable[0].empty());
}

TEST_CASE("identifiability is invariant under permuting agents", "[models]") {
  std::vector<LikelihoodFamily> families = {
      LikelihoodFamily::gaussian({1, 1, 3, 4}), LikelihoodFamily::gaussian({1, 2, 1, 4}),
      LikelihoodFamily::gaussian({1, 2, 3, 1})};
  const auto st = psl::derive_identifiability(families, 0);
  std::vector<LikelihoodFamily> permuted = {families[2], families[0], families[1]};
  const auto st2 = psl::derive_identifiability(permuted, 0);
  REQUIRE(st.indistinguishable[0] == st2.indistinguishable[1]);
  REQUIRE(st.indistinguishable[1] == st2.indistinguishable[2]);
  REQUIRE(st.indistinguishable[2] == st2.indistinguishable[0]);
}

TEST_CASE("global identifiability check and witnesses", "[models]") {
  psl::IdentifiabilityStructure st;
  st.num_hypotheses = 3;
  st.theta0 = 0;
  st.indistinguishable = {{1}, {1}};
  st.distinguishable = {{2}, {2}};
  const auto shared = psl::check_global_identifiability(st);
  REQUIRE_FALSE(shared.ok);
  REQUIRE(shared.witness == 1);

  st.indistinguishable = {{1}, {2}};
  st.distinguishable = {{2}, {1}};
  REQUIRE(psl::check_global_identifiability(st).ok);

  st.indistinguishable = {{1, 2}, {}};
  st.distinguishable = {{}, {1, 2}};
  REQUIRE(psl::check_global_identifiability(st).ok);
}

TEST_CASE("convex combination checks on discrete families", "[models]") {
  // target (1,0) cannot be reached from {(0,1)}
  auto fam = LikelihoodFamily::discrete({{1.0, 0.0}, {0.0, 1.0}});
  auto report = psl::check_convex_combination(fam, 0, {1});
  REQUIRE(report.status == psl::ConvexCombStatus::holds);

  // midpoint is reproducible
  fam = LikelihoodFamily::discrete({{0.5, 0.5}, {1.0, 0.0}, {0.0, 1.0}});
  report = psl::check_convex_combination(fam, 0, {1, 2});
  REQUIRE(report.status == psl::ConvexCombStatus::violated);
  REQUIRE_THAT(report.best_alpha[0], Catch::Matchers::WithinAbs(0.5, 1e-6));

  // grid oracle agrees on the three-symbol case
  fam = LikelihoodFamily::discrete(
      {{0.6, 0.3, 0.1}, {0.1, 0.6, 0.3}, {0.3, 0.1, 0.6}});
  report = psl::check_convex_combination(fam, 0, {1, 2});
  REQUIRE(report.status == psl::ConvexCombStatus::holds);
  REQUIRE_FALSE(oracle::convex_reachable_grid(fam.row(0), fam.row(1), fam.row(2)));

  // gaussian families are out of the check's reach
  const auto gauss = LikelihoodFamily::gaussian({1, 2});
  REQUIRE(psl::check_convex_combination(gauss, 0, {1}).status ==
          psl::ConvexCombStatus::not_applicable);
}

TEST_CASE("degenerate discrete sampling and determinism", "[models]") {
  const auto fam = LikelihoodFamily::discrete({{1.0, 0.0}, {0.5, 0.5}});
  for (int i = 0; i < 20; ++i) {
    psl::rng::Stream stream(9, psl::rng::kObservation, 0, i);
    REQUIRE(fam.sample(0, stream) == 0.0);
  }
  psl::rng::Stream a(42, psl::rng::kObservation, 3, 5);
  psl::rng::Stream b(42, psl::rng::kObservation, 3, 5);
  const auto gauss = LikelihoodFamily::gaussian({1, 2});
  REQUIRE(gauss.sample(0, a) == gauss.sample(0, b));
}

TEST_CASE("gaussian sample mean concentrates at the true mean", "[models]") {
  const auto fam = LikelihoodFamily::gaussian({1.0, 5.0});
  psl::rng::Stream stream(1234, psl::rng::kObservation);
  double sum = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) sum += fam.sample(0, stream);
  REQUIRE_THAT(sum / n, Catch::Matchers::WithinAbs(1.0, 0.005));
}

TEST_CASE("discrete sampling matches the row frequencies", "[models]") {
  const auto fam = LikelihoodFamily::discrete({{0.2, 0.5, 0.3}, {1.0, 0.0, 0.0}});
  psl::rng::Stream stream(77, psl::rng::kObservation);
  std::vector<int> counts(3, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<int>(fam.sample(0, stream))];
  REQUIRE_THAT(counts[0] / double(n), Catch::Matchers::WithinAbs(0.2, 0.01));
  REQUIRE_THAT(counts[1] / double(n), Catch::Matchers::WithinAbs(0.5, 0.01));
}

TEST_CASE("indistinguishable set draws honor constraints", "[models]") {
  const std::vector<int> cards = {2, 3, 1, 0};
  const auto sets = psl::draw_indistinguishable_sets(5, 1, cards, 11);
  const auto again = psl::draw_indistinguishable_sets(5, 1, cards, 11);
  REQUIRE(sets == again);
  for (int k = 0; k < 4; ++k) {
    REQUIRE(static_cast<int>(sets[k].size()) == cards[k]);
    for (int theta : sets[k]) {
      REQUIRE(theta != 1);
      REQUIRE(theta >= 0);
      REQUIRE(theta < 5);
    }
    REQUIRE(std::is_sorted(sets[k].begin(), sets[k].end()));
  }

  // every agent indistinguishable on everything: intersection can never be
  // empty, the rejection loop must give up
  REQUIRE_THROWS_AS(psl::draw_indistinguishable_sets(3, 0, {2, 2}, 1),
                    std::runtime_error);
}
