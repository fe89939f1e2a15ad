#pragma once

// Log-domain helpers shared across the library. Belief vectors are kept as
// log-probabilities throughout; these routines renormalize and move between
// the log and log-odds representations without overflow on either tail.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace psl::num {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_sum_exp(std::span<const double> xs) {
  double m = kNegInf;
  for (double x : xs) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;  // empty or all zero-mass
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

// log of the total mass of all entries except index `skip`.
inline double log_sum_exp_excluding(std::span<const double> xs, std::size_t skip) {
  double m = kNegInf;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (i != skip) m = std::max(m, xs[i]);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (i != skip) s += std::exp(xs[i] - m);
  return m + std::log(s);
}

// log(1 + e^x), stable for large |x|.
inline double log1p_exp(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// In-place renormalization of a log-probability vector.
inline void normalize_log(std::span<double> xs) {
  const double z = log_sum_exp(xs);
  if (!std::isfinite(z))
    throw std::domain_error("normalize_log: total mass is zero");
  for (double& x : xs) x -= z;
}

// log of the total mass of the members of a normalized log-probability
// vector. Large subsets go through the complement so that a mass provably
// below one never reports a positive log.
inline double subset_log_mass(std::span<const double> log_row,
                              std::span<const int> members) {
  double direct_max = kNegInf;
  for (int m : members) direct_max = std::max(direct_max, log_row[m]);
  if (direct_max == kNegInf) return kNegInf;
  double direct_sum = 0.0;
  for (int m : members) direct_sum += std::exp(log_row[m] - direct_max);
  const double direct = direct_max + std::log(direct_sum);
  if (direct <= -0.6931471805599453) return direct;  // mass below one half

  std::vector<char> in_set(log_row.size(), 0);
  for (int m : members) in_set[m] = 1;
  double rest_max = kNegInf;
  for (std::size_t i = 0; i < log_row.size(); ++i)
    if (!in_set[i]) rest_max = std::max(rest_max, log_row[i]);
  if (rest_max == kNegInf) return std::min(direct, 0.0);
  double rest_sum = 0.0;
  for (std::size_t i = 0; i < log_row.size(); ++i)
    if (!in_set[i]) rest_sum += std::exp(log_row[i] - rest_max);
  return std::log1p(-std::exp(rest_max + std::log(rest_sum)));
}

// Split a log-odds value t = log(p/(1-p)) back into (log p, log(1-p)).
struct LogParts {
  double log_p;
  double log_1mp;
};

inline LogParts logit_to_parts(double t) {
  return {-log1p_exp(-t), -log1p_exp(t)};
}

// 64-bit FNV-1a, used to fingerprint observation streams.
inline std::uint64_t fnv1a64(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

inline std::uint64_t hash_double(std::uint64_t h, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  return fnv1a64(h, &bits, sizeof bits);
}

// Shortest decimal rendering that round-trips a double (17 significant
// digits); used by every text serialization in the project.
inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace psl::num
