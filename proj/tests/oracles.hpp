#pragma once

// Independent reference implementations for tests. Plain loops over
// std::vector<double>; nothing here calls into the library's numeric code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <tuple>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

/// Column means of a rows x cols row-major block.
inline Vec column_means(const std::vector<float>& data, std::size_t rows, std::size_t cols) {
  Vec out(cols, 0.0);
  for (std::size_t j = 0; j < cols; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < rows; ++i) s += static_cast<double>(data[i * cols + j]);
    out[j] = s / static_cast<double>(rows);
  }
  return out;
}

inline double distance(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

inline double squared_distance(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

struct Stats {
  Vec mean;
  Vec std;
};

/// Two-pass population mean / std.
inline Stats two_pass_stats(const std::vector<Vec>& vs) {
  const auto dim = vs.front().size();
  Stats s{Vec(dim, 0.0), Vec(dim, 0.0)};
  for (const auto& v : vs)
    for (std::size_t j = 0; j < dim; ++j) s.mean[j] += v[j];
  for (auto& m : s.mean) m /= static_cast<double>(vs.size());
  for (const auto& v : vs)
    for (std::size_t j = 0; j < dim; ++j) s.std[j] += (v[j] - s.mean[j]) * (v[j] - s.mean[j]);
  for (auto& x : s.std) x = std::sqrt(x / static_cast<double>(vs.size()));
  return s;
}

inline Vec normalize(const Vec& v, const Stats& s, double eps) {
  Vec out(v.size());
  for (std::size_t j = 0; j < v.size(); ++j) out[j] = (v[j] - s.mean[j]) / std::max(s.std[j], eps);
  return out;
}

inline Vec mean_then_normalize(const std::vector<Vec>& vs, const Stats& s, double eps) {
  Vec m(vs.front().size(), 0.0);
  for (const auto& v : vs)
    for (std::size_t j = 0; j < v.size(); ++j) m[j] += v[j];
  for (auto& x : m) x /= static_cast<double>(vs.size());
  return normalize(m, s, eps);
}

/// Exhaustive K-NN: sort every reference by (distance, label, index), vote
/// over the first K, ties to the lowest label.
inline std::uint32_t brute_force_knn(const Vec& q, const std::vector<Vec>& refs, const std::vector<std::uint32_t>& labels,
                                     std::size_t k) {
  std::vector<std::tuple<double, std::uint32_t, std::size_t>> all;
  for (std::size_t i = 0; i < refs.size(); ++i) all.emplace_back(squared_distance(q, refs[i]), labels[i], i);
  std::sort(all.begin(), all.end());
  std::map<std::uint32_t, std::size_t> votes;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) ++votes[std::get<1>(all[i])];
  std::uint32_t best = 0;
  std::size_t most = 0;
  for (const auto& [label, n] : votes) {
    if (n > most || (n == most && label < best)) {
      best = label;
      most = n;
    }
  }
  return best;
}

inline Vec random_vec(std::mt19937_64& gen, std::size_t dim, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vec v(dim);
  for (auto& x : v) x = normal(gen);
  return v;
}

}  // namespace oracle
