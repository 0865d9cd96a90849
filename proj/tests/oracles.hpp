#pragma once

// Independent reference implementations used as test oracles. Plain loops,
// no Eigen reductions, no shared code with the library under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dvp/similarity.hpp"

namespace oracle {

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

template <typename M>
std::vector<double> row(const M& m, Eigen::Index r) {
  std::vector<double> out;
  for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(static_cast<double>(m(r, c)));
  return out;
}

inline std::vector<dvp::ImageId> top_k(std::vector<dvp::ScoredId> s, std::size_t k) {
  std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  });
  std::vector<dvp::ImageId> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(s[i].id);
  return out;
}

template <typename M>
std::vector<std::vector<dvp::ScoredId>> match(const M& elements, const M& bank, const std::vector<dvp::ImageId>& ids,
                                              std::size_t k) {
  std::vector<std::vector<dvp::ScoredId>> out;
  for (Eigen::Index i = 0; i < elements.rows(); ++i) {
    std::vector<dvp::ScoredId> all;
    for (Eigen::Index j = 0; j < bank.rows(); ++j) all.push_back({ids[j], cosine(row(elements, i), row(bank, j))});
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
      return a.score != b.score ? a.score > b.score : a.id < b.id;
    });
    all.resize(k);
    out.push_back(all);
  }
  return out;
}

template <typename Scalar>
dvp::EmbeddingMatrix<Scalar> random_matrix(std::mt19937_64& rng, int rows, int cols) {
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  dvp::EmbeddingMatrix<Scalar> m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    do {
      for (int c = 0; c < cols; ++c) m(r, c) = static_cast<Scalar>(val(rng));
    } while (m.row(r).norm() < Scalar(1e-3));
  }
  return m;
}

inline std::string random_id(std::mt19937_64& rng) {
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (int i = 0; i < 12; ++i) s += hex[rng() % 16];
  return s;
}

// Recursive lexicographic permutations: pick each remaining value in
// ascending order as the next position.
inline void permute(std::vector<std::size_t>& prefix, std::vector<std::size_t> rest,
                    std::vector<std::vector<std::size_t>>& out) {
  if (rest.empty()) {
    out.push_back(prefix);
    return;
  }
  for (std::size_t i = 0; i < rest.size(); ++i) {
    auto next = rest;
    prefix.push_back(next[i]);
    next.erase(next.begin() + static_cast<std::ptrdiff_t>(i));
    permute(prefix, next, out);
    prefix.pop_back();
  }
}

inline std::vector<std::vector<std::size_t>> permutations(std::size_t n) {
  std::vector<std::size_t> rest(n), prefix;
  for (std::size_t i = 0; i < n; ++i) rest[i] = i;
  std::vector<std::vector<std::size_t>> out;
  permute(prefix, rest, out);
  return out;
}

inline double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace oracle
