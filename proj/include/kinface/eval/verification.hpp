#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "kinface/numerics/rng.hpp"
#include "kinface/numerics/tensor.hpp"

namespace kinface::eval {

/// dot(a, b) / sqrt(|a|^2 |b|^2). Writing the norm product under one root
/// makes cos(v, v) exactly 1.
template <typename It>
double cosine_similarity(It a_begin, It a_end, It b_begin, It b_end) {
  if (std::distance(a_begin, a_end) != std::distance(b_begin, b_end))
    throw ShapeError("cosine_similarity: vectors differ in length");
  double dot = 0, aa = 0, bb = 0;
  for (auto a = a_begin, b = b_begin; a != a_end; ++a, ++b) {
    const double x = static_cast<double>(*a), y = static_cast<double>(*b);
    dot += x * y;
    aa += x * x;
    bb += y * y;
  }
  if (aa == 0.0 || bb == 0.0) throw std::invalid_argument("cosine_similarity: zero vector");
  return std::clamp(dot / std::sqrt(aa * bb), -1.0, 1.0);
}

template <typename T>
double cosine_similarity(std::span<const T> a, std::span<const T> b) {
  return cosine_similarity(a.begin(), a.end(), b.begin(), b.end());
}

template <Real T>
double cosine_similarity(const Tensor<T>& a, const Tensor<T>& b) {
  return cosine_similarity(a.data().begin(), a.data().end(), b.data().begin(), b.data().end());
}

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  return cosine_similarity(a.begin(), a.end(), b.begin(), b.end());
}

template <typename A>
double cosine_distance(const A& a, const A& b) {
  return 1.0 - cosine_similarity(a, b);
}

struct ScoredPair {
  double score = 0;
  bool kin = false;
};

struct RocPoint {
  double fpr = 0, tpr = 0;
  double threshold = 0;  // predict kin when score >= threshold
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0;
  double best_accuracy = 0;
  double best_threshold = 0;
  std::size_t positives = 0, negatives = 0;
};

/**
 * Sweeps thresholds from above the largest score down through every
 * distinct score. The trapezoid area is accumulated in integer units of
 * 1 / (2 P N), so it matches the pairwise rank statistic exactly.
 */
inline RocCurve roc_and_accuracy(std::span<const ScoredPair> pairs) {
  RocCurve r;
  for (const auto& p : pairs) {
    if (!std::isfinite(p.score)) throw std::invalid_argument("roc_and_accuracy: non-finite score");
    (p.kin ? r.positives : r.negatives) += 1;
  }
  if (r.positives == 0 || r.negatives == 0)
    throw std::invalid_argument("roc_and_accuracy: need at least one kin and one non-kin pair");

  std::vector<ScoredPair> sorted(pairs.begin(), pairs.end());
  std::sort(sorted.begin(), sorted.end(), [](const ScoredPair& a, const ScoredPair& b) { return a.score > b.score; });

  const double P = static_cast<double>(r.positives), N = static_cast<double>(r.negatives);
  const double total = P + N;
  std::uint64_t tp = 0, fp = 0, area2 = 0;
  r.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  r.best_accuracy = N / total;
  r.best_threshold = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < sorted.size();) {
    const double t = sorted[i].score;
    std::uint64_t dtp = 0, dfp = 0;
    for (; i < sorted.size() && sorted[i].score == t; ++i) (sorted[i].kin ? dtp : dfp) += 1;
    area2 += dfp * (2 * tp + dtp);
    tp += dtp;
    fp += dfp;
    r.points.push_back({static_cast<double>(fp) / N, static_cast<double>(tp) / P, t});
    const double acc = (static_cast<double>(tp) + (N - static_cast<double>(fp))) / total;
    if (acc >= r.best_accuracy) {  // later thresholds are lower
      r.best_accuracy = acc;
      r.best_threshold = t;
    }
  }
  r.auc = static_cast<double>(area2) / (2.0 * P * N);
  return r;
}

inline RocCurve roc_and_accuracy(const std::vector<ScoredPair>& pairs) {
  return roc_and_accuracy(std::span<const ScoredPair>(pairs));
}

struct EmbeddingSimilarity {
  double real_vs_generated = 0;
  double generated_vs_random = 0;
};

/// Rows of `real` and `generated` are aligned embeddings. The random
/// partner for row i is a different row of `real`, drawn from `rng`.
template <Real T>
EmbeddingSimilarity embedding_similarity_report(const Tensor<T>& real, const Tensor<T>& generated, SeededRng& rng) {
  if (real.rank() != 2 || real.shape() != generated.shape()) throw ShapeError("embedding_similarity_report: shapes differ");
  const std::size_t n = real.dim(0), d = real.dim(1);
  if (n < 2) throw std::invalid_argument("embedding_similarity_report: need at least two rows");
  auto row = [d](const Tensor<T>& t, std::size_t i) {
    return std::span<const T>(t.data().data() + i * d, d);
  };
  EmbeddingSimilarity s;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = static_cast<std::size_t>(rng.index(n - 1));
    if (j >= i) ++j;
    s.real_vs_generated += 1.0 - cosine_similarity(row(real, i), row(generated, i));
    s.generated_vs_random += 1.0 - cosine_similarity(row(real, j), row(generated, i));
  }
  s.real_vs_generated /= static_cast<double>(n);
  s.generated_vs_random /= static_cast<double>(n);
  return s;
}

/// For each row i, an index j != i chosen by `rng`. Used to pair every kin
/// example with one unrelated negative.
inline std::vector<std::size_t> random_unrelated(std::size_t n, SeededRng& rng) {
  if (n < 2) throw std::invalid_argument("random_unrelated: need at least two rows");
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = static_cast<std::size_t>(rng.index(n - 1));
    out[i] = j >= i ? j + 1 : j;
  }
  return out;
}

/// Kin pairs (parent_i, child_i) plus negatives (parent_i, negatives_child_{neg[i]}).
template <Real T>
std::vector<ScoredPair> verification_pairs(const Tensor<T>& parents, const Tensor<T>& children,
                                           const Tensor<T>& negative_children, std::span<const std::size_t> neg) {
  if (parents.rank() != 2 || parents.shape() != children.shape() || parents.shape() != negative_children.shape() ||
      neg.size() != parents.dim(0))
    throw ShapeError("verification_pairs: inconsistent inputs");
  const std::size_t n = parents.dim(0), d = parents.dim(1);
  auto row = [d](const Tensor<T>& t, std::size_t i) { return std::span<const T>(t.data().data() + i * d, d); };
  std::vector<ScoredPair> pairs;
  pairs.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) pairs.push_back({cosine_similarity(row(parents, i), row(children, i)), true});
  for (std::size_t i = 0; i < n; ++i)
    pairs.push_back({cosine_similarity(row(parents, i), row(negative_children, neg[i])), false});
  return pairs;
}

}  // namespace kinface::eval
