#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <vector>

namespace edgeret::retrieval {

using Matrix = Eigen::MatrixXd;

enum class Metric { L2, Cosine };

// Labeled feature store, one row per entry. Immutable once built.
class Gallery {
 public:
  // Throws BadSpec when empty, non-finite or label count mismatches rows.
  Gallery(Matrix features, std::vector<int> labels);

  const Matrix& features() const noexcept { return features_; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(features_.cols()); }
  bool contains_label(int label) const;

 private:
  Matrix features_;
  std::vector<int> labels_;
  std::vector<double> norms_;
  friend std::vector<double> distances(std::span<const double>, const Gallery&, Metric);
};

// Gallery indices by ascending distance, ties by ascending index.
struct RankList {
  std::vector<std::size_t> indices;
};

std::vector<double> distances(std::span<const double> query, const Gallery& gallery,
                              Metric metric);

// Throws DimMismatch.
RankList rank(std::span<const double> query, const Gallery& gallery,
              Metric metric = Metric::L2);

// Per-query retrieval outcome. skipped means the label has no gallery match.
struct QueryOutcome {
  bool skipped = false;
  bool hit1 = false;
  bool hit5 = false;
  double average_precision = 0.0;
};

// exclude_index drops one gallery row (self-match exclusion).
QueryOutcome evaluate_query(std::span<const double> query, int label, const Gallery& gallery,
                            Metric metric, std::ptrdiff_t exclude_index = -1);

// Average precision of a relevance list in rank order.
double average_precision(const std::vector<bool>& relevance);

struct Scores {
  double top1 = 0.0;
  double top5 = 0.0;
  double map = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

struct EvalOptions {
  Metric metric = Metric::L2;
  // Query i never matches gallery row i (for gallery == queries).
  bool exclude_self = false;
};

// Queries whose label is absent from the gallery are skipped and tallied.
double top_k_accuracy(const Matrix& queries, std::span<const int> labels,
                      const Gallery& gallery, int k, EvalOptions opts = {},
                      std::size_t* skipped = nullptr);
double mean_average_precision(const Matrix& queries, std::span<const int> labels,
                              const Gallery& gallery, EvalOptions opts = {});
Scores evaluate(const Matrix& queries, std::span<const int> labels, const Gallery& gallery,
                EvalOptions opts = {});

}  // namespace edgeret::retrieval
