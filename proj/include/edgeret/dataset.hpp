#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace edgeret::data {

using Matrix = Eigen::MatrixXd;

struct Dataset {
  Matrix features;  // one sample per row
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(features.cols()); }
  bool operator==(const Dataset& other) const {
    return labels == other.labels && features.rows() == other.features.rows() &&
           features.cols() == other.features.cols() && features == other.features;
  }
};

struct SplitDataset {
  Dataset train;
  Dataset query;
  Dataset gallery;
  int num_ids = 0;
};

struct SyntheticSpec {
  int num_ids = 100;
  int samples_per_id = 10;
  int input_dim = 64;
  // Per-coordinate within-id noise sigma; centroid coordinates have unit
  // scale (centroids lie on the sphere of radius sqrt(input_dim)).
  double cluster_spread = 0.3;
  std::uint64_t seed = 1;
};

// Per id: round(20%) queries (at least 1), round(20%) gallery (at least 1),
// the rest train; the assignment is shuffled by seed.
SplitDataset split(const Dataset& all, std::uint64_t seed);

// Throws BadSpec.
SplitDataset generate_synthetic(const SyntheticSpec& spec);

// Text format: first line "dim=<D>", then "label,v1,...,vD" per sample.
void save_features(const std::string& path, const Dataset& data);
// Throws ParseError (with line number) or DimInconsistent.
Dataset load_features(const std::string& path);

// Highest label + 1; labels are expected to be 0-based identity indices.
int count_ids(const Dataset& data);

}  // namespace edgeret::data
