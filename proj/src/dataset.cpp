#include "edgeret/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "edgeret/error.hpp"

namespace edgeret::data {

namespace {

Dataset gather(const Dataset& all, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), all.features.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) =
        all.features.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(all.labels[rows[i]]);
  }
  return out;
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& why) {
  throw Error(Errc::ParseError, "line " + std::to_string(line) + ": " + why);
}

}  // namespace

int count_ids(const Dataset& data) {
  int mx = -1;
  for (int l : data.labels) mx = std::max(mx, l);
  return mx + 1;
}

SplitDataset split(const Dataset& all, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_id;
  for (std::size_t i = 0; i < all.labels.size(); ++i) by_id[all.labels[i]].push_back(i);

  std::mt19937_64 rng(seed ^ 0x5851f42d4c957f2dULL);
  std::vector<std::size_t> train, query, gallery;
  for (auto& [label, rows] : by_id) {
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto n = static_cast<double>(rows.size());
    std::size_t n_query = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.2 * n)));
    std::size_t n_gallery = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.2 * n)));
    if (rows.size() < 2) {
      // A lone sample can only serve as gallery.
      n_query = 0;
      n_gallery = rows.size();
    }
    if (n_query + n_gallery > rows.size()) n_gallery = rows.size() - n_query;
    std::size_t i = 0;
    for (; i < n_query; ++i) query.push_back(rows[i]);
    for (; i < n_query + n_gallery; ++i) gallery.push_back(rows[i]);
    for (; i < rows.size(); ++i) train.push_back(rows[i]);
  }
  SplitDataset out;
  out.train = gather(all, train);
  out.query = gather(all, query);
  out.gallery = gather(all, gallery);
  out.num_ids = count_ids(all);
  return out;
}

SplitDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_ids < 2) throw Error(Errc::BadSpec, "num_ids must be >= 2");
  if (spec.samples_per_id < 2) throw Error(Errc::BadSpec, "samples_per_id must be >= 2");
  if (spec.input_dim < 1) throw Error(Errc::BadSpec, "input_dim must be >= 1");
  if (!(spec.cluster_spread >= 0.0)) throw Error(Errc::BadSpec, "cluster_spread must be >= 0");

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto dim = static_cast<Eigen::Index>(spec.input_dim);
  const double radius = std::sqrt(static_cast<double>(spec.input_dim));

  Matrix centroids(spec.num_ids, dim);
  for (Eigen::Index r = 0; r < centroids.rows(); ++r) {
    for (Eigen::Index c = 0; c < dim; ++c) centroids(r, c) = normal(rng);
    centroids.row(r) *= radius / centroids.row(r).norm();
  }

  Dataset all;
  const auto total = static_cast<Eigen::Index>(spec.num_ids) * spec.samples_per_id;
  all.features.resize(total, dim);
  all.labels.reserve(static_cast<std::size_t>(total));
  Eigen::Index row = 0;
  for (int id = 0; id < spec.num_ids; ++id) {
    for (int s = 0; s < spec.samples_per_id; ++s, ++row) {
      for (Eigen::Index c = 0; c < dim; ++c)
        all.features(row, c) = centroids(id, c) + spec.cluster_spread * normal(rng);
      all.labels.push_back(id);
    }
  }
  return split(all, spec.seed);
}

void save_features(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot open " + path + " for writing");
  out << "dim=" << data.dim() << '\n';
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.labels[i];
    for (Eigen::Index c = 0; c < data.features.cols(); ++c) {
      // Shortest round-trip representation.
      const auto res = std::to_chars(buf, buf + sizeof buf,
                                     data.features(static_cast<Eigen::Index>(i), c));
      out << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
  if (!out) throw Error(Errc::Io, "failed writing " + path);
}

Dataset load_features(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) parse_fail(1, "missing dim header");
  if (line.rfind("dim=", 0) != 0) parse_fail(1, "expected 'dim=<D>' header");
  std::size_t dim = 0;
  {
    const char* b = line.data() + 4;
    const char* e = line.data() + line.size();
    const auto res = std::from_chars(b, e, dim);
    if (res.ec != std::errc() || res.ptr != e || dim == 0) parse_fail(1, "bad dim value");
  }

  std::vector<int> labels;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const char* p = line.data();
    const char* e = line.data() + line.size();
    int label = 0;
    auto res = std::from_chars(p, e, label);
    if (res.ec != std::errc()) parse_fail(line_no, "bad label");
    p = res.ptr;
    std::size_t count = 0;
    while (p < e) {
      if (*p != ',') parse_fail(line_no, "expected ',' separator");
      ++p;
      double v = 0.0;
      res = std::from_chars(p, e, v);
      if (res.ec != std::errc()) parse_fail(line_no, "bad real value");
      values.push_back(v);
      p = res.ptr;
      ++count;
    }
    if (count != dim)
      throw Error(Errc::DimInconsistent, "line " + std::to_string(line_no) + " has " +
                                             std::to_string(count) + " values, header says " +
                                             std::to_string(dim));
    labels.push_back(label);
  }

  Dataset out;
  out.labels = std::move(labels);
  out.features.resize(static_cast<Eigen::Index>(out.labels.size()),
                      static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < out.labels.size(); ++r)
    for (std::size_t c = 0; c < dim; ++c)
      out.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          values[r * dim + c];
  return out;
}

}  // namespace edgeret::data
