#include "edgeret/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "edgeret/error.hpp"

namespace edgeret::retrieval {

Gallery::Gallery(Matrix features, std::vector<int> labels)
    : features_(std::move(features)), labels_(std::move(labels)) {
  if (labels_.empty() || features_.rows() == 0)
    throw Error(Errc::BadSpec, "gallery must hold at least one entry");
  if (static_cast<std::size_t>(features_.rows()) != labels_.size())
    throw Error(Errc::BadSpec, "gallery label count does not match feature rows");
  if (!features_.allFinite()) throw Error(Errc::BadSpec, "gallery features must be finite");
  norms_.resize(labels_.size());
  for (Eigen::Index r = 0; r < features_.rows(); ++r)
    norms_[static_cast<std::size_t>(r)] = features_.row(r).norm();
}

bool Gallery::contains_label(int label) const {
  return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
}

std::vector<double> distances(std::span<const double> query, const Gallery& gallery,
                              Metric metric) {
  if (query.size() != gallery.dim())
    throw Error(Errc::DimMismatch, "query dim " + std::to_string(query.size()) +
                                       " vs gallery dim " + std::to_string(gallery.dim()));
  const Eigen::Map<const Eigen::RowVectorXd> q(query.data(),
                                               static_cast<Eigen::Index>(query.size()));
  const Matrix& g = gallery.features_;
  std::vector<double> d(gallery.size());
  if (metric == Metric::L2) {
    for (Eigen::Index r = 0; r < g.rows(); ++r)
      d[static_cast<std::size_t>(r)] = (g.row(r) - q).squaredNorm();
    return d;
  }
  const double qn = q.norm();
  for (Eigen::Index r = 0; r < g.rows(); ++r) {
    const double denom = qn * gallery.norms_[static_cast<std::size_t>(r)];
    d[static_cast<std::size_t>(r)] = denom > 0.0 ? 1.0 - g.row(r).dot(q) / denom : 1.0;
  }
  return d;
}

RankList rank(std::span<const double> query, const Gallery& gallery, Metric metric) {
  const std::vector<double> d = distances(query, gallery, metric);
  RankList out;
  out.indices.resize(d.size());
  std::iota(out.indices.begin(), out.indices.end(), std::size_t{0});
  std::sort(out.indices.begin(), out.indices.end(), [&](std::size_t a, std::size_t b) {
    return d[a] < d[b] || (d[a] == d[b] && a < b);
  });
  return out;
}

double average_precision(const std::vector<bool>& relevance) {
  double hits = 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < relevance.size(); ++i) {
    if (!relevance[i]) continue;
    hits += 1.0;
    sum += hits / static_cast<double>(i + 1);
  }
  return hits > 0.0 ? sum / hits : 0.0;
}

QueryOutcome evaluate_query(std::span<const double> query, int label, const Gallery& gallery,
                            Metric metric, std::ptrdiff_t exclude_index) {
  QueryOutcome out;
  const RankList ranking = rank(query, gallery, metric);
  std::vector<bool> relevance;
  relevance.reserve(ranking.indices.size());
  for (std::size_t idx : ranking.indices) {
    if (static_cast<std::ptrdiff_t>(idx) == exclude_index) continue;
    relevance.push_back(gallery.labels()[idx] == label);
  }
  if (std::find(relevance.begin(), relevance.end(), true) == relevance.end()) {
    out.skipped = true;
    return out;
  }
  out.hit1 = relevance.front();
  const auto top5_end = relevance.begin() + static_cast<std::ptrdiff_t>(
                                                std::min<std::size_t>(5, relevance.size()));
  out.hit5 = std::find(relevance.begin(), top5_end, true) != top5_end;
  out.average_precision = average_precision(relevance);
  return out;
}

namespace {

template <typename PerQuery>
void for_each_query(const Matrix& queries, std::span<const int> labels, const Gallery& gallery,
                    const EvalOptions& opts, PerQuery&& fn) {
  if (static_cast<std::size_t>(queries.rows()) != labels.size())
    throw Error(Errc::BadSpec, "one label per query row required");
  if (static_cast<std::size_t>(queries.cols()) != gallery.dim())
    throw Error(Errc::DimMismatch, "query dim " + std::to_string(queries.cols()) +
                                       " vs gallery dim " + std::to_string(gallery.dim()));
  std::vector<double> row(static_cast<std::size_t>(queries.cols()));
  for (Eigen::Index r = 0; r < queries.rows(); ++r) {
    for (Eigen::Index c = 0; c < queries.cols(); ++c)
      row[static_cast<std::size_t>(c)] = queries(r, c);
    const std::ptrdiff_t exclude = opts.exclude_self ? static_cast<std::ptrdiff_t>(r) : -1;
    fn(row, labels[static_cast<std::size_t>(r)], exclude);
  }
}

}  // namespace

double top_k_accuracy(const Matrix& queries, std::span<const int> labels,
                      const Gallery& gallery, int k, EvalOptions opts, std::size_t* skipped) {
  if (k < 1) throw Error(Errc::BadSpec, "k must be >= 1");
  std::size_t hits = 0, evaluated = 0, skip = 0;
  for_each_query(queries, labels, gallery, opts,
                 [&](std::span<const double> q, int label, std::ptrdiff_t exclude) {
                   const RankList ranking = rank(q, gallery, opts.metric);
                   bool any = false, found = false;
                   std::size_t seen = 0;
                   for (std::size_t idx : ranking.indices) {
                     if (static_cast<std::ptrdiff_t>(idx) == exclude) continue;
                     const bool rel = gallery.labels()[idx] == label;
                     any = any || rel;
                     if (seen < static_cast<std::size_t>(k) && rel) found = true;
                     ++seen;
                   }
                   if (!any) {
                     ++skip;
                     return;
                   }
                   ++evaluated;
                   if (found) ++hits;
                 });
  if (skipped) *skipped = skip;
  return evaluated ? static_cast<double>(hits) / static_cast<double>(evaluated) : 0.0;
}

double mean_average_precision(const Matrix& queries, std::span<const int> labels,
                              const Gallery& gallery, EvalOptions opts) {
  return evaluate(queries, labels, gallery, opts).map;
}

Scores evaluate(const Matrix& queries, std::span<const int> labels, const Gallery& gallery,
                EvalOptions opts) {
  Scores s;
  for_each_query(queries, labels, gallery, opts,
                 [&](std::span<const double> q, int label, std::ptrdiff_t exclude) {
                   const QueryOutcome o = evaluate_query(q, label, gallery, opts.metric, exclude);
                   if (o.skipped) {
                     ++s.skipped;
                     return;
                   }
                   ++s.evaluated;
                   s.top1 += o.hit1;
                   s.top5 += o.hit5;
                   s.map += o.average_precision;
                 });
  if (s.evaluated) {
    const auto n = static_cast<double>(s.evaluated);
    s.top1 /= n;
    s.top5 /= n;
    s.map /= n;
  }
  return s;
}

}  // namespace edgeret::retrieval
