#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "edgeret/error.hpp"
#include "edgeret/retrieval.hpp"

using namespace edgeret;
using namespace edgeret::retrieval;

namespace {

Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
  Matrix m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

std::vector<double> row_vec(const Matrix& m, Eigen::Index r) {
  std::vector<double> v(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) v[static_cast<std::size_t>(c)] = m(r, c);
  return v;
}

// Exhaustive-scan oracle: squared distances to every gallery row, stable
// sort by (distance, index), then the metrics from their definitions.
struct Oracle {
  double top1 = 0, top5 = 0, map = 0;
};

Oracle brute_force(const Matrix& q, const std::vector<int>& ql, const Matrix& g,
                   const std::vector<int>& gl) {
  Oracle o;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    std::vector<std::pair<double, std::size_t>> d;
    for (Eigen::Index j = 0; j < g.rows(); ++j)
      d.emplace_back((q.row(i) - g.row(j)).squaredNorm(), static_cast<std::size_t>(j));
    std::sort(d.begin(), d.end());
    const int lab = ql[static_cast<std::size_t>(i)];
    int hits = 0;
    double ap = 0;
    std::size_t relevant = 0;
    for (std::size_t r = 0; r < d.size(); ++r)
      if (gl[d[r].second] == lab) ++relevant;
    for (std::size_t r = 0; r < d.size(); ++r) {
      if (gl[d[r].second] != lab) continue;
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(r + 1);
      if (r == 0) o.top1 += 1;
      if (hits == 1 && r < 5) o.top5 += 1;
    }
    o.map += ap / static_cast<double>(relevant);
  }
  const double n = static_cast<double>(q.rows());
  o.top1 /= n;
  o.top5 /= n;
  o.map /= n;
  return o;
}

}  // namespace

TEST_CASE("rank examples") {
  const Gallery g(rows({{0, 0}, {3, 4}}), {0, 1});
  const std::vector<double> q{0, 1};
  CHECK(rank(q, g).indices == std::vector<std::size_t>{0, 1});
  const std::vector<double> self{3, 4};
  CHECK(rank(self, g).indices.front() == 1);
}

TEST_CASE("rank ties are broken by index") {
  const Gallery g(rows({{1, 0}, {-1, 0}, {0, 1}, {1, 0}}), {0, 1, 2, 3});
  const std::vector<double> q{0, 0};
  CHECK(rank(q, g).indices == std::vector<std::size_t>{0, 1, 2, 3});
}

TEST_CASE("cosine metric is scale invariant") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 1);
  Matrix gm(30, 5);
  for (Eigen::Index i = 0; i < gm.size(); ++i) gm.data()[i] = n(rng);
  std::vector<int> labels(30);
  std::iota(labels.begin(), labels.end(), 0);
  const Gallery g(gm, labels);
  std::vector<double> q(5);
  for (double& v : q) v = n(rng);
  std::vector<double> scaled = q;
  for (double& v : scaled) v *= 17.5;
  CHECK(rank(q, g, Metric::Cosine).indices == rank(scaled, g, Metric::Cosine).indices);
}

TEST_CASE("l2 rank is invariant to common translation") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  Matrix gm(25, 4);
  for (Eigen::Index i = 0; i < gm.size(); ++i) gm.data()[i] = n(rng);
  std::vector<int> labels(25, 0);
  std::vector<double> q{0.1, -0.3, 0.7, 0.2}, shift{5, -2, 3, 1};
  Matrix shifted = gm;
  for (Eigen::Index i = 0; i < shifted.rows(); ++i)
    for (Eigen::Index j = 0; j < 4; ++j) shifted(i, j) += shift[static_cast<std::size_t>(j)];
  std::vector<double> qs = q;
  for (std::size_t j = 0; j < 4; ++j) qs[j] += shift[j];
  CHECK(rank(q, Gallery(gm, labels)).indices == rank(qs, Gallery(shifted, labels)).indices);
}

TEST_CASE("errors") {
  try {
    const Gallery g(rows({{0, 0}}), {0});
    const std::vector<double> q{1, 2, 3};
    (void)rank(q, g);
    FAIL("expected DimMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DimMismatch);
  }
  CHECK_THROWS_AS(Gallery(Matrix(0, 2), {}), Error);
  CHECK_THROWS_AS(Gallery(rows({{0, 0}}), {0, 1}), Error);
  CHECK_THROWS_AS(Gallery(rows({{0, NAN}}), {0}), Error);
}

TEST_CASE("top-k examples") {
  const Matrix g = rows({{0}, {1}, {2}, {3}});
  const std::vector<int> gl{0, 1, 2, 3};
  const Gallery gallery(g, gl);
  CHECK(top_k_accuracy(g, gl, gallery, 1) == 1.0);

  // Query A matches at rank 1; query B (label 9) sits nearest rows 0..1 and
  // its only match is third.
  const Gallery g2(rows({{0}, {1}, {2}, {10}}), {5, 7, 9, 8});
  const Matrix q = rows({{0.1}, {0.9}});
  const std::vector<int> ql{5, 9};
  CHECK(top_k_accuracy(q, ql, g2, 1) == doctest::Approx(0.5));
  CHECK(top_k_accuracy(q, ql, g2, 5) == doctest::Approx(1.0));
}

TEST_CASE("queries without a gallery match are skipped and tallied") {
  const Gallery g(rows({{0}, {1}}), {0, 1});
  const Matrix q = rows({{0}, {5}});
  const std::vector<int> ql{0, 42};
  std::size_t skipped = 0;
  CHECK(top_k_accuracy(q, ql, g, 1, {}, &skipped) == 1.0);
  CHECK(skipped == 1);
  const Scores s = evaluate(q, ql, g);
  CHECK(s.evaluated == 1);
  CHECK(s.skipped == 1);
}

TEST_CASE("average precision examples") {
  CHECK(average_precision({true}) == 1.0);
  CHECK(average_precision({true, false, true}) == doctest::Approx(5.0 / 6.0));
  CHECK(average_precision({false, true, false, true}) == doctest::Approx(0.5));
}

TEST_CASE("self exclusion") {
  const Matrix g = rows({{0}, {0.2}, {5}, {5.1}});
  const std::vector<int> gl{0, 1, 1, 0};
  const Gallery gallery(g, gl);
  CHECK(top_k_accuracy(g, gl, gallery, 1) == 1.0);
  CHECK(top_k_accuracy(g, gl, gallery, 1, {Metric::L2, true}) == 0.0);
}

TEST_CASE("random synthetic check against the exhaustive-scan oracle") {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix centroids(10, 8);
    for (Eigen::Index i = 0; i < centroids.size(); ++i) centroids.data()[i] = n(rng);
    Matrix q(100, 8), g(50, 8);
    std::vector<int> ql(100), gl(50);
    for (int i = 0; i < 100; ++i) {
      ql[static_cast<std::size_t>(i)] = i % 10;
      for (int j = 0; j < 8; ++j) q(i, j) = centroids(i % 10, j) + 0.8 * n(rng);
    }
    for (int i = 0; i < 50; ++i) {
      gl[static_cast<std::size_t>(i)] = i % 10;
      for (int j = 0; j < 8; ++j) g(i, j) = centroids(i % 10, j) + 0.8 * n(rng);
    }
    const Gallery gallery(g, gl);
    const Scores s = evaluate(q, ql, gallery);
    const Oracle o = brute_force(q, ql, g, gl);
    CHECK(s.top1 == doctest::Approx(o.top1).epsilon(1e-12));
    CHECK(s.top5 == doctest::Approx(o.top5).epsilon(1e-12));
    CHECK(s.map == doctest::Approx(o.map).epsilon(1e-12));
    CHECK(s.map <= 1.0);
    double prev = 0.0;
    for (int k = 1; k <= 20; ++k) {
      const double acc = top_k_accuracy(q, ql, gallery, k);
      CHECK(acc >= prev);
      prev = acc;
    }
    CHECK(top_k_accuracy(q, ql, gallery, 50) == 1.0);
    for (Eigen::Index i = 0; i < 3; ++i) {
      const auto qi = row_vec(q, i);
      const auto r = rank(qi, gallery);
      CHECK(r.indices.size() == 50);
    }
  }
}
