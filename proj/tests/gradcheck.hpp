#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "edgeret/nn.hpp"

namespace gradcheck {

using edgeret::nn::Matrix;

inline constexpr double kStep = 1e-4;
inline constexpr double kTolerance = 1e-4;
inline constexpr double kKinkMargin = 1e-3;
// Minimum per-feature batch std at a BN input; below it the normalization
// curvature (scale 1/std) makes a kStep difference inaccurate.
inline constexpr double kMinBatchStd = 0.05;

struct Report {
  std::string name;
  double worst = 0.0;
  std::size_t compared = 0;
};

inline double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Scalar probe loss sum(U .* net(X)); compares d/dX and d/dparams against
// central differences.
inline Report check_network(const std::string& name, edgeret::nn::Network& net, const Matrix& x,
                            const Matrix& u) {
  Report rep{name};
  auto loss = [&](const Matrix& in) { return (net.forward(in).array() * u.array()).sum(); };
  net.zero_grad();
  net.forward(x);
  const Matrix dx = net.backward(u);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Matrix p = x, m = x;
    p.data()[i] += kStep;
    m.data()[i] -= kStep;
    const double fd = (loss(p) - loss(m)) / (2 * kStep);
    rep.worst = std::max(rep.worst, rel_err(dx.data()[i], fd));
    ++rep.compared;
  }
  // Parameter gradients from the one analytic pass above.
  std::vector<std::vector<double>> analytic;
  for (const auto& pr : net.params()) analytic.emplace_back(pr.grad.begin(), pr.grad.end());
  auto params = net.params();
  for (std::size_t j = 0; j < params.size(); ++j)
    for (std::size_t k = 0; k < params[j].value.size(); ++k) {
      double& v = params[j].value[k];
      const double orig = v;
      v = orig + kStep;
      const double lp = loss(x);
      v = orig - kStep;
      const double lm = loss(x);
      v = orig;
      const double fd = (lp - lm) / (2 * kStep);
      rep.worst = std::max(rep.worst, rel_err(analytic[j][k], fd));
      ++rep.compared;
    }
  return rep;
}

// True when any activation input lies within kKinkMargin of zero, or any BN
// input feature has batch std below kMinBatchStd, for input x.
inline bool fd_unreliable(edgeret::nn::Network& net, const Matrix& x) {
  Matrix h = x;
  for (std::size_t i = 0; i < net.size(); ++i) {
    if (net.layer(i).kind() == edgeret::nn::LayerKind::BatchNorm) {
      const Eigen::RowVectorXd mean = h.colwise().mean();
      const Eigen::RowVectorXd var = (h.rowwise() - mean).array().square().colwise().mean();
      if ((var.array().sqrt() < kMinBatchStd).any()) return true;
    }
    h = net.layer(i).forward(h, edgeret::nn::Mode::Train);
    const Matrix* in = nullptr;
    if (auto* l = dynamic_cast<edgeret::nn::LeakyRelu*>(&net.layer(i))) in = &l->cached_input();
    if (auto* p = dynamic_cast<edgeret::nn::Prelu*>(&net.layer(i))) in = &p->cached_input();
    if (in && (in->array().abs() < kKinkMargin).any()) return true;
  }
  return false;
}

// One randomized configuration per call, cycling through layer and loss
// kinds. Returns the worst relative error observed.
inline Report random_config(int index, std::mt19937_64& rng) {
  using namespace edgeret::nn;
  std::uniform_int_distribution<int> dim(1, 6);
  std::uniform_int_distribution<int> rows(2, 6);
  const int kind = index % 7;
  for (;;) {
    const int in = dim(rng), out = dim(rng), n = rows(rng);
    Network net;
    std::string name;
    switch (kind) {
      case 0:
        name = "dense";
        net.emplace<Dense>(in, out, rng);
        break;
      case 1: {
        name = "batchnorm";
        auto& bn = net.emplace<BatchNorm>(in);
        bn.gamma() = random_matrix(in, 1, rng).col(0);
        bn.beta() = random_matrix(in, 1, rng).col(0);
        break;
      }
      case 2:
        name = "leaky_relu";
        net.emplace<LeakyRelu>(in);
        break;
      case 3: {
        name = "prelu";
        auto& p = net.emplace<Prelu>(in);
        p.slopes() = random_matrix(in, 1, rng, 0.5).col(0);
        break;
      }
      case 4:
        name = "dense_bn_leaky_dense";
        net.emplace<Dense>(in, out, rng);
        net.emplace<BatchNorm>(out);
        net.emplace<LeakyRelu>(out);
        net.emplace<Dense>(out, in, rng);
        break;
      case 5: {
        name = "cross_entropy";
        const int classes = std::max(2, out);
        const Matrix logits = random_matrix(n, classes, rng, 2.0);
        std::uniform_int_distribution<int> lab(0, classes - 1);
        std::vector<int> labels(static_cast<std::size_t>(n));
        for (int& l : labels) l = lab(rng);
        const LossResult r = cross_entropy(logits, labels);
        Report rep{name};
        for (Eigen::Index i = 0; i < logits.size(); ++i) {
          Matrix p = logits, m = logits;
          p.data()[i] += kStep;
          m.data()[i] -= kStep;
          const double fd =
              (cross_entropy(p, labels).loss - cross_entropy(m, labels).loss) / (2 * kStep);
          rep.worst = std::max(rep.worst, rel_err(r.grad.data()[i], fd));
          ++rep.compared;
        }
        return rep;
      }
      default: {
        name = "l1";
        const Matrix target = random_matrix(n, out, rng);
        const Matrix pred = random_matrix(n, out, rng);
        if (((pred - target).array().abs() < kKinkMargin).any()) continue;
        const LossResult r = l1_loss(pred, target);
        Report rep{name};
        for (Eigen::Index i = 0; i < pred.size(); ++i) {
          Matrix p = pred, m = pred;
          p.data()[i] += kStep;
          m.data()[i] -= kStep;
          const double fd = (l1_loss(p, target).loss - l1_loss(m, target).loss) / (2 * kStep);
          rep.worst = std::max(rep.worst, rel_err(r.grad.data()[i], fd));
          ++rep.compared;
        }
        return rep;
      }
    }
    const Matrix x = random_matrix(n, in, rng);
    if (fd_unreliable(net, x)) continue;
    const Matrix u = random_matrix(n, static_cast<Eigen::Index>(net.out_dim()), rng);
    return check_network(name, net, x, u);
  }
}

}  // namespace gradcheck
