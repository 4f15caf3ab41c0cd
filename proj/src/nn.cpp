#include "edgeret/nn.hpp"

#include <cmath>
#include <string>

#include "edgeret/error.hpp"

namespace edgeret::nn {

namespace {

std::span<double> span_of(Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}
std::span<double> span_of(RowMatrix& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

void check_cols(const Matrix& input, std::size_t expected, const char* who) {
  if (static_cast<std::size_t>(input.cols()) != expected)
    throw Error(Errc::ShapeMismatch, std::string(who) + " expects " +
                                         std::to_string(expected) + " columns, got " +
                                         std::to_string(input.cols()));
}

void require_cache(bool has_cache, const char* who) {
  if (!has_cache)
    throw Error(Errc::NoForwardCache, std::string(who) + " backward called before forward");
}

}  // namespace

void Layer::zero_grad() {
  for (ParamRef& p : params()) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

// ---- Dense ----

Dense::Dense(std::size_t in, std::size_t out)
    : weights_(RowMatrix::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in))),
      bias_(Vector::Zero(static_cast<Eigen::Index>(out))),
      weight_grad_(RowMatrix::Zero(weights_.rows(), weights_.cols())),
      bias_grad_(Vector::Zero(bias_.size())) {}

Dense::Dense(std::size_t in, std::size_t out, std::mt19937_64& rng) : Dense(in, out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> init(-bound, bound);
  for (Eigen::Index r = 0; r < weights_.rows(); ++r)
    for (Eigen::Index c = 0; c < weights_.cols(); ++c) weights_(r, c) = init(rng);
  for (Eigen::Index r = 0; r < bias_.size(); ++r) bias_(r) = init(rng);
}

Matrix Dense::forward(const Matrix& input, Mode) {
  check_cols(input, in_dim(), "Dense");
  cached_input_ = input;
  has_cache_ = true;
  Matrix out = input * weights_.transpose();
  out.rowwise() += bias_.transpose();
  return out;
}

Matrix Dense::backward(const Matrix& upstream) {
  require_cache(has_cache_, "Dense");
  check_cols(upstream, out_dim(), "Dense backward");
  weight_grad_ += upstream.transpose() * cached_input_;
  bias_grad_ += upstream.colwise().sum().transpose();
  return upstream * weights_;
}

std::vector<ParamRef> Dense::params() {
  return {{span_of(weights_), span_of(weight_grad_), true},
          {span_of(bias_), span_of(bias_grad_), false}};
}

std::vector<std::span<double>> Dense::state() {
  return {span_of(weights_), span_of(bias_)};
}

// ---- BatchNorm ----

BatchNorm::BatchNorm(std::size_t dim, double momentum, double eps)
    : gamma_(Vector::Ones(static_cast<Eigen::Index>(dim))),
      beta_(Vector::Zero(static_cast<Eigen::Index>(dim))),
      gamma_grad_(Vector::Zero(static_cast<Eigen::Index>(dim))),
      beta_grad_(Vector::Zero(static_cast<Eigen::Index>(dim))),
      running_mean_(Vector::Zero(static_cast<Eigen::Index>(dim))),
      running_var_(Vector::Ones(static_cast<Eigen::Index>(dim))),
      momentum_(momentum),
      eps_(eps) {}

Matrix BatchNorm::forward(const Matrix& input, Mode mode) {
  check_cols(input, in_dim(), "BatchNorm");
  const auto n = static_cast<double>(input.rows());
  Vector mean, var;
  if (mode == Mode::Train) {
    mean = input.colwise().mean().transpose();
    var = (input.rowwise() - mean.transpose()).array().square().colwise().sum().transpose() / n;
    const double unbias = n > 1 ? n / (n - 1) : 1.0;
    running_mean_ = (1.0 - momentum_) * running_mean_ + momentum_ * mean;
    running_var_ = (1.0 - momentum_) * running_var_ + momentum_ * unbias * var;
  } else {
    mean = running_mean_;
    var = running_var_;
  }
  inv_std_ = (var.array() + eps_).rsqrt().matrix();
  normalized_ = (input.rowwise() - mean.transpose()).array().rowwise() *
                inv_std_.transpose().array();
  cached_mode_ = mode;
  has_cache_ = true;
  Matrix out = normalized_.array().rowwise() * gamma_.transpose().array();
  out.rowwise() += beta_.transpose();
  return out;
}

Matrix BatchNorm::backward(const Matrix& upstream) {
  require_cache(has_cache_, "BatchNorm");
  check_cols(upstream, out_dim(), "BatchNorm backward");
  gamma_grad_ += (upstream.array() * normalized_.array()).colwise().sum().transpose().matrix();
  beta_grad_ += upstream.colwise().sum().transpose();

  const Matrix dnorm = upstream.array().rowwise() * gamma_.transpose().array();
  if (cached_mode_ == Mode::Eval)
    return dnorm.array().rowwise() * inv_std_.transpose().array();

  // Batch statistics depend on every row of the input.
  const auto n = static_cast<double>(upstream.rows());
  const Eigen::RowVectorXd sum_d = dnorm.colwise().sum();
  const Eigen::RowVectorXd sum_dx = (dnorm.array() * normalized_.array()).colwise().sum();
  Matrix centered = (n * dnorm).rowwise() - sum_d;
  centered -= (normalized_.array().rowwise() * sum_dx.array()).matrix();
  return (centered.array().rowwise() * (inv_std_.transpose().array() / n)).matrix();
}

std::vector<ParamRef> BatchNorm::params() {
  return {{span_of(gamma_), span_of(gamma_grad_), false},
          {span_of(beta_), span_of(beta_grad_), false}};
}

std::vector<std::span<double>> BatchNorm::state() {
  return {span_of(gamma_), span_of(beta_), span_of(running_mean_), span_of(running_var_)};
}

// ---- LeakyRelu ----

Matrix LeakyRelu::forward(const Matrix& input, Mode) {
  check_cols(input, dim_, "LeakyRelu");
  cached_input_ = input;
  has_cache_ = true;
  return input.unaryExpr([s = slope_](double x) { return x > 0.0 ? x : s * x; });
}

Matrix LeakyRelu::backward(const Matrix& upstream) {
  require_cache(has_cache_, "LeakyRelu");
  check_cols(upstream, dim_, "LeakyRelu backward");
  const Matrix local =
      cached_input_.unaryExpr([s = slope_](double x) { return x > 0.0 ? 1.0 : s; });
  return upstream.cwiseProduct(local);
}

// ---- Prelu ----

Prelu::Prelu(std::size_t dim, double init_slope)
    : slopes_(Vector::Constant(static_cast<Eigen::Index>(dim), init_slope)),
      slope_grad_(Vector::Zero(static_cast<Eigen::Index>(dim))) {}

Matrix Prelu::forward(const Matrix& input, Mode) {
  check_cols(input, in_dim(), "Prelu");
  cached_input_ = input;
  has_cache_ = true;
  Matrix out = input;
  for (Eigen::Index c = 0; c < out.cols(); ++c)
    for (Eigen::Index r = 0; r < out.rows(); ++r)
      if (out(r, c) <= 0.0) out(r, c) *= slopes_(c);
  return out;
}

Matrix Prelu::backward(const Matrix& upstream) {
  require_cache(has_cache_, "Prelu");
  check_cols(upstream, out_dim(), "Prelu backward");
  Matrix grad = upstream;
  for (Eigen::Index c = 0; c < grad.cols(); ++c) {
    for (Eigen::Index r = 0; r < grad.rows(); ++r) {
      const double x = cached_input_(r, c);
      if (x <= 0.0) {
        slope_grad_(c) += upstream(r, c) * x;
        grad(r, c) *= slopes_(c);
      }
    }
  }
  return grad;
}

std::vector<ParamRef> Prelu::params() {
  return {{span_of(slopes_), span_of(slope_grad_), true}};
}

std::vector<std::span<double>> Prelu::state() { return {span_of(slopes_)}; }

// ---- Network ----

Network::Network(const Network& other) : mode_(other.mode_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    Network copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Layer& Network::add(std::unique_ptr<Layer> layer) {
  if (!layers_.empty() && layers_.back()->out_dim() != layer->in_dim())
    throw Error(Errc::ShapeMismatch, "layer input " + std::to_string(layer->in_dim()) +
                                         " does not match previous output " +
                                         std::to_string(layers_.back()->out_dim()));
  layers_.push_back(std::move(layer));
  return *layers_.back();
}

Matrix Network::forward(const Matrix& batch) {
  if (layers_.empty()) return batch;
  Matrix x = batch;
  for (auto& l : layers_) x = l->forward(x, mode_);
  return x;
}

Matrix Network::backward(const Matrix& upstream) {
  Matrix g = upstream;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<ParamRef> Network::params() {
  std::vector<ParamRef> all;
  for (auto& l : layers_)
    for (ParamRef& p : l->params()) all.push_back(p);
  return all;
}

void Network::zero_grad() {
  for (auto& l : layers_) l->zero_grad();
}

std::size_t Network::parameter_count() {
  std::size_t n = 0;
  for (const ParamRef& p : params()) n += p.value.size();
  return n;
}

std::size_t Network::in_dim() const { return layers_.empty() ? 0 : layers_.front()->in_dim(); }
std::size_t Network::out_dim() const { return layers_.empty() ? 0 : layers_.back()->out_dim(); }

// ---- Optimizer ----

void sgd_step(std::span<const ParamRef> params, OptimizerState& state) {
  if (state.buffers.empty()) {
    state.buffers.reserve(params.size());
    for (const ParamRef& p : params) state.buffers.emplace_back(p.value.size(), 0.0);
  }
  if (state.buffers.size() != params.size())
    throw Error(Errc::ShapeMismatch, "optimizer state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamRef& p = params[i];
    auto& v = state.buffers[i];
    if (v.size() != p.value.size())
      throw Error(Errc::ShapeMismatch, "momentum buffer shape mismatch");
    const double decay = p.decay ? state.weight_decay : 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      v[j] = state.momentum * v[j] + p.grad[j] + decay * p.value[j];
      p.value[j] -= state.learning_rate * v[j];
    }
  }
}

void sgd_step(Network& net, OptimizerState& state) {
  const auto params = net.params();
  sgd_step(std::span<const ParamRef>(params), state);
}

// ---- Losses ----

LossResult cross_entropy(const Matrix& logits, std::span<const int> labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size())
    throw Error(Errc::ShapeMismatch, "one label per logit row required");
  const auto n = static_cast<double>(logits.rows());
  LossResult out;
  out.grad.resize(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int label = labels[static_cast<std::size_t>(r)];
    if (label < 0 || label >= logits.cols())
      throw Error(Errc::LabelOutOfRange, "label " + std::to_string(label) + " outside [0, " +
                                             std::to_string(logits.cols()) + ")");
    const double mx = logits.row(r).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(r).array() - mx).exp().matrix();
    const double z = e.sum();
    out.loss += std::log(z) - (logits(r, label) - mx);
    out.grad.row(r) = e / z;
    out.grad(r, label) -= 1.0;
  }
  out.loss /= n;
  out.grad /= n;
  return out;
}

LossResult l1_loss(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw Error(Errc::ShapeMismatch, "l1_loss operands differ in shape");
  const auto count = static_cast<double>(pred.size());
  LossResult out;
  const Matrix diff = pred - target;
  out.loss = count > 0 ? diff.cwiseAbs().sum() / count : 0.0;
  out.grad = diff.unaryExpr([count](double d) {
    return d > 0.0 ? 1.0 / count : (d < 0.0 ? -1.0 / count : 0.0);
  });
  return out;
}

}  // namespace edgeret::nn
