#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace edgeret::nn {

// Batches are row-per-sample.
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Mode { Train, Eval };

enum class LayerKind : std::uint32_t { Dense = 1, BatchNorm = 2, LeakyRelu = 3, Prelu = 4 };

// A trainable tensor and its gradient accumulator. decay marks parameters
// that receive L2 weight decay.
struct ParamRef {
  std::span<double> value;
  std::span<double> grad;
  bool decay = false;
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual std::size_t in_dim() const = 0;
  virtual std::size_t out_dim() const = 0;

  virtual Matrix forward(const Matrix& input, Mode mode) = 0;
  // Accumulates parameter gradients and returns d loss / d input.
  virtual Matrix backward(const Matrix& upstream) = 0;

  virtual std::vector<ParamRef> params() { return {}; }
  // Everything persisted in a checkpoint, in manifest order.
  virtual std::vector<std::span<double>> state() { return {}; }
  virtual std::unique_ptr<Layer> clone() const = 0;

  void zero_grad();
};

class Dense final : public Layer {
 public:
  Dense(std::size_t in, std::size_t out);
  // Uniform(-1/sqrt(in), 1/sqrt(in)) for weights and biases.
  Dense(std::size_t in, std::size_t out, std::mt19937_64& rng);

  LayerKind kind() const override { return LayerKind::Dense; }
  std::size_t in_dim() const override { return static_cast<std::size_t>(weights_.cols()); }
  std::size_t out_dim() const override { return static_cast<std::size_t>(weights_.rows()); }

  Matrix forward(const Matrix& input, Mode mode) override;
  Matrix backward(const Matrix& upstream) override;
  std::vector<ParamRef> params() override;
  std::vector<std::span<double>> state() override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }

  RowMatrix& weights() { return weights_; }
  const RowMatrix& weights() const { return weights_; }
  Vector& bias() { return bias_; }
  const Vector& bias() const { return bias_; }
  const RowMatrix& weight_grad() const { return weight_grad_; }
  const Vector& bias_grad() const { return bias_grad_; }

 private:
  RowMatrix weights_;  // out x in
  Vector bias_;
  RowMatrix weight_grad_;
  Vector bias_grad_;
  Matrix cached_input_;
  bool has_cache_ = false;
};

class BatchNorm final : public Layer {
 public:
  static constexpr double kDefaultMomentum = 0.1;
  static constexpr double kDefaultEps = 1e-5;

  explicit BatchNorm(std::size_t dim, double momentum = kDefaultMomentum,
                     double eps = kDefaultEps);

  LayerKind kind() const override { return LayerKind::BatchNorm; }
  std::size_t in_dim() const override { return static_cast<std::size_t>(gamma_.size()); }
  std::size_t out_dim() const override { return in_dim(); }

  Matrix forward(const Matrix& input, Mode mode) override;
  Matrix backward(const Matrix& upstream) override;
  std::vector<ParamRef> params() override;
  std::vector<std::span<double>> state() override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm>(*this); }

  Vector& gamma() { return gamma_; }
  Vector& beta() { return beta_; }
  const Vector& running_mean() const { return running_mean_; }
  const Vector& running_var() const { return running_var_; }

 private:
  Vector gamma_, beta_;
  Vector gamma_grad_, beta_grad_;
  Vector running_mean_, running_var_;
  double momentum_;
  double eps_;

  Matrix normalized_;
  Vector inv_std_;
  Mode cached_mode_ = Mode::Eval;
  bool has_cache_ = false;
};

class LeakyRelu final : public Layer {
 public:
  static constexpr double kDefaultSlope = 0.01;

  explicit LeakyRelu(std::size_t dim, double slope = kDefaultSlope)
      : dim_(dim), slope_(slope) {}

  LayerKind kind() const override { return LayerKind::LeakyRelu; }
  std::size_t in_dim() const override { return dim_; }
  std::size_t out_dim() const override { return dim_; }

  Matrix forward(const Matrix& input, Mode mode) override;
  Matrix backward(const Matrix& upstream) override;
  std::vector<std::span<double>> state() override { return {std::span<double>(&slope_, 1)}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<LeakyRelu>(*this); }

  const Matrix& cached_input() const { return cached_input_; }

 private:
  std::size_t dim_;
  double slope_;
  Matrix cached_input_;
  bool has_cache_ = false;
};

// Leaky ReLU with a learned slope per feature (initialised to 0.25).
class Prelu final : public Layer {
 public:
  explicit Prelu(std::size_t dim, double init_slope = 0.25);

  LayerKind kind() const override { return LayerKind::Prelu; }
  std::size_t in_dim() const override { return static_cast<std::size_t>(slopes_.size()); }
  std::size_t out_dim() const override { return in_dim(); }

  Matrix forward(const Matrix& input, Mode mode) override;
  Matrix backward(const Matrix& upstream) override;
  std::vector<ParamRef> params() override;
  std::vector<std::span<double>> state() override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Prelu>(*this); }

  Vector& slopes() { return slopes_; }
  const Vector& slope_grad() const { return slope_grad_; }
  const Matrix& cached_input() const { return cached_input_; }

 private:
  Vector slopes_;
  Vector slope_grad_;
  Matrix cached_input_;
  bool has_cache_ = false;
};

// Ordered layer sequence with value semantics (copies are deep).
class Network {
 public:
  Network() = default;
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  // Throws ShapeMismatch if the layer does not fit the current output.
  Layer& add(std::unique_ptr<Layer> layer);
  template <typename L, typename... Args>
  L& emplace(Args&&... args) {
    return static_cast<L&>(add(std::make_unique<L>(std::forward<Args>(args)...)));
  }

  Matrix forward(const Matrix& batch);
  Matrix backward(const Matrix& upstream);

  void set_mode(Mode mode) noexcept { mode_ = mode; }
  Mode mode() const noexcept { return mode_; }

  std::vector<ParamRef> params();
  void zero_grad();
  std::size_t parameter_count();

  bool empty() const noexcept { return layers_.empty(); }
  std::size_t size() const noexcept { return layers_.size(); }
  std::size_t in_dim() const;
  std::size_t out_dim() const;
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
  Mode mode_ = Mode::Train;
};

struct OptimizerState {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<std::vector<double>> buffers;
};

// v <- momentum * v + grad + decay * param;  param <- param - lr * v.
// Buffers are created on first use and must keep matching params after.
void sgd_step(std::span<const ParamRef> params, OptimizerState& state);
void sgd_step(Network& net, OptimizerState& state);

struct LossResult {
  double loss = 0.0;
  Matrix grad;
};

// Mean softmax cross-entropy. Throws LabelOutOfRange.
LossResult cross_entropy(const Matrix& logits, std::span<const int> labels);

// Mean absolute deviation over all entries. Throws ShapeMismatch.
LossResult l1_loss(const Matrix& pred, const Matrix& target);

// Checkpoint: "EJNN", u32 version, u32 layer count, per layer u32 kind,
// u32 in, u32 out, then every layer's state as little-endian f64.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_network(std::ostream& out, Network& net);
Network load_network(std::istream& in);
void save_network(const std::string& path, Network& net);
Network load_network(const std::string& path);

}  // namespace edgeret::nn
