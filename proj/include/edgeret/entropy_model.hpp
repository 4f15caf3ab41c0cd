#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace edgeret::entropy {

// Lower clamp on symbol probabilities used for codelengths and the rate loss.
inline constexpr double kProbFloor = 1.0 / 65536.0;

// Gaussian mixture over the real line in unconstrained form:
// alpha = softmax(weight_logits), sigma = softplus(scale_logits).
struct GmmParams {
  std::vector<double> weight_logits;
  std::vector<double> means;
  std::vector<double> scale_logits;

  std::size_t k() const noexcept { return means.size(); }
  std::vector<double> weights() const;
  std::vector<double> scales() const;
  double max_scale() const;
  double max_abs_mean() const;

  // Flat 3K layout: weight_logits, means, scale_logits.
  std::vector<double> flatten() const;
  static GmmParams unflatten(std::span<const double> flat);
};

// Same layout as GmmParams, holding d(loss)/d(logit or mean).
struct GmmGrad {
  std::vector<double> weight_logits;
  std::vector<double> means;
  std::vector<double> scale_logits;

  explicit GmmGrad(std::size_t k = 0)
      : weight_logits(k, 0.0), means(k, 0.0), scale_logits(k, 0.0) {}
  void add(const GmmGrad& other, double scale = 1.0);
};

struct QuantizedVector {
  std::vector<std::int32_t> symbols;
  std::size_t dim() const noexcept { return symbols.size(); }
  bool operator==(const QuantizedVector&) const = default;
};

double softplus(double x) noexcept;
double softplus_inverse(double y);

// Training-time quantization proxy: latent + U(-1/2, 1/2).
std::vector<double> quantize_train(std::span<const double> latent,
                                   std::uint64_t rng_seed);

// Round to nearest, halves away from zero.
QuantizedVector quantize_infer(std::span<const double> latent);

double gmm_pdf(double x, const GmmParams& params);
double gmm_cdf(double x, const GmmParams& params);

// Mass of the unit bin centred on q. Accepts non-integer q for the
// training-time rate term; computed from the tail nearer the bin so
// far-tail bins keep their relative precision. Never below DBL_MIN.
double gmm_pmf(double q, const GmmParams& params);

// -sum log2 max(pmf(q_i), kProbFloor).
double entropy_bits(const QuantizedVector& q, const GmmParams& params);

struct RateEval {
  double bits = 0.0;
  std::vector<double> d_values;  // d bits / d value_i
  GmmGrad d_params;
};

// Rate term over (possibly noisy, real-valued) symbols with analytic
// gradients. Clamped entries contribute constant bits and zero gradient.
RateEval rate_bits(std::span<const double> values, const GmmParams& params);

// alpha = 1/K, mu = 0, sigma_k = k^2. Throws InvalidK.
GmmParams init_params(int k);

// min(lambda_max * epoch / (total_epochs - 20), lambda_max); epoch is 1-based.
// Throws BadSchedule when total_epochs <= 20 or epoch is out of range.
double lambda_at_epoch(double lambda_max, int epoch, int total_epochs);

}  // namespace edgeret::entropy
