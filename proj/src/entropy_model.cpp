#include "edgeret/entropy_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "edgeret/error.hpp"

namespace edgeret::entropy {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }

// Phi(b) - Phi(a) for a <= b, evaluated on the side with less cancellation.
double normal_interval(double a, double b) {
  if (a > 0.0) return 0.5 * (std::erfc(a * kInvSqrt2) - std::erfc(b * kInvSqrt2));
  return 0.5 * (std::erfc(-b * kInvSqrt2) - std::erfc(-a * kInvSqrt2));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double softplus(double x) noexcept {
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw Error(Errc::BadSpec, "softplus_inverse needs y > 0");
  if (y > 30.0) return y + std::log(-std::expm1(-y));
  return std::log(std::expm1(y));
}

std::vector<double> GmmParams::weights() const {
  std::vector<double> w(weight_logits.size());
  if (w.empty()) return w;
  const double mx = *std::max_element(weight_logits.begin(), weight_logits.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    w[k] = std::exp(weight_logits[k] - mx);
    sum += w[k];
  }
  for (double& v : w) v /= sum;
  return w;
}

std::vector<double> GmmParams::scales() const {
  std::vector<double> s(scale_logits.size());
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = softplus(scale_logits[k]);
  return s;
}

double GmmParams::max_scale() const {
  const auto s = scales();
  return s.empty() ? 0.0 : *std::max_element(s.begin(), s.end());
}

double GmmParams::max_abs_mean() const {
  double m = 0.0;
  for (double mu : means) m = std::max(m, std::abs(mu));
  return m;
}

std::vector<double> GmmParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(3 * k());
  flat.insert(flat.end(), weight_logits.begin(), weight_logits.end());
  flat.insert(flat.end(), means.begin(), means.end());
  flat.insert(flat.end(), scale_logits.begin(), scale_logits.end());
  return flat;
}

GmmParams GmmParams::unflatten(std::span<const double> flat) {
  if (flat.empty() || flat.size() % 3 != 0)
    throw Error(Errc::InvalidK, "flat GMM parameter list must hold 3K reals, got " +
                                    std::to_string(flat.size()));
  const std::size_t k = flat.size() / 3;
  GmmParams p;
  p.weight_logits.assign(flat.begin(), flat.begin() + k);
  p.means.assign(flat.begin() + k, flat.begin() + 2 * k);
  p.scale_logits.assign(flat.begin() + 2 * k, flat.end());
  return p;
}

void GmmGrad::add(const GmmGrad& other, double scale) {
  for (std::size_t k = 0; k < means.size(); ++k) {
    weight_logits[k] += scale * other.weight_logits[k];
    means[k] += scale * other.means[k];
    scale_logits[k] += scale * other.scale_logits[k];
  }
}

std::vector<double> quantize_train(std::span<const double> latent,
                                   std::uint64_t rng_seed) {
  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> noise(-0.5, 0.5);
  std::vector<double> out(latent.begin(), latent.end());
  for (double& v : out) v += noise(rng);
  return out;
}

QuantizedVector quantize_infer(std::span<const double> latent) {
  QuantizedVector q;
  q.symbols.resize(latent.size());
  for (std::size_t i = 0; i < latent.size(); ++i)
    q.symbols[i] = static_cast<std::int32_t>(
        std::clamp(std::round(latent[i]), -2147483648.0, 2147483647.0));
  return q;
}

double gmm_pdf(double x, const GmmParams& params) {
  const auto w = params.weights();
  const auto s = params.scales();
  double p = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k)
    p += w[k] * normal_pdf((x - params.means[k]) / s[k]) / s[k];
  return p;
}

double gmm_cdf(double x, const GmmParams& params) {
  const auto w = params.weights();
  const auto s = params.scales();
  double c = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k)
    c += w[k] * normal_cdf((x - params.means[k]) / s[k]);
  return c;
}

double gmm_pmf(double q, const GmmParams& params) {
  const auto w = params.weights();
  const auto s = params.scales();
  double p = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double lo = (q - 0.5 - params.means[k]) / s[k];
    const double hi = (q + 0.5 - params.means[k]) / s[k];
    p += w[k] * normal_interval(lo, hi);
  }
  // Keep bins past double underflow strictly positive.
  return std::max(p, std::numeric_limits<double>::min());
}

double entropy_bits(const QuantizedVector& q, const GmmParams& params) {
  double bits = 0.0;
  for (std::int32_t sym : q.symbols)
    bits -= std::log2(std::max(gmm_pmf(sym, params), kProbFloor));
  return bits;
}

RateEval rate_bits(std::span<const double> values, const GmmParams& params) {
  const std::size_t k_count = params.k();
  const auto w = params.weights();
  const auto s = params.scales();
  std::vector<double> dsigma_dlogit(k_count);
  for (std::size_t k = 0; k < k_count; ++k)
    dsigma_dlogit[k] = sigmoid(params.scale_logits[k]);

  RateEval out;
  out.d_values.assign(values.size(), 0.0);
  out.d_params = GmmGrad(k_count);

  std::vector<double> mass(k_count), dmu(k_count), dsig(k_count);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    double p = 0.0;
    double dv = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) {
      const double lo = (v - 0.5 - params.means[k]) / s[k];
      const double hi = (v + 0.5 - params.means[k]) / s[k];
      const double phi_lo = normal_pdf(lo);
      const double phi_hi = normal_pdf(hi);
      mass[k] = normal_interval(lo, hi);
      p += w[k] * mass[k];
      // d mass / d v = (phi(hi) - phi(lo)) / sigma; d/d mu is its negative.
      dmu[k] = (phi_lo - phi_hi) / s[k];
      dsig[k] = (phi_lo * lo - phi_hi * hi) / s[k];
      dv -= w[k] * dmu[k];
    }
    if (p < kProbFloor) {
      out.bits -= std::log2(kProbFloor);
      continue;
    }
    out.bits -= std::log2(p);
    // d bits / d p
    const double g = -1.0 / (p * std::numbers::ln2);
    out.d_values[i] = g * dv;
    for (std::size_t k = 0; k < k_count; ++k) {
      out.d_params.weight_logits[k] += g * w[k] * (mass[k] - p);
      out.d_params.means[k] += g * w[k] * dmu[k];
      out.d_params.scale_logits[k] += g * w[k] * dsig[k] * dsigma_dlogit[k];
    }
  }
  return out;
}

GmmParams init_params(int k) {
  if (k < 1) throw Error(Errc::InvalidK, "K must be >= 1, got " + std::to_string(k));
  GmmParams p;
  p.weight_logits.assign(static_cast<std::size_t>(k), 0.0);
  p.means.assign(static_cast<std::size_t>(k), 0.0);
  p.scale_logits.resize(static_cast<std::size_t>(k));
  for (int i = 1; i <= k; ++i)
    p.scale_logits[static_cast<std::size_t>(i - 1)] =
        softplus_inverse(static_cast<double>(i) * static_cast<double>(i));
  return p;
}

double lambda_at_epoch(double lambda_max, int epoch, int total_epochs) {
  if (total_epochs <= 20)
    throw Error(Errc::BadSchedule, "total epochs must exceed 20, got " +
                                       std::to_string(total_epochs));
  if (epoch < 1 || epoch > total_epochs)
    throw Error(Errc::BadSchedule, "epoch " + std::to_string(epoch) +
                                       " outside 1.." + std::to_string(total_epochs));
  const double ramp = lambda_max * static_cast<double>(epoch) /
                      static_cast<double>(total_epochs - 20);
  return std::min(ramp, lambda_max);
}

}  // namespace edgeret::entropy
