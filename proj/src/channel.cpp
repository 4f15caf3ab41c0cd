#include "edgeret/channel.hpp"

#include <cmath>
#include <random>

#include "edgeret/error.hpp"

namespace edgeret::channel {

double ChannelInput::average_power() const noexcept {
  if (symbols.empty()) return 0.0;
  double sum = 0.0;
  for (const Complex& s : symbols) sum += std::norm(s);
  return sum / static_cast<double>(symbols.size());
}

std::vector<Complex> pack(std::span<const double> reals) {
  if (reals.size() % 2 != 0)
    throw Error(Errc::OddLength, "real vector length " +
                                     std::to_string(reals.size()) +
                                     " cannot be packed into complex symbols");
  std::vector<Complex> out(reals.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = Complex(reals[2 * i], reals[2 * i + 1]);
  return out;
}

std::vector<double> unpack(std::span<const Complex> symbols) {
  std::vector<double> out(symbols.size() * 2);
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    out[2 * i] = symbols[i].real();
    out[2 * i + 1] = symbols[i].imag();
  }
  return out;
}

namespace {

double sum_of_squares(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

ChannelInput normalize_power(std::span<const double> raw) {
  if (raw.size() % 2 != 0 || raw.empty())
    throw Error(Errc::OddLength,
                "normalize_power needs an even, nonzero length; got " +
                    std::to_string(raw.size()));
  const double energy = sum_of_squares(raw);
  if (!(energy >= 1e-30))
    throw Error(Errc::ZeroVector, "cannot normalize an all-zero vector");
  const double bandwidth = static_cast<double>(raw.size() / 2);
  const double scale = std::sqrt(bandwidth / energy);
  ChannelInput in;
  in.symbols.resize(raw.size() / 2);
  for (std::size_t i = 0; i < in.symbols.size(); ++i)
    in.symbols[i] = Complex(raw[2 * i] * scale, raw[2 * i + 1] * scale);
  return in;
}

std::vector<double> normalize_power_backward(std::span<const double> raw,
                                             std::span<const double> upstream) {
  if (raw.size() != upstream.size())
    throw Error(Errc::ShapeMismatch, "normalize_power_backward size mismatch");
  const double energy = sum_of_squares(raw);
  if (!(energy >= 1e-30))
    throw Error(Errc::ZeroVector, "cannot differentiate at the zero vector");
  const double bandwidth = static_cast<double>(raw.size() / 2);
  const double scale = std::sqrt(bandwidth / energy);
  double dot = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) dot += upstream[i] * raw[i];
  std::vector<double> grad(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    grad[i] = scale * (upstream[i] - raw[i] * dot / energy);
  return grad;
}

double snr_to_noise_var(double snr_db) noexcept {
  if (std::isinf(snr_db) && snr_db > 0) return 0.0;
  return std::pow(10.0, -snr_db / 10.0);
}

double noise_variance(const ChannelConfig& cfg) noexcept {
  const double base = snr_to_noise_var(cfg.snr_db);
  return cfg.mode == Mode::SlowFading ? base * cfg.fading_variance : base;
}

ChannelRealization transmit(const ChannelInput& input, const ChannelConfig& cfg,
                            std::uint64_t rng_seed) {
  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  ChannelRealization out;
  out.noise_seed = rng_seed;
  if (cfg.mode == Mode::SlowFading) {
    const double sd = std::sqrt(cfg.fading_variance / 2.0);
    const double re = normal(rng) * sd;
    const double im = normal(rng) * sd;
    out.gain = Complex(re, im);
  }

  const double noise_sd = std::sqrt(noise_variance(cfg) / 2.0);
  out.output.resize(input.symbols.size());
  for (std::size_t i = 0; i < input.symbols.size(); ++i) {
    Complex y = out.gain * input.symbols[i];
    if (noise_sd > 0.0) {
      const double zr = normal(rng) * noise_sd;
      const double zi = normal(rng) * noise_sd;
      y += Complex(zr, zi);
    }
    out.output[i] = y;
  }
  return out;
}

}  // namespace edgeret::channel
