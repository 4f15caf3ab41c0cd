#pragma once

#include <complex>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace edgeret::channel {

using Complex = std::complex<double>;

inline constexpr double kInfiniteSnr = std::numeric_limits<double>::infinity();

enum class Mode { Awgn, SlowFading };

// B complex channel uses; average power 1 after normalize_power.
struct ChannelInput {
  std::vector<Complex> symbols;

  std::size_t bandwidth() const noexcept { return symbols.size(); }
  double average_power() const noexcept;
};

struct ChannelConfig {
  double snr_db = 0.0;
  double fading_variance = 1.0;  // H_c
  Mode mode = Mode::Awgn;
};

struct ChannelRealization {
  std::vector<Complex> output;
  Complex gain{1.0, 0.0};
  std::uint64_t noise_seed = 0;
};

// Packs consecutive real pairs (x_2i, x_2i+1) into complex symbols and
// scales them to unit average power. Throws OddLength or ZeroVector.
ChannelInput normalize_power(std::span<const double> raw);

// Gradient of a loss w.r.t. the raw reals, given the gradient w.r.t. the
// normalized reals (same packing).
std::vector<double> normalize_power_backward(std::span<const double> raw,
                                             std::span<const double> upstream);

// sigma^2 = 10^(-snr_db/10); 0 for +inf.
double snr_to_noise_var(double snr_db) noexcept;

// Total complex noise variance for a config: fading mode scales by H_c so
// that the average received SNR is snr_db.
double noise_variance(const ChannelConfig& cfg) noexcept;

// y = h x + z. h = 1 for AWGN, one draw of CN(0, H_c) per call otherwise.
ChannelRealization transmit(const ChannelInput& input, const ChannelConfig& cfg,
                            std::uint64_t rng_seed);

std::vector<Complex> pack(std::span<const double> reals);
std::vector<double> unpack(std::span<const Complex> symbols);

}  // namespace edgeret::channel
