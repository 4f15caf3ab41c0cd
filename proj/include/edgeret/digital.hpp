#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "edgeret/arith_coder.hpp"
#include "edgeret/dataset.hpp"
#include "edgeret/entropy_model.hpp"
#include "edgeret/nn.hpp"
#include "edgeret/retrieval.hpp"

namespace edgeret::digital {

// Learned lossy feature compressor. feature_encoder may be empty, in which
// case inputs are already features.
struct DigitalCompressor {
  nn::Network feature_encoder;
  nn::Network reducer;     // feature_dim -> latent_dim, single dense layer
  nn::Network classifier;  // latent_dim -> ids, training loss only
  entropy::GmmParams gmm;
  double lambda_max = 0.0;
  ac::Support support{};

  std::size_t latent_dim() const { return reducer.out_dim(); }
  void set_mode(nn::Mode mode);
};

// Checkpoint directory: EJNN files for the networks plus gmm.bin holding
// u32 K, then the 3K flattened mixture parameters, f64 little-endian.
void save_compressor(const std::string& dir, DigitalCompressor& compressor);
DigitalCompressor load_compressor(const std::string& dir);

// Throws BadSpec when latent_dim > feature_dim or sizes are zero.
DigitalCompressor build_compressor(nn::Network feature_encoder, std::size_t feature_dim,
                                   std::size_t latent_dim, int num_ids, double lambda_max,
                                   int mixture_components, std::uint64_t seed);

struct DigitalTrainConfig {
  int epochs = 50;  // must exceed 20
  double learning_rate = 0.01;
  double late_learning_rate = 0.001;
  int late_from_epoch = 21;  // first epoch at the late rate
  double gmm_learning_rate = 0.01;
  int batch_size = 16;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 1;
};

struct DigitalEpoch {
  int epoch = 0;
  double lambda = 0.0;
  double cross_entropy = 0.0;
  double rate_bits = 0.0;  // mean bits per vector under the noisy proxy
};

// Minimizes CE + lambda_i * bits with additive uniform quantization noise.
// Throws BadSchedule for epochs <= 20, EmptyDataset for no data.
std::vector<DigitalEpoch> train_digital(DigitalCompressor& compressor,
                                        const data::Dataset& train_set,
                                        const DigitalTrainConfig& cfg);

struct Compressed {
  entropy::QuantizedVector symbols;
  ac::Bitstream bits;
};

nn::Matrix latents(DigitalCompressor& compressor, const nn::Matrix& inputs);
Compressed compress(DigitalCompressor& compressor, std::span<const double> input);

// Complex AWGN capacity B log2(1 + snr) in bits per query.
double capacity_bits(double snr_db, std::size_t bandwidth);
// Inverse of capacity_bits; -inf for zero bits.
double min_snr_for_bits(double bits, std::size_t bandwidth);

struct RatePoint {
  double lambda = 0.0;
  double mean_bits = 0.0;
  double snr_db_equivalent = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
  double map = 0.0;
};

// Noiseless per-query results of one compressor: coded length and the
// retrieval outcome against a gallery of quantized latents.
struct QueryTable {
  std::vector<double> bits;
  std::vector<retrieval::QueryOutcome> outcomes;
  double mean_bits = 0.0;
  retrieval::Scores scores;
};

// Every query is compressed, arithmetic coded, decoded and matched.
QueryTable evaluate_queries(DigitalCompressor& compressor, const data::SplitDataset& data,
                            retrieval::EvalOptions opts = {});

RatePoint rate_point(const QueryTable& table, double lambda, std::size_t bandwidth);

// Static channel with capacity-achieving codes: the best-accuracy member
// whose mean rate is deliverable at snr_db. All zero if none is.
struct StaticChoice {
  int member = -1;
  retrieval::Scores scores;
  double mean_bits = 0.0;
};
StaticChoice best_static(std::span<const RatePoint> family, double snr_db);

struct FadingResult {
  double success_fraction = 0.0;
  double top1 = 0.0;  // failures count as misses
  double top5 = 0.0;
  double map = 0.0;
};

// Rayleigh slow fading with transmitter CSI: per trial, the lowest-lambda
// member whose coded query fits the instantaneous capacity is used.
// tables must be ordered by ascending lambda. Throws EmptyFamily.
FadingResult eval_fading_csi(std::span<const QueryTable> tables, std::size_t bandwidth,
                             double avg_snr_db, std::size_t n_trials, std::uint64_t seed,
                             double fading_variance = 1.0);

// Fixed lambda: success fraction times accuracy among successful queries.
FadingResult eval_fading_outage(const QueryTable& table, std::size_t bandwidth,
                                double avg_snr_db, std::size_t n_trials, std::uint64_t seed,
                                double fading_variance = 1.0);

// Analytic Rayleigh outage probability for a fixed rate: 1 - exp(-t) with
// t = (2^(bits/B) - 1) / snr. Independent of H_c at a given average SNR.
double rayleigh_outage_probability(double bits, std::size_t bandwidth, double avg_snr_db);

}  // namespace edgeret::digital
