#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "edgeret/channel.hpp"
#include "edgeret/dataset.hpp"
#include "edgeret/nn.hpp"
#include "edgeret/retrieval.hpp"

namespace edgeret::jscc {

enum class Activation { LeakyRelu, Prelu };
enum class Strategy { T3, T13, T13L1, T123 };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& name);  // throws BadConfig

// Encoder: feature_dim -> 2B, then (encoder_layers - 1) x (2B -> 2B).
// Decoder: (decoder_layers - 1) x (2B -> 2B), then 2B -> feature_dim.
// Every layer but the last of each side is followed by BN and activation.
struct JsccModelSpec {
  int encoder_layers = 2;
  int decoder_layers = 3;
  Activation activation = Activation::LeakyRelu;
  std::size_t feature_dim = 64;
  std::size_t bandwidth = 16;

  // Layer counts A=(3,3) B=(3,2) C=(3,4) D=(2,3) E=(4,3). Throws BadSpec.
  static JsccModelSpec variant(char name, std::size_t feature_dim, std::size_t bandwidth,
                               Activation activation = Activation::LeakyRelu);
};

// Stand-in for the image backbone: input_dim -> [hidden, BN, LeakyReLU] x n -> feature_dim.
struct FeatureEncoderSpec {
  std::size_t input_dim = 64;
  std::size_t hidden_dim = 128;
  int hidden_layers = 1;
  std::size_t feature_dim = 64;
};

nn::Network build_feature_encoder(const FeatureEncoderSpec& spec, std::mt19937_64& rng);

struct JsccAe {
  nn::Network encoder;
  nn::Network decoder;
};

// Throws BadSpec.
JsccAe build_jscc_ae(const JsccModelSpec& spec, std::uint64_t seed);
nn::Network build_jscc_fc(std::size_t feature_dim, std::size_t bandwidth, std::uint64_t seed);

// Full edge-to-server chain. decoder is empty for the FC variant, in which
// case classifier reads the 2B received reals directly.
struct JsccSystem {
  nn::Network feature_encoder;
  nn::Network pretrain_head;  // feature_dim -> ids, used by feature pretraining
  nn::Network encoder;
  nn::Network decoder;
  nn::Network classifier;  // decoder output -> ids

  bool is_fc() const noexcept { return decoder.empty(); }
  std::size_t bandwidth() const { return encoder.out_dim() / 2; }
  void set_mode(nn::Mode mode);
};

JsccSystem build_ae_system(const FeatureEncoderSpec& fe, const JsccModelSpec& spec, int num_ids,
                           std::uint64_t seed);
JsccSystem build_fc_system(const FeatureEncoderSpec& fe, std::size_t bandwidth, int num_ids,
                           std::uint64_t seed);

// Features -> encoder -> power normalization -> channel -> decoder (AE) or
// the received reals (FC). Row r uses channel seed derive_seed(seed, {r}).
// The receiver never sees the fading gain. Networks run in eval mode.
nn::Matrix jscc_transmit(const nn::Matrix& features, nn::Network& encoder, nn::Network* decoder,
                         const channel::ChannelConfig& cfg, std::uint64_t seed);

struct LrSegment {
  int epochs = 0;
  double learning_rate = 0.0;
};
using Schedule = std::vector<LrSegment>;
int total_epochs(const Schedule& schedule) noexcept;

struct TrainPlan {
  Strategy strategy = Strategy::T123;
  Schedule pretrain_encoder{{10, 0.01}};
  Schedule pretrain_ae{{30, 0.1}, {10, 0.01}};
  Schedule joint{{10, 0.001}, {5, 0.0001}};
  double snr_train_db = 0.0;
  channel::Mode mode = channel::Mode::Awgn;
  double fading_variance = 1.0;
  int batch_size = 16;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double l1_weight = 1.0;  // joint-phase L1 weight for T13L1
  std::uint64_t seed = 1;

  channel::ChannelConfig train_channel() const {
    return {snr_train_db, fading_variance, mode};
  }
};

enum class Phase { PretrainEncoder, PretrainAe, Joint };
std::string to_string(Phase p);

struct EpochRecord {
  Phase phase = Phase::Joint;
  int epoch = 0;  // 1-based within the phase
  double cross_entropy = 0.0;
  double l1 = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> trace;
};

// Runs the phase sequence of plan.strategy. The FC variant has no AE
// pretraining phase. Throws EmptyDataset.
TrainResult train(JsccSystem& system, const TrainPlan& plan, const data::Dataset& train_set);

// Individual phases, for callers that share a pretrained encoder.
std::vector<EpochRecord> pretrain_feature_encoder(JsccSystem& system, const TrainPlan& plan,
                                                  const data::Dataset& train_set);
std::vector<EpochRecord> pretrain_autoencoder(JsccSystem& system, const TrainPlan& plan,
                                              const data::Dataset& train_set);
std::vector<EpochRecord> train_joint(JsccSystem& system, const TrainPlan& plan,
                                     const data::Dataset& train_set, bool with_l1);

// Feature encoder pretrained with a classification head; identical to the
// pretraining step inside train() for the same seeds.
nn::Network pretrained_feature_encoder(const FeatureEncoderSpec& fe, int num_ids,
                                       const TrainPlan& plan, const data::Dataset& train_set,
                                       std::uint64_t init_seed);

// Checkpoint directory with one EJNN file per network.
void save_system(const std::string& dir, JsccSystem& system);
JsccSystem load_system(const std::string& dir);

// Clean receiver-side features for the gallery: encoder features for AE,
// noiseless normalized channel input for FC.
nn::Matrix gallery_features(JsccSystem& system, const nn::Matrix& inputs);
nn::Matrix query_features(JsccSystem& system, const nn::Matrix& inputs,
                          const channel::ChannelConfig& cfg, std::uint64_t seed);

retrieval::Scores evaluate(JsccSystem& system, const data::SplitDataset& data,
                           const channel::ChannelConfig& cfg, std::uint64_t seed,
                           retrieval::EvalOptions opts = {});

}  // namespace edgeret::jscc
