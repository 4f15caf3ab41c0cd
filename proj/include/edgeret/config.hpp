#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "edgeret/channel.hpp"
#include "edgeret/dataset.hpp"
#include "edgeret/digital.hpp"
#include "edgeret/jscc.hpp"
#include "edgeret/retrieval.hpp"

namespace edgeret::config {

enum class Scheme { JsccAe, JsccFc, Digital };
enum class FadingProtocol { Outage, Csi };

std::string to_string(Scheme s);
Scheme parse_scheme(const std::string& name);  // throws BadConfig

struct ExperimentConfig {
  Scheme scheme = Scheme::JsccAe;

  // Dataset: synthetic unless data_path is set.
  std::string data_path;
  data::SyntheticSpec synthetic{100, 10, 64, 1.2, 1};

  // Models.
  char variant = 'D';
  jscc::Activation activation = jscc::Activation::LeakyRelu;
  std::size_t feature_dim = 64;
  std::size_t hidden_dim = 128;
  int hidden_layers = 1;

  jscc::TrainPlan plan;  // snr_train_db, mode, fading_variance and seed are set per grid point

  // Digital baseline.
  std::size_t latent_dim = 16;
  std::vector<double> lambdas{0.005, 0.01, 0.02, 0.05, 0.1, 0.2};
  int mixture_components = 9;
  digital::DigitalTrainConfig digital_train;
  // Outage reports the best fixed member per SNR; CSI adapts per trial.
  FadingProtocol fading_protocol = FadingProtocol::Outage;
  std::size_t fading_trials = 2000;

  // Channel grid. An empty snr_test evaluates each point at its snr_train.
  channel::Mode mode = channel::Mode::Awgn;
  double fading_variance = 1.0;
  std::vector<double> snr_train{0.0};
  std::vector<double> snr_test;
  std::vector<std::size_t> bandwidths{8, 16, 32};

  retrieval::Metric metric = retrieval::Metric::L2;
  bool exclude_self = false;

  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string out_dir = "out";

  // Throws BadConfig on empty grids or out-of-range values.
  void validate() const;
};

// Applies one dotted key; throws BadConfig for unknown keys or bad values.
void apply(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// Flat "key=value" lines; '#' starts a comment. Throws BadConfig / Io.
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {});

// Every result-affecting field as sorted key=value lines.
std::map<std::string, std::string> canonical(const ExperimentConfig& cfg);

// Value parsers shared with the CLI. Throw BadConfig.
double parse_snr(const std::string& text);  // accepts "inf"
std::vector<double> parse_snr_list(const std::string& text);
jscc::Schedule parse_schedule(const std::string& text);  // "30@0.1,10@0.01"
std::string format_real(double v);  // shortest roundtrip form, "inf" for infinity

}  // namespace edgeret::config
