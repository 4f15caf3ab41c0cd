#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "edgeret/config.hpp"
#include "edgeret/dataset.hpp"
#include "edgeret/digital.hpp"

namespace edgeret::experiment {

// Sweep trains missing checkpoints and evaluates; Train only fills the
// checkpoint cache; Eval requires cached checkpoints.
enum class RunMode { Sweep, Train, Eval };

struct ResultRow {
  std::string scheme;
  double snr_train = 0.0;  // NaN for digital, which is trained without a channel
  double snr_test = 0.0;
  std::size_t bandwidth = 0;
  std::uint64_t seed = 0;
  double top1 = 0.0;
  double top5 = 0.0;
  double map = 0.0;
  double mean_bits = 0.0;  // NaN unless digital
  std::string status = "ok";

  bool ok() const { return status == "ok"; }
};

struct RatePointRow {
  std::uint64_t seed = 0;
  std::size_t bandwidth = 0;
  digital::RatePoint point;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<RatePointRow> rate_points;
  std::size_t checkpoints_trained = 0;
  std::size_t checkpoints_reused = 0;
};

std::uint64_t fnv1a(std::string_view bytes) noexcept;

// Synthetic or file-backed dataset; a file is split with data.seed.
data::SplitDataset load_dataset(const config::ExperimentConfig& cfg);

// Runs the grid in order bandwidth, snr_train, seed, snr_test (digital
// skips snr_train). Per-point failures are recorded in the row status.
// Writes results.csv, summary.txt and, for digital, rate_points.csv under
// cfg.out_dir, unless mode is Train. Throws BadConfig for invalid configs.
ExperimentResult run_experiment(const config::ExperimentConfig& cfg, RunMode mode = RunMode::Sweep,
                                std::ostream* log = nullptr);

std::string results_csv(const ExperimentResult& result);
std::string rate_points_csv(const ExperimentResult& result);
std::string summary_text(const config::ExperimentConfig& cfg, const ExperimentResult& result);

}  // namespace edgeret::experiment
