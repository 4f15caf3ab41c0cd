#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "edgeret/config.hpp"
#include "edgeret/dataset.hpp"
#include "edgeret/error.hpp"
#include "edgeret/experiment.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::string scheme, snr_train, snr_test, bandwidth, strategy, seeds, out, metric;
  std::vector<std::string> sets;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "Config file (key=value lines)")->check(CLI::ExistingFile);
  cmd->add_option("--scheme", o.scheme, "jscc_ae | jscc_fc | digital");
  cmd->add_option("--snr-train", o.snr_train, "Training SNR list in dB, comma separated");
  cmd->add_option("--snr-test-grid", o.snr_test, "Test SNR list in dB, comma separated");
  cmd->add_option("--bandwidth", o.bandwidth, "Bandwidth list B, comma separated");
  cmd->add_option("--strategy", o.strategy, "T3 | T13 | T13_L1 | T123");
  cmd->add_option("--seed", o.seeds, "Seed list, comma separated");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--metric", o.metric, "l2 | cosine");
  cmd->add_option("--set", o.sets, "Extra key=value override, repeatable");
  cmd->add_flag("--quiet", o.quiet, "Suppress progress output");
}

edgeret::config::ExperimentConfig resolve(const Overrides& o) {
  using namespace edgeret::config;
  ExperimentConfig cfg = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
  const std::pair<const char*, const std::string*> flags[] = {
      {"scheme", &o.scheme},          {"channel.snr_train", &o.snr_train},
      {"channel.snr_test", &o.snr_test}, {"channel.bandwidth", &o.bandwidth},
      {"train.strategy", &o.strategy}, {"seeds", &o.seeds},
      {"out", &o.out},                {"eval.metric", &o.metric}};
  for (const auto& [key, value] : flags)
    if (!value->empty()) apply(cfg, key, *value);
  for (const std::string& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw edgeret::Error(edgeret::Errc::BadConfig, "--set expects key=value, got '" + kv + "'");
    apply(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

int run(const Overrides& o, edgeret::experiment::RunMode mode) {
  const auto cfg = resolve(o);
  const auto result = edgeret::experiment::run_experiment(cfg, mode, o.quiet ? nullptr : &std::cerr);
  std::size_t failed = 0;
  for (const auto& row : result.rows) failed += row.ok() ? 0 : 1;
  std::cerr << "checkpoints trained=" << result.checkpoints_trained
            << " reused=" << result.checkpoints_reused;
  if (mode != edgeret::experiment::RunMode::Train)
    std::cerr << " rows=" << result.rows.size() << " failed=" << failed << " -> " << cfg.out_dir
              << "/results.csv";
  std::cerr << '\n';
  return failed == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Edge feature transmission and retrieval experiments"};
  app.require_subcommand(1);

  Overrides gen_opts, train_opts, eval_opts, sweep_opts;
  auto* gen = app.add_subcommand("gen-data", "Write the synthetic dataset as a feature file");
  add_common(gen, gen_opts);
  auto* train = app.add_subcommand("train", "Train and cache checkpoints for every grid point");
  add_common(train, train_opts);
  auto* eval = app.add_subcommand("eval", "Evaluate cached checkpoints over the grid");
  add_common(eval, eval_opts);
  auto* sweep = app.add_subcommand("sweep", "Train where needed, then evaluate the grid");
  add_common(sweep, sweep_opts);

  CLI11_PARSE(app, argc, argv);

  using edgeret::experiment::RunMode;
  try {
    if (*gen) {
      const auto cfg = resolve(gen_opts);
      cfg.validate();
      const auto split = edgeret::data::generate_synthetic(cfg.synthetic);
      edgeret::data::Dataset all;
      const auto rows = split.train.features.rows() + split.query.features.rows() +
                        split.gallery.features.rows();
      all.features.resize(rows, split.train.features.cols());
      all.features << split.train.features, split.query.features, split.gallery.features;
      for (const auto* part : {&split.train, &split.query, &split.gallery})
        all.labels.insert(all.labels.end(), part->labels.begin(), part->labels.end());
      std::filesystem::create_directories(cfg.out_dir);
      const std::string path = cfg.out_dir + "/features.txt";
      edgeret::data::save_features(path, all);
      std::cerr << "wrote " << all.size() << " samples to " << path << '\n';
      return 0;
    }
    if (*train) return run(train_opts, RunMode::Train);
    if (*eval) return run(eval_opts, RunMode::Eval);
    return run(sweep_opts, RunMode::Sweep);
  } catch (const edgeret::Error& e) {
    std::cerr << "error [" << edgeret::errc_name(e.code()) << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
