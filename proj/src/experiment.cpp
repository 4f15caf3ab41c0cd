#include "edgeret/experiment.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "edgeret/error.hpp"
#include "edgeret/jscc.hpp"
#include "edgeret/seed.hpp"

namespace edgeret::experiment {

namespace fs = std::filesystem;
using config::ExperimentConfig;
using config::Scheme;

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr const char* kCompleteMarker = "complete";

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(Errc::Io, "cannot write '" + path.string() + "'");
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fixed(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string snr_text(double v) { return std::isnan(v) ? "" : config::format_real(v); }

// Keys that do not influence the trained networks of a grid point.
const char* const kGridKeys[] = {"channel.snr_train", "channel.snr_test", "channel.bandwidth",
                                 "seeds", "eval.metric", "eval.exclude_self",
                                 "digital.fading_protocol",
                                 "digital.trials"};

std::map<std::string, std::string> training_keys(const ExperimentConfig& cfg,
                                                 const std::string& data_digest) {
  auto m = config::canonical(cfg);
  for (const char* k : kGridKeys) m.erase(k);
  if (!cfg.data_path.empty()) m["data.content_fnv1a"] = data_digest;
  if (cfg.scheme == Scheme::Digital) {
    for (const char* k : {"train.strategy", "train.ae_schedule", "train.joint_schedule",
                          "train.l1_weight", "model.variant", "model.activation", "channel.mode",
                          "channel.fading_variance", "digital.lambdas"})
      m.erase(k);
  } else {
    for (auto it = m.begin(); it != m.end();)
      it = it->first.rfind("digital.", 0) == 0 ? m.erase(it) : std::next(it);
    if (cfg.scheme == Scheme::JsccFc) {
      m.erase("model.variant");
      m.erase("model.activation");
      m.erase("train.ae_schedule");
    }
  }
  return m;
}

struct Checkpoint {
  fs::path dir;
  std::string key_text;
  bool cached() const { return fs::exists(dir / kCompleteMarker); }
  void mark_complete() const {
    write_file(dir / "config.txt", key_text);
    write_file(dir / kCompleteMarker, "");
  }
};

Checkpoint checkpoint_for(const ExperimentConfig& cfg, std::map<std::string, std::string> keys) {
  std::string text;
  for (const auto& [k, v] : keys) text += k + "=" + v + "\n";
  return {fs::path(cfg.out_dir) / "ckpt" / hex64(fnv1a(text)), text};
}

jscc::FeatureEncoderSpec feature_spec(const ExperimentConfig& cfg, std::size_t input_dim) {
  return {input_dim, cfg.hidden_dim, cfg.hidden_layers, cfg.feature_dim};
}

jscc::TrainPlan plan_for(const ExperimentConfig& cfg, double snr_train, std::uint64_t seed) {
  jscc::TrainPlan plan = cfg.plan;
  plan.snr_train_db = snr_train;
  plan.mode = cfg.mode;
  plan.fading_variance = cfg.fading_variance;
  plan.seed = seed;
  return plan;
}

std::string trace_csv(const std::vector<jscc::EpochRecord>& trace) {
  std::string out = "phase,epoch,cross_entropy,l1\n";
  for (const auto& r : trace)
    out += jscc::to_string(r.phase) + "," + std::to_string(r.epoch) + "," + fixed(r.cross_entropy) +
           "," + fixed(r.l1) + "\n";
  return out;
}

std::string trace_csv(const std::vector<digital::DigitalEpoch>& trace) {
  std::string out = "epoch,lambda,cross_entropy,rate_bits\n";
  for (const auto& r : trace)
    out += std::to_string(r.epoch) + "," + config::format_real(r.lambda) + "," +
           fixed(r.cross_entropy) + "," + fixed(r.rate_bits) + "\n";
  return out;
}

class Runner {
 public:
  Runner(const ExperimentConfig& cfg, RunMode mode, std::ostream* log)
      : cfg_(cfg), mode_(mode), log_(log) {}

  ExperimentResult run() {
    data_ = load_dataset(cfg_);
    if (!cfg_.data_path.empty()) data_digest_ = hex64(fnv1a(read_file(cfg_.data_path)));
    if (cfg_.scheme == Scheme::Digital)
      run_digital();
    else
      run_jscc();
    return std::move(result_);
  }

 private:
  void note(const std::string& msg) {
    if (log_) *log_ << msg << '\n';
  }

  std::vector<double> test_grid(const std::vector<double>& fallback) const {
    return cfg_.snr_test.empty() ? fallback : cfg_.snr_test;
  }

  ResultRow base_row(double snr_train, double snr_test, std::size_t b, std::uint64_t seed) const {
    ResultRow row;
    row.scheme = config::to_string(cfg_.scheme);
    row.snr_train = snr_train;
    row.snr_test = snr_test;
    row.bandwidth = b;
    row.seed = seed;
    row.mean_bits = kNan;
    return row;
  }

  static void fail(ResultRow& row, const std::string& why) {
    row.top1 = row.top5 = row.map = kNan;
    row.mean_bits = kNan;
    row.status = "failed:" + why;
  }

  // Returns the system, or nullopt (with reason) when Eval finds no checkpoint.
  std::optional<jscc::JsccSystem> jscc_system(std::size_t b, double snr_train, std::uint64_t seed,
                                              std::string& why) {
    auto keys = training_keys(cfg_, data_digest_);
    keys["point.bandwidth"] = std::to_string(b);
    keys["point.snr_train"] = config::format_real(snr_train);
    keys["point.seed"] = std::to_string(seed);
    const Checkpoint ck = checkpoint_for(cfg_, keys);
    if (ck.cached()) {
      ++result_.checkpoints_reused;
      return jscc::load_system(ck.dir.string());
    }
    if (mode_ == RunMode::Eval) {
      why = "missing_checkpoint";
      return std::nullopt;
    }
    note("train " + config::to_string(cfg_.scheme) + " B=" + std::to_string(b) +
         " snr_train=" + config::format_real(snr_train) + " seed=" + std::to_string(seed));
    const auto fe = feature_spec(cfg_, data_.train.dim());
    jscc::JsccSystem sys =
        cfg_.scheme == Scheme::JsccFc
            ? jscc::build_fc_system(fe, b, data_.num_ids, seed)
            : jscc::build_ae_system(fe,
                                    jscc::JsccModelSpec::variant(cfg_.variant, cfg_.feature_dim, b,
                                                                 cfg_.activation),
                                    data_.num_ids, seed);
    const jscc::TrainResult tr = jscc::train(sys, plan_for(cfg_, snr_train, seed), data_.train);
    fs::create_directories(ck.dir);
    jscc::save_system(ck.dir.string(), sys);
    write_file(ck.dir / "trace.csv", trace_csv(tr.trace));
    ck.mark_complete();
    ++result_.checkpoints_trained;
    sys.set_mode(nn::Mode::Eval);
    return sys;
  }

  void run_jscc() {
    const retrieval::EvalOptions opts{cfg_.metric, cfg_.exclude_self};
    for (std::size_t b : cfg_.bandwidths)
      for (double snr_train : cfg_.snr_train)
        for (std::uint64_t seed : cfg_.seeds) {
          std::optional<jscc::JsccSystem> sys;
          std::string why;
          try {
            sys = jscc_system(b, snr_train, seed, why);
          } catch (const std::exception& e) {
            why = e.what();
          }
          if (mode_ == RunMode::Train) continue;
          // Common random numbers across the test SNR grid.
          const std::uint64_t eval_seed = derive_seed(seed, {1000, b});
          for (double snr_test : test_grid({snr_train})) {
            ResultRow row = base_row(snr_train, snr_test, b, seed);
            if (!sys) {
              fail(row, why);
            } else {
              try {
                const channel::ChannelConfig ch{snr_test, cfg_.fading_variance, cfg_.mode};
                const retrieval::Scores s = jscc::evaluate(*sys, data_, ch, eval_seed, opts);
                row.top1 = s.top1;
                row.top5 = s.top5;
                row.map = s.map;
              } catch (const std::exception& e) {
                fail(row, e.what());
              }
            }
            result_.rows.push_back(row);
          }
        }
  }

  std::optional<digital::DigitalCompressor> compressor(std::size_t member, std::uint64_t seed,
                                                       std::optional<nn::Network>& pretrained,
                                                       std::string& why) {
    const double lambda = cfg_.lambdas[member];
    auto keys = training_keys(cfg_, data_digest_);
    keys["point.lambda"] = config::format_real(lambda);
    keys["point.seed"] = std::to_string(seed);
    const Checkpoint ck = checkpoint_for(cfg_, keys);
    if (ck.cached()) {
      ++result_.checkpoints_reused;
      return digital::load_compressor(ck.dir.string());
    }
    if (mode_ == RunMode::Eval) {
      why = "missing_checkpoint";
      return std::nullopt;
    }
    note("train digital lambda=" + config::format_real(lambda) + " seed=" + std::to_string(seed));
    if (!pretrained)
      pretrained = jscc::pretrained_feature_encoder(feature_spec(cfg_, data_.train.dim()),
                                                    data_.num_ids, plan_for(cfg_, 0.0, seed),
                                                    data_.train, seed);
    digital::DigitalCompressor c =
        digital::build_compressor(*pretrained, cfg_.feature_dim, cfg_.latent_dim, data_.num_ids,
                                  lambda, cfg_.mixture_components, derive_seed(seed, {5}));
    digital::DigitalTrainConfig tc = cfg_.digital_train;
    tc.seed = derive_seed(seed, {6});
    const auto trace = digital::train_digital(c, data_.train, tc);
    fs::create_directories(ck.dir);
    digital::save_compressor(ck.dir.string(), c);
    write_file(ck.dir / "trace.csv", trace_csv(trace));
    ck.mark_complete();
    ++result_.checkpoints_trained;
    c.set_mode(nn::Mode::Eval);
    return c;
  }

  void run_digital() {
    const retrieval::EvalOptions opts{cfg_.metric, cfg_.exclude_self};
    const auto snrs = test_grid(cfg_.snr_train);
    for (std::uint64_t seed : cfg_.seeds) {
      std::optional<nn::Network> pretrained;
      std::vector<digital::QueryTable> tables;
      std::string why;
      try {
        for (std::size_t m = 0; m < cfg_.lambdas.size(); ++m) {
          auto c = compressor(m, seed, pretrained, why);
          if (!c) break;
          if (mode_ != RunMode::Train) tables.push_back(digital::evaluate_queries(*c, data_, opts));
        }
      } catch (const std::exception& e) {
        why = e.what();
      }
      if (mode_ == RunMode::Train) continue;
      const bool ok = tables.size() == cfg_.lambdas.size();
      for (std::size_t b : cfg_.bandwidths) {
        std::vector<digital::RatePoint> family;
        if (ok)
          for (std::size_t m = 0; m < tables.size(); ++m) {
            family.push_back(digital::rate_point(tables[m], cfg_.lambdas[m], b));
            result_.rate_points.push_back({seed, b, family.back()});
          }
        const std::uint64_t trial_seed = derive_seed(seed, {2000, b});
        for (double snr : snrs) {
          ResultRow row = base_row(kNan, snr, b, seed);
          if (!ok) {
            fail(row, why.empty() ? "training_failed" : why);
          } else if (cfg_.mode == channel::Mode::Awgn) {
            const digital::StaticChoice pick = digital::best_static(family, snr);
            row.top1 = pick.scores.top1;
            row.top5 = pick.scores.top5;
            row.map = pick.scores.map;
            row.mean_bits = pick.member < 0 ? kNan : pick.mean_bits;
          } else {
            try {
              digital::FadingResult fr;
              if (cfg_.fading_protocol == config::FadingProtocol::Csi) {
                fr = digital::eval_fading_csi(tables, b, snr, cfg_.fading_trials, trial_seed,
                                              cfg_.fading_variance);
              } else {
                // Best fixed member at this SNR.
                for (std::size_t m = 0; m < tables.size(); ++m) {
                  const auto cand = digital::eval_fading_outage(
                      tables[m], b, snr, cfg_.fading_trials, trial_seed, cfg_.fading_variance);
                  if (m == 0 || cand.top1 > fr.top1) {
                    fr = cand;
                    row.mean_bits = tables[m].mean_bits;
                  }
                }
              }
              row.top1 = fr.top1;
              row.top5 = fr.top5;
              row.map = fr.map;
            } catch (const std::exception& e) {
              fail(row, e.what());
            }
          }
          result_.rows.push_back(row);
        }
      }
    }
  }

  const ExperimentConfig& cfg_;
  RunMode mode_;
  std::ostream* log_;
  data::SplitDataset data_;
  std::string data_digest_;
  ExperimentResult result_;
};

std::string sanitize(std::string s) {
  for (char& ch : s)
    if (ch == ',' || ch == '\n' || ch == '\r' || ch == '"') ch = ';';
  return s;
}

}  // namespace

std::uint64_t fnv1a(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

data::SplitDataset load_dataset(const ExperimentConfig& cfg) {
  if (cfg.data_path.empty()) return data::generate_synthetic(cfg.synthetic);
  const data::Dataset all = data::load_features(cfg.data_path);
  return data::split(all, cfg.synthetic.seed);
}

std::string results_csv(const ExperimentResult& r) {
  std::string out = "scheme,snr_train,snr_test,B,seed,top1,top5,map,mean_bits,status\n";
  for (const auto& row : r.rows)
    out += row.scheme + "," + snr_text(row.snr_train) + "," + snr_text(row.snr_test) + "," +
           std::to_string(row.bandwidth) + "," + std::to_string(row.seed) + "," + fixed(row.top1) +
           "," + fixed(row.top5) + "," + fixed(row.map) + "," + fixed(row.mean_bits) + "," +
           sanitize(row.status) + "\n";
  return out;
}

std::string rate_points_csv(const ExperimentResult& r) {
  std::string out = "seed,B,lambda,mean_bits,snr_db_equivalent,top1,top5,map\n";
  for (const auto& rp : r.rate_points)
    out += std::to_string(rp.seed) + "," + std::to_string(rp.bandwidth) + "," +
           config::format_real(rp.point.lambda) + "," + fixed(rp.point.mean_bits) + "," +
           fixed(rp.point.snr_db_equivalent) + "," + fixed(rp.point.top1) + "," +
           fixed(rp.point.top5) + "," + fixed(rp.point.map) + "\n";
  return out;
}

std::string summary_text(const ExperimentConfig& cfg, const ExperimentResult& r) {
  struct Acc {
    double top1 = 0, top5 = 0, map = 0, bits = 0;
    std::size_t ok = 0, bits_n = 0, failed = 0;
  };
  // Insertion-ordered grouping keeps the grid order.
  std::vector<std::pair<std::string, Acc>> groups;
  auto group = [&](const std::string& key) -> Acc& {
    for (auto& g : groups)
      if (g.first == key) return g.second;
    groups.emplace_back(key, Acc{});
    return groups.back().second;
  };
  for (const auto& row : r.rows) {
    Acc& a = group("B=" + std::to_string(row.bandwidth) +
                   (std::isnan(row.snr_train) ? "" : " snr_train=" + snr_text(row.snr_train)) +
                   " snr_test=" + snr_text(row.snr_test));
    if (!row.ok()) {
      ++a.failed;
      continue;
    }
    ++a.ok;
    a.top1 += row.top1;
    a.top5 += row.top5;
    a.map += row.map;
    if (!std::isnan(row.mean_bits)) {
      a.bits += row.mean_bits;
      ++a.bits_n;
    }
  }
  std::ostringstream out;
  out << "scheme: " << config::to_string(cfg.scheme) << "\n";
  out << "seeds: " << cfg.seeds.size() << "\n";
  out << "rows: " << r.rows.size() << "\n\n";
  out << "mean over seeds\n";
  for (const auto& [key, a] : groups) {
    out << "  " << key << ": ";
    if (a.ok == 0) {
      out << "all " << a.failed << " seeds failed\n";
      continue;
    }
    const double n = static_cast<double>(a.ok);
    out << "top1=" << fixed(a.top1 / n) << " top5=" << fixed(a.top5 / n)
        << " map=" << fixed(a.map / n);
    if (a.bits_n) out << " mean_bits=" << fixed(a.bits / static_cast<double>(a.bits_n));
    if (a.failed) out << " failed=" << a.failed;
    out << "\n";
  }
  if (!r.rate_points.empty()) {
    out << "\nrate points, mean over seeds\n";
    std::vector<std::pair<std::string, std::array<double, 5>>> rp;
    std::vector<std::size_t> counts;
    for (const auto& p : r.rate_points) {
      const std::string key = "B=" + std::to_string(p.bandwidth) +
                              " lambda=" + config::format_real(p.point.lambda);
      std::size_t i = 0;
      while (i < rp.size() && rp[i].first != key) ++i;
      if (i == rp.size()) {
        rp.push_back({key, {}});
        counts.push_back(0);
      }
      auto& v = rp[i].second;
      v[0] += p.point.mean_bits;
      v[1] += p.point.snr_db_equivalent;
      v[2] += p.point.top1;
      v[3] += p.point.top5;
      v[4] += p.point.map;
      ++counts[i];
    }
    for (std::size_t i = 0; i < rp.size(); ++i) {
      const double n = static_cast<double>(counts[i]);
      const auto& v = rp[i].second;
      out << "  " << rp[i].first << ": mean_bits=" << fixed(v[0] / n)
          << " snr_db_equivalent=" << fixed(v[1] / n) << " top1=" << fixed(v[2] / n)
          << " top5=" << fixed(v[3] / n) << " map=" << fixed(v[4] / n) << "\n";
    }
  }
  return out.str();
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, RunMode mode, std::ostream* log) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  ExperimentResult result = Runner(cfg, mode, log).run();
  if (mode != RunMode::Train) {
    const fs::path out(cfg.out_dir);
    write_file(out / "results.csv", results_csv(result));
    write_file(out / "summary.txt", summary_text(cfg, result));
    if (cfg.scheme == Scheme::Digital) write_file(out / "rate_points.csv", rate_points_csv(result));
  }
  return result;
}

}  // namespace edgeret::experiment
