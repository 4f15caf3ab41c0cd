#include "edgeret/digital.hpp"

#include <algorithm>
#include <bit>
#include <filesystem>
#include <fstream>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "edgeret/channel.hpp"
#include "edgeret/error.hpp"
#include "edgeret/seed.hpp"

namespace edgeret::digital {

namespace {

std::span<double> span_of(std::vector<double>& v) { return {v.data(), v.size()}; }

nn::Matrix forward_features(DigitalCompressor& c, const nn::Matrix& inputs) {
  return c.feature_encoder.empty() ? inputs : c.feature_encoder.forward(inputs);
}

}  // namespace

void DigitalCompressor::set_mode(nn::Mode mode) {
  feature_encoder.set_mode(mode);
  reducer.set_mode(mode);
  classifier.set_mode(mode);
}

DigitalCompressor build_compressor(nn::Network feature_encoder, std::size_t feature_dim,
                                   std::size_t latent_dim, int num_ids, double lambda_max,
                                   int mixture_components, std::uint64_t seed) {
  if (latent_dim == 0 || feature_dim == 0 || latent_dim > feature_dim)
    throw Error(Errc::BadSpec, "latent_dim must be in [1, feature_dim]");
  if (num_ids < 2) throw Error(Errc::BadSpec, "need at least two identities");
  if (!feature_encoder.empty() && feature_encoder.out_dim() != feature_dim)
    throw Error(Errc::BadSpec, "feature encoder output differs from feature_dim");
  DigitalCompressor c;
  c.feature_encoder = std::move(feature_encoder);
  std::mt19937_64 rng(derive_seed(seed, {40}));
  c.reducer.emplace<nn::Dense>(feature_dim, latent_dim, rng);
  c.classifier.emplace<nn::Dense>(latent_dim, static_cast<std::size_t>(num_ids), rng);
  c.gmm = entropy::init_params(mixture_components);
  c.lambda_max = lambda_max;
  return c;
}

void save_compressor(const std::string& dir, DigitalCompressor& c) {
  std::filesystem::create_directories(dir);
  nn::save_network(dir + "/feature_encoder.ejnn", c.feature_encoder);
  nn::save_network(dir + "/reducer.ejnn", c.reducer);
  nn::save_network(dir + "/classifier.ejnn", c.classifier);
  std::ofstream out(dir + "/gmm.bin", std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + dir + "/gmm.bin");
  const auto k = static_cast<std::uint32_t>(c.gmm.k());
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((k >> (8 * i)) & 0xFF));
  for (double v : c.gmm.flatten()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
  const double lambda = c.lambda_max;
  const auto lbits = std::bit_cast<std::uint64_t>(lambda);
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((lbits >> (8 * i)) & 0xFF));
  if (!out) throw Error(Errc::Io, "failed writing " + dir + "/gmm.bin");
}

DigitalCompressor load_compressor(const std::string& dir) {
  DigitalCompressor c;
  c.feature_encoder = nn::load_network(dir + "/feature_encoder.ejnn");
  c.reducer = nn::load_network(dir + "/reducer.ejnn");
  c.classifier = nn::load_network(dir + "/classifier.ejnn");
  std::ifstream in(dir + "/gmm.bin", std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + dir + "/gmm.bin");
  auto read_u64 = [&](int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
      const int ch = in.get();
      if (ch == EOF) throw Error(Errc::BadCheckpoint, "truncated gmm.bin");
      v |= static_cast<std::uint64_t>(ch) << (8 * i);
    }
    return v;
  };
  const auto k = static_cast<std::size_t>(read_u64(4));
  std::vector<double> flat(3 * k);
  for (double& v : flat) v = std::bit_cast<double>(read_u64(8));
  c.gmm = entropy::GmmParams::unflatten(flat);
  c.lambda_max = std::bit_cast<double>(read_u64(8));
  c.set_mode(nn::Mode::Eval);
  return c;
}

std::vector<DigitalEpoch> train_digital(DigitalCompressor& c, const data::Dataset& train_set,
                                        const DigitalTrainConfig& cfg) {
  if (cfg.epochs <= 20)
    throw Error(Errc::BadSchedule, "digital training needs more than 20 epochs, got " +
                                       std::to_string(cfg.epochs));
  if (train_set.size() == 0) throw Error(Errc::EmptyDataset, "training set is empty");

  c.set_mode(nn::Mode::Train);
  std::vector<nn::ParamRef> params = c.feature_encoder.params();
  for (const auto& p : c.reducer.params()) params.push_back(p);
  for (const auto& p : c.classifier.params()) params.push_back(p);
  nn::OptimizerState opt;
  opt.momentum = cfg.momentum;
  opt.weight_decay = cfg.weight_decay;

  // The mixture only enters the rate term; it is fitted on bits per symbol
  // with its own step size so that small lambdas still fit it.
  entropy::GmmGrad gmm_grad(c.gmm.k());
  const std::vector<nn::ParamRef> gmm_params{
      {span_of(c.gmm.weight_logits), span_of(gmm_grad.weight_logits), false},
      {span_of(c.gmm.means), span_of(gmm_grad.means), false},
      {span_of(c.gmm.scale_logits), span_of(gmm_grad.scale_logits), false}};
  nn::OptimizerState gmm_opt;
  gmm_opt.learning_rate = cfg.gmm_learning_rate;
  gmm_opt.momentum = cfg.momentum;
  gmm_opt.weight_decay = 0.0;

  std::mt19937_64 rng(derive_seed(cfg.seed, {50}));
  const std::size_t n = train_set.size();
  const auto bs = static_cast<std::size_t>(std::max(cfg.batch_size, 2));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<DigitalEpoch> trace;
  std::uint64_t step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lambda = entropy::lambda_at_epoch(c.lambda_max, epoch, cfg.epochs);
    opt.learning_rate = epoch >= cfg.late_from_epoch ? cfg.late_learning_rate : cfg.learning_rate;
    std::shuffle(order.begin(), order.end(), rng);
    double ce_sum = 0.0, bits_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n;) {
      std::size_t end = std::min(n, start + bs);
      if (n - end == 1) end = n;  // never leave a batch of one behind
      const auto rows = static_cast<Eigen::Index>(end - start);
      nn::Matrix x(rows, train_set.features.cols());
      std::vector<int> labels(static_cast<std::size_t>(rows));
      for (Eigen::Index r = 0; r < rows; ++r) {
        const std::size_t src = order[start + static_cast<std::size_t>(r)];
        x.row(r) = train_set.features.row(static_cast<Eigen::Index>(src));
        labels[static_cast<std::size_t>(r)] = train_set.labels[src];
      }
      start = end;

      c.feature_encoder.zero_grad();
      c.reducer.zero_grad();
      c.classifier.zero_grad();

      const nn::Matrix z = c.reducer.forward(forward_features(c, x));
      const std::vector<double> noisy =
          entropy::quantize_train({z.data(), static_cast<std::size_t>(z.size())},
                                  derive_seed(cfg.seed, {51, step++}));
      const nn::Matrix q = Eigen::Map<const nn::Matrix>(noisy.data(), z.rows(), z.cols());
      const nn::LossResult ce = nn::cross_entropy(c.classifier.forward(q), labels);
      const entropy::RateEval rate = entropy::rate_bits(noisy, c.gmm);
      const double per_vector = 1.0 / static_cast<double>(rows);

      nn::Matrix g_q = c.classifier.backward(ce.grad);
      g_q += lambda * per_vector *
             Eigen::Map<const nn::Matrix>(rate.d_values.data(), z.rows(), z.cols());
      const nn::Matrix g_f = c.reducer.backward(g_q);
      if (!c.feature_encoder.empty()) c.feature_encoder.backward(g_f);
      nn::sgd_step(params, opt);

      const double per_symbol = 1.0 / static_cast<double>(z.size());
      for (auto* g : {&gmm_grad.weight_logits, &gmm_grad.means, &gmm_grad.scale_logits})
        std::fill(g->begin(), g->end(), 0.0);
      gmm_grad.add(rate.d_params, per_symbol);
      nn::sgd_step(gmm_params, gmm_opt);

      ce_sum += ce.loss;
      bits_sum += rate.bits * per_vector;
      ++batches;
    }
    trace.push_back({epoch, lambda, ce_sum / static_cast<double>(batches),
                     bits_sum / static_cast<double>(batches)});
  }
  c.set_mode(nn::Mode::Eval);
  return trace;
}

nn::Matrix latents(DigitalCompressor& c, const nn::Matrix& inputs) {
  c.set_mode(nn::Mode::Eval);
  return c.reducer.forward(forward_features(c, inputs));
}

Compressed compress(DigitalCompressor& c, std::span<const double> input) {
  const nn::Matrix x =
      Eigen::Map<const Eigen::RowVectorXd>(input.data(), static_cast<Eigen::Index>(input.size()));
  const nn::Matrix z = latents(c, x);
  Compressed out;
  out.symbols = entropy::quantize_infer({z.data(), static_cast<std::size_t>(z.size())});
  out.bits = ac::encode(out.symbols, ac::build_table(c.gmm, c.support));
  return out;
}

double capacity_bits(double snr_db, std::size_t bandwidth) {
  if (bandwidth < 1) throw Error(Errc::BadSpec, "bandwidth must be >= 1");
  if (std::isinf(snr_db)) return snr_db > 0 ? std::numeric_limits<double>::infinity() : 0.0;
  // log2(1 + 10^(s/10)), arranged so neither branch overflows or cancels.
  const double s = snr_db / 10.0;
  const double per_use = s <= 0.0 ? std::log1p(std::pow(10.0, s)) / std::numbers::ln2
                                  : s * std::numbers::log2e * std::numbers::ln10 +
                                        std::log1p(std::pow(10.0, -s)) / std::numbers::ln2;
  return static_cast<double>(bandwidth) * per_use;
}

double min_snr_for_bits(double bits, std::size_t bandwidth) {
  if (bandwidth < 1) throw Error(Errc::BadSpec, "bandwidth must be >= 1");
  if (bits <= 0.0) return -std::numeric_limits<double>::infinity();
  // 10 log10(2^r - 1): expm1 keeps small rates accurate, the factored form
  // avoids overflow of 2^r for large ones.
  const double r = bits / static_cast<double>(bandwidth);
  if (r <= 1.0) return 10.0 * std::log10(std::expm1(r * std::numbers::ln2));
  return 10.0 * (r * std::log10(2.0) + std::log10(-std::expm1(-r * std::numbers::ln2)));
}

QueryTable evaluate_queries(DigitalCompressor& c, const data::SplitDataset& data,
                            retrieval::EvalOptions opts) {
  const ac::PmfTable table = ac::build_table(c.gmm, c.support);

  const nn::Matrix gallery_latent = latents(c, data.gallery.features);
  nn::Matrix gallery_q(gallery_latent.rows(), gallery_latent.cols());
  for (Eigen::Index r = 0; r < gallery_latent.rows(); ++r) {
    const Eigen::RowVectorXd row = gallery_latent.row(r);
    const auto q = entropy::quantize_infer({row.data(), static_cast<std::size_t>(row.size())});
    for (Eigen::Index k = 0; k < row.size(); ++k)
      gallery_q(r, k) = q.symbols[static_cast<std::size_t>(k)];
  }
  const retrieval::Gallery gallery(gallery_q, data.gallery.labels);

  const nn::Matrix query_latent = latents(c, data.query.features);
  QueryTable out;
  std::vector<double> feature(static_cast<std::size_t>(query_latent.cols()));
  for (Eigen::Index r = 0; r < query_latent.rows(); ++r) {
    const Eigen::RowVectorXd row = query_latent.row(r);
    const auto q = entropy::quantize_infer({row.data(), static_cast<std::size_t>(row.size())});
    const ac::Bitstream bits = ac::encode(q, table);
    const entropy::QuantizedVector received = ac::decode(bits, q.dim(), table);
    if (!(received == q))
      throw Error(Errc::TruncatedStream, "arithmetic decode mismatch on query " + std::to_string(r));
    for (std::size_t k = 0; k < feature.size(); ++k) feature[k] = received.symbols[k];
    out.bits.push_back(static_cast<double>(bits.bit_count));
    const std::ptrdiff_t exclude = opts.exclude_self ? static_cast<std::ptrdiff_t>(r) : -1;
    out.outcomes.push_back(retrieval::evaluate_query(
        feature, data.query.labels[static_cast<std::size_t>(r)], gallery, opts.metric, exclude));
  }

  double bits_total = 0.0;
  for (double b : out.bits) bits_total += b;
  out.mean_bits = out.bits.empty() ? 0.0 : bits_total / static_cast<double>(out.bits.size());
  for (const auto& o : out.outcomes) {
    if (o.skipped) {
      ++out.scores.skipped;
      continue;
    }
    ++out.scores.evaluated;
    out.scores.top1 += o.hit1;
    out.scores.top5 += o.hit5;
    out.scores.map += o.average_precision;
  }
  if (out.scores.evaluated) {
    const auto n = static_cast<double>(out.scores.evaluated);
    out.scores.top1 /= n;
    out.scores.top5 /= n;
    out.scores.map /= n;
  }
  return out;
}

RatePoint rate_point(const QueryTable& table, double lambda, std::size_t bandwidth) {
  RatePoint p;
  p.lambda = lambda;
  p.mean_bits = table.mean_bits;
  p.snr_db_equivalent = min_snr_for_bits(table.mean_bits, bandwidth);
  p.top1 = table.scores.top1;
  p.top5 = table.scores.top5;
  p.map = table.scores.map;
  return p;
}

StaticChoice best_static(std::span<const RatePoint> family, double snr_db) {
  StaticChoice best;
  for (std::size_t i = 0; i < family.size(); ++i) {
    const RatePoint& p = family[i];
    if (p.snr_db_equivalent > snr_db) continue;
    if (best.member < 0 || p.top1 > best.scores.top1) {
      best.member = static_cast<int>(i);
      best.scores.top1 = p.top1;
      best.scores.top5 = p.top5;
      best.scores.map = p.map;
      best.mean_bits = p.mean_bits;
    }
  }
  return best;
}

namespace {

// |h|^2 / H_c draws; exponential with unit mean for Rayleigh fading.
class GainDraws {
 public:
  GainDraws(std::uint64_t seed, double fading_variance)
      : rng_(seed), sd_(std::sqrt(fading_variance / 2.0)), hc_(fading_variance) {}
  double next_normalized_power() {
    const double re = normal_(rng_) * sd_;
    const double im = normal_(rng_) * sd_;
    return (re * re + im * im) / hc_;
  }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  double sd_;
  double hc_;
};

double instantaneous_capacity(double gain_power, double avg_snr_db, std::size_t bandwidth) {
  if (std::isinf(avg_snr_db) && avg_snr_db > 0) return std::numeric_limits<double>::infinity();
  const double snr = gain_power * std::pow(10.0, avg_snr_db / 10.0);
  return static_cast<double>(bandwidth) * std::log2(1.0 + snr);
}

void accumulate(FadingResult& r, const retrieval::QueryOutcome& o) {
  r.success_fraction += 1.0;
  if (o.skipped) return;
  r.top1 += o.hit1;
  r.top5 += o.hit5;
  r.map += o.average_precision;
}

void finish(FadingResult& r, std::size_t trials) {
  const auto n = static_cast<double>(trials);
  r.success_fraction /= n;
  r.top1 /= n;
  r.top5 /= n;
  r.map /= n;
}

}  // namespace

FadingResult eval_fading_csi(std::span<const QueryTable> tables, std::size_t bandwidth,
                             double avg_snr_db, std::size_t n_trials, std::uint64_t seed,
                             double fading_variance) {
  if (tables.empty()) throw Error(Errc::EmptyFamily, "CSI evaluation needs at least one compressor");
  const std::size_t queries = tables.front().bits.size();
  for (const QueryTable& t : tables)
    if (t.bits.size() != queries)
      throw Error(Errc::BadSpec, "all family members must cover the same queries");
  FadingResult r;
  if (queries == 0 || n_trials == 0) return r;
  GainDraws gains(seed, fading_variance);
  for (std::size_t t = 0; t < n_trials; ++t) {
    const std::size_t q = t % queries;
    const double cap = instantaneous_capacity(gains.next_normalized_power(), avg_snr_db, bandwidth);
    for (const QueryTable& member : tables) {
      if (member.bits[q] <= cap) {
        accumulate(r, member.outcomes[q]);
        break;
      }
    }
  }
  finish(r, n_trials);
  return r;
}

FadingResult eval_fading_outage(const QueryTable& table, std::size_t bandwidth, double avg_snr_db,
                                std::size_t n_trials, std::uint64_t seed, double fading_variance) {
  FadingResult r;
  const std::size_t queries = table.bits.size();
  if (queries == 0 || n_trials == 0) return r;
  GainDraws gains(seed, fading_variance);
  for (std::size_t t = 0; t < n_trials; ++t) {
    const std::size_t q = t % queries;
    const double cap = instantaneous_capacity(gains.next_normalized_power(), avg_snr_db, bandwidth);
    if (table.bits[q] <= cap) accumulate(r, table.outcomes[q]);
  }
  finish(r, n_trials);
  return r;
}

double rayleigh_outage_probability(double bits, std::size_t bandwidth, double avg_snr_db) {
  if (std::isinf(avg_snr_db) && avg_snr_db > 0) return 0.0;
  const double threshold = std::expm1(bits / static_cast<double>(bandwidth) * std::numbers::ln2) /
                           std::pow(10.0, avg_snr_db / 10.0);
  return -std::expm1(-threshold);
}

}  // namespace edgeret::digital
