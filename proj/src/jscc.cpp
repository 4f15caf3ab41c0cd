#include "edgeret/jscc.hpp"

#include <algorithm>
#include <filesystem>
#include <cmath>
#include <numeric>

#include "edgeret/error.hpp"
#include "edgeret/seed.hpp"

namespace edgeret::jscc {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::T3: return "T3";
    case Strategy::T13: return "T13";
    case Strategy::T13L1: return "T13_L1";
    case Strategy::T123: return "T123";
  }
  return "?";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "T3") return Strategy::T3;
  if (name == "T13") return Strategy::T13;
  if (name == "T13_L1" || name == "T13L1") return Strategy::T13L1;
  if (name == "T123") return Strategy::T123;
  throw Error(Errc::BadConfig, "unknown training strategy '" + name + "'");
}

std::string to_string(Phase p) {
  switch (p) {
    case Phase::PretrainEncoder: return "pretrain_encoder";
    case Phase::PretrainAe: return "pretrain_ae";
    case Phase::Joint: return "joint";
  }
  return "?";
}

JsccModelSpec JsccModelSpec::variant(char name, std::size_t feature_dim, std::size_t bandwidth,
                                     Activation activation) {
  JsccModelSpec s;
  s.feature_dim = feature_dim;
  s.bandwidth = bandwidth;
  s.activation = activation;
  switch (name) {
    case 'A': s.encoder_layers = 3; s.decoder_layers = 3; break;
    case 'B': s.encoder_layers = 3; s.decoder_layers = 2; break;
    case 'C': s.encoder_layers = 3; s.decoder_layers = 4; break;
    case 'D': s.encoder_layers = 2; s.decoder_layers = 3; break;
    case 'E': s.encoder_layers = 4; s.decoder_layers = 3; break;
    default: throw Error(Errc::BadSpec, std::string("unknown JSCC variant '") + name + "'");
  }
  return s;
}

namespace {

void add_activation(nn::Network& net, std::size_t dim, Activation act) {
  if (act == Activation::Prelu)
    net.emplace<nn::Prelu>(dim);
  else
    net.emplace<nn::LeakyRelu>(dim);
}

// Dense stack; every layer except the last gets BN + activation.
nn::Network dense_stack(const std::vector<std::size_t>& dims, Activation act,
                        std::mt19937_64& rng) {
  nn::Network net;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    net.emplace<nn::Dense>(dims[i], dims[i + 1], rng);
    if (i + 2 < dims.size()) {
      net.emplace<nn::BatchNorm>(dims[i + 1]);
      add_activation(net, dims[i + 1], act);
    }
  }
  return net;
}

std::vector<double> row_of(const nn::Matrix& m, Eigen::Index r) {
  std::vector<double> v(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) v[static_cast<std::size_t>(c)] = m(r, c);
  return v;
}

// Per-row power normalization followed by the channel, with the backward
// pass through both. Gradients flow through the gain the channel applied.
class ChannelPass {
 public:
  nn::Matrix forward(const nn::Matrix& raw, const channel::ChannelConfig& cfg,
                     std::uint64_t seed) {
    raw_ = raw;
    gains_.assign(static_cast<std::size_t>(raw.rows()), channel::Complex(1.0, 0.0));
    nn::Matrix out(raw.rows(), raw.cols());
    for (Eigen::Index r = 0; r < raw.rows(); ++r) {
      const std::vector<double> row = row_of(raw, r);
      const channel::ChannelInput in = channel::normalize_power(row);
      if (std::abs(in.average_power() - 1.0) > 1e-6)
        throw Error(Errc::BadSpec, "power constraint violated after normalization");
      const channel::ChannelRealization rx =
          channel::transmit(in, cfg, derive_seed(seed, {static_cast<std::uint64_t>(r)}));
      gains_[static_cast<std::size_t>(r)] = rx.gain;
      const std::vector<double> y = channel::unpack(rx.output);
      for (Eigen::Index c = 0; c < raw.cols(); ++c) out(r, c) = y[static_cast<std::size_t>(c)];
    }
    return out;
  }

  nn::Matrix backward(const nn::Matrix& upstream) const {
    nn::Matrix grad(upstream.rows(), upstream.cols());
    std::vector<double> g(static_cast<std::size_t>(upstream.cols()));
    for (Eigen::Index r = 0; r < upstream.rows(); ++r) {
      const channel::Complex h = gains_[static_cast<std::size_t>(r)];
      // y = h x: dL/dx = conj(h) dL/dy in real-pair form.
      for (Eigen::Index c = 0; c + 1 < upstream.cols(); c += 2) {
        const double gr = upstream(r, c), gi = upstream(r, c + 1);
        g[static_cast<std::size_t>(c)] = h.real() * gr + h.imag() * gi;
        g[static_cast<std::size_t>(c + 1)] = -h.imag() * gr + h.real() * gi;
      }
      const std::vector<double> raw = row_of(raw_, r);
      const std::vector<double> d = channel::normalize_power_backward(raw, g);
      for (Eigen::Index c = 0; c < upstream.cols(); ++c) grad(r, c) = d[static_cast<std::size_t>(c)];
    }
    return grad;
  }

 private:
  nn::Matrix raw_;
  std::vector<channel::Complex> gains_;
};

nn::Matrix gather_rows(const nn::Matrix& m, std::span<const std::size_t> rows) {
  nn::Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(labels[r]);
  return out;
}

// Shuffled minibatches; a trailing batch of one is folded away since batch
// statistics are undefined for it.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int batch_size,
                                                   std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto bs = static_cast<std::size_t>(std::max(batch_size, 1));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += bs) {
    const std::size_t end = std::min(n, i + bs);
    if (end - i < 2 && !batches.empty()) {
      batches.back().insert(batches.back().end(), order.begin() + static_cast<std::ptrdiff_t>(i),
                            order.begin() + static_cast<std::ptrdiff_t>(end));
      continue;
    }
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

void require_data(const data::Dataset& d) {
  if (d.size() == 0) throw Error(Errc::EmptyDataset, "training set is empty");
}

std::vector<nn::ParamRef> collect(std::initializer_list<nn::Network*> nets) {
  std::vector<nn::ParamRef> all;
  for (nn::Network* n : nets)
    for (const nn::ParamRef& p : n->params()) all.push_back(p);
  return all;
}

void zero(std::initializer_list<nn::Network*> nets) {
  for (nn::Network* n : nets) n->zero_grad();
}

nn::OptimizerState make_optimizer(const TrainPlan& plan) {
  nn::OptimizerState s;
  s.momentum = plan.momentum;
  s.weight_decay = plan.weight_decay;
  return s;
}

}  // namespace

nn::Network build_feature_encoder(const FeatureEncoderSpec& spec, std::mt19937_64& rng) {
  if (spec.input_dim == 0 || spec.feature_dim == 0 || spec.hidden_layers < 0 ||
      (spec.hidden_layers > 0 && spec.hidden_dim == 0))
    throw Error(Errc::BadSpec, "feature encoder dimensions must be positive");
  std::vector<std::size_t> dims{spec.input_dim};
  for (int i = 0; i < spec.hidden_layers; ++i) dims.push_back(spec.hidden_dim);
  dims.push_back(spec.feature_dim);
  return dense_stack(dims, Activation::LeakyRelu, rng);
}

JsccAe build_jscc_ae(const JsccModelSpec& spec, std::uint64_t seed) {
  if (spec.bandwidth < 1 || spec.feature_dim < 1 || spec.encoder_layers < 1 ||
      spec.decoder_layers < 1)
    throw Error(Errc::BadSpec, "JSCC AE needs B >= 1, feature_dim >= 1 and >= 1 layer per side");
  const std::size_t width = 2 * spec.bandwidth;
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> enc{spec.feature_dim};
  for (int i = 0; i < spec.encoder_layers; ++i) enc.push_back(width);
  std::vector<std::size_t> dec{width};
  for (int i = 0; i + 1 < spec.decoder_layers; ++i) dec.push_back(width);
  dec.push_back(spec.feature_dim);
  JsccAe ae;
  ae.encoder = dense_stack(enc, spec.activation, rng);
  ae.decoder = dense_stack(dec, spec.activation, rng);
  return ae;
}

nn::Network build_jscc_fc(std::size_t feature_dim, std::size_t bandwidth, std::uint64_t seed) {
  if (bandwidth < 1 || feature_dim < 1)
    throw Error(Errc::BadSpec, "JSCC FC needs B >= 1 and feature_dim >= 1");
  std::mt19937_64 rng(seed);
  nn::Network net;
  net.emplace<nn::Dense>(feature_dim, 2 * bandwidth, rng);
  return net;
}

void JsccSystem::set_mode(nn::Mode mode) {
  for (nn::Network* n : {&feature_encoder, &pretrain_head, &encoder, &decoder, &classifier})
    n->set_mode(mode);
}

JsccSystem build_ae_system(const FeatureEncoderSpec& fe, const JsccModelSpec& spec, int num_ids,
                           std::uint64_t seed) {
  if (num_ids < 2) throw Error(Errc::BadSpec, "need at least two identities");
  if (spec.feature_dim != fe.feature_dim)
    throw Error(Errc::BadSpec, "JSCC feature_dim differs from the feature encoder output");
  JsccSystem sys;
  std::mt19937_64 fe_rng(derive_seed(seed, {1}));
  sys.feature_encoder = build_feature_encoder(fe, fe_rng);
  std::mt19937_64 head_rng(derive_seed(seed, {2}));
  sys.pretrain_head.emplace<nn::Dense>(fe.feature_dim, static_cast<std::size_t>(num_ids), head_rng);
  JsccAe ae = build_jscc_ae(spec, derive_seed(seed, {3}));
  sys.encoder = std::move(ae.encoder);
  sys.decoder = std::move(ae.decoder);
  std::mt19937_64 cls_rng(derive_seed(seed, {4}));
  sys.classifier.emplace<nn::Dense>(spec.feature_dim, static_cast<std::size_t>(num_ids), cls_rng);
  return sys;
}

JsccSystem build_fc_system(const FeatureEncoderSpec& fe, std::size_t bandwidth, int num_ids,
                           std::uint64_t seed) {
  if (num_ids < 2) throw Error(Errc::BadSpec, "need at least two identities");
  JsccSystem sys;
  std::mt19937_64 fe_rng(derive_seed(seed, {1}));
  sys.feature_encoder = build_feature_encoder(fe, fe_rng);
  std::mt19937_64 head_rng(derive_seed(seed, {2}));
  sys.pretrain_head.emplace<nn::Dense>(fe.feature_dim, static_cast<std::size_t>(num_ids), head_rng);
  sys.encoder = build_jscc_fc(fe.feature_dim, bandwidth, derive_seed(seed, {3}));
  std::mt19937_64 cls_rng(derive_seed(seed, {4}));
  sys.classifier.emplace<nn::Dense>(2 * bandwidth, static_cast<std::size_t>(num_ids), cls_rng);
  return sys;
}

nn::Matrix jscc_transmit(const nn::Matrix& features, nn::Network& encoder, nn::Network* decoder,
                         const channel::ChannelConfig& cfg, std::uint64_t seed) {
  encoder.set_mode(nn::Mode::Eval);
  ChannelPass pass;
  nn::Matrix received = pass.forward(encoder.forward(features), cfg, seed);
  if (decoder == nullptr || decoder->empty()) return received;
  decoder->set_mode(nn::Mode::Eval);
  return decoder->forward(received);
}

int total_epochs(const Schedule& schedule) noexcept {
  int n = 0;
  for (const LrSegment& s : schedule) n += s.epochs;
  return n;
}

std::vector<EpochRecord> pretrain_feature_encoder(JsccSystem& sys, const TrainPlan& plan,
                                                  const data::Dataset& train_set) {
  require_data(train_set);
  sys.feature_encoder.set_mode(nn::Mode::Train);
  sys.pretrain_head.set_mode(nn::Mode::Train);
  const auto params = collect({&sys.feature_encoder, &sys.pretrain_head});
  nn::OptimizerState opt = make_optimizer(plan);
  std::mt19937_64 rng(derive_seed(plan.seed, {10}));

  std::vector<EpochRecord> trace;
  int epoch = 0;
  for (const LrSegment& seg : plan.pretrain_encoder) {
    opt.learning_rate = seg.learning_rate;
    for (int e = 0; e < seg.epochs; ++e) {
      double ce_sum = 0.0;
      const auto batches = make_batches(train_set.size(), plan.batch_size, rng);
      for (const auto& rows : batches) {
        const nn::Matrix x = gather_rows(train_set.features, rows);
        const std::vector<int> y = gather_labels(train_set.labels, rows);
        zero({&sys.feature_encoder, &sys.pretrain_head});
        const nn::Matrix logits = sys.pretrain_head.forward(sys.feature_encoder.forward(x));
        const nn::LossResult ce = nn::cross_entropy(logits, y);
        sys.feature_encoder.backward(sys.pretrain_head.backward(ce.grad));
        nn::sgd_step(params, opt);
        ce_sum += ce.loss;
      }
      trace.push_back({Phase::PretrainEncoder, ++epoch,
                       ce_sum / static_cast<double>(batches.size()), 0.0});
    }
  }
  return trace;
}

std::vector<EpochRecord> pretrain_autoencoder(JsccSystem& sys, const TrainPlan& plan,
                                              const data::Dataset& train_set) {
  require_data(train_set);
  if (sys.is_fc()) return {};
  // Features are extracted once by the frozen encoder.
  sys.feature_encoder.set_mode(nn::Mode::Eval);
  const nn::Matrix features = sys.feature_encoder.forward(train_set.features);

  sys.encoder.set_mode(nn::Mode::Train);
  sys.decoder.set_mode(nn::Mode::Train);
  const auto params = collect({&sys.encoder, &sys.decoder});
  nn::OptimizerState opt = make_optimizer(plan);
  std::mt19937_64 rng(derive_seed(plan.seed, {20}));
  const channel::ChannelConfig cfg = plan.train_channel();

  std::vector<EpochRecord> trace;
  int epoch = 0;
  std::uint64_t step = 0;
  for (const LrSegment& seg : plan.pretrain_ae) {
    opt.learning_rate = seg.learning_rate;
    for (int e = 0; e < seg.epochs; ++e) {
      double l1_sum = 0.0;
      const auto batches = make_batches(train_set.size(), plan.batch_size, rng);
      for (const auto& rows : batches) {
        const nn::Matrix f = gather_rows(features, rows);
        zero({&sys.encoder, &sys.decoder});
        ChannelPass pass;
        const nn::Matrix y = pass.forward(sys.encoder.forward(f), cfg,
                                          derive_seed(plan.seed, {21, step++}));
        const nn::Matrix rec = sys.decoder.forward(y);
        const nn::LossResult l1 = nn::l1_loss(rec, f);
        sys.encoder.backward(pass.backward(sys.decoder.backward(l1.grad)));
        nn::sgd_step(params, opt);
        l1_sum += l1.loss;
      }
      trace.push_back({Phase::PretrainAe, ++epoch, 0.0,
                       l1_sum / static_cast<double>(batches.size())});
    }
  }
  return trace;
}

std::vector<EpochRecord> train_joint(JsccSystem& sys, const TrainPlan& plan,
                                     const data::Dataset& train_set, bool with_l1) {
  require_data(train_set);
  sys.set_mode(nn::Mode::Train);
  const bool fc = sys.is_fc();
  const auto params = fc ? collect({&sys.feature_encoder, &sys.encoder, &sys.classifier})
                         : collect({&sys.feature_encoder, &sys.encoder, &sys.decoder,
                                    &sys.classifier});
  nn::OptimizerState opt = make_optimizer(plan);
  std::mt19937_64 rng(derive_seed(plan.seed, {30}));
  const channel::ChannelConfig cfg = plan.train_channel();
  const bool use_l1 = with_l1 && !fc;

  std::vector<EpochRecord> trace;
  int epoch = 0;
  std::uint64_t step = 0;
  for (const LrSegment& seg : plan.joint) {
    opt.learning_rate = seg.learning_rate;
    for (int e = 0; e < seg.epochs; ++e) {
      double ce_sum = 0.0, l1_sum = 0.0;
      const auto batches = make_batches(train_set.size(), plan.batch_size, rng);
      for (const auto& rows : batches) {
        const nn::Matrix x = gather_rows(train_set.features, rows);
        const std::vector<int> labels = gather_labels(train_set.labels, rows);
        zero({&sys.feature_encoder, &sys.encoder, &sys.decoder, &sys.classifier});

        const nn::Matrix f = sys.feature_encoder.forward(x);
        ChannelPass pass;
        const nn::Matrix y = pass.forward(sys.encoder.forward(f), cfg,
                                          derive_seed(plan.seed, {31, step++}));
        const nn::Matrix rec = fc ? y : sys.decoder.forward(y);
        const nn::LossResult ce = nn::cross_entropy(sys.classifier.forward(rec), labels);
        nn::Matrix g_rec = sys.classifier.backward(ce.grad);
        if (use_l1) {
          // The clean features act as a fixed target.
          const nn::LossResult l1 = nn::l1_loss(rec, f);
          g_rec += plan.l1_weight * l1.grad;
          l1_sum += l1.loss;
        }
        const nn::Matrix g_y = fc ? g_rec : sys.decoder.backward(g_rec);
        sys.feature_encoder.backward(sys.encoder.backward(pass.backward(g_y)));
        nn::sgd_step(params, opt);
        ce_sum += ce.loss;
      }
      const auto nb = static_cast<double>(batches.size());
      trace.push_back({Phase::Joint, ++epoch, ce_sum / nb, l1_sum / nb});
    }
  }
  return trace;
}

TrainResult train(JsccSystem& sys, const TrainPlan& plan, const data::Dataset& train_set) {
  require_data(train_set);
  TrainResult result;
  auto append = [&](std::vector<EpochRecord> part) {
    result.trace.insert(result.trace.end(), part.begin(), part.end());
  };
  const bool pretrain = plan.strategy != Strategy::T3;
  if (pretrain) {
    append(pretrain_feature_encoder(sys, plan, train_set));
    // The pretraining head doubles as the server-side classifier.
    if (!sys.is_fc()) sys.classifier = sys.pretrain_head;
  }
  if (plan.strategy == Strategy::T123 && !sys.is_fc())
    append(pretrain_autoencoder(sys, plan, train_set));
  append(train_joint(sys, plan, train_set, plan.strategy == Strategy::T13L1));
  sys.set_mode(nn::Mode::Eval);
  return result;
}

nn::Network pretrained_feature_encoder(const FeatureEncoderSpec& fe, int num_ids,
                                       const TrainPlan& plan, const data::Dataset& train_set,
                                       std::uint64_t init_seed) {
  JsccSystem sys = build_fc_system(fe, 1, num_ids, init_seed);
  pretrain_feature_encoder(sys, plan, train_set);
  sys.feature_encoder.set_mode(nn::Mode::Eval);
  return std::move(sys.feature_encoder);
}

void save_system(const std::string& dir, JsccSystem& sys) {
  std::filesystem::create_directories(dir);
  nn::save_network(dir + "/feature_encoder.ejnn", sys.feature_encoder);
  nn::save_network(dir + "/pretrain_head.ejnn", sys.pretrain_head);
  nn::save_network(dir + "/encoder.ejnn", sys.encoder);
  nn::save_network(dir + "/decoder.ejnn", sys.decoder);
  nn::save_network(dir + "/classifier.ejnn", sys.classifier);
}

JsccSystem load_system(const std::string& dir) {
  JsccSystem sys;
  sys.feature_encoder = nn::load_network(dir + "/feature_encoder.ejnn");
  sys.pretrain_head = nn::load_network(dir + "/pretrain_head.ejnn");
  sys.encoder = nn::load_network(dir + "/encoder.ejnn");
  sys.decoder = nn::load_network(dir + "/decoder.ejnn");
  sys.classifier = nn::load_network(dir + "/classifier.ejnn");
  return sys;
}

nn::Matrix gallery_features(JsccSystem& sys, const nn::Matrix& inputs) {
  sys.set_mode(nn::Mode::Eval);
  const nn::Matrix f = sys.feature_encoder.forward(inputs);
  if (!sys.is_fc()) return f;
  const channel::ChannelConfig clean{channel::kInfiniteSnr, 1.0, channel::Mode::Awgn};
  return jscc_transmit(f, sys.encoder, nullptr, clean, 0);
}

nn::Matrix query_features(JsccSystem& sys, const nn::Matrix& inputs,
                          const channel::ChannelConfig& cfg, std::uint64_t seed) {
  sys.set_mode(nn::Mode::Eval);
  const nn::Matrix f = sys.feature_encoder.forward(inputs);
  return jscc_transmit(f, sys.encoder, sys.is_fc() ? nullptr : &sys.decoder, cfg, seed);
}

retrieval::Scores evaluate(JsccSystem& sys, const data::SplitDataset& data,
                           const channel::ChannelConfig& cfg, std::uint64_t seed,
                           retrieval::EvalOptions opts) {
  const retrieval::Gallery gallery(gallery_features(sys, data.gallery.features),
                                   data.gallery.labels);
  const nn::Matrix queries = query_features(sys, data.query.features, cfg, seed);
  return retrieval::evaluate(queries, data.query.labels, gallery, opts);
}

}  // namespace edgeret::jscc
