#include "edgeret/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "edgeret/error.hpp"

namespace edgeret::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

[[noreturn]] void bad(const std::string& key, const std::string& value) {
  throw Error(Errc::BadConfig, "invalid value '" + value + "' for " + key);
}

double to_real(const std::string& key, const std::string& text) {
  double v = 0.0;
  const std::string t = trim(text);
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || !std::isfinite(v)) bad(key, text);
  return v;
}

long long to_int(const std::string& key, const std::string& text) {
  long long v = 0;
  const std::string t = trim(text);
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size()) bad(key, text);
  return v;
}

int to_positive(const std::string& key, const std::string& text) {
  const long long v = to_int(key, text);
  if (v <= 0 || v > std::numeric_limits<int>::max()) bad(key, text);
  return static_cast<int>(v);
}

bool to_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  bad(key, text);
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

std::string schedule_text(const jscc::Schedule& s) {
  std::vector<std::string> parts;
  for (const auto& seg : s) parts.push_back(std::to_string(seg.epochs) + "@" + format_real(seg.learning_rate));
  return join(parts);
}

template <typename T, typename F>
std::string list_text(const std::vector<T>& v, F f) {
  std::vector<std::string> parts;
  for (const T& x : v) parts.push_back(f(x));
  return join(parts);
}

}  // namespace

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::JsccAe: return "jscc_ae";
    case Scheme::JsccFc: return "jscc_fc";
    case Scheme::Digital: return "digital";
  }
  return "?";
}

Scheme parse_scheme(const std::string& name) {
  if (name == "jscc_ae") return Scheme::JsccAe;
  if (name == "jscc_fc") return Scheme::JsccFc;
  if (name == "digital") return Scheme::Digital;
  throw Error(Errc::BadConfig, "unknown scheme '" + name + "'");
}

std::string format_real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

double parse_snr(const std::string& text) {
  const std::string t = trim(text);
  if (t == "inf" || t == "+inf") return channel::kInfiniteSnr;
  return to_real("snr", t);
}

std::vector<double> parse_snr_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) out.push_back(parse_snr(item));
  return out;
}

jscc::Schedule parse_schedule(const std::string& text) {
  jscc::Schedule out;
  for (const auto& item : split_list(text)) {
    const auto at = item.find('@');
    if (at == std::string::npos) bad("schedule", text);
    const int epochs = static_cast<int>(to_int("schedule", item.substr(0, at)));
    const double lr = to_real("schedule", item.substr(at + 1));
    if (epochs < 0 || lr < 0.0) bad("schedule", text);
    out.push_back({epochs, lr});
  }
  return out;
}

void apply(ExperimentConfig& c, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "scheme") c.scheme = parse_scheme(v);
  else if (key == "data.source") {
    if (v == "synthetic") c.data_path.clear();
    else if (v != "file") bad(key, v);
  } else if (key == "data.path") c.data_path = v;
  else if (key == "data.num_ids") c.synthetic.num_ids = to_positive(key, v);
  else if (key == "data.samples_per_id") c.synthetic.samples_per_id = to_positive(key, v);
  else if (key == "data.input_dim") c.synthetic.input_dim = to_positive(key, v);
  else if (key == "data.cluster_spread") c.synthetic.cluster_spread = to_real(key, v);
  else if (key == "data.seed") c.synthetic.seed = static_cast<std::uint64_t>(to_int(key, v));
  else if (key == "model.variant") {
    if (v.size() != 1 || v[0] < 'A' || v[0] > 'E') bad(key, v);
    c.variant = v[0];
  } else if (key == "model.activation") {
    if (v == "leaky_relu") c.activation = jscc::Activation::LeakyRelu;
    else if (v == "prelu") c.activation = jscc::Activation::Prelu;
    else bad(key, v);
  } else if (key == "model.feature_dim") c.feature_dim = static_cast<std::size_t>(to_positive(key, v));
  else if (key == "model.hidden_dim") c.hidden_dim = static_cast<std::size_t>(to_positive(key, v));
  else if (key == "model.hidden_layers") {
    const long long n = to_int(key, v);
    if (n < 0 || n > 64) bad(key, v);
    c.hidden_layers = static_cast<int>(n);
  } else if (key == "train.strategy") c.plan.strategy = jscc::parse_strategy(v);
  else if (key == "train.pretrain_schedule") c.plan.pretrain_encoder = parse_schedule(v);
  else if (key == "train.ae_schedule") c.plan.pretrain_ae = parse_schedule(v);
  else if (key == "train.joint_schedule") c.plan.joint = parse_schedule(v);
  else if (key == "train.batch_size") c.plan.batch_size = to_positive(key, v);
  else if (key == "train.momentum") c.plan.momentum = to_real(key, v);
  else if (key == "train.weight_decay") c.plan.weight_decay = to_real(key, v);
  else if (key == "train.l1_weight") c.plan.l1_weight = to_real(key, v);
  else if (key == "digital.latent_dim") c.latent_dim = static_cast<std::size_t>(to_positive(key, v));
  else if (key == "digital.lambdas") {
    c.lambdas.clear();
    for (const auto& item : split_list(v)) c.lambdas.push_back(to_real(key, item));
  } else if (key == "digital.mixtures") c.mixture_components = to_positive(key, v);
  else if (key == "digital.epochs") c.digital_train.epochs = to_positive(key, v);
  else if (key == "digital.lr") c.digital_train.learning_rate = to_real(key, v);
  else if (key == "digital.late_lr") c.digital_train.late_learning_rate = to_real(key, v);
  else if (key == "digital.late_from_epoch") c.digital_train.late_from_epoch = to_positive(key, v);
  else if (key == "digital.gmm_lr") c.digital_train.gmm_learning_rate = to_real(key, v);
  else if (key == "digital.batch_size") c.digital_train.batch_size = to_positive(key, v);
  else if (key == "digital.fading_protocol") {
    if (v == "outage") c.fading_protocol = FadingProtocol::Outage;
    else if (v == "csi") c.fading_protocol = FadingProtocol::Csi;
    else bad(key, v);
  } else if (key == "digital.trials") c.fading_trials = static_cast<std::size_t>(to_positive(key, v));
  else if (key == "channel.mode") {
    if (v == "awgn") c.mode = channel::Mode::Awgn;
    else if (v == "slow_fading") c.mode = channel::Mode::SlowFading;
    else bad(key, v);
  } else if (key == "channel.fading_variance") c.fading_variance = to_real(key, v);
  else if (key == "channel.snr_train") c.snr_train = parse_snr_list(v);
  else if (key == "channel.snr_test") c.snr_test = parse_snr_list(v);
  else if (key == "channel.bandwidth") {
    c.bandwidths.clear();
    for (const auto& item : split_list(v)) c.bandwidths.push_back(static_cast<std::size_t>(to_positive(key, item)));
  } else if (key == "eval.metric") {
    if (v == "l2") c.metric = retrieval::Metric::L2;
    else if (v == "cosine") c.metric = retrieval::Metric::Cosine;
    else bad(key, v);
  } else if (key == "eval.exclude_self") c.exclude_self = to_bool(key, v);
  else if (key == "seeds") {
    c.seeds.clear();
    for (const auto& item : split_list(v)) {
      const long long s = to_int(key, item);
      if (s < 0) bad(key, item);
      c.seeds.push_back(static_cast<std::uint64_t>(s));
    }
  } else if (key == "out") c.out_dir = v;
  else throw Error(Errc::BadConfig, "unknown config key '" + key + "'");
}

void ExperimentConfig::validate() const {
  if (snr_train.empty()) throw Error(Errc::BadConfig, "channel.snr_train is empty");
  if (bandwidths.empty()) throw Error(Errc::BadConfig, "channel.bandwidth is empty");
  if (seeds.empty()) throw Error(Errc::BadConfig, "seeds is empty");
  if (scheme == Scheme::Digital && lambdas.empty())
    throw Error(Errc::BadConfig, "digital.lambdas is empty");
  for (std::size_t i = 1; i < lambdas.size(); ++i)
    if (!(lambdas[i] > lambdas[i - 1]))
      throw Error(Errc::BadConfig, "digital.lambdas must be strictly ascending");
  if (!(fading_variance > 0.0)) throw Error(Errc::BadConfig, "channel.fading_variance must be > 0");
  if (data_path.empty()) {
    if (synthetic.num_ids < 2 || synthetic.samples_per_id < 2 || synthetic.input_dim < 1 ||
        synthetic.cluster_spread < 0.0)
      throw Error(Errc::BadConfig, "invalid synthetic dataset spec");
  } else {
    std::ifstream probe(data_path);
    if (!probe) throw Error(Errc::BadConfig, "data.path '" + data_path + "' does not exist");
  }
  if (scheme == Scheme::Digital && latent_dim > feature_dim)
    throw Error(Errc::BadConfig, "digital.latent_dim exceeds model.feature_dim");
  if (scheme == Scheme::JsccAe) (void)jscc::JsccModelSpec::variant(variant, feature_dim, 1);
}

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base) {
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(Errc::BadConfig, "line " + std::to_string(line_no) + ": expected key=value");
    try {
      apply(base, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(Errc::BadConfig, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

ExperimentConfig load_config(const std::string& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), std::move(base));
}

std::map<std::string, std::string> canonical(const ExperimentConfig& c) {
  std::map<std::string, std::string> m;
  const auto sz = [](std::size_t v) { return std::to_string(v); };
  m["scheme"] = to_string(c.scheme);
  m["data.path"] = c.data_path;
  if (c.data_path.empty()) {
    m["data.num_ids"] = std::to_string(c.synthetic.num_ids);
    m["data.samples_per_id"] = std::to_string(c.synthetic.samples_per_id);
    m["data.input_dim"] = std::to_string(c.synthetic.input_dim);
    m["data.cluster_spread"] = format_real(c.synthetic.cluster_spread);
    m["data.seed"] = std::to_string(c.synthetic.seed);
  }
  m["model.variant"] = std::string(1, c.variant);
  m["model.activation"] = c.activation == jscc::Activation::Prelu ? "prelu" : "leaky_relu";
  m["model.feature_dim"] = sz(c.feature_dim);
  m["model.hidden_dim"] = sz(c.hidden_dim);
  m["model.hidden_layers"] = std::to_string(c.hidden_layers);
  m["train.strategy"] = jscc::to_string(c.plan.strategy);
  m["train.pretrain_schedule"] = schedule_text(c.plan.pretrain_encoder);
  m["train.ae_schedule"] = schedule_text(c.plan.pretrain_ae);
  m["train.joint_schedule"] = schedule_text(c.plan.joint);
  m["train.batch_size"] = std::to_string(c.plan.batch_size);
  m["train.momentum"] = format_real(c.plan.momentum);
  m["train.weight_decay"] = format_real(c.plan.weight_decay);
  m["train.l1_weight"] = format_real(c.plan.l1_weight);
  m["digital.latent_dim"] = sz(c.latent_dim);
  m["digital.lambdas"] = list_text(c.lambdas, format_real);
  m["digital.mixtures"] = std::to_string(c.mixture_components);
  m["digital.epochs"] = std::to_string(c.digital_train.epochs);
  m["digital.lr"] = format_real(c.digital_train.learning_rate);
  m["digital.late_lr"] = format_real(c.digital_train.late_learning_rate);
  m["digital.late_from_epoch"] = std::to_string(c.digital_train.late_from_epoch);
  m["digital.gmm_lr"] = format_real(c.digital_train.gmm_learning_rate);
  m["digital.batch_size"] = std::to_string(c.digital_train.batch_size);
  m["digital.fading_protocol"] = c.fading_protocol == FadingProtocol::Csi ? "csi" : "outage";
  m["digital.trials"] = sz(c.fading_trials);
  m["channel.mode"] = c.mode == channel::Mode::SlowFading ? "slow_fading" : "awgn";
  m["channel.fading_variance"] = format_real(c.fading_variance);
  m["channel.snr_train"] = list_text(c.snr_train, format_real);
  m["channel.snr_test"] = list_text(c.snr_test, format_real);
  m["channel.bandwidth"] = list_text(c.bandwidths, sz);
  m["eval.metric"] = c.metric == retrieval::Metric::Cosine ? "cosine" : "l2";
  m["eval.exclude_self"] = c.exclude_self ? "true" : "false";
  m["seeds"] = list_text(c.seeds, [](std::uint64_t s) { return std::to_string(s); });
  return m;
}

}  // namespace edgeret::config
