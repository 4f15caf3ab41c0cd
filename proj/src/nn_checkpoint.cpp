#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "edgeret/error.hpp"
#include "edgeret/nn.hpp"

namespace edgeret::nn {

namespace {

constexpr char kMagic[4] = {'E', 'J', 'N', 'N'};

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw Error(Errc::BadCheckpoint, "unexpected end of checkpoint");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8))
    throw Error(Errc::BadCheckpoint, "unexpected end of checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

std::unique_ptr<Layer> make_layer(std::uint32_t kind, std::uint32_t in, std::uint32_t out) {
  switch (static_cast<LayerKind>(kind)) {
    case LayerKind::Dense: return std::make_unique<Dense>(in, out);
    case LayerKind::BatchNorm: return std::make_unique<BatchNorm>(in);
    case LayerKind::LeakyRelu: return std::make_unique<LeakyRelu>(in);
    case LayerKind::Prelu: return std::make_unique<Prelu>(in);
  }
  throw Error(Errc::BadCheckpoint, "unknown layer tag " + std::to_string(kind));
}

}  // namespace

void save_network(std::ostream& out, Network& net) {
  out.write(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(net.size()));
  for (std::size_t i = 0; i < net.size(); ++i) {
    const Layer& l = net.layer(i);
    put_u32(out, static_cast<std::uint32_t>(l.kind()));
    put_u32(out, static_cast<std::uint32_t>(l.in_dim()));
    put_u32(out, static_cast<std::uint32_t>(l.out_dim()));
  }
  for (std::size_t i = 0; i < net.size(); ++i)
    for (std::span<double> block : net.layer(i).state())
      for (double v : block) put_f64(out, v);
  if (!out) throw Error(Errc::Io, "failed writing checkpoint");
}

Network load_network(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw Error(Errc::BadCheckpoint, "missing EJNN magic");
  const std::uint32_t version = get_u32(in);
  if (version != kCheckpointVersion)
    throw Error(Errc::BadCheckpoint, "unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = get_u32(in);
  Network net;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t kind = get_u32(in);
    const std::uint32_t lin = get_u32(in);
    const std::uint32_t lout = get_u32(in);
    auto layer = make_layer(kind, lin, lout);
    if (layer->out_dim() != lout)
      throw Error(Errc::BadCheckpoint, "layer manifest dims inconsistent");
    net.add(std::move(layer));
  }
  for (std::size_t i = 0; i < net.size(); ++i)
    for (std::span<double> block : net.layer(i).state())
      for (double& v : block) v = get_f64(in);
  net.set_mode(Mode::Eval);
  return net;
}

void save_network(const std::string& path, Network& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot open " + path + " for writing");
  save_network(out, net);
}

Network load_network(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  return load_network(in);
}

}  // namespace edgeret::nn
