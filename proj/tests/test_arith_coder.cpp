#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "edgeret/arith_coder.hpp"
#include "edgeret/error.hpp"

using namespace edgeret;
using namespace edgeret::ac;
using entropy::GmmParams;
using entropy::QuantizedVector;

namespace {

GmmParams gaussian(double mu, double sigma) {
  GmmParams p;
  p.weight_logits = {0.0};
  p.means = {mu};
  p.scale_logits = {entropy::softplus_inverse(sigma)};
  return p;
}

QuantizedVector qv(std::vector<std::int32_t> s) {
  QuantizedVector q;
  q.symbols = std::move(s);
  return q;
}

// Draws symbols from the table's own integer frequencies (escape excluded).
std::vector<std::int32_t> sample_table(const PmfTable& t, std::size_t n, std::mt19937_64& rng) {
  std::vector<double> w;
  for (std::size_t s = 0; s + 1 < t.slot_count(); ++s) w.push_back(t.freq(s));
  std::discrete_distribution<std::size_t> d(w.begin(), w.end());
  std::vector<std::int32_t> out(n);
  for (auto& v : out) v = t.q_min + static_cast<std::int32_t>(d(rng));
  return out;
}

}  // namespace

TEST_CASE("build_table examples") {
  const PmfTable t = build_table(gaussian(0, 1), {-8, 8});
  auto slot = [&](int q) { return static_cast<std::size_t>(q - t.q_min); };
  CHECK(t.freq(slot(0)) > t.freq(slot(1)));
  CHECK(t.freq(slot(1)) == t.freq(slot(-1)));
  CHECK(t.cumulative.front() == 0);
  CHECK(t.cumulative.back() == kFreqTotal);
  CHECK(t.slot_count() == 18);

  const PmfTable d = build_table(gaussian(0, 1), {0, 0});
  CHECK(d.slot_count() == 2);
  CHECK(d.freq(0) > 0);
  CHECK(d.freq(1) > 0);
  CHECK(d.cumulative.back() == kFreqTotal);
}

TEST_CASE("build_table invariants over random mixtures") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> s(0.05, 60.0);
  for (int t = 0; t < 200; ++t) {
    GmmParams p;
    for (int k = 0; k < 1 + t % 9; ++k) {
      p.weight_logits.push_back(n(rng));
      p.means.push_back(10 * n(rng));
      p.scale_logits.push_back(entropy::softplus_inverse(s(rng)));
    }
    const PmfTable tab = build_table(p);
    REQUIRE(tab.cumulative.size() == static_cast<std::size_t>(tab.q_max - tab.q_min + 3));
    CHECK(tab.cumulative.front() == 0);
    CHECK(tab.cumulative.back() == kFreqTotal);
    for (std::size_t i = 0; i + 1 < tab.cumulative.size(); ++i)
      CHECK(tab.cumulative[i] < tab.cumulative[i + 1]);
  }
}

TEST_CASE("build_table errors") {
  try {
    (void)build_table(gaussian(0, 1), {0, kMaxSupportWidth});
    FAIL("expected SupportTooWide");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::SupportTooWide);
  }
  CHECK_NOTHROW((void)build_table(gaussian(0, 1), {0, kMaxSupportWidth - 1}));
  CHECK_THROWS_AS((void)build_table(gaussian(0, 1), {3, 2}), Error);
}

TEST_CASE("empty input encodes to at most 32 flush bits") {
  const PmfTable t = build_table(gaussian(0, 2));
  const Bitstream b = encode(QuantizedVector{}, t);
  CHECK(b.bit_count <= 32);
  CHECK(decode(b, 0, t).symbols.empty());
}

TEST_CASE("small roundtrips, escapes and prefixes") {
  const PmfTable t = build_table(gaussian(0, 3));
  const QuantizedVector s = qv({0, 1, -1, 5, -7});
  const Bitstream b = encode(s, t);
  CHECK(b.bit_count <= 8 * b.bytes.size());
  CHECK(8 * b.bytes.size() <= b.bit_count + 7);
  CHECK(decode(b, s.dim(), t) == s);
  CHECK(decode(b, 3, t).symbols == std::vector<std::int32_t>{0, 1, -1});

  const QuantizedVector esc = qv({0, 200, -3, -32768, 32767, 64, -65});
  CHECK(decode(encode(esc, t), esc.dim(), t) == esc);

  try {
    (void)encode(qv({40000}), t);
    FAIL("expected SymbolOverflow");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::SymbolOverflow);
  }
}

TEST_CASE("decode past the end of the stream throws TruncatedStream") {
  const PmfTable t = build_table(gaussian(0, 30));
  std::mt19937_64 rng(4);
  const QuantizedVector s = qv(sample_table(t, 400, rng));
  Bitstream b = encode(s, t);
  b.bytes.resize(b.bytes.size() / 2);
  b.bit_count = 8 * b.bytes.size();
  try {
    (void)decode(b, s.dim(), t);
    FAIL("expected TruncatedStream");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::TruncatedStream);
  }
}

TEST_CASE("fuzz: 1000 random vectors roundtrip exactly") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<int> len(0, 300);
  std::uniform_real_distribution<double> sig(0.1, 40.0);
  for (int t = 0; t < 1000; ++t) {
    GmmParams p = gaussian(3 * n(rng), sig(rng));
    const PmfTable tab = build_table(p, {-64, 63});
    std::vector<std::int32_t> s(static_cast<std::size_t>(len(rng)));
    const double spread = sig(rng) * 2;
    for (auto& v : s) v = static_cast<std::int32_t>(std::lround(spread * n(rng)));
    const QuantizedVector q = qv(s);
    CHECK(decode(encode(q, tab), q.dim(), tab) == q);
  }
}

TEST_CASE("codelength close to the table cross-entropy") {
  std::mt19937_64 rng(7);
  for (double sigma : {0.5, 2.0, 10.0}) {
    const PmfTable t = build_table(gaussian(0.3, sigma));
    const auto s = sample_table(t, 100000, rng);
    double ideal = 0.0;
    for (auto v : s) ideal += t.codelength_bits(v);
    const Bitstream b = encode(qv(s), t);
    const double per_symbol = (static_cast<double>(b.bit_count) - 32.0) / 1e5;
    CHECK(per_symbol <= ideal / 1e5 + 0.05);
  }
}

TEST_CASE("coded length tracks entropy_bits") {
  std::mt19937_64 rng(8);
  const GmmParams p = gaussian(0.0, 3.0);
  const PmfTable t = build_table(p);
  const QuantizedVector q = qv(sample_table(t, 10000, rng));
  const double h = entropy::entropy_bits(q, p);
  const Bitstream b = encode(q, t);
  CHECK(static_cast<double>(b.bit_count) <= h + 32 + 0.02 * h);
  CHECK(static_cast<double>(b.bit_count) > h - 1);
}

TEST_CASE("bitstream serialization roundtrip") {
  const PmfTable t = build_table(gaussian(0, 4));
  const Bitstream b = encode(qv({1, 2, 3, -9, 100}), t);
  std::stringstream ss;
  write_bitstream(ss, b);
  const std::string raw = ss.str();
  REQUIRE(raw.size() == 4 + b.bytes.size());
  CHECK(static_cast<unsigned char>(raw[0]) == (b.bit_count & 0xFF));
  std::stringstream in(raw);
  CHECK(read_bitstream(in) == b);
  std::stringstream shortened(raw.substr(0, raw.size() - 1));
  CHECK_THROWS_AS((void)read_bitstream(shortened), Error);
}
