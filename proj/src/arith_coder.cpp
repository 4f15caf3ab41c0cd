#include "edgeret/arith_coder.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>

#include "edgeret/error.hpp"

namespace edgeret::ac {

namespace {

constexpr std::uint64_t kTop = 1ull << 32;
constexpr std::uint64_t kBottom = 1ull << 24;
constexpr std::uint32_t kRawTotalBits = 16;

// 32-bit range coder; carries are pushed back into already emitted bytes.
class RangeEncoder {
 public:
  void encode(std::uint32_t start, std::uint32_t freq, int total_bits) {
    const std::uint64_t r = range_ >> total_bits;
    low_ += static_cast<std::uint64_t>(start) * r;
    range_ = r * freq;
    if (low_ >= kTop) {
      propagate_carry();
      low_ -= kTop;
    }
    while (range_ < kBottom) {
      out_.push_back(static_cast<std::uint8_t>(low_ >> 24));
      low_ = (low_ << 8) & (kTop - 1);
      range_ <<= 8;
    }
  }

  Bitstream finish() {
    for (int shift = 24; shift >= 0; shift -= 8)
      out_.push_back(static_cast<std::uint8_t>(low_ >> shift));
    Bitstream bits;
    bits.bit_count = 8 * out_.size();
    bits.bytes = std::move(out_);
    return bits;
  }

 private:
  void propagate_carry() {
    std::size_t i = out_.size();
    while (i > 0) {
      --i;
      if (++out_[i] != 0) return;
    }
  }

  std::uint64_t low_ = 0;
  std::uint64_t range_ = kTop - 1;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(const Bitstream& bits) : bits_(bits) {
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
  }

  // Returns the scaled target within [0, 2^total_bits) and fixes the step.
  std::uint32_t target(int total_bits) {
    step_ = range_ >> total_bits;
    const std::uint64_t v = code_ / step_;
    const std::uint64_t limit = (1ull << total_bits) - 1;
    return static_cast<std::uint32_t>(std::min(v, limit));
  }

  void consume(std::uint32_t start, std::uint32_t freq) {
    code_ -= static_cast<std::uint64_t>(start) * step_;
    range_ = step_ * freq;
    while (range_ < kBottom) {
      code_ = ((code_ << 8) | next_byte()) & (kTop - 1);
      range_ <<= 8;
    }
  }

 private:
  std::uint64_t next_byte() {
    const std::size_t byte_len = static_cast<std::size_t>((bits_.bit_count + 7) / 8);
    if (pos_ >= byte_len || pos_ >= bits_.bytes.size())
      throw Error(Errc::TruncatedStream, "bitstream exhausted after " +
                                             std::to_string(pos_) + " bytes");
    return bits_.bytes[pos_++];
  }

  const Bitstream& bits_;
  std::size_t pos_ = 0;
  std::uint64_t code_ = 0;
  std::uint64_t range_ = kTop - 1;
  std::uint64_t step_ = 1;
};

}  // namespace

double PmfTable::codelength_bits(std::int32_t q) const {
  const double total = static_cast<double>(kFreqTotal);
  if (in_support(q))
    return -std::log2(freq(static_cast<std::size_t>(q - q_min)) / total);
  return -std::log2(freq(escape_slot()) / total) + kRawTotalBits;
}

PmfTable build_table(const entropy::GmmParams& params, Support support) {
  if (support.max < support.min)
    throw Error(Errc::BadSpec, "support maximum below minimum");
  const std::int64_t width =
      static_cast<std::int64_t>(support.max) - support.min + 1;
  if (width > kMaxSupportWidth)
    throw Error(Errc::SupportTooWide,
                "support width " + std::to_string(width) + " exceeds 2^15");

  const std::size_t symbols = static_cast<std::size_t>(width);
  const std::size_t slots = symbols + 1;
  std::vector<double> mass(slots);
  double in_support = 0.0;
  for (std::size_t i = 0; i < symbols; ++i) {
    mass[i] = entropy::gmm_pmf(support.min + static_cast<std::int32_t>(i), params);
    in_support += mass[i];
  }
  mass[symbols] = std::max(0.0, 1.0 - in_support);
  const double norm = in_support + mass[symbols];

  // One guaranteed count per slot, the rest shared by largest remainder.
  const double spare = static_cast<double>(kFreqTotal - slots);
  std::vector<std::uint32_t> freq(slots);
  std::vector<double> remainder(slots);
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i < slots; ++i) {
    const double share = mass[i] / norm * spare;
    const double whole = std::floor(share);
    freq[i] = 1 + static_cast<std::uint32_t>(whole);
    remainder[i] = share - whole;
    assigned += freq[i];
  }
  std::vector<std::size_t> order(slots);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainder[a] > remainder[b];
  });
  for (std::size_t i = 0; assigned < kFreqTotal; i = (i + 1) % slots) {
    ++freq[order[i]];
    ++assigned;
  }
  while (assigned > kFreqTotal) {
    // Rounding overshoot; take from the largest slot.
    auto it = std::max_element(freq.begin(), freq.end());
    --*it;
    --assigned;
  }

  PmfTable table;
  table.q_min = support.min;
  table.q_max = support.max;
  table.cumulative.resize(slots + 1, 0);
  for (std::size_t i = 0; i < slots; ++i)
    table.cumulative[i + 1] = table.cumulative[i] + freq[i];
  return table;
}

Bitstream encode(const entropy::QuantizedVector& symbols, const PmfTable& table) {
  RangeEncoder enc;
  for (std::int32_t q : symbols.symbols) {
    if (table.in_support(q)) {
      const auto slot = static_cast<std::size_t>(q - table.q_min);
      enc.encode(table.cumulative[slot], table.freq(slot), kFreqBits);
      continue;
    }
    if (q < -32768 || q > 32767)
      throw Error(Errc::SymbolOverflow,
                  "symbol " + std::to_string(q) + " exceeds the 16-bit escape range");
    const std::size_t esc = table.escape_slot();
    enc.encode(table.cumulative[esc], table.freq(esc), kFreqBits);
    const auto raw = static_cast<std::uint16_t>(static_cast<std::int16_t>(q));
    enc.encode(raw, 1, kRawTotalBits);
  }
  return enc.finish();
}

entropy::QuantizedVector decode(const Bitstream& bits, std::size_t n,
                                const PmfTable& table) {
  RangeDecoder dec(bits);
  entropy::QuantizedVector out;
  out.symbols.reserve(n);
  const auto& cum = table.cumulative;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t t = dec.target(kFreqBits);
    // Last slot whose cumulative start is <= t.
    const auto it = std::upper_bound(cum.begin(), cum.end() - 1, t);
    const auto slot = static_cast<std::size_t>(it - cum.begin()) - 1;
    dec.consume(cum[slot], table.freq(slot));
    if (slot != table.escape_slot()) {
      out.symbols.push_back(table.q_min + static_cast<std::int32_t>(slot));
      continue;
    }
    const std::uint32_t raw = dec.target(kRawTotalBits);
    dec.consume(raw, 1);
    out.symbols.push_back(static_cast<std::int16_t>(static_cast<std::uint16_t>(raw)));
  }
  return out;
}

void write_bitstream(std::ostream& out, const Bitstream& bits) {
  const auto count = static_cast<std::uint32_t>(bits.bit_count);
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((count >> (8 * i)) & 0xFF));
  out.write(reinterpret_cast<const char*>(bits.bytes.data()),
            static_cast<std::streamsize>(bits.bytes.size()));
  if (!out) throw Error(Errc::Io, "failed writing bitstream");
}

Bitstream read_bitstream(std::istream& in) {
  unsigned char header[4];
  if (!in.read(reinterpret_cast<char*>(header), 4))
    throw Error(Errc::TruncatedStream, "missing bitstream header");
  Bitstream bits;
  for (int i = 0; i < 4; ++i) bits.bit_count |= static_cast<std::uint64_t>(header[i]) << (8 * i);
  bits.bytes.resize(static_cast<std::size_t>((bits.bit_count + 7) / 8));
  if (!in.read(reinterpret_cast<char*>(bits.bytes.data()),
               static_cast<std::streamsize>(bits.bytes.size())))
    throw Error(Errc::TruncatedStream, "bitstream shorter than its header claims");
  return bits;
}

}  // namespace edgeret::ac
