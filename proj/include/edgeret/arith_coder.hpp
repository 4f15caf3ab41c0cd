#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "edgeret/entropy_model.hpp"

namespace edgeret::ac {

inline constexpr int kFreqBits = 16;
inline constexpr std::uint32_t kFreqTotal = 1u << kFreqBits;
inline constexpr std::int32_t kMaxSupportWidth = 1 << 15;
inline constexpr std::int32_t kDefaultSupportMin = -64;
inline constexpr std::int32_t kDefaultSupportMax = 63;

struct Support {
  std::int32_t min = kDefaultSupportMin;
  std::int32_t max = kDefaultSupportMax;
};

// Integer frequency table over [q_min, q_max] plus one trailing escape slot.
// cumulative has (q_max - q_min + 3) entries, starts at 0 and ends at
// kFreqTotal; every slot has frequency >= 1.
struct PmfTable {
  std::int32_t q_min = 0;
  std::int32_t q_max = 0;
  std::vector<std::uint32_t> cumulative;

  std::size_t slot_count() const noexcept { return cumulative.size() - 1; }
  std::size_t escape_slot() const noexcept { return slot_count() - 1; }
  std::uint32_t freq(std::size_t slot) const {
    return cumulative[slot + 1] - cumulative[slot];
  }
  bool in_support(std::int32_t q) const noexcept { return q >= q_min && q <= q_max; }

  // Ideal codelength of q under this table, including escape payload.
  double codelength_bits(std::int32_t q) const;
};

struct Bitstream {
  std::vector<std::uint8_t> bytes;
  std::uint64_t bit_count = 0;

  bool operator==(const Bitstream&) const = default;
};

PmfTable build_table(const entropy::GmmParams& params, Support support = {});

// Out-of-support symbols are sent as the escape slot followed by their
// 16-bit two's complement value. Throws SymbolOverflow beyond int16 range.
Bitstream encode(const entropy::QuantizedVector& symbols, const PmfTable& table);

// Decodes the first n symbols. Throws TruncatedStream if the stream ends
// before n symbols are recovered.
entropy::QuantizedVector decode(const Bitstream& bits, std::size_t n,
                                const PmfTable& table);

// On-disk form: 4-byte little-endian bit_count, then the packed bytes.
void write_bitstream(std::ostream& out, const Bitstream& bits);
Bitstream read_bitstream(std::istream& in);

}  // namespace edgeret::ac
