#ifndef IPFSIM_COMPRESSED_HPP
#define IPFSIM_COMPRESSED_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ipfsim/types.hpp"

namespace ipf {

// 36-bit destination record: a 20-bit window base (low bits of the base line
// address; high bits come from the source at decode time) plus eight 2-bit
// saturating confidences guarding window offsets 0..7.

inline constexpr unsigned kWindowLines = 8;
inline constexpr unsigned kBaseBits = 20;
inline constexpr std::uint64_t kBaseMask = (1ull << kBaseBits) - 1;
inline constexpr std::uint64_t kRegionLines = 1ull << kBaseBits;
inline constexpr unsigned kEntryBits = 36;
inline constexpr std::uint8_t kConfMax = 3;

struct CompressedEntry {
  std::uint32_t base_low20 = 0;
  std::array<std::uint8_t, kWindowLines> conf{};

  bool marked(unsigned i) const { return conf[i] > 0; }
  bool live() const {
    for (auto c : conf)
      if (c > 0) return true;
    return false;
  }
  unsigned marked_count() const {
    unsigned n = 0;
    for (auto c : conf) n += (c > 0);
    return n;
  }

  // Bit-exact 36-bit image: base_low20 in bits 0-19, conf[i] in bits
  // 20+2i .. 21+2i.
  std::uint64_t pack() const;
  static CompressedEntry unpack(std::uint64_t bits);

  bool operator==(const CompressedEntry&) const = default;
};

// Window base with the source's high bits spliced in.
LineAddr decode_base(const CompressedEntry& entry, LineAddr source);

// True iff source and destination agree in all line-address bits above the
// low 20 (the destination window can sit anywhere in that shared region).
bool representable(LineAddr source, LineAddr destination);

enum class UpdateStatus {
  Inserted,         // destination newly marked in the chosen window
  Reinforced,       // destination was already marked; confidences kept
  Dropped,          // representable but excluded by the chosen window
  NotRepresentable  // high bits differ; entry untouched
};

struct UpdateResult {
  CompressedEntry entry;
  UpdateStatus status;
};

// Window-slide update: choose the 8-line window covering the most marked
// lines (counting the new destination), breaking ties by (1) window contains
// the new destination, (2) window base equals the current base, (3) smallest
// base. Candidate bases span [min(marks), max(marks)] clamped so the window
// stays inside the shared 2^20-line region.
UpdateResult update(const std::optional<CompressedEntry>& current,
                    LineAddr source, LineAddr new_destination);

// Prefetch targets for a window limit in {4, 8, 12}. Limit 4 considers
// offsets 0..3 only; 8 all marked offsets; 12 adds base+8..base+11 as an
// unconditional next-line extension. Unmarked offsets are never targeted.
std::vector<LineAddr> targets(const CompressedEntry& entry, LineAddr source,
                              std::uint8_t threshold, unsigned window_limit);

// Confidence feedback. weaken() returns false once the entry has no marked
// offsets left (caller should drop it).
void reinforce(CompressedEntry& entry, unsigned offset);
bool weaken(CompressedEntry& entry, unsigned offset);

// Dense 36-bit stream packing, LSB first: entry j occupies stream bits
// [36j, 36j+35]. 512 entries -> exactly 2304 bytes.
std::vector<std::uint8_t> pack_entries(std::span<const CompressedEntry> entries);
std::vector<CompressedEntry> unpack_entries(std::span<const std::uint8_t> bytes,
                                            std::size_t count);

}  // namespace ipf

#endif
