#include "ipfsim/compressed.hpp"

#include <algorithm>
#include <cassert>

namespace ipf {

std::uint64_t CompressedEntry::pack() const {
  std::uint64_t bits = base_low20 & kBaseMask;
  for (unsigned i = 0; i < kWindowLines; ++i) {
    bits |= static_cast<std::uint64_t>(conf[i] & 0x3) << (kBaseBits + 2 * i);
  }
  return bits;
}

CompressedEntry CompressedEntry::unpack(std::uint64_t bits) {
  CompressedEntry e;
  e.base_low20 = static_cast<std::uint32_t>(bits & kBaseMask);
  for (unsigned i = 0; i < kWindowLines; ++i) {
    e.conf[i] = static_cast<std::uint8_t>((bits >> (kBaseBits + 2 * i)) & 0x3);
  }
  return e;
}

LineAddr decode_base(const CompressedEntry& entry, LineAddr source) {
  return (source & ~kBaseMask) | entry.base_low20;
}

bool representable(LineAddr source, LineAddr destination) {
  return (source >> kBaseBits) == (destination >> kBaseBits);
}

namespace {

// Coverage of [base, base+7] over the marked lines.
unsigned coverage(LineAddr base, std::span<const LineAddr> marks) {
  unsigned n = 0;
  for (LineAddr m : marks) {
    if (m >= base && m < base + kWindowLines) ++n;
  }
  return n;
}

}  // namespace

UpdateResult update(const std::optional<CompressedEntry>& current,
                    LineAddr source, LineAddr new_destination) {
  if (!representable(source, new_destination)) {
    return {current.value_or(CompressedEntry{}), UpdateStatus::NotRepresentable};
  }

  const LineAddr region_start = source & ~kBaseMask;
  const LineAddr base_max = region_start + kRegionLines - kWindowLines;

  // Marked absolute lines of the current entry, plus the new destination.
  LineAddr old_base = 0;
  std::vector<LineAddr> marks;
  bool dest_was_marked = false;
  const bool have_current = current.has_value() && current->live();
  if (have_current) {
    old_base = decode_base(*current, source);
    for (unsigned i = 0; i < kWindowLines; ++i) {
      if (current->marked(i)) marks.push_back(old_base + i);
    }
    dest_was_marked = new_destination >= old_base &&
                      new_destination < old_base + kWindowLines &&
                      current->marked(static_cast<unsigned>(new_destination - old_base));
  }
  if (!dest_was_marked) marks.push_back(new_destination);
  std::sort(marks.begin(), marks.end());
  marks.erase(std::unique(marks.begin(), marks.end()), marks.end());

  const LineAddr cand_lo = std::min(std::max(marks.front(), region_start), base_max);
  const LineAddr cand_hi = std::min(std::max(marks.back(), region_start), base_max);

  // Only bases within 7 lines below a mark can cover anything, so it is
  // enough to scan those; max coverage is always >= 1.
  std::vector<LineAddr> cands;
  for (LineAddr m : marks) {
    LineAddr lo = m >= kWindowLines - 1 ? m - (kWindowLines - 1) : 0;
    lo = std::max(lo, cand_lo);
    for (LineAddr b = lo; b <= std::min(m, cand_hi); ++b) cands.push_back(b);
  }
  std::sort(cands.begin(), cands.end());
  cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
  assert(!cands.empty());

  unsigned best_cov = 0;
  for (LineAddr b : cands) best_cov = std::max(best_cov, coverage(b, marks));

  // Tie order: contains the new destination, keeps the current base,
  // smallest base. cands is sorted, so the first surviving candidate wins.
  LineAddr chosen = 0;
  bool found = false;
  for (int pass = 0; pass < 3 && !found; ++pass) {
    for (LineAddr b : cands) {
      if (coverage(b, marks) != best_cov) continue;
      if (pass == 0 && !(new_destination >= b && new_destination < b + kWindowLines))
        continue;
      if (pass == 1 && !(have_current && b == old_base)) continue;
      chosen = b;
      found = true;
      break;
    }
  }
  assert(found);

  CompressedEntry next;
  next.base_low20 = static_cast<std::uint32_t>(chosen & kBaseMask);
  for (unsigned i = 0; i < kWindowLines; ++i) {
    const LineAddr abs_line = chosen + i;
    if (have_current && abs_line >= old_base &&
        abs_line < old_base + kWindowLines) {
      next.conf[i] = current->conf[static_cast<unsigned>(abs_line - old_base)];
    }
  }

  UpdateStatus status;
  if (new_destination >= chosen && new_destination < chosen + kWindowLines) {
    const unsigned off = static_cast<unsigned>(new_destination - chosen);
    if (next.conf[off] > 0) {
      status = UpdateStatus::Reinforced;
    } else {
      next.conf[off] = 1;
      status = UpdateStatus::Inserted;
    }
  } else {
    status = UpdateStatus::Dropped;
  }
  assert(next.live());
  return {next, status};
}

std::vector<LineAddr> targets(const CompressedEntry& entry, LineAddr source,
                              std::uint8_t threshold, unsigned window_limit) {
  assert(window_limit == 4 || window_limit == 8 || window_limit == 12);
  const std::uint8_t min_conf = std::max<std::uint8_t>(threshold, 1);
  const LineAddr base = decode_base(entry, source);
  const unsigned span = std::min(window_limit, kWindowLines);

  std::vector<LineAddr> out;
  for (unsigned i = 0; i < span; ++i) {
    if (entry.conf[i] >= min_conf) out.push_back(base + i);
  }
  if (window_limit == 12) {
    // Next-line extension past the encodable window, confidence-free.
    for (unsigned i = kWindowLines; i < 12; ++i) out.push_back(base + i);
  }
  return out;
}

void reinforce(CompressedEntry& entry, unsigned offset) {
  assert(offset < kWindowLines);
  if (entry.conf[offset] > 0 && entry.conf[offset] < kConfMax)
    ++entry.conf[offset];
}

bool weaken(CompressedEntry& entry, unsigned offset) {
  assert(offset < kWindowLines);
  if (entry.conf[offset] > 0) --entry.conf[offset];
  return entry.live();
}

std::vector<std::uint8_t> pack_entries(std::span<const CompressedEntry> entries) {
  std::vector<std::uint8_t> bytes((entries.size() * kEntryBits + 7) / 8, 0);
  std::size_t bitpos = 0;
  for (const auto& e : entries) {
    std::uint64_t bits = e.pack();
    for (unsigned i = 0; i < kEntryBits; ++i, ++bitpos) {
      if ((bits >> i) & 1) bytes[bitpos >> 3] |= std::uint8_t(1u << (bitpos & 7));
    }
  }
  return bytes;
}

std::vector<CompressedEntry> unpack_entries(std::span<const std::uint8_t> bytes,
                                            std::size_t count) {
  std::vector<CompressedEntry> out;
  out.reserve(count);
  std::size_t bitpos = 0;
  for (std::size_t j = 0; j < count; ++j) {
    std::uint64_t bits = 0;
    for (unsigned i = 0; i < kEntryBits; ++i, ++bitpos) {
      if ((bytes[bitpos >> 3] >> (bitpos & 7)) & 1) bits |= 1ull << i;
    }
    out.push_back(CompressedEntry::unpack(bits));
  }
  return out;
}

}  // namespace ipf
