#ifndef IPFSIM_HIERARCHY_HPP
#define IPFSIM_HIERARCHY_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <unordered_map>
#include <vector>

#include "ipfsim/compressed.hpp"
#include "ipfsim/types.hpp"

namespace ipf {

struct TableConfig {
  std::uint32_t sets = 128;  // 128x16 = 2K entries; 256x16 = 4K
  std::uint32_t ways = 16;

  std::uint32_t entries() const { return sets * ways; }
};

inline constexpr unsigned kTableTagBits = 51;
inline constexpr unsigned kTableEntryBits = kTableTagBits + kEntryBits;  // 87

struct BudgetReport {
  std::uint64_t history_bytes = 0;
  std::uint64_t attached_bytes = 0;
  std::uint64_t table_bytes = 0;
  std::uint64_t total_bytes = 0;
};

// history = 64x78 bits; attached = lines x 36 bits; table = entries x 87
// bits. The total charges the history at its quarter-KB-aligned footprint
// (768 B), which is how the published totals are composed.
BudgetReport compute_budget(std::uint32_t table_entries,
                            std::uint32_t l1_lines = 512);

// Compressed-entry placement: one optional entry attached per L1I line plus a
// set-associative virtualized table for evicted or cold sources. Metadata
// migrates with the line on fill and eviction. When `use_attached` is false
// every entry lives in the table (the flat-table variant).
class MetadataHierarchy {
 public:
  MetadataHierarchy(const TableConfig& cfg, bool use_attached = true);

  void on_l1_fill(LineAddr line);
  void on_l1_evict(LineAddr line);

  struct TriggerHit {
    CompressedEntry entry;
    bool from_table = false;  // table-sourced triggers pay the issue delay
  };
  std::optional<TriggerHit> lookup_for_trigger(LineAddr line);

  // Learns source -> dest, locating or creating the entry where the source
  // currently lives. Returns the window-update status for uncovered counting.
  UpdateStatus observe_pair(LineAddr source, LineAddr dest,
                            bool source_l1_resident);

  void reinforce_target(LineAddr source, LineAddr target);
  void weaken_target(LineAddr source, LineAddr target);

  std::size_t attached_count() const { return attached_.size(); }
  std::size_t table_count() const;
  // At most one live entry per source across attached + table.
  bool has_entry(LineAddr source) const;
  std::optional<CompressedEntry> peek(LineAddr source) const;

  // Debug dump: per record, 8-byte LE source line then 11 bytes packing
  // {tag:51, payload:36} LSB-first.
  void dump(std::ostream& os) const;

  const TableConfig& config() const { return cfg_; }

 private:
  struct TableWay {
    bool valid = false;
    std::uint64_t tag = 0;
    CompressedEntry payload;
    std::uint64_t lru = 0;
  };

  std::uint32_t set_of(LineAddr source) const;
  std::uint64_t tag_of(LineAddr source) const;
  TableWay* table_find(LineAddr source);
  const TableWay* table_find(LineAddr source) const;
  void table_install(LineAddr source, const CompressedEntry& entry);
  CompressedEntry* locate(LineAddr source);
  void erase(LineAddr source);

  TableConfig cfg_;
  bool use_attached_;
  std::uint32_t set_shift_;
  std::unordered_map<LineAddr, CompressedEntry> attached_;
  std::vector<TableWay> table_;
  // reverse map way index -> source line, to reconstruct lines from tags
  std::vector<LineAddr> table_source_;
  std::uint64_t tick_ = 0;
};

}  // namespace ipf

#endif
