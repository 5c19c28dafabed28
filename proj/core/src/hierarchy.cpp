#include "ipfsim/hierarchy.hpp"

#include <algorithm>
#include <cassert>
#include <ostream>

#include "ipfsim/eip.hpp"

namespace ipf {

BudgetReport compute_budget(std::uint32_t table_entries,
                            std::uint32_t l1_lines) {
  BudgetReport r;
  r.history_bytes = HistoryQueue::byte_cost();  // 64 x 78 bits = 624
  r.attached_bytes = std::uint64_t(l1_lines) * kEntryBits / 8;
  r.table_bytes = std::uint64_t(table_entries) * kTableEntryBits / 8;
  // Quarter-KB alignment for the history component; the published totals
  // (24.75 KB / 46.5 KB) decompose as 0.75 KB + 2.25 KB + table.
  const std::uint64_t history_aligned = (r.history_bytes + 255) / 256 * 256;
  r.total_bytes = history_aligned + r.attached_bytes + r.table_bytes;
  return r;
}

namespace {

std::uint32_t log2_exact(std::uint32_t v) {
  assert(v > 0 && (v & (v - 1)) == 0);
  std::uint32_t s = 0;
  while ((1u << s) != v) ++s;
  return s;
}

}  // namespace

MetadataHierarchy::MetadataHierarchy(const TableConfig& cfg, bool use_attached)
    : cfg_(cfg), use_attached_(use_attached), set_shift_(log2_exact(cfg.sets)) {
  table_.resize(std::size_t(cfg_.sets) * cfg_.ways);
  table_source_.resize(table_.size(), 0);
}

std::uint32_t MetadataHierarchy::set_of(LineAddr source) const {
  return static_cast<std::uint32_t>(source & (cfg_.sets - 1));
}

std::uint64_t MetadataHierarchy::tag_of(LineAddr source) const {
  return (source >> set_shift_) & ((1ull << kTableTagBits) - 1);
}

MetadataHierarchy::TableWay* MetadataHierarchy::table_find(LineAddr source) {
  TableWay* set = table_.data() + std::size_t(set_of(source)) * cfg_.ways;
  const std::uint64_t tag = tag_of(source);
  for (std::uint32_t w = 0; w < cfg_.ways; ++w) {
    if (set[w].valid && set[w].tag == tag) return set + w;
  }
  return nullptr;
}

const MetadataHierarchy::TableWay* MetadataHierarchy::table_find(
    LineAddr source) const {
  const TableWay* set = table_.data() + std::size_t(set_of(source)) * cfg_.ways;
  const std::uint64_t tag = tag_of(source);
  for (std::uint32_t w = 0; w < cfg_.ways; ++w) {
    if (set[w].valid && set[w].tag == tag) return set + w;
  }
  return nullptr;
}

void MetadataHierarchy::table_install(LineAddr source,
                                      const CompressedEntry& entry) {
  if (TableWay* hit = table_find(source)) {
    hit->payload = entry;
    hit->lru = ++tick_;
    return;
  }
  TableWay* set = table_.data() + std::size_t(set_of(source)) * cfg_.ways;
  TableWay* v = nullptr;
  for (std::uint32_t w = 0; w < cfg_.ways && !v; ++w) {
    if (!set[w].valid) v = set + w;
  }
  if (!v) {
    // Displaced entries are dropped; there is no spill tier below the table.
    v = set;
    for (std::uint32_t w = 1; w < cfg_.ways; ++w) {
      if (set[w].lru < v->lru) v = set + w;
    }
  }
  v->valid = true;
  v->tag = tag_of(source);
  v->payload = entry;
  v->lru = ++tick_;
  table_source_[v - table_.data()] = source;
}

void MetadataHierarchy::on_l1_fill(LineAddr line) {
  if (!use_attached_) return;
  if (TableWay* w = table_find(line)) {
    attached_[line] = w->payload;
    w->valid = false;
  }
}

void MetadataHierarchy::on_l1_evict(LineAddr line) {
  if (!use_attached_) return;
  auto it = attached_.find(line);
  if (it == attached_.end()) return;
  if (it->second.live()) table_install(line, it->second);
  attached_.erase(it);
}

std::optional<MetadataHierarchy::TriggerHit> MetadataHierarchy::lookup_for_trigger(
    LineAddr line) {
  if (use_attached_) {
    auto it = attached_.find(line);
    if (it != attached_.end() && it->second.live())
      return TriggerHit{it->second, false};
  }
  if (TableWay* w = table_find(line)) {
    w->lru = ++tick_;
    if (w->payload.live()) return TriggerHit{w->payload, true};
  }
  return std::nullopt;
}

UpdateStatus MetadataHierarchy::observe_pair(LineAddr source, LineAddr dest,
                                             bool source_l1_resident) {
  CompressedEntry* slot = locate(source);
  std::optional<CompressedEntry> current;
  if (slot) current = *slot;
  UpdateResult res = update(current, source, dest);
  if (res.status == UpdateStatus::NotRepresentable) return res.status;

  if (slot) {
    *slot = res.entry;
  } else if (use_attached_ && source_l1_resident) {
    attached_[source] = res.entry;
  } else {
    table_install(source, res.entry);
  }
  return res.status;
}

void MetadataHierarchy::reinforce_target(LineAddr source, LineAddr target) {
  CompressedEntry* slot = locate(source);
  if (!slot) return;
  const LineAddr base = decode_base(*slot, source);
  if (target >= base && target < base + kWindowLines)
    reinforce(*slot, static_cast<unsigned>(target - base));
}

void MetadataHierarchy::weaken_target(LineAddr source, LineAddr target) {
  CompressedEntry* slot = locate(source);
  if (!slot) return;
  const LineAddr base = decode_base(*slot, source);
  if (target >= base && target < base + kWindowLines) {
    if (!weaken(*slot, static_cast<unsigned>(target - base))) erase(source);
  }
}

std::size_t MetadataHierarchy::table_count() const {
  std::size_t n = 0;
  for (const TableWay& w : table_) n += w.valid;
  return n;
}

bool MetadataHierarchy::has_entry(LineAddr source) const {
  if (use_attached_ && attached_.count(source)) return true;
  return table_find(source) != nullptr;
}

std::optional<CompressedEntry> MetadataHierarchy::peek(LineAddr source) const {
  if (use_attached_) {
    auto it = attached_.find(source);
    if (it != attached_.end()) return it->second;
  }
  if (const TableWay* w = table_find(source)) return w->payload;
  return std::nullopt;
}

CompressedEntry* MetadataHierarchy::locate(LineAddr source) {
  if (use_attached_) {
    auto it = attached_.find(source);
    if (it != attached_.end()) return &it->second;
  }
  if (TableWay* w = table_find(source)) return &w->payload;
  return nullptr;
}

void MetadataHierarchy::erase(LineAddr source) {
  if (use_attached_ && attached_.erase(source)) return;
  if (TableWay* w = table_find(source)) w->valid = false;
}

void MetadataHierarchy::dump(std::ostream& os) const {
  auto emit = [&](LineAddr source, const CompressedEntry& e) {
    unsigned char buf[19] = {};
    for (int i = 0; i < 8; ++i)
      buf[i] = static_cast<unsigned char>(source >> (8 * i));
    const std::uint64_t tag = tag_of(source);
    const std::uint64_t payload = e.pack();
    // 87-bit record: tag in bits [0,51), payload in bits [51,87).
    for (unsigned b = 0; b < kTableTagBits; ++b) {
      if ((tag >> b) & 1) buf[8 + (b >> 3)] |= static_cast<unsigned char>(1u << (b & 7));
    }
    for (unsigned b = 0; b < kEntryBits; ++b) {
      const unsigned pos = kTableTagBits + b;
      if ((payload >> b) & 1)
        buf[8 + (pos >> 3)] |= static_cast<unsigned char>(1u << (pos & 7));
    }
    os.write(reinterpret_cast<const char*>(buf), sizeof(buf));
  };

  std::vector<LineAddr> keys;
  keys.reserve(attached_.size());
  for (const auto& [line, _] : attached_) keys.push_back(line);
  std::sort(keys.begin(), keys.end());
  for (LineAddr line : keys) emit(line, attached_.at(line));
  for (std::size_t i = 0; i < table_.size(); ++i) {
    if (table_[i].valid) emit(table_source_[i], table_[i].payload);
  }
}

}  // namespace ipf
