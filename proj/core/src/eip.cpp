#include "ipfsim/eip.hpp"

#include <algorithm>
#include <cassert>

namespace ipf {

void HistoryQueue::record_fetch(LineAddr line, Cycle now) {
  ring_[head_].tag = line & ((1ull << kTagBits) - 1);
  ring_[head_].timestamp = static_cast<std::uint32_t>(now) & kTimestampMask;
  head_ = (head_ + 1) % kCapacity;
  if (count_ < kCapacity) ++count_;
}

std::optional<LineAddr> HistoryQueue::find_source(
    Cycle miss_time, std::uint32_t fill_latency) const {
  const std::uint32_t now = static_cast<std::uint32_t>(miss_time) & kTimestampMask;
  for (std::size_t i = 0; i < count_; ++i) {
    // Walk youngest to oldest.
    const std::size_t idx = (head_ + kCapacity - 1 - i) % kCapacity;
    const std::uint32_t age = (now - ring_[idx].timestamp) & kTimestampMask;
    if (age >= fill_latency) return ring_[idx].tag;
  }
  return std::nullopt;
}

std::vector<HistoryQueue::Entry> HistoryQueue::snapshot() const {
  std::vector<Entry> out;
  out.reserve(count_);
  for (std::size_t i = 0; i < count_; ++i) {
    out.push_back(ring_[(head_ + kCapacity - 1 - i) % kCapacity]);
  }
  return out;
}

EntangleTable::EntangleTable(const EipConfig& cfg) : cfg_(cfg) {
  assert(cfg_.sets > 0 && (cfg_.sets & (cfg_.sets - 1)) == 0);
  assert(cfg_.ways > 0);
  table_.resize(std::size_t(cfg_.sets) * cfg_.ways);
}

EntangleTable::Entry* EntangleTable::find(LineAddr source) {
  Entry* set = table_.data() + std::size_t(set_of(source)) * cfg_.ways;
  for (std::uint32_t w = 0; w < cfg_.ways; ++w) {
    if (set[w].valid && set[w].source == source) return set + w;
  }
  return nullptr;
}

EntangleTable::Entry* EntangleTable::allocate(LineAddr source) {
  Entry* set = table_.data() + std::size_t(set_of(source)) * cfg_.ways;
  Entry* v = nullptr;
  for (std::uint32_t w = 0; w < cfg_.ways && !v; ++w) {
    if (!set[w].valid) v = set + w;
  }
  if (!v) {
    v = set;
    for (std::uint32_t w = 1; w < cfg_.ways; ++w) {
      if (set[w].lru < v->lru) v = set + w;
    }
  }
  v->valid = true;
  v->source = source;
  v->dests.clear();
  return v;
}

void EntangleTable::entangle(LineAddr source, LineAddr destination) {
  if (source == destination) return;
  Entry* e = find(source);
  if (!e) e = allocate(source);
  e->lru = ++tick_;

  for (Destination& d : e->dests) {
    if (d.line == destination) {
      if (d.confidence < 3) ++d.confidence;
      return;
    }
  }
  if (e->dests.size() < kMaxDestinations) {
    e->dests.push_back({destination, 1, ++stamp_});
    return;
  }
  // Replace the weakest destination; among equals, the oldest.
  Destination* victim = &e->dests[0];
  for (Destination& d : e->dests) {
    if (d.confidence < victim->confidence ||
        (d.confidence == victim->confidence && d.stamp < victim->stamp)) {
      victim = &d;
    }
  }
  *victim = {destination, 1, ++stamp_};
}

std::vector<LineAddr> EntangleTable::trigger(LineAddr fetched) {
  Entry* e = find(fetched);
  if (!e) return {};
  e->lru = ++tick_;
  std::vector<LineAddr> out;
  for (const Destination& d : e->dests) {
    if (d.confidence >= cfg_.trigger_confidence) out.push_back(d.line);
  }
  return out;
}

void EntangleTable::reinforce(LineAddr source, LineAddr destination) {
  if (Entry* e = find(source)) {
    for (Destination& d : e->dests) {
      if (d.line == destination && d.confidence < 3) ++d.confidence;
    }
  }
}

void EntangleTable::weaken(LineAddr source, LineAddr destination) {
  if (Entry* e = find(source)) {
    for (Destination& d : e->dests) {
      if (d.line == destination && d.confidence > 0) --d.confidence;
    }
  }
}

std::size_t EntangleTable::entry_count() const {
  std::size_t n = 0;
  for (const Entry& e : table_) n += e.valid;
  return n;
}

}  // namespace ipf
