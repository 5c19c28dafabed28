#include "ipfsim/cache.hpp"

#include <cassert>

namespace ipf {

void CacheConfig::validate() const {
  const LevelConfig* levels[] = {&l1i, &l2, &l3};
  const char* names[] = {"l1i", "l2", "l3"};
  for (int i = 0; i < 3; ++i) {
    const LevelConfig& lv = *levels[i];
    if (lv.size_kb == 0 || lv.ways == 0 || lv.latency == 0)
      throw ConfigError(std::string(names[i]) + ": size, ways, latency must be > 0");
    const std::uint64_t bytes = std::uint64_t(lv.size_kb) * 1024;
    if (bytes % (std::uint64_t(lv.ways) * kLineBytes) != 0)
      throw ConfigError(std::string(names[i]) + ": size not divisible by ways * 64");
  }
  if (!(l1i.latency < l2.latency && l2.latency < l3.latency &&
        l3.latency < dram_latency))
    throw ConfigError("latencies must be strictly increasing down the hierarchy");
  if (prefetch_tokens_per_kcycle == 0)
    throw ConfigError("prefetch.tokens_per_kcycle must be > 0");
}

const char* to_string(HitLevel level) {
  switch (level) {
    case HitLevel::L1: return "L1";
    case HitLevel::L2: return "L2";
    case HitLevel::L3: return "L3";
    case HitLevel::DRAM: return "DRAM";
  }
  return "?";
}

CacheHierarchy::Way* CacheHierarchy::Level::find(LineAddr line) {
  Way* set = arr.data() + (line % sets) * ways;
  for (std::uint32_t w = 0; w < ways; ++w) {
    if (set[w].valid && set[w].line == line) return set + w;
  }
  return nullptr;
}

const CacheHierarchy::Way* CacheHierarchy::Level::find(LineAddr line) const {
  const Way* set = arr.data() + (line % sets) * ways;
  for (std::uint32_t w = 0; w < ways; ++w) {
    if (set[w].valid && set[w].line == line) return set + w;
  }
  return nullptr;
}

CacheHierarchy::Way* CacheHierarchy::Level::victim(LineAddr line) {
  Way* set = arr.data() + (line % sets) * ways;
  for (std::uint32_t w = 0; w < ways; ++w) {
    if (!set[w].valid) return set + w;
  }
  Way* v = set;
  for (std::uint32_t w = 1; w < ways; ++w) {
    if (set[w].lru < v->lru) v = set + w;
  }
  return v;
}

CacheHierarchy::CacheHierarchy(const CacheConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const LevelConfig* lc[] = {&cfg_.l1i, &cfg_.l2, &cfg_.l3};
  for (int i = 0; i < 3; ++i) {
    levels_[i].sets = lc[i]->sets();
    levels_[i].ways = lc[i]->ways;
    levels_[i].latency = lc[i]->latency;
    levels_[i].arr.resize(std::size_t(levels_[i].sets) * levels_[i].ways);
  }
}

HitLevel CacheHierarchy::residency(LineAddr line) const {
  if (levels_[0].find(line)) return HitLevel::L1;
  if (levels_[1].find(line)) return HitLevel::L2;
  if (levels_[2].find(line)) return HitLevel::L3;
  return HitLevel::DRAM;
}

std::uint32_t CacheHierarchy::level_latency(HitLevel level) const {
  switch (level) {
    case HitLevel::L1: return cfg_.l1i.latency;
    case HitLevel::L2: return cfg_.l2.latency;
    case HitLevel::L3: return cfg_.l3.latency;
    case HitLevel::DRAM: return cfg_.dram_latency;
  }
  return cfg_.dram_latency;
}

void CacheHierarchy::touch(Level& lvl, Way& way) { way.lru = ++tick_; }

void CacheHierarchy::invalidate_above(unsigned below_level_idx, LineAddr line,
                                      EvictCause cause, Cycle now) {
  for (unsigned i = 0; i < below_level_idx; ++i) {
    if (Way* w = levels_[i].find(line)) {
      w->valid = false;
      if (i == 0 && listener_) listener_->l1_evict(line, cause, now);
    }
  }
}

void CacheHierarchy::install(unsigned level_idx, LineAddr line, bool prefetch,
                             EvictCause cause, Cycle now,
                             std::optional<LineAddr>* l1_victim) {
  Level& lvl = levels_[level_idx];
  if (Way* present = lvl.find(line)) {
    touch(lvl, *present);
    return;
  }
  Way* v = lvl.victim(line);
  if (v->valid) {
    const LineAddr old = v->line;
    if (level_idx == 0) {
      if (listener_) listener_->l1_evict(old, cause, now);
      if (l1_victim) *l1_victim = old;
    } else {
      // Inclusion: a line leaving L2/L3 must leave every level above.
      invalidate_above(level_idx, old, cause, now);
    }
  }
  v->line = line;
  v->valid = true;
  v->prefetched = prefetch && level_idx == 0;
  touch(lvl, *v);
  if (level_idx == 0 && listener_) listener_->l1_fill(line, prefetch, now);
}

AccessResult CacheHierarchy::demand_fetch(LineAddr line, Cycle now) {
  drain_completions(now);
  ++demand_accesses;
  AccessResult r;

  if (Way* w = levels_[0].find(line)) {
    touch(levels_[0], *w);
    r.hit_level = HitLevel::L1;
    r.latency_cycles = cfg_.l1i.latency;
    if (w->prefetched) {
      r.fill_was_prefetch = true;
      w->prefetched = false;
    }
    return r;
  }

  ++l1_demand_misses;

  if (auto it = inflight_.find(line); it != inflight_.end()) {
    // The demand rides the in-flight prefetch and waits out the remainder.
    it->second.demanded = true;
    r.late_prefetch = true;
    r.hit_level = it->second.source;
    r.latency_cycles = static_cast<std::uint32_t>(it->second.complete - now);
    return r;
  }

  const HitLevel src = residency(line);
  r.hit_level = src;
  r.latency_cycles = level_latency(src);

  if (src == HitLevel::DRAM) {
    install(2, line, false, EvictCause::Demand, now, nullptr);
    install(1, line, false, EvictCause::Demand, now, nullptr);
  } else if (src == HitLevel::L3) {
    touch(levels_[2], *levels_[2].find(line));
    install(1, line, false, EvictCause::Demand, now, nullptr);
  } else {
    touch(levels_[1], *levels_[1].find(line));
  }
  std::optional<LineAddr> victim;
  install(0, line, false, EvictCause::Demand, now, &victim);
  r.evicted_line = victim;
  return r;
}

PrefetchStatus CacheHierarchy::issue_prefetch(LineAddr line, Cycle now) {
  drain_completions(now);
  if (levels_[0].find(line) || inflight_.count(line)) {
    ++prefetch_duplicate;
    return PrefetchStatus::Duplicate;
  }
  const HitLevel src = residency(line);
  const Cycle complete = now + level_latency(src);
  // Token accounting keys on the completion window so the fills-per-window
  // cap holds exactly.
  const Cycle window = complete / kTokenWindowCycles;
  auto [it, inserted] = window_fills_.try_emplace(window, 0);
  if (it->second >= cfg_.prefetch_tokens_per_kcycle) {
    ++prefetch_no_bandwidth;
    return PrefetchStatus::NoBandwidth;
  }
  ++it->second;

  InFlight pf;
  pf.line = line;
  pf.complete = complete;
  pf.seq = ++seq_;
  pf.id = next_issue_id_++;
  pf.source = src;
  pending_.push(pf);
  inflight_.emplace(line, pf);
  ++prefetch_issued;
  return PrefetchStatus::Issued;
}

void CacheHierarchy::drain_completions(Cycle now) {
  while (!pending_.empty() && pending_.top().complete <= now) {
    const InFlight order = pending_.top();
    pending_.pop();
    auto it = inflight_.find(order.line);
    assert(it != inflight_.end() && it->second.id == order.id);
    const InFlight pf = it->second;
    inflight_.erase(it);
    apply_fill(pf, pf.complete);
  }
}

void CacheHierarchy::apply_fill(const InFlight& pf, Cycle now) {
  ++prefetch_fills;
  // Install into every level missing the line; residency below may have
  // changed since issue, and inclusion must hold after the fill.
  if (!levels_[2].find(pf.line))
    install(2, pf.line, false, EvictCause::Prefetch, now, nullptr);
  if (!levels_[1].find(pf.line))
    install(1, pf.line, false, EvictCause::Prefetch, now, nullptr);
  std::optional<LineAddr> victim;
  install(0, pf.line, !pf.demanded, EvictCause::Prefetch, now, &victim);
  if (listener_) listener_->prefetch_fill(pf.id, pf.line, now, victim);
}

bool CacheHierarchy::l1_resident(LineAddr line) const {
  return levels_[0].find(line) != nullptr;
}

}  // namespace ipf
