#ifndef IPFSIM_CACHE_HPP
#define IPFSIM_CACHE_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "ipfsim/types.hpp"

namespace ipf {

struct LevelConfig {
  std::uint32_t size_kb = 0;
  std::uint32_t ways = 0;
  std::uint32_t latency = 0;

  std::uint32_t lines() const { return size_kb * 1024 / kLineBytes; }
  std::uint32_t sets() const { return lines() / ways; }
};

struct CacheConfig {
  LevelConfig l1i{32, 8, 4};
  LevelConfig l2{512, 8, 15};
  LevelConfig l3{2048, 16, 35};
  std::uint32_t dram_latency = 200;
  std::uint32_t prefetch_tokens_per_kcycle = 64;

  void validate() const;  // throws ConfigError
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class HitLevel : std::uint8_t { L1, L2, L3, DRAM };
const char* to_string(HitLevel level);

struct AccessResult {
  HitLevel hit_level = HitLevel::L1;
  std::uint32_t latency_cycles = 0;
  std::optional<LineAddr> evicted_line;  // L1 victim displaced by this fill
  bool fill_was_prefetch = false;  // first demand touch of a prefetched line
  bool late_prefetch = false;      // demand found the line still in flight
};

enum class PrefetchStatus : std::uint8_t { Issued, Duplicate, NoBandwidth };
enum class EvictCause : std::uint8_t { Demand, Prefetch };

inline constexpr Cycle kTokenWindowCycles = 1000;

// Event sink for metadata migration and pollution tracking. Eviction fires
// before the fill that displaced the line is installed.
struct CacheListener {
  virtual void l1_fill(LineAddr line, bool prefetch, Cycle now) {}
  virtual void l1_evict(LineAddr line, EvictCause cause, Cycle now) {}
  // A scheduled prefetch fill was applied; id is the value returned at issue.
  virtual void prefetch_fill(std::uint64_t id, LineAddr line, Cycle now,
                             std::optional<LineAddr> evicted) {}
  virtual ~CacheListener() = default;
};

// Three-level inclusive instruction-side hierarchy with per-set LRU, demand
// and prefetch fills, one in-flight prefetch per line, and a token bucket
// capping prefetch fills per kilocycle window.
class CacheHierarchy {
 public:
  explicit CacheHierarchy(const CacheConfig& cfg);

  AccessResult demand_fetch(LineAddr line, Cycle now);
  PrefetchStatus issue_prefetch(LineAddr line, Cycle now);

  // Applies prefetch fills whose completion time is <= now.
  void drain_completions(Cycle now);

  bool l1_resident(LineAddr line) const;
  std::uint32_t l1_sets() const { return cfg_.l1i.sets(); }
  const CacheConfig& config() const { return cfg_; }

  void set_listener(CacheListener* l) { listener_ = l; }

  // Id assigned to the most recent Issued prefetch.
  std::uint64_t last_issue_id() const { return next_issue_id_ - 1; }

  std::uint64_t demand_accesses = 0;
  std::uint64_t l1_demand_misses = 0;  // late conversions included
  std::uint64_t prefetch_fills = 0;
  std::uint64_t prefetch_issued = 0;
  std::uint64_t prefetch_duplicate = 0;
  std::uint64_t prefetch_no_bandwidth = 0;

  // fills applied per kilocycle window, for the bandwidth-cap invariant
  const std::unordered_map<Cycle, std::uint32_t>& window_fills() const {
    return window_fills_;
  }

 private:
  struct Way {
    LineAddr line = 0;
    bool valid = false;
    bool prefetched = false;  // filled by prefetch, not yet demand touched
    std::uint64_t lru = 0;
  };

  struct Level {
    std::uint32_t sets = 0;
    std::uint32_t ways = 0;
    std::uint32_t latency = 0;
    std::vector<Way> arr;  // sets * ways

    Way* find(LineAddr line);
    const Way* find(LineAddr line) const;
    // Picks the victim way (invalid first, else LRU-min).
    Way* victim(LineAddr line);
  };

  struct InFlight {
    LineAddr line = 0;
    Cycle complete = 0;
    std::uint64_t seq = 0;
    std::uint64_t id = 0;
    HitLevel source = HitLevel::DRAM;
    bool demanded = false;  // a demand hit the line while still in flight
  };

  struct InFlightOrder {
    bool operator()(const InFlight& a, const InFlight& b) const {
      if (a.complete != b.complete) return a.complete > b.complete;
      return a.seq > b.seq;
    }
  };

  // Residency probe without LRU side effects.
  HitLevel residency(LineAddr line) const;
  std::uint32_t level_latency(HitLevel level) const;
  void touch(Level& lvl, Way& way);
  // Installs into `level_idx` (0=L1), firing eviction/back-invalidation.
  void install(unsigned level_idx, LineAddr line, bool prefetch,
               EvictCause cause, Cycle now,
               std::optional<LineAddr>* l1_victim);
  void invalidate_above(unsigned below_level_idx, LineAddr line,
                        EvictCause cause, Cycle now);
  void apply_fill(const InFlight& pf, Cycle now);

  CacheConfig cfg_;
  Level levels_[3];
  CacheListener* listener_ = nullptr;

  // pending_ orders completions; inflight_ holds the authoritative record
  // (the demanded flag is set after enqueue, so queue copies are stale).
  std::priority_queue<InFlight, std::vector<InFlight>, InFlightOrder> pending_;
  std::unordered_map<LineAddr, InFlight> inflight_;
  std::unordered_map<Cycle, std::uint32_t> window_fills_;
  std::uint64_t seq_ = 0;
  std::uint64_t next_issue_id_ = 1;
  std::uint64_t tick_ = 0;
};

// Tagged next-line: a candidate on every L1 demand miss and on the first
// demand touch of a prefetched line, so sequential runs keep one line ahead.
class NextLinePrefetcher {
 public:
  bool enabled = true;

  std::optional<LineAddr> candidate(const AccessResult& result,
                                    LineAddr line) const {
    if (!enabled) return std::nullopt;
    if (result.hit_level != HitLevel::L1 || result.late_prefetch ||
        result.fill_was_prefetch) {
      return line + 1;
    }
    return std::nullopt;
  }
};

}  // namespace ipf

#endif
