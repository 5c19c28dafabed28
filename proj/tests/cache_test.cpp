#include <doctest.h>

#include <algorithm>
#include <optional>
#include <random>
#include <vector>

#include "ipfsim/cache.hpp"

using ipf::AccessResult;
using ipf::CacheConfig;
using ipf::CacheHierarchy;
using ipf::Cycle;
using ipf::EvictCause;
using ipf::HitLevel;
using ipf::LevelConfig;
using ipf::LineAddr;
using ipf::PrefetchStatus;

namespace {

struct cache_event {
  char kind = 0;  // 'f' l1_fill, 'e' l1_evict, 'p' prefetch_fill
  LineAddr line = 0;
  std::uint64_t id = 0;
  Cycle now = 0;
  bool flag = false;  // fill: prefetch bit; evict: cause was prefetch
  std::optional<LineAddr> victim;
};

struct recording_listener : ipf::CacheListener {
  std::vector<cache_event> events;
  void l1_fill(LineAddr line, bool prefetch, Cycle now) override {
    events.push_back({'f', line, 0, now, prefetch, std::nullopt});
  }
  void l1_evict(LineAddr line, EvictCause cause, Cycle now) override {
    events.push_back({'e', line, 0, now, cause == EvictCause::Prefetch,
                      std::nullopt});
  }
  void prefetch_fill(std::uint64_t id, LineAddr line, Cycle now,
                     std::optional<LineAddr> evicted) override {
    events.push_back({'p', line, id, now, false, evicted});
  }
};

// Independent reference for the demand path: each set is a recency list with
// the MRU line at the front, so the victim of a full set is simply the back.
struct ref_level {
  unsigned sets = 0;
  unsigned ways = 0;
  unsigned latency = 0;
  std::vector<std::vector<LineAddr>> s;

  void init(const LevelConfig& c) {
    sets = c.sets();
    ways = c.ways;
    latency = c.latency;
    s.assign(sets, {});
  }
  std::vector<LineAddr>& set_of(LineAddr line) { return s[line % sets]; }
  bool has(LineAddr line) {
    auto& v = set_of(line);
    return std::find(v.begin(), v.end(), line) != v.end();
  }
  void touch(LineAddr line) {
    auto& v = set_of(line);
    auto it = std::find(v.begin(), v.end(), line);
    REQUIRE(it != v.end());
    v.erase(it);
    v.insert(v.begin(), line);
  }
  std::optional<LineAddr> insert(LineAddr line) {
    auto& v = set_of(line);
    v.insert(v.begin(), line);
    if (v.size() > ways) {
      LineAddr victim = v.back();
      v.pop_back();
      return victim;
    }
    return std::nullopt;
  }
  void remove(LineAddr line) {
    auto& v = set_of(line);
    auto it = std::find(v.begin(), v.end(), line);
    if (it != v.end()) v.erase(it);
  }
};

struct ref_result {
  HitLevel level = HitLevel::L1;
  unsigned latency = 0;
  std::optional<LineAddr> evicted;
};

struct ref_cache {
  ref_level l1, l2, l3;
  unsigned dram_latency = 0;
  std::vector<cache_event> events;
  std::uint64_t misses = 0;

  explicit ref_cache(const CacheConfig& cfg) {
    l1.init(cfg.l1i);
    l2.init(cfg.l2);
    l3.init(cfg.l3);
    dram_latency = cfg.dram_latency;
  }

  // Inclusion: a line leaving L2 or L3 leaves every level above it too.
  void install_upper(ref_level& lvl, bool also_l2, LineAddr line) {
    if (auto victim = lvl.insert(line)) {
      if (l1.has(*victim)) {
        l1.remove(*victim);
        events.push_back({'e', *victim});
      }
      if (also_l2) l2.remove(*victim);
    }
  }

  std::optional<LineAddr> install_l1(LineAddr line) {
    auto victim = l1.insert(line);
    if (victim) events.push_back({'e', *victim});
    events.push_back({'f', line});
    return victim;
  }

  ref_result demand(LineAddr line) {
    ref_result r;
    if (l1.has(line)) {
      l1.touch(line);
      r.level = HitLevel::L1;
      r.latency = l1.latency;
      return r;
    }
    ++misses;
    if (l2.has(line)) {
      l2.touch(line);
      r.level = HitLevel::L2;
      r.latency = l2.latency;
    } else if (l3.has(line)) {
      l3.touch(line);
      install_upper(l2, false, line);
      r.level = HitLevel::L3;
      r.latency = l3.latency;
    } else {
      install_upper(l3, true, line);
      install_upper(l2, false, line);
      r.level = HitLevel::DRAM;
      r.latency = dram_latency;
    }
    r.evicted = install_l1(line);
    return r;
  }
};

CacheConfig small_config() {
  CacheConfig cfg;
  cfg.l1i = {1, 4, 4};   // 16 lines, 4 sets
  cfg.l2 = {1, 8, 15};   // 16 lines, 2 sets
  cfg.l3 = {2, 16, 35};  // 32 lines, 2 sets
  return cfg;
}

}  // namespace

TEST_CASE("level geometry derives lines and sets") {
  LevelConfig l1{32, 8, 4};
  CHECK(l1.lines() == 512);
  CHECK(l1.sets() == 64);
  CacheConfig cfg;
  CHECK(cfg.l2.lines() == 8192);
  CHECK(cfg.l2.sets() == 1024);
  CHECK(cfg.l3.lines() == 32768);
  CHECK(cfg.l3.sets() == 2048);
  CacheHierarchy cache(cfg);
  CHECK(cache.l1_sets() == 64);
}

TEST_CASE("config validation rejects degenerate shapes") {
  CacheConfig cfg;
  CHECK_NOTHROW(cfg.validate());

  SUBCASE("zero size") {
    cfg.l2.size_kb = 0;
    CHECK_THROWS_AS(cfg.validate(), ipf::ConfigError);
  }
  SUBCASE("zero ways") {
    cfg.l1i.ways = 0;
    CHECK_THROWS_AS(cfg.validate(), ipf::ConfigError);
  }
  SUBCASE("zero latency") {
    cfg.l3.latency = 0;
    CHECK_THROWS_AS(cfg.validate(), ipf::ConfigError);
  }
  SUBCASE("size not divisible by ways") {
    cfg.l1i = {1, 3, 4};  // 1024 % 192 != 0
    CHECK_THROWS_AS(cfg.validate(), ipf::ConfigError);
  }
  SUBCASE("latencies must increase downward") {
    cfg.l2.latency = cfg.l1i.latency;
    CHECK_THROWS_AS(cfg.validate(), ipf::ConfigError);
  }
  SUBCASE("dram not slowest") {
    cfg.dram_latency = cfg.l3.latency;
    CHECK_THROWS_AS(cfg.validate(), ipf::ConfigError);
  }
  SUBCASE("zero prefetch tokens") {
    cfg.prefetch_tokens_per_kcycle = 0;
    CHECK_THROWS_AS(cfg.validate(), ipf::ConfigError);
  }
  SUBCASE("constructor validates") {
    cfg.l1i.ways = 0;
    CHECK_THROWS_AS(CacheHierarchy{cfg}, ipf::ConfigError);
  }
}

TEST_CASE("cold miss pays dram and refetch hits l1") {
  CacheHierarchy cache{CacheConfig{}};
  AccessResult r = cache.demand_fetch(5, 0);
  CHECK(r.hit_level == HitLevel::DRAM);
  CHECK(r.latency_cycles == 200);
  CHECK_FALSE(r.evicted_line.has_value());
  CHECK_FALSE(r.fill_was_prefetch);
  CHECK_FALSE(r.late_prefetch);

  r = cache.demand_fetch(5, 300);
  CHECK(r.hit_level == HitLevel::L1);
  CHECK(r.latency_cycles == 4);
  CHECK_FALSE(r.fill_was_prefetch);

  CHECK(cache.demand_accesses == 2);
  CHECK(cache.l1_demand_misses == 1);
}

TEST_CASE("l1 conflict eviction falls back to l2") {
  CacheHierarchy cache{CacheConfig{}};
  // Nine lines in L1 set 0 (64 sets) but distinct L2 sets (1024 sets).
  for (LineAddr k = 0; k < 9; ++k) {
    AccessResult r = cache.demand_fetch(k * 64, 1000 * k);
    if (k < 8) {
      CHECK_FALSE(r.evicted_line.has_value());
    } else {
      REQUIRE(r.evicted_line.has_value());
      CHECK(*r.evicted_line == 0);
    }
  }
  CHECK_FALSE(cache.l1_resident(0));
  AccessResult r = cache.demand_fetch(0, 9000);
  CHECK(r.hit_level == HitLevel::L2);
  CHECK(r.latency_cycles == 15);
  CHECK(cache.l1_resident(0));
}

TEST_CASE("touching a line protects it from eviction") {
  CacheHierarchy cache{CacheConfig{}};
  for (LineAddr k = 0; k < 8; ++k) cache.demand_fetch(k * 64, 10 * k);
  cache.demand_fetch(0, 100);  // line 0 becomes MRU
  AccessResult r = cache.demand_fetch(8 * 64, 200);
  REQUIRE(r.evicted_line.has_value());
  CHECK(*r.evicted_line == 64);
  CHECK(cache.l1_resident(0));
  CHECK_FALSE(cache.l1_resident(64));
}

TEST_CASE("l2 eviction back-invalidates the l1 copy") {
  recording_listener listener;
  CacheHierarchy cache{small_config()};
  cache.set_listener(&listener);
  // Even lines share L2 set 0 (2 sets, 8 ways); fill it in demand order.
  for (LineAddr k = 0; k < 8; ++k) cache.demand_fetch(2 * k, 10 * k);
  listener.events.clear();

  AccessResult r = cache.demand_fetch(16, 100);
  CHECK(r.hit_level == HitLevel::DRAM);
  // Line 0 left L2 as its LRU victim, taking the L1 copy with it; the L1
  // install then reuses the invalidated way, so no separate L1 victim.
  CHECK_FALSE(r.evicted_line.has_value());
  REQUIRE(listener.events.size() == 2);
  CHECK(listener.events[0].kind == 'e');
  CHECK(listener.events[0].line == 0);
  CHECK_FALSE(listener.events[0].flag);
  CHECK(listener.events[1].kind == 'f');
  CHECK(listener.events[1].line == 16);
  CHECK_FALSE(cache.l1_resident(0));

  // L3 kept the line, so the refetch stops there.
  r = cache.demand_fetch(0, 200);
  CHECK(r.hit_level == HitLevel::L3);
  CHECK(r.latency_cycles == 35);
}

TEST_CASE("prefetch fill then demand consumes the prefetched flag once") {
  CacheHierarchy cache{CacheConfig{}};
  CHECK(cache.issue_prefetch(9, 0) == PrefetchStatus::Issued);
  AccessResult r = cache.demand_fetch(9, 250);
  CHECK(r.hit_level == HitLevel::L1);
  CHECK(r.latency_cycles == 4);
  CHECK(r.fill_was_prefetch);
  r = cache.demand_fetch(9, 260);
  CHECK(r.hit_level == HitLevel::L1);
  CHECK_FALSE(r.fill_was_prefetch);
  CHECK(cache.prefetch_fills == 1);
  CHECK(cache.l1_demand_misses == 0);
}

TEST_CASE("demand rides an in-flight prefetch") {
  CacheHierarchy cache{CacheConfig{}};
  CHECK(cache.issue_prefetch(7, 0) == PrefetchStatus::Issued);
  AccessResult r = cache.demand_fetch(7, 100);
  CHECK(r.late_prefetch);
  CHECK(r.hit_level == HitLevel::DRAM);  // residency at issue time
  CHECK(r.latency_cycles == 100);        // remainder of the in-flight fill
  CHECK_FALSE(r.evicted_line.has_value());
  CHECK_FALSE(cache.l1_resident(7));
  CHECK(cache.l1_demand_misses == 1);

  // The ridden fill installs as demanded, so the flag is not set.
  r = cache.demand_fetch(7, 250);
  CHECK(r.hit_level == HitLevel::L1);
  CHECK_FALSE(r.fill_was_prefetch);
  CHECK(cache.prefetch_fills == 1);
}

TEST_CASE("duplicate prefetches are refused") {
  CacheHierarchy cache{CacheConfig{}};
  cache.demand_fetch(11, 0);
  CHECK(cache.issue_prefetch(11, 10) == PrefetchStatus::Duplicate);
  CHECK(cache.issue_prefetch(12, 10) == PrefetchStatus::Issued);
  CHECK(cache.issue_prefetch(12, 50) == PrefetchStatus::Duplicate);
  CHECK(cache.prefetch_duplicate == 2);
  CHECK(cache.prefetch_issued == 1);
}

TEST_CASE("token bucket caps fills per completion window") {
  CacheConfig cfg;
  cfg.prefetch_tokens_per_kcycle = 2;
  CacheHierarchy cache{cfg};
  // Cold lines complete at now + 200, all in window 0.
  CHECK(cache.issue_prefetch(1, 0) == PrefetchStatus::Issued);
  CHECK(cache.issue_prefetch(2, 0) == PrefetchStatus::Issued);
  CHECK(cache.issue_prefetch(3, 0) == PrefetchStatus::NoBandwidth);
  CHECK(cache.prefetch_no_bandwidth == 1);
  CHECK(cache.window_fills().at(0) == 2);  // refused issue burned no token
  CHECK(cache.window_fills().size() == 1);

  // Completion at 1001 lands in the next window, which has fresh tokens.
  CHECK(cache.issue_prefetch(3, 801) == PrefetchStatus::Issued);
  CHECK(cache.issue_prefetch(4, 801) == PrefetchStatus::Issued);
  CHECK(cache.issue_prefetch(5, 801) == PrefetchStatus::NoBandwidth);
  CHECK(cache.window_fills().at(1) == 2);
  CHECK(cache.issue_prefetch(1, 801) == PrefetchStatus::Duplicate);
  CHECK(cache.prefetch_issued == 4);
}

TEST_CASE("same-cycle completions drain in issue order") {
  recording_listener listener;
  CacheHierarchy cache{CacheConfig{}};
  cache.set_listener(&listener);
  cache.issue_prefetch(21, 0);
  cache.issue_prefetch(22, 0);
  CHECK(cache.last_issue_id() == 2);
  cache.drain_completions(500);

  REQUIRE(listener.events.size() == 4);
  CHECK(listener.events[0].kind == 'f');
  CHECK(listener.events[0].line == 21);
  CHECK(listener.events[0].flag);  // prefetch fill
  CHECK(listener.events[1].kind == 'p');
  CHECK(listener.events[1].id == 1);
  CHECK(listener.events[1].line == 21);
  CHECK(listener.events[1].now == 200);
  CHECK_FALSE(listener.events[1].victim.has_value());
  CHECK(listener.events[2].kind == 'f');
  CHECK(listener.events[2].line == 22);
  CHECK(listener.events[3].kind == 'p');
  CHECK(listener.events[3].id == 2);
  CHECK(listener.events[3].line == 22);
  CHECK(cache.prefetch_fills == 2);
}

TEST_CASE("next line fires on misses, late rides, and first prefetch touch") {
  ipf::NextLinePrefetcher nl;
  AccessResult r;

  r.hit_level = HitLevel::L1;
  CHECK_FALSE(nl.candidate(r, 10).has_value());

  r.fill_was_prefetch = true;
  REQUIRE(nl.candidate(r, 10).has_value());
  CHECK(*nl.candidate(r, 10) == 11);

  r = AccessResult{};
  r.hit_level = HitLevel::L2;
  CHECK(*nl.candidate(r, 10) == 11);
  r.hit_level = HitLevel::DRAM;
  r.late_prefetch = true;
  CHECK(*nl.candidate(r, 10) == 11);

  nl.enabled = false;
  CHECK_FALSE(nl.candidate(r, 10).has_value());
}

TEST_CASE("demand stream matches recency-list reference model") {
  struct geometry {
    CacheConfig cfg;
    LineAddr line_span;
  };
  std::vector<geometry> geometries;
  geometries.push_back({small_config(), 24});
  {
    // Small L3 so its evictions back-invalidate both upper levels.
    CacheConfig cfg;
    cfg.l1i = {1, 2, 1};  // 8 sets
    cfg.l2 = {2, 4, 2};   // 8 sets
    cfg.l3 = {4, 4, 3};   // 16 sets, 4 ways: 5 candidates per set
    cfg.dram_latency = 4;
    geometries.push_back({cfg, 80});
  }

  for (std::size_t g = 0; g < geometries.size(); ++g) {
    CAPTURE(g);
    recording_listener listener;
    CacheHierarchy cache{geometries[g].cfg};
    cache.set_listener(&listener);
    ref_cache ref{geometries[g].cfg};
    std::mt19937_64 rng(12345 + g);

    for (int i = 0; i < 10000; ++i) {
      CAPTURE(i);
      const LineAddr line = rng() % geometries[g].line_span;
      listener.events.clear();
      ref.events.clear();

      AccessResult got = cache.demand_fetch(line, Cycle(i));
      ref_result want = ref.demand(line);

      REQUIRE(got.hit_level == want.level);
      REQUIRE(got.latency_cycles == want.latency);
      REQUIRE(got.evicted_line == want.evicted);
      REQUIRE(listener.events.size() == ref.events.size());
      for (std::size_t e = 0; e < ref.events.size(); ++e) {
        REQUIRE(listener.events[e].kind == ref.events[e].kind);
        REQUIRE(listener.events[e].line == ref.events[e].line);
        REQUIRE_FALSE(listener.events[e].flag);  // demand path only
      }

      const LineAddr probe = rng() % geometries[g].line_span;
      REQUIRE(cache.l1_resident(probe) == ref.l1.has(probe));
    }
    CHECK(cache.demand_accesses == 10000);
    CHECK(cache.l1_demand_misses == ref.misses);
  }
}

TEST_CASE("mixed demand and prefetch traffic keeps counters consistent") {
  CacheConfig cfg;
  cfg.prefetch_tokens_per_kcycle = 4;
  CacheHierarchy cache{cfg};
  std::mt19937_64 rng(777);

  Cycle now = 0;
  std::uint64_t demand_calls = 0;
  std::uint64_t issue_calls = 0;
  for (int i = 0; i < 20000; ++i) {
    const LineAddr line = rng() % 4096;
    const unsigned op = rng() % 10;
    if (op < 7) {
      cache.demand_fetch(line, now);
      ++demand_calls;
    } else if (op < 9) {
      cache.issue_prefetch(line, now);
      ++issue_calls;
    } else {
      now += 500;
    }
    now += rng() % 4;
  }
  cache.drain_completions(now + 1000000);

  CHECK(cache.demand_accesses == demand_calls);
  CHECK(cache.prefetch_issued + cache.prefetch_duplicate +
            cache.prefetch_no_bandwidth ==
        issue_calls);
  CHECK(cache.prefetch_fills == cache.prefetch_issued);

  std::uint64_t scheduled = 0;
  for (const auto& [window, count] : cache.window_fills()) {
    CHECK(count >= 1);
    CHECK(count <= cfg.prefetch_tokens_per_kcycle);
    scheduled += count;
  }
  CHECK(scheduled == cache.prefetch_issued);
}
