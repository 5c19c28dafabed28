// Microbenchmarks for the hot paths: cache demand/prefetch handling, the
// window-slide update, entangle-table maintenance, trace statistics, and a
// small end-to-end run.

#include <benchmark/benchmark.h>

#include <optional>
#include <random>
#include <vector>

#include "ipfsim/config.hpp"
#include "ipfsim/simulator.hpp"

namespace {

void BM_demand_fetch(benchmark::State& state) {
  ipf::CacheConfig cfg;
  ipf::CacheHierarchy cache(cfg);
  std::mt19937_64 rng(1);
  std::vector<ipf::LineAddr> lines(4096);
  for (auto& l : lines) l = rng() % 2048;
  ipf::Cycle now = 0;
  std::size_t i = 0;
  for (auto _ : state) {
    const ipf::AccessResult r = cache.demand_fetch(lines[i], now);
    benchmark::DoNotOptimize(r.latency_cycles);
    now += 1 + r.latency_cycles;
    i = (i + 1) % lines.size();
  }
}
BENCHMARK(BM_demand_fetch);

void BM_prefetch_issue_drain(benchmark::State& state) {
  ipf::CacheConfig cfg;
  ipf::CacheHierarchy cache(cfg);
  std::mt19937_64 rng(2);
  ipf::Cycle now = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(cache.issue_prefetch(rng() % 65536, now));
    now += 16;
    cache.drain_completions(now);
  }
}
BENCHMARK(BM_prefetch_issue_drain);

void BM_compressed_update(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const ipf::LineAddr region = ipf::LineAddr(3) << ipf::kBaseBits;
  const ipf::LineAddr source = region + 999;
  std::optional<ipf::CompressedEntry> cur;
  ipf::LineAddr dest = region + 500;
  for (auto _ : state) {
    dest = region + ((dest - region + rng() % 13 + ipf::kRegionLines - 6) %
                     ipf::kRegionLines);
    const ipf::UpdateResult res = ipf::update(cur, source, dest);
    benchmark::DoNotOptimize(res.status);
    cur = res.entry;
  }
}
BENCHMARK(BM_compressed_update);

void BM_entangle_trigger(benchmark::State& state) {
  ipf::EipConfig cfg;
  ipf::EntangleTable table(cfg);
  std::mt19937_64 rng(4);
  for (auto _ : state) {
    const ipf::LineAddr src = rng() % 8192;
    table.entangle(src, rng() % 8192);
    benchmark::DoNotOptimize(table.trigger(src));
  }
}
BENCHMARK(BM_entangle_trigger);

void BM_cluster_stats(benchmark::State& state) {
  ipf::SyntheticWorkloadSpec spec;
  spec.record_count = 50000;
  const std::vector<ipf::TraceRecord> trace = ipf::generate_synthetic(spec);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ipf::cluster_stats(trace));
  }
}
BENCHMARK(BM_cluster_stats);

void BM_end_to_end(benchmark::State& state) {
  ipf::RunConfig cfg;
  cfg.variant = ipf::Variant::Cheip;
  cfg.synth.record_count = 20000;
  const std::vector<ipf::TraceRecord> trace = ipf::generate_synthetic(cfg.synth);
  for (auto _ : state) {
    ipf::Simulator sim(cfg);
    benchmark::DoNotOptimize(sim.run(trace).cycles);
  }
}
BENCHMARK(BM_end_to_end);

}  // namespace

BENCHMARK_MAIN();
