#ifndef IPFSIM_METRICS_HPP
#define IPFSIM_METRICS_HPP

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "ipfsim/types.hpp"

namespace ipf {

// ---------------------------------------------------------------------------
// Prefetch outcome classification.
// ---------------------------------------------------------------------------

enum class PrefetchFate : std::uint8_t { Useful, Useless, Late, Polluting };
const char* to_string(PrefetchFate fate);

// Tracks every issued prefetch to one of four fates:
//   useful    - demanded after the fill, within the horizon
//   late      - demanded while still in flight
//   useless   - never demanded within the horizon of its fill
//   polluting - its fill displaced a line that re-missed within the horizon
// Pollution takes precedence over a demand hit on the prefetched line.
class PrefetchClassifier {
 public:
  PrefetchClassifier(Cycle horizon, std::uint32_t l1_sets);

  std::uint64_t on_issue(LineAddr line, Cycle now);
  void on_fill(std::uint64_t id, Cycle now, std::optional<LineAddr> evicted);
  void on_demand_prefetch_hit(LineAddr line, Cycle now);
  void on_demand_late(LineAddr line, Cycle now);
  void on_demand_miss(LineAddr line, Cycle now);
  // Resolves records whose horizon expired before `now`.
  void advance(Cycle now);
  // End of simulation: anything unresolved stays in flight.
  void finalize(Cycle now);

  // Fired exactly once per issued prefetch, at resolution.
  std::function<void(std::uint64_t id, PrefetchFate fate)> on_fate;

  std::uint64_t issued = 0;
  std::uint64_t useful = 0;
  std::uint64_t useless = 0;
  std::uint64_t late = 0;
  std::uint64_t polluting = 0;
  std::uint64_t leftover_in_flight = 0;

 private:
  struct Record {
    std::uint64_t id = 0;
    LineAddr line = 0;
    Cycle issue_time = 0;
    Cycle fill_time = 0;
    bool filled = false;
    bool demanded = false;
    bool late = false;
    bool polluted = false;
    bool resolved = false;
  };

  struct Ghost {
    LineAddr line = 0;
    Cycle evicted_at = 0;
    std::uint64_t prefetch_id = 0;
  };

  void resolve(Record& r);

  Cycle horizon_;
  std::uint32_t l1_sets_;
  std::uint64_t next_id_ = 1;
  std::unordered_map<std::uint64_t, Record> records_;
  std::unordered_map<LineAddr, std::uint64_t> by_line_;  // unresolved, newest
  std::deque<std::uint64_t> order_;                      // by fill horizon
  std::vector<std::deque<Ghost>> ghosts_;                // per L1 set
};

// ---------------------------------------------------------------------------
// Report, percentiles, utility, comparison.
// ---------------------------------------------------------------------------

struct RpcLatencies {
  std::uint64_t p50 = 0;
  std::uint64_t p95 = 0;
  std::uint64_t p99 = 0;
};

struct SimulationReport {
  std::string variant;
  std::uint64_t instructions = 0;
  std::uint64_t cycles = 0;
  std::uint64_t l1i_misses = 0;
  double mpki = 0.0;
  double mpki_reduction_vs_baseline = 0.0;
  std::uint64_t issued = 0;
  std::uint64_t useful = 0;
  std::uint64_t useless = 0;
  std::uint64_t late = 0;
  std::uint64_t polluting = 0;
  double accuracy = 0.0;
  double coverage = 0.0;
  double bandwidth_fills_per_kilo_instr = 0.0;
  RpcLatencies rpc_latencies;
  double utility = 0.0;
  double uncovered_destination_fraction = 0.0;

  std::string to_json() const;  // stable field order
};

class EmptySampleError : public std::runtime_error {
 public:
  EmptySampleError() : std::runtime_error("percentile of empty sample") {}
};

class MismatchedTracesError : public std::runtime_error {
 public:
  MismatchedTracesError()
      : std::runtime_error("reports come from different traces") {}
};

// Nearest-rank: value at 1-based index ceil(q*N) of the sorted sample.
std::uint64_t percentile(std::span<const std::uint64_t> samples, double q);

struct UtilityWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  double delta = 1.0;
};

// U = alpha*max(0, dP95)/P95_base + beta*max(0, dMPKI)/MPKI_base
//     - gamma*max(0, dBW)/max(BW_base, eps)
//     - delta*max(0, dEvict)/max(instr/1000, 1)
// P95/MPKI improvements reward; bandwidth and harmful-eviction growth
// penalize. All terms are dimensionless relative deltas.
double utility(const SimulationReport& baseline, const SimulationReport& variant,
               const UtilityWeights& weights = {});

struct ComparisonRow {
  std::string variant;
  double speedup = 1.0;
  double mpki_reduction = 0.0;
  double accuracy = 0.0;
  double coverage = 0.0;
  double bandwidth = 0.0;
  std::uint64_t p95 = 0;
  double utility = 0.0;
  double uncovered_fraction = 0.0;
  std::uint64_t budget_bytes = 0;
};

// Rows ordered by variant name; speedup = baseline_cycles / variant_cycles.
std::vector<ComparisonRow> compare(const SimulationReport& baseline,
                                   std::span<const SimulationReport> variants,
                                   std::span<const std::uint64_t> budgets,
                                   const UtilityWeights& weights = {});

std::string comparison_csv(std::span<const ComparisonRow> rows);

}  // namespace ipf

#endif
