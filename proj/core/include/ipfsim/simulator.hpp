#ifndef IPFSIM_SIMULATOR_HPP
#define IPFSIM_SIMULATOR_HPP

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "ipfsim/cache.hpp"
#include "ipfsim/config.hpp"
#include "ipfsim/controller.hpp"
#include "ipfsim/eip.hpp"
#include "ipfsim/hierarchy.hpp"
#include "ipfsim/metrics.hpp"
#include "ipfsim/trace.hpp"

namespace ipf {

// Raw per-prefetch event log, enough to recount accuracy independently.
struct SimEvent {
  enum class Type : std::uint8_t { Issue, Fill, Fate, DemandMiss, DemandHit };
  Type type;
  std::uint64_t id;    // prefetch id, 0 for demand events
  LineAddr line;
  Cycle cycle;
  std::uint8_t fate;   // PrefetchFate when type == Fate
};

struct SimOptions {
  bool keep_event_log = false;
  std::ostream* shadow_log = nullptr;     // calibration CSV sink
  std::ostream* metadata_dump = nullptr;  // 87-bit packed entries at end
};

// Deterministic trace replay of one prefetcher variant.
class Simulator {
 public:
  explicit Simulator(const RunConfig& cfg, SimOptions opts = {});
  ~Simulator();

  SimulationReport run(std::span<const TraceRecord> trace);

  const std::vector<SimEvent>& event_log() const { return events_; }
  const CacheHierarchy& cache() const;
  const Controller* controller() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::vector<SimEvent> events_;
};

// Runs the variant from `cfg` plus the NextLineOnly baseline on the same
// trace and fills the comparative fields (mpki reduction, coverage, utility).
SimulationReport run_with_baseline(const RunConfig& cfg,
                                   std::span<const TraceRecord> trace,
                                   SimOptions opts = {});

// Loads or synthesizes the trace named by the config.
std::vector<TraceRecord> acquire_trace(const RunConfig& cfg);

}  // namespace ipf

#endif
