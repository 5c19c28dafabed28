#ifndef IPFSIM_EIP_HPP
#define IPFSIM_EIP_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "ipfsim/types.hpp"

namespace ipf {

// 64-entry FIFO of (58-bit line tag, 20-bit wrapping timestamp); 624 B.
class HistoryQueue {
 public:
  static constexpr std::size_t kCapacity = 64;
  static constexpr unsigned kTagBits = 58;
  static constexpr unsigned kTimestampBits = 20;
  static constexpr std::uint32_t kTimestampMask = (1u << kTimestampBits) - 1;

  struct Entry {
    std::uint64_t tag = 0;
    std::uint32_t timestamp = 0;
  };

  void record_fetch(LineAddr line, Cycle now);

  // Youngest entry whose timestamp precedes (miss_time - fill_latency) in
  // modular 2^20 order.
  std::optional<LineAddr> find_source(Cycle miss_time,
                                      std::uint32_t fill_latency) const;

  std::size_t size() const { return count_; }
  // Entries youngest-first, for tests.
  std::vector<Entry> snapshot() const;

  static constexpr std::size_t byte_cost() {
    return kCapacity * (kTagBits + kTimestampBits) / 8;
  }

 private:
  std::array<Entry, kCapacity> ring_{};
  std::size_t head_ = 0;  // next insert position
  std::size_t count_ = 0;
};

// Baseline entangling table: set-associative over sources, each entry holding
// up to 8 full-address destinations with 2-bit saturating confidence.
struct EipConfig {
  std::uint32_t sets = 256;
  std::uint32_t ways = 16;
  std::uint8_t trigger_confidence = 1;
};

class EntangleTable {
 public:
  static constexpr unsigned kMaxDestinations = 8;

  struct Destination {
    LineAddr line = 0;
    std::uint8_t confidence = 0;
    std::uint64_t stamp = 0;  // insertion order, for oldest-first tie-break
  };

  explicit EntangleTable(const EipConfig& cfg);

  // Inserts or reinforces destination under source. Self-entangles are
  // dropped. A 9th destination replaces the lowest-confidence one (ties:
  // oldest).
  void entangle(LineAddr source, LineAddr destination);

  // Destinations with confidence >= the trigger threshold.
  std::vector<LineAddr> trigger(LineAddr fetched);

  void reinforce(LineAddr source, LineAddr destination);
  void weaken(LineAddr source, LineAddr destination);

  const EipConfig& config() const { return cfg_; }
  std::size_t entry_count() const;

 private:
  struct Entry {
    bool valid = false;
    LineAddr source = 0;
    std::vector<Destination> dests;
    std::uint64_t lru = 0;
  };

  Entry* find(LineAddr source);
  Entry* allocate(LineAddr source);
  std::uint32_t set_of(LineAddr source) const {
    return static_cast<std::uint32_t>(source & (cfg_.sets - 1));
  }

  EipConfig cfg_;
  std::vector<Entry> table_;  // sets * ways
  std::uint64_t tick_ = 0;
  std::uint64_t stamp_ = 0;
};

}  // namespace ipf

#endif
