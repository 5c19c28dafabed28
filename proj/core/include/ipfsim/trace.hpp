#ifndef IPFSIM_TRACE_HPP
#define IPFSIM_TRACE_HPP

#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ipfsim/types.hpp"

namespace ipf {

// ---------------------------------------------------------------------------
// Trace records and the binary on-disk format.
//
// File layout: magic "SLOF", u32 LE version (=1), then 10-byte records:
//   1 byte kind (0=Fetch, 1=RpcBegin, 2=RpcEnd)
//   1 byte thread_tag
//   8 byte LE payload (byte address for Fetch, rpc id zero-extended otherwise)
// ---------------------------------------------------------------------------

enum class RecordKind : std::uint8_t { Fetch = 0, RpcBegin = 1, RpcEnd = 2 };

struct TraceRecord {
  RecordKind kind = RecordKind::Fetch;
  std::uint8_t thread_tag = 0;
  std::uint64_t payload = 0;

  LineAddr line() const { return payload >> kLineBits; }
  std::uint32_t rpc_id() const { return static_cast<std::uint32_t>(payload); }

  static TraceRecord fetch(std::uint64_t byte_addr, std::uint8_t tag = 0) {
    return {RecordKind::Fetch, tag, byte_addr};
  }
  static TraceRecord rpc_begin(std::uint32_t id, std::uint8_t tag = 0) {
    return {RecordKind::RpcBegin, tag, id};
  }
  static TraceRecord rpc_end(std::uint32_t id, std::uint8_t tag = 0) {
    return {RecordKind::RpcEnd, tag, id};
  }

  bool operator==(const TraceRecord&) const = default;
};

inline constexpr char kTraceMagic[4] = {'S', 'L', 'O', 'F'};
inline constexpr std::uint32_t kTraceVersion = 1;
inline constexpr std::size_t kTraceHeaderBytes = 8;
inline constexpr std::size_t kTraceRecordBytes = 10;

class TraceError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, BadVersion, TruncatedRecord, UnknownKind, Io };

  TraceError(Kind kind, std::uint64_t byte_offset, const std::string& what)
      : std::runtime_error(what), kind(kind), byte_offset(byte_offset) {}

  Kind kind;
  std::uint64_t byte_offset;
};

// Streaming reader; validates the header on open and every record on next().
class TraceReader {
 public:
  explicit TraceReader(const std::string& path);

  // Returns false at a clean end of file; throws TraceError on malformed input.
  bool next(TraceRecord& out);

  std::uint64_t offset() const { return offset_; }

 private:
  std::ifstream in_;
  std::uint64_t offset_ = 0;
};

class TraceWriter {
 public:
  explicit TraceWriter(const std::string& path);
  void write(const TraceRecord& rec);
  void write_all(std::span<const TraceRecord> recs);
  void close();

 private:
  std::ofstream out_;
  std::string path_;
};

std::vector<TraceRecord> load_trace(const std::string& path);
void save_trace(const std::string& path, std::span<const TraceRecord> recs);

// ---------------------------------------------------------------------------
// Synthetic microservice-like workload generator.
// ---------------------------------------------------------------------------

struct SyntheticWorkloadSpec {
  std::uint64_t seed = 1;
  std::uint32_t function_count = 48;
  std::uint32_t mean_function_lines = 12;
  std::uint32_t call_depth_max = 4;
  double loop_probability = 0.15;
  double call_probability = 0.10;
  double phase_churn_probability = 0.02;
  std::uint64_t footprint_lines = 4096;
  std::uint32_t rpc_length_mean = 256;
  std::uint64_t record_count = 200000;

  // Throws InvalidSpecError on zero counts or probabilities outside [0,1].
  void validate() const;
};

class InvalidSpecError : public std::runtime_error {
 public:
  explicit InvalidSpecError(const std::string& what)
      : std::runtime_error(what) {}
};

std::vector<TraceRecord> generate_synthetic(const SyntheticWorkloadSpec& spec);

// ---------------------------------------------------------------------------
// Clustering statistics over consecutive-miss pairs.
// ---------------------------------------------------------------------------

struct ClusterStats {
  double delta20_fraction = 0.0;
  double window8_fraction = 0.0;
  // window size -> covered pair count under the best per-source window
  std::map<unsigned, std::uint64_t> per_window_histogram;
  std::uint64_t pair_count = 0;
};

class EmptyTraceError : public std::runtime_error {
 public:
  EmptyTraceError() : std::runtime_error("trace contains no fetch records") {}
};

inline constexpr unsigned kDefaultWindowSizes[] = {4, 8, 12, 16};

// Pairs are consecutive miss-triggering lines under a cold 512-line 8-way LRU
// L1 replay. delta20_fraction counts pairs whose line addresses share all
// bits above the low 20; window coverage is an exhaustive best-window search
// per source, weighted by pair occurrence.
ClusterStats cluster_stats(std::span<const TraceRecord> trace,
                           std::span<const unsigned> window_sizes =
                               kDefaultWindowSizes);

}  // namespace ipf

#endif
