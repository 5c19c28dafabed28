#include "ipfsim/trace.hpp"

#include <algorithm>
#include <cstring>
#include <unordered_map>

#include "ipfsim/rng.hpp"

namespace ipf {

namespace {

std::uint64_t le64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void put_le64(unsigned char* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<unsigned char>(v >> (8 * i));
}

}  // namespace

TraceReader::TraceReader(const std::string& path)
    : in_(path, std::ios::binary) {
  if (!in_) throw TraceError(TraceError::Kind::Io, 0, "cannot open " + path);
  char magic[4];
  in_.read(magic, 4);
  if (in_.gcount() != 4 || std::memcmp(magic, kTraceMagic, 4) != 0)
    throw TraceError(TraceError::Kind::BadMagic, 0, "bad magic in " + path);
  unsigned char ver[4];
  in_.read(reinterpret_cast<char*>(ver), 4);
  if (in_.gcount() != 4)
    throw TraceError(TraceError::Kind::TruncatedRecord, 4,
                     "truncated header in " + path);
  std::uint32_t version = ver[0] | (ver[1] << 8) | (ver[2] << 16) |
                          (std::uint32_t(ver[3]) << 24);
  if (version != kTraceVersion)
    throw TraceError(TraceError::Kind::BadVersion, 4,
                     "unsupported trace version " + std::to_string(version));
  offset_ = kTraceHeaderBytes;
}

bool TraceReader::next(TraceRecord& out) {
  unsigned char buf[kTraceRecordBytes];
  in_.read(reinterpret_cast<char*>(buf), kTraceRecordBytes);
  const auto got = in_.gcount();
  if (got == 0) return false;
  if (static_cast<std::size_t>(got) != kTraceRecordBytes)
    throw TraceError(TraceError::Kind::TruncatedRecord, offset_,
                     "truncated record at offset " + std::to_string(offset_));
  if (buf[0] > 2)
    throw TraceError(TraceError::Kind::UnknownKind, offset_,
                     "unknown record kind " + std::to_string(buf[0]));
  out.kind = static_cast<RecordKind>(buf[0]);
  out.thread_tag = buf[1];
  out.payload = le64(buf + 2);
  offset_ += kTraceRecordBytes;
  return true;
}

TraceWriter::TraceWriter(const std::string& path)
    : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
  if (!out_) throw TraceError(TraceError::Kind::Io, 0, "cannot open " + path);
  out_.write(kTraceMagic, 4);
  unsigned char ver[4] = {static_cast<unsigned char>(kTraceVersion), 0, 0, 0};
  out_.write(reinterpret_cast<char*>(ver), 4);
}

void TraceWriter::write(const TraceRecord& rec) {
  unsigned char buf[kTraceRecordBytes];
  buf[0] = static_cast<unsigned char>(rec.kind);
  buf[1] = rec.thread_tag;
  put_le64(buf + 2, rec.payload);
  out_.write(reinterpret_cast<char*>(buf), kTraceRecordBytes);
}

void TraceWriter::write_all(std::span<const TraceRecord> recs) {
  for (const auto& r : recs) write(r);
}

void TraceWriter::close() {
  out_.close();
  if (out_.fail())
    throw TraceError(TraceError::Kind::Io, 0, "write failed for " + path_);
}

std::vector<TraceRecord> load_trace(const std::string& path) {
  TraceReader reader(path);
  std::vector<TraceRecord> out;
  TraceRecord rec;
  while (reader.next(rec)) out.push_back(rec);
  return out;
}

void save_trace(const std::string& path, std::span<const TraceRecord> recs) {
  TraceWriter writer(path);
  writer.write_all(recs);
  writer.close();
}

void SyntheticWorkloadSpec::validate() const {
  if (function_count == 0) throw InvalidSpecError("function_count must be > 0");
  if (mean_function_lines == 0)
    throw InvalidSpecError("mean_function_lines must be > 0");
  if (footprint_lines == 0) throw InvalidSpecError("footprint_lines must be > 0");
  if (rpc_length_mean == 0) throw InvalidSpecError("rpc_length_mean must be > 0");
  if (record_count == 0) throw InvalidSpecError("record_count must be > 0");
  for (double p : {loop_probability, call_probability, phase_churn_probability}) {
    if (!(p >= 0.0 && p <= 1.0))
      throw InvalidSpecError("probabilities must lie in [0,1]");
  }
}

namespace {

// Code layout: phases live 2^21 lines apart so cross-phase jumps always
// exceed the 20-bit delta reach; functions are contiguous ranges inside a
// phase, emitted in layout order.
struct Layout {
  struct Func {
    LineAddr base;
    std::uint64_t len;
  };
  std::vector<std::vector<Func>> phases;
};

constexpr LineAddr kPhaseStride = 1ull << 21;
constexpr LineAddr kLayoutOrigin = 1ull << 16;

Layout build_layout(const SyntheticWorkloadSpec& spec, Rng& rng) {
  const std::uint64_t per_phase =
      std::uint64_t(spec.function_count) * spec.mean_function_lines;
  const std::uint64_t phase_count =
      std::max<std::uint64_t>(1, spec.footprint_lines / std::max<std::uint64_t>(1, per_phase));
  const std::uint64_t budget = spec.footprint_lines / phase_count;

  Layout layout;
  layout.phases.resize(phase_count);
  for (std::uint64_t p = 0; p < phase_count; ++p) {
    LineAddr base = kLayoutOrigin + p * kPhaseStride;
    std::uint64_t used = 0;
    for (std::uint32_t f = 0; f < spec.function_count && used < budget; ++f) {
      std::uint64_t len =
          spec.mean_function_lines / 2 + rng.uniform(spec.mean_function_lines + 1);
      len = std::clamp<std::uint64_t>(len, 1, budget - used);
      layout.phases[p].push_back({base + used, len});
      used += len;
    }
    if (layout.phases[p].empty()) layout.phases[p].push_back({base, 1});
  }
  return layout;
}

// Call-stack walk over the layout.  One line per step; control flow is
// fall-through with occasional loops, calls, and cross-phase churn.
struct Walk {
  const SyntheticWorkloadSpec& spec;
  const Layout& layout;
  Rng& rng;
  std::size_t phase = 0;
  struct Frame {
    std::size_t func;
    std::uint64_t pos;
  };
  std::vector<Frame> stack;

  Walk(const SyntheticWorkloadSpec& s, const Layout& l, Rng& r)
      : spec(s), layout(l), rng(r) {
    stack.push_back({0, 0});
  }

  const Layout::Func& func(std::size_t f) const { return layout.phases[phase][f]; }
  std::size_t func_count() const { return layout.phases[phase].size(); }

  LineAddr current_line() const {
    const Frame& f = stack.back();
    return func(f.func).base + f.pos;
  }

  void jump_anywhere() {
    phase = rng.uniform(layout.phases.size());
    stack.clear();
    stack.push_back({rng.uniform(func_count()), 0});
  }

  std::size_t site_callee(LineAddr site) const {
    std::uint64_t x = site + 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return static_cast<std::size_t>((x ^ (x >> 31)) % func_count());
  }

  void advance() {
    if (rng.chance(spec.phase_churn_probability)) {
      jump_anywhere();
      return;
    }
    const std::size_t depth_cap = std::max<std::size_t>(1, spec.call_depth_max);
    if (stack.size() < depth_cap && rng.chance(spec.call_probability)) {
      // Callee is a fixed function of the call site, like a direct call.
      stack.push_back({site_callee(current_line()), 0});
      return;
    }
    Frame& f = stack.back();
    if (f.pos > 0 && rng.chance(spec.loop_probability)) {
      f.pos -= 1 + rng.uniform(std::min<std::uint64_t>(f.pos, 8));
      return;
    }
    ++f.pos;
    while (stack.back().pos >= func(stack.back().func).len) {
      stack.pop_back();
      if (stack.empty()) {
        stack.push_back({rng.uniform(func_count()), 0});
      } else {
        ++stack.back().pos;
      }
    }
  }
};

}  // namespace

std::vector<TraceRecord> generate_synthetic(const SyntheticWorkloadSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Layout layout = build_layout(spec, rng);
  Walk walk(spec, layout, rng);

  std::vector<TraceRecord> out;
  out.reserve(spec.record_count);
  std::uint32_t rpc_id = 0;

  while (spec.record_count - out.size() >= 3) {
    if (rng.chance(spec.phase_churn_probability)) walk.jump_anywhere();
    const std::uint8_t tag = static_cast<std::uint8_t>(rng.uniform(8));
    std::uint64_t burst =
        std::max<std::uint64_t>(1, spec.rpc_length_mean / 2 +
                                       rng.uniform(spec.rpc_length_mean + 1));
    burst = std::min<std::uint64_t>(burst, spec.record_count - out.size() - 2);
    ++rpc_id;
    out.push_back(TraceRecord::rpc_begin(rpc_id, tag));
    for (std::uint64_t i = 0; i < burst; ++i) {
      out.push_back(TraceRecord::fetch(walk.current_line() << kLineBits, tag));
      walk.advance();
    }
    out.push_back(TraceRecord::rpc_end(rpc_id, tag));
  }
  // A trailing remainder of 1 or 2 records cannot hold a begin/fetch/end
  // burst; pad with an empty pair or a bare fetch.
  if (spec.record_count - out.size() == 2) {
    ++rpc_id;
    out.push_back(TraceRecord::rpc_begin(rpc_id, 0));
    out.push_back(TraceRecord::rpc_end(rpc_id, 0));
  } else if (spec.record_count - out.size() == 1) {
    out.push_back(TraceRecord::fetch(walk.current_line() << kLineBits, 0));
  }
  return out;
}

namespace {

// Minimal 8-way 512-line LRU instruction cache used only to extract the
// consecutive-miss pairs the statistics are defined over.
class ReplayCache {
 public:
  static constexpr unsigned kWays = 8;
  static constexpr unsigned kSets = 64;

  bool access(LineAddr line) {
    Way* set = ways_ + (line % kSets) * kWays;
    ++tick_;
    for (unsigned w = 0; w < kWays; ++w) {
      if (set[w].valid && set[w].line == line) {
        set[w].stamp = tick_;
        return true;
      }
    }
    Way* victim = nullptr;
    for (unsigned w = 0; w < kWays && !victim; ++w) {
      if (!set[w].valid) victim = set + w;
    }
    if (!victim) {
      victim = set;
      for (unsigned w = 1; w < kWays; ++w) {
        if (set[w].stamp < victim->stamp) victim = set + w;
      }
    }
    victim->valid = true;
    victim->line = line;
    victim->stamp = tick_;
    return false;
  }

 private:
  struct Way {
    LineAddr line = 0;
    std::uint64_t stamp = 0;
    bool valid = false;
  };
  Way ways_[kSets * kWays] = {};
  std::uint64_t tick_ = 0;
};

std::uint64_t best_window(const std::unordered_map<LineAddr, std::uint64_t>& dests,
                          unsigned window) {
  std::vector<LineAddr> lines;
  lines.reserve(dests.size());
  for (const auto& [d, _] : dests) lines.push_back(d);
  std::sort(lines.begin(), lines.end());
  std::uint64_t best = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::uint64_t covered = 0;
    for (std::size_t j = i; j < lines.size() && lines[j] - lines[i] < window; ++j)
      covered += dests.at(lines[j]);
    best = std::max(best, covered);
  }
  return best;
}

}  // namespace

ClusterStats cluster_stats(std::span<const TraceRecord> trace,
                           std::span<const unsigned> window_sizes) {
  bool any_fetch = false;
  for (const auto& r : trace) {
    if (r.kind == RecordKind::Fetch) {
      any_fetch = true;
      break;
    }
  }
  if (!any_fetch) throw EmptyTraceError();

  ReplayCache cache;
  std::unordered_map<LineAddr, std::unordered_map<LineAddr, std::uint64_t>> pairs;
  ClusterStats stats;
  std::uint64_t delta20 = 0;
  LineAddr prev_miss = 0;
  bool have_prev = false;
  for (const auto& r : trace) {
    if (r.kind != RecordKind::Fetch) continue;
    const LineAddr line = r.line();
    if (cache.access(line)) continue;
    if (have_prev) {
      ++pairs[prev_miss][line];
      ++stats.pair_count;
      if ((prev_miss >> 20) == (line >> 20)) ++delta20;
    }
    prev_miss = line;
    have_prev = true;
  }

  if (stats.pair_count == 0) return stats;
  stats.delta20_fraction = double(delta20) / double(stats.pair_count);

  std::uint64_t covered8 = 0;
  for (const auto& [src, dests] : pairs) covered8 += best_window(dests, 8);
  stats.window8_fraction = double(covered8) / double(stats.pair_count);

  for (unsigned w : window_sizes) {
    std::uint64_t covered = 0;
    for (const auto& [src, dests] : pairs) covered += best_window(dests, w);
    stats.per_window_histogram[w] = covered;
  }
  return stats;
}

}  // namespace ipf
