#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <unistd.h>

#include "ipfsim/rng.hpp"
#include "ipfsim/trace.hpp"

using namespace ipf;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() /
         ("ipfsim_trace_" + std::to_string(::getpid()) + "_" + name);
}

struct temp_file {
  std::filesystem::path path;
  explicit temp_file(const std::string& name) : path(temp_path(name)) {}
  ~temp_file() {
    std::error_code ec;
    std::filesystem::remove(path, ec);
  }
};

void write_bytes(const std::filesystem::path& p,
                 const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

std::vector<unsigned char> valid_header() {
  return {'S', 'L', 'O', 'F', 1, 0, 0, 0};
}

// Reference replay used by the cluster_stats oracle: same 512-line 8-way
// geometry, but a recency-list implementation instead of stamped ways.
struct list_lru {
  static constexpr unsigned ways = 8;
  static constexpr unsigned sets = 64;
  std::vector<LineAddr> set[sets];

  bool access(LineAddr line) {
    auto& s = set[line % sets];
    for (auto it = s.begin(); it != s.end(); ++it) {
      if (*it == line) {
        s.erase(it);
        s.insert(s.begin(), line);
        return true;
      }
    }
    if (s.size() == ways) s.pop_back();
    s.insert(s.begin(), line);
    return false;
  }
};

// Quadratic recount. A window covering anything has its base within
// window-1 lines below some destination, so scanning those bases is a
// complete search.
std::uint64_t oracle_best_window(const std::map<LineAddr, std::uint64_t>& dests,
                                 unsigned window) {
  std::uint64_t best = 0;
  for (const auto& [d, _] : dests) {
    const LineAddr start = d >= window - 1 ? d - (window - 1) : 0;
    for (LineAddr b = start; b <= d; ++b) {
      std::uint64_t covered = 0;
      for (const auto& [e, n] : dests) {
        if (e >= b && e - b < window) covered += n;
      }
      best = std::max(best, covered);
    }
  }
  return best;
}

}  // namespace

TEST_CASE("trace record line extraction drops six bits") {
  CHECK(TraceRecord::fetch(0x40).line() == 1);
  CHECK(TraceRecord::fetch(0x7F).line() == 1);
  CHECK(TraceRecord::fetch(0x80).line() == 2);
  CHECK(TraceRecord::rpc_begin(7).rpc_id() == 7);
}

TEST_CASE("save/load round trip and file size") {
  temp_file f("roundtrip.slof");
  std::vector<TraceRecord> recs = {
      TraceRecord::rpc_begin(1, 3),
      TraceRecord::fetch(0x1234560, 3),
      TraceRecord::fetch(0xFFFFFFFFFFFFFFC0ull, 3),
      TraceRecord::rpc_end(1, 3),
  };
  save_trace(f.path.string(), recs);

  CHECK(std::filesystem::file_size(f.path) ==
        kTraceHeaderBytes + kTraceRecordBytes * recs.size());
  const auto bytes = read_bytes(f.path);
  CHECK(bytes[0] == 'S');
  CHECK(bytes[1] == 'L');
  CHECK(bytes[2] == 'O');
  CHECK(bytes[3] == 'F');
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);

  const auto loaded = load_trace(f.path.string());
  CHECK(loaded == recs);
}

TEST_CASE("empty body after valid header loads as empty stream") {
  temp_file f("empty.slof");
  write_bytes(f.path, valid_header());
  CHECK(load_trace(f.path.string()).empty());
}

TEST_CASE("malformed trace files fail with kind and byte offset") {
  SUBCASE("missing file") {
    try {
      load_trace(temp_path("no_such_file.slof").string());
      FAIL("expected TraceError");
    } catch (const TraceError& e) {
      CHECK(e.kind == TraceError::Kind::Io);
    }
  }
  SUBCASE("bad magic") {
    temp_file f("badmagic.slof");
    write_bytes(f.path, {'S', 'L', 'O', 'X', 1, 0, 0, 0});
    try {
      load_trace(f.path.string());
      FAIL("expected TraceError");
    } catch (const TraceError& e) {
      CHECK(e.kind == TraceError::Kind::BadMagic);
      CHECK(e.byte_offset == 0);
    }
  }
  SUBCASE("bad version") {
    temp_file f("badver.slof");
    write_bytes(f.path, {'S', 'L', 'O', 'F', 2, 0, 0, 0});
    try {
      load_trace(f.path.string());
      FAIL("expected TraceError");
    } catch (const TraceError& e) {
      CHECK(e.kind == TraceError::Kind::BadVersion);
      CHECK(e.byte_offset == 4);
    }
  }
  SUBCASE("truncated record") {
    temp_file f("trunc.slof");
    auto bytes = valid_header();
    bytes.insert(bytes.end(), {0, 0, 0x40, 0, 0});  // 5 of 10 bytes
    write_bytes(f.path, bytes);
    try {
      load_trace(f.path.string());
      FAIL("expected TraceError");
    } catch (const TraceError& e) {
      CHECK(e.kind == TraceError::Kind::TruncatedRecord);
      CHECK(e.byte_offset == 8);
    }
  }
  SUBCASE("unknown kind in second record") {
    temp_file f("unkkind.slof");
    auto bytes = valid_header();
    const std::vector<unsigned char> good = {0, 0, 0x40, 0, 0, 0, 0, 0, 0, 0};
    const std::vector<unsigned char> bad = {9, 0, 0, 0, 0, 0, 0, 0, 0, 0};
    bytes.insert(bytes.end(), good.begin(), good.end());
    bytes.insert(bytes.end(), bad.begin(), bad.end());
    write_bytes(f.path, bytes);
    try {
      load_trace(f.path.string());
      FAIL("expected TraceError");
    } catch (const TraceError& e) {
      CHECK(e.kind == TraceError::Kind::UnknownKind);
      CHECK(e.byte_offset == 8 + 10);
    }
  }
}

TEST_CASE("spec validation rejects zero counts and bad probabilities") {
  SyntheticWorkloadSpec spec;
  CHECK_NOTHROW(spec.validate());
  SyntheticWorkloadSpec bad = spec;
  bad.function_count = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidSpecError);
  bad = spec;
  bad.record_count = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidSpecError);
  bad = spec;
  bad.loop_probability = 1.5;
  CHECK_THROWS_AS(bad.validate(), InvalidSpecError);
  bad = spec;
  bad.phase_churn_probability = -0.1;
  CHECK_THROWS_AS(bad.validate(), InvalidSpecError);
}

TEST_CASE("generator determinism, exact length, and footprint over random specs") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    SyntheticWorkloadSpec spec;
    spec.seed = rng.next();
    spec.function_count = 1 + std::uint32_t(rng.uniform(64));
    spec.mean_function_lines = 1 + std::uint32_t(rng.uniform(30));
    spec.call_depth_max = std::uint32_t(rng.uniform(6));
    spec.loop_probability = rng.unit() * 0.5;
    spec.call_probability = rng.unit() * 0.3;
    spec.phase_churn_probability = rng.unit() * 0.05;
    spec.footprint_lines = 16 + rng.uniform(6000);
    spec.rpc_length_mean = 1 + std::uint32_t(rng.uniform(400));
    spec.record_count = 3 + rng.uniform(3000);

    const auto a = generate_synthetic(spec);
    const auto b = generate_synthetic(spec);
    REQUIRE(a == b);
    REQUIRE(a.size() == spec.record_count);

    std::set<LineAddr> lines;
    std::set<std::uint32_t> open;
    for (const auto& r : a) {
      CHECK(r.thread_tag < 8);
      if (r.kind == RecordKind::Fetch) {
        lines.insert(r.line());
      } else if (r.kind == RecordKind::RpcBegin) {
        CHECK(open.insert(r.rpc_id()).second);
      } else {
        CHECK(open.erase(r.rpc_id()) == 1);
      }
    }
    CHECK(lines.size() <= spec.footprint_lines);
    CHECK(open.empty());
  }
}

TEST_CASE("single function without control flow walks sequentially") {
  SyntheticWorkloadSpec spec;
  spec.function_count = 1;
  spec.call_probability = 0.0;
  spec.loop_probability = 0.0;
  spec.phase_churn_probability = 0.0;
  spec.footprint_lines = 12;
  spec.record_count = 500;

  const auto trace = generate_synthetic(spec);
  LineAddr first = 0, prev = 0;
  bool have_first = false;
  for (const auto& r : trace) {
    if (r.kind != RecordKind::Fetch) continue;
    const LineAddr line = r.line();
    if (!have_first) {
      first = prev = line;
      have_first = true;
      continue;
    }
    const bool step = line == prev + 1;
    const bool wrap = line == first;
    CHECK((step || wrap));
    prev = line;
  }
}

TEST_CASE("default spec clusters at least 70 percent within an 8-line window") {
  const auto trace = generate_synthetic(SyntheticWorkloadSpec{});
  const ClusterStats stats = cluster_stats(trace);
  CHECK(stats.pair_count > 1000);
  CHECK(stats.window8_fraction >= 0.7);
}

TEST_CASE("cluster_stats trivial shapes") {
  SUBCASE("strictly sequential trace covers every pair in any window") {
    std::vector<TraceRecord> trace;
    for (LineAddr l = 100; l < 800; ++l)
      trace.push_back(TraceRecord::fetch(l << kLineBits));
    const ClusterStats stats = cluster_stats(trace);
    CHECK(stats.pair_count == 699);
    CHECK(stats.delta20_fraction == 1.0);
    CHECK(stats.window8_fraction == 1.0);
  }
  SUBCASE("two lines 2^21 apart never fit a 20-bit delta") {
    std::vector<TraceRecord> trace;
    const LineAddr a = 5, b = 5 + (1ull << 21);
    for (int i = 0; i < 50; ++i) {
      trace.push_back(TraceRecord::fetch(a << kLineBits));
      trace.push_back(TraceRecord::fetch(b << kLineBits));
    }
    const ClusterStats stats = cluster_stats(trace);
    CHECK(stats.pair_count == 1);  // both resident after the cold misses
    CHECK(stats.delta20_fraction == 0.0);
  }
  SUBCASE("no fetch records throws") {
    std::vector<TraceRecord> trace = {TraceRecord::rpc_begin(1),
                                      TraceRecord::rpc_end(1)};
    CHECK_THROWS_AS(cluster_stats(trace), EmptyTraceError);
  }
  SUBCASE("single fetch has no pairs") {
    std::vector<TraceRecord> trace = {TraceRecord::fetch(0x40)};
    const ClusterStats stats = cluster_stats(trace);
    CHECK(stats.pair_count == 0);
    CHECK(stats.window8_fraction == 0.0);
  }
}

TEST_CASE("cluster_stats matches a quadratic recount on generated traces") {
  for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
    SyntheticWorkloadSpec spec;
    spec.seed = seed;
    spec.footprint_lines = 1536;
    spec.record_count = 20000;
    const auto trace = generate_synthetic(spec);

    list_lru replay;
    std::map<LineAddr, std::map<LineAddr, std::uint64_t>> pairs;
    std::uint64_t pair_count = 0, delta20 = 0;
    LineAddr prev = 0;
    bool have_prev = false;
    for (const auto& r : trace) {
      if (r.kind != RecordKind::Fetch) continue;
      const LineAddr line = r.line();
      if (replay.access(line)) continue;
      if (have_prev) {
        ++pairs[prev][line];
        ++pair_count;
        if ((prev >> 20) == (line >> 20)) ++delta20;
      }
      prev = line;
      have_prev = true;
    }

    const ClusterStats stats = cluster_stats(trace);
    REQUIRE(stats.pair_count == pair_count);
    CHECK(stats.delta20_fraction ==
          doctest::Approx(double(delta20) / double(pair_count)).epsilon(1e-12));

    for (unsigned w : {4u, 8u, 12u, 16u}) {
      std::uint64_t covered = 0;
      for (const auto& [src, dests] : pairs) covered += oracle_best_window(dests, w);
      REQUIRE(stats.per_window_histogram.at(w) == covered);
    }
    CHECK(stats.window8_fraction ==
          doctest::Approx(double(stats.per_window_histogram.at(8)) /
                          double(pair_count))
              .epsilon(1e-12));

    // coverage is monotone in window size
    CHECK(stats.per_window_histogram.at(4) <= stats.per_window_histogram.at(8));
    CHECK(stats.per_window_histogram.at(8) <= stats.per_window_histogram.at(12));
    CHECK(stats.per_window_histogram.at(12) <= stats.per_window_histogram.at(16));
  }
}

TEST_CASE("generated trace round trips through the binary format") {
  SyntheticWorkloadSpec spec;
  spec.record_count = 5000;
  const auto trace = generate_synthetic(spec);
  temp_file f("gen_roundtrip.slof");
  save_trace(f.path.string(), trace);
  CHECK(load_trace(f.path.string()) == trace);
}
