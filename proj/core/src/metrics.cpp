#include "ipfsim/metrics.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>

#include <json.hpp>

namespace ipf {

const char* to_string(PrefetchFate fate) {
  switch (fate) {
    case PrefetchFate::Useful: return "useful";
    case PrefetchFate::Useless: return "useless";
    case PrefetchFate::Late: return "late";
    case PrefetchFate::Polluting: return "polluting";
  }
  return "?";
}

PrefetchClassifier::PrefetchClassifier(Cycle horizon, std::uint32_t l1_sets)
    : horizon_(horizon), l1_sets_(l1_sets), ghosts_(l1_sets) {
  assert(l1_sets > 0);
}

std::uint64_t PrefetchClassifier::on_issue(LineAddr line, Cycle now) {
  Record r;
  r.id = next_id_++;
  r.line = line;
  r.issue_time = now;
  records_.emplace(r.id, r);
  by_line_[line] = r.id;
  ++issued;
  return r.id;
}

void PrefetchClassifier::on_fill(std::uint64_t id, Cycle now,
                                 std::optional<LineAddr> evicted) {
  auto it = records_.find(id);
  assert(it != records_.end() && !it->second.filled);
  it->second.filled = true;
  it->second.fill_time = now;
  order_.push_back(id);
  if (evicted) {
    ghosts_[*evicted % l1_sets_].push_back({*evicted, now, id});
  }
}

void PrefetchClassifier::on_demand_prefetch_hit(LineAddr line, Cycle now) {
  auto it = by_line_.find(line);
  if (it == by_line_.end()) return;
  auto rec = records_.find(it->second);
  if (rec != records_.end() && rec->second.filled) rec->second.demanded = true;
  (void)now;
}

void PrefetchClassifier::on_demand_late(LineAddr line, Cycle now) {
  auto it = by_line_.find(line);
  if (it == by_line_.end()) return;
  auto rec = records_.find(it->second);
  if (rec != records_.end() && !rec->second.filled) rec->second.late = true;
  (void)now;
}

void PrefetchClassifier::on_demand_miss(LineAddr line, Cycle now) {
  auto& ghosts = ghosts_[line % l1_sets_];
  while (!ghosts.empty() && ghosts.front().evicted_at + horizon_ < now)
    ghosts.pop_front();
  for (auto it = ghosts.begin(); it != ghosts.end(); ++it) {
    if (it->line != line) continue;
    auto rec = records_.find(it->prefetch_id);
    if (rec != records_.end()) rec->second.polluted = true;
    ghosts.erase(it);
    return;
  }
}

void PrefetchClassifier::resolve(Record& r) {
  assert(!r.resolved);
  r.resolved = true;
  PrefetchFate fate;
  if (r.polluted) {
    fate = PrefetchFate::Polluting;
    ++polluting;
  } else if (r.late) {
    fate = PrefetchFate::Late;
    ++late;
  } else if (r.demanded) {
    fate = PrefetchFate::Useful;
    ++useful;
  } else {
    fate = PrefetchFate::Useless;
    ++useless;
  }
  if (on_fate) on_fate(r.id, fate);
  auto it = by_line_.find(r.line);
  if (it != by_line_.end() && it->second == r.id) by_line_.erase(it);
}

void PrefetchClassifier::advance(Cycle now) {
  while (!order_.empty()) {
    const std::uint64_t id = order_.front();
    auto it = records_.find(id);
    assert(it != records_.end());
    if (it->second.fill_time + horizon_ >= now) break;
    order_.pop_front();
    resolve(it->second);
    records_.erase(it);
  }
}

void PrefetchClassifier::finalize(Cycle now) {
  advance(now);
  // Remaining filled records have an unexpired horizon; settle them on the
  // evidence so far. Unfilled ones stay in flight unless a demand already
  // rode them.
  for (auto& [id, r] : records_) {
    if (r.resolved) continue;
    if (r.filled || r.late) {
      resolve(r);
    } else {
      ++leftover_in_flight;
    }
  }
  records_.clear();
  order_.clear();
  by_line_.clear();
}

std::uint64_t percentile(std::span<const std::uint64_t> samples, double q) {
  if (samples.empty()) throw EmptySampleError();
  std::vector<std::uint64_t> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::uint64_t>(std::ceil(q * n - 1e-9));
  rank = std::clamp<std::uint64_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

double utility(const SimulationReport& baseline, const SimulationReport& variant,
               const UtilityWeights& weights) {
  if (baseline.instructions != variant.instructions)
    throw MismatchedTracesError();
  double u = 0.0;
  const double p95b = static_cast<double>(baseline.rpc_latencies.p95);
  const double p95v = static_cast<double>(variant.rpc_latencies.p95);
  if (p95b > 0.0) u += weights.alpha * std::max(0.0, p95b - p95v) / p95b;
  if (baseline.mpki > 0.0)
    u += weights.beta * std::max(0.0, baseline.mpki - variant.mpki) /
         baseline.mpki;
  u -= weights.gamma *
       std::max(0.0, variant.bandwidth_fills_per_kilo_instr -
                         baseline.bandwidth_fills_per_kilo_instr) /
       std::max(baseline.bandwidth_fills_per_kilo_instr, 1e-9);
  u -= weights.delta *
       std::max(0.0, double(variant.polluting) - double(baseline.polluting)) /
       std::max(double(baseline.instructions) / 1000.0, 1.0);
  return u;
}

std::string SimulationReport::to_json() const {
  nlohmann::ordered_json j;
  j["variant"] = variant;
  j["instructions"] = instructions;
  j["cycles"] = cycles;
  j["l1i_misses"] = l1i_misses;
  j["mpki"] = mpki;
  j["mpki_reduction_vs_baseline"] = mpki_reduction_vs_baseline;
  j["issued"] = issued;
  j["useful"] = useful;
  j["useless"] = useless;
  j["late"] = late;
  j["polluting"] = polluting;
  j["accuracy"] = accuracy;
  j["coverage"] = coverage;
  j["bandwidth_fills_per_kilo_instr"] = bandwidth_fills_per_kilo_instr;
  j["rpc_latencies"] = {{"p50", rpc_latencies.p50},
                        {"p95", rpc_latencies.p95},
                        {"p99", rpc_latencies.p99}};
  j["utility"] = utility;
  j["uncovered_destination_fraction"] = uncovered_destination_fraction;
  return j.dump(2);
}

std::vector<ComparisonRow> compare(const SimulationReport& baseline,
                                   std::span<const SimulationReport> variants,
                                   std::span<const std::uint64_t> budgets,
                                   const UtilityWeights& weights) {
  assert(budgets.empty() || budgets.size() == variants.size());
  std::vector<ComparisonRow> rows;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const SimulationReport& v = variants[i];
    if (v.instructions != baseline.instructions) throw MismatchedTracesError();
    ComparisonRow row;
    row.variant = v.variant;
    row.speedup = v.cycles > 0
                      ? double(baseline.cycles) / double(v.cycles)
                      : 1.0;
    row.mpki_reduction = baseline.mpki > 0.0
                             ? (baseline.mpki - v.mpki) / baseline.mpki
                             : 0.0;
    row.accuracy = v.accuracy;
    row.coverage = v.coverage;
    row.bandwidth = v.bandwidth_fills_per_kilo_instr;
    row.p95 = v.rpc_latencies.p95;
    row.utility = utility(baseline, v, weights);
    row.uncovered_fraction = v.uncovered_destination_fraction;
    row.budget_bytes = budgets.empty() ? 0 : budgets[i];
    rows.push_back(row);
  }
  std::sort(rows.begin(), rows.end(),
            [](const ComparisonRow& a, const ComparisonRow& b) {
              return a.variant < b.variant;
            });
  return rows;
}

std::string comparison_csv(std::span<const ComparisonRow> rows) {
  std::string out =
      "variant,speedup,mpki_reduction,accuracy,coverage,bandwidth,p95,"
      "utility,uncovered_fraction,budget_bytes\n";
  char buf[256];
  for (const ComparisonRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g,%.9g,%.9g,%llu,%.9g,%.9g,%llu\n",
                  r.variant.c_str(), r.speedup, r.mpki_reduction, r.accuracy,
                  r.coverage, r.bandwidth,
                  static_cast<unsigned long long>(r.p95), r.utility,
                  r.uncovered_fraction,
                  static_cast<unsigned long long>(r.budget_bytes));
    out += buf;
  }
  return out;
}

}  // namespace ipf
