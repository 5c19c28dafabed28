#include "ipfsim/simulator.hpp"

#include <algorithm>
#include <cassert>
#include <cstdio>
#include <deque>
#include <ostream>
#include <queue>
#include <unordered_map>

namespace ipf {

namespace {

// Sliding window of resolved prefetch outcomes for one source line.
struct SourceStats {
  std::deque<std::uint8_t> outcomes;  // 0 = hit, 1 = useless, 2 = polluting
  std::uint32_t hits = 0;
  std::uint32_t polluting = 0;

  void push(std::uint8_t code) {
    outcomes.push_back(code);
    if (code == 0) ++hits;
    if (code == 2) ++polluting;
    if (outcomes.size() > 64) {
      const std::uint8_t old = outcomes.front();
      outcomes.pop_front();
      if (old == 0) --hits;
      if (old == 2) --polluting;
    }
  }
  double hit_rate() const {
    // Neutral prior before any outcome lands.
    if (outcomes.empty()) return 0.5;
    return double(hits) / double(outcomes.size());
  }
  double pollution_rate() const {
    if (outcomes.empty()) return 0.0;
    return double(polluting) / double(outcomes.size());
  }
};

struct TriggerBatch {
  Cycle issue_at = 0;
  std::uint64_t seq = 0;
  LineAddr source = 0;
  std::vector<LineAddr> targets;
  bool decision = false;  // controller-gated batch
  FeatureVector features{};
  double probability = 0.0;
};

struct BatchOrder {
  bool operator()(const TriggerBatch& a, const TriggerBatch& b) const {
    if (a.issue_at != b.issue_at) return a.issue_at > b.issue_at;
    return a.seq > b.seq;
  }
};

struct Route {
  LineAddr source = 0;
  LineAddr target = 0;
  std::uint64_t decision_id = 0;
  bool entangled = false;  // false for next-line issues
};

struct Snapshot {
  Cycle cycles = 0;
  std::uint64_t instructions = 0;
  std::uint64_t misses = 0;
  std::uint64_t fills = 0;
  std::uint64_t issued = 0, useful = 0, useless = 0, late = 0, polluting = 0;
  std::uint64_t observations = 0, uncovered = 0;
};

}  // namespace

struct Simulator::Impl : CacheListener {
  RunConfig cfg;
  SimOptions opts;
  std::vector<SimEvent>* events;

  CacheHierarchy cache;
  NextLinePrefetcher next_line;
  HistoryQueue history;
  std::unique_ptr<EntangleTable> eip;
  std::unique_ptr<MetadataHierarchy> meta;
  std::unique_ptr<Controller> ctrl;
  PrefetchClassifier classifier;

  std::priority_queue<TriggerBatch, std::vector<TriggerBatch>, BatchOrder>
      pending_triggers;
  std::uint64_t batch_seq = 0;
  std::unordered_map<std::uint64_t, Route> routes;
  std::unordered_map<LineAddr, SourceStats> source_stats;
  std::unordered_map<LineAddr, std::uint64_t> last_seen;

  Cycle now = 0;
  std::uint64_t fetch_no = 0;
  std::uint64_t observations = 0;
  std::uint64_t uncovered = 0;

  std::unordered_map<std::uint32_t, std::pair<Cycle, bool>> open_rpcs;
  std::vector<std::uint64_t> rpc_latencies;
  bool past_warmup = false;
  Snapshot snap;

  Impl(const RunConfig& c, const SimOptions& o, std::vector<SimEvent>* ev)
      : cfg(c),
        opts(o),
        events(ev),
        cache(c.cache),
        classifier(c.ctrl.horizon_cycles, c.cache.l1i.sets()) {
    next_line.enabled = cfg.next_line_enabled;
    switch (cfg.variant) {
      case Variant::NextLineOnly:
        break;
      case Variant::Eip:
        eip = std::make_unique<EntangleTable>(cfg.eip);
        break;
      case Variant::Ceip:
        meta = std::make_unique<MetadataHierarchy>(cfg.table, false);
        break;
      case Variant::Cheip:
        meta = std::make_unique<MetadataHierarchy>(cfg.table, true);
        break;
      case Variant::CheipController:
        meta = std::make_unique<MetadataHierarchy>(cfg.table, true);
        ctrl = std::make_unique<Controller>(cfg.ctrl, cfg.seed);
        break;
    }
    cache.set_listener(this);
    classifier.on_fate = [this](std::uint64_t id, PrefetchFate fate) {
      on_fate(id, fate);
    };
    if (opts.shadow_log && ctrl && cfg.ctrl.shadow) {
      *opts.shadow_log << "cycle,source_line,predicted_p,chosen_arm,"
                          "hypothetical_targets,hypothetical_bandwidth\n";
    }
  }

  // --- CacheListener ---
  void l1_fill(LineAddr line, bool prefetch, Cycle at) override {
    if (meta) meta->on_l1_fill(line);
    (void)prefetch;
    (void)at;
  }
  void l1_evict(LineAddr line, EvictCause cause, Cycle at) override {
    if (meta) meta->on_l1_evict(line);
    (void)cause;
    (void)at;
  }
  void prefetch_fill(std::uint64_t id, LineAddr line, Cycle at,
                     std::optional<LineAddr> evicted) override {
    classifier.on_fill(id, at, evicted);
    log({SimEvent::Type::Fill, id, line, at, 0});
  }

  void log(const SimEvent& e) {
    if (opts.keep_event_log) events->push_back(e);
  }

  std::uint32_t full_latency(HitLevel level) const {
    switch (level) {
      case HitLevel::L1: return cfg.cache.l1i.latency;
      case HitLevel::L2: return cfg.cache.l2.latency;
      case HitLevel::L3: return cfg.cache.l3.latency;
      case HitLevel::DRAM: return cfg.cache.dram_latency;
    }
    return cfg.cache.dram_latency;
  }

  void on_fate(std::uint64_t id, PrefetchFate fate) {
    log({SimEvent::Type::Fate, id, 0, now, static_cast<std::uint8_t>(fate)});
    auto it = routes.find(id);
    assert(it != routes.end());
    const Route route = it->second;
    routes.erase(it);
    if (!route.entangled) return;

    std::uint8_t code;
    switch (fate) {
      case PrefetchFate::Useful:
      case PrefetchFate::Late: code = 0; break;
      case PrefetchFate::Useless: code = 1; break;
      case PrefetchFate::Polluting: code = 2; break;
    }
    source_stats[route.source].push(code);

    // Late still counts as a prefetch hit: the line intercepted its demand.
    if (fate == PrefetchFate::Useful || fate == PrefetchFate::Late) {
      if (eip) eip->reinforce(route.source, route.target);
      if (meta) meta->reinforce_target(route.source, route.target);
    } else if (fate == PrefetchFate::Useless || fate == PrefetchFate::Polluting) {
      if (eip) eip->weaken(route.source, route.target);
      if (meta) meta->weaken_target(route.source, route.target);
    }

    if (route.decision_id != 0) {
      TargetOutcome out = TargetOutcome::Hit;
      if (fate == PrefetchFate::Useless) out = TargetOutcome::Useless;
      if (fate == PrefetchFate::Polluting) out = TargetOutcome::Polluting;
      ctrl->target_resolved(route.decision_id, out);
    }
  }

  // Returns the prefetch id, or 0 if the cache refused the issue.
  std::uint64_t try_issue(LineAddr target, Cycle at, const Route& route) {
    const PrefetchStatus st = cache.issue_prefetch(target, at);
    if (st != PrefetchStatus::Issued) return 0;
    const std::uint64_t id = classifier.on_issue(target, at);
    assert(id == cache.last_issue_id());
    routes[id] = route;
    routes[id].target = target;
    log({SimEvent::Type::Issue, id, target, at, 0});
    return id;
  }

  void issue_batch(const TriggerBatch& b) {
    unsigned issued = 0;
    std::vector<std::uint64_t> ids;
    for (LineAddr t : b.targets) {
      Route route;
      route.source = b.source;
      route.entangled = true;
      const std::uint64_t id = try_issue(t, b.issue_at, route);
      if (id != 0) {
        ++issued;
        ids.push_back(id);
      }
    }
    if (b.decision && issued > 0) {
      const std::uint64_t did =
          ctrl->open_decision(b.issue_at, b.features, b.probability, issued);
      for (std::uint64_t id : ids) routes[id].decision_id = did;
    }
  }

  void run_due_triggers(Cycle upto) {
    while (!pending_triggers.empty() &&
           pending_triggers.top().issue_at <= upto) {
      const TriggerBatch b = pending_triggers.top();
      pending_triggers.pop();
      issue_batch(b);
    }
  }

  void schedule_batch(TriggerBatch&& b) {
    b.seq = ++batch_seq;
    if (b.issue_at <= now) {
      issue_batch(b);
    } else {
      pending_triggers.push(std::move(b));
    }
  }

  void take_snapshot() {
    snap.cycles = now;
    snap.instructions = fetch_no;
    snap.misses = cache.l1_demand_misses;
    snap.fills = cache.prefetch_fills;
    snap.issued = classifier.issued;
    snap.useful = classifier.useful;
    snap.useless = classifier.useless;
    snap.late = classifier.late;
    snap.polluting = classifier.polluting;
    snap.observations = observations;
    snap.uncovered = uncovered;
    past_warmup = true;
  }

  void trigger_path(LineAddr line, std::uint8_t tag, bool short_loop) {
    if (eip) {
      std::vector<LineAddr> ts = eip->trigger(line);
      if (!ts.empty()) {
        TriggerBatch b;
        b.issue_at = now;
        b.source = line;
        b.targets = std::move(ts);
        schedule_batch(std::move(b));
      }
      return;
    }
    if (!meta) return;
    auto hit = meta->lookup_for_trigger(line);
    if (!hit) return;
    const Cycle issue_at = hit->from_table ? now + cfg.cache.l2.latency : now;

    if (!ctrl) {
      std::vector<LineAddr> ts = targets(hit->entry, line,
                                         cfg.eip.trigger_confidence,
                                         kWindowLines);
      if (ts.empty()) return;
      TriggerBatch b;
      b.issue_at = issue_at;
      b.source = line;
      b.targets = std::move(ts);
      schedule_batch(std::move(b));
      return;
    }

    unsigned marked = 0;
    for (unsigned i = 0; i < kWindowLines; ++i) {
      if (hit->entry.marked(i)) marked |= 1u << i;
    }
    const SourceStats& stats = source_stats[line];
    const FeatureVector feats = make_features(
        line, decode_base(hit->entry, line), marked, stats.hit_rate(),
        stats.pollution_rate(), short_loop, tag);
    const Decision d = ctrl->decide(feats);
    std::vector<LineAddr> ts = targets(hit->entry, line,
                                       cfg.eip.trigger_confidence, d.arm.window);

    if (cfg.ctrl.shadow) {
      if (opts.shadow_log) {
        unsigned would_fill = 0;
        for (LineAddr t : ts) would_fill += !cache.l1_resident(t);
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%llu,%llu,%.6f,%.1f:%u,%zu,%u\n",
                      static_cast<unsigned long long>(now),
                      static_cast<unsigned long long>(line), d.probability,
                      d.arm.threshold, d.arm.window, ts.size(), would_fill);
        *opts.shadow_log << buf;
      }
      return;
    }
    if (!d.issue || ts.empty()) return;
    TriggerBatch b;
    b.issue_at = issue_at;
    b.source = line;
    b.targets = std::move(ts);
    b.decision = true;
    b.features = feats;
    b.probability = d.probability;
    schedule_batch(std::move(b));
  }

  void fetch(LineAddr line, std::uint8_t tag) {
    run_due_triggers(now);
    cache.drain_completions(now);
    classifier.advance(now);
    if (ctrl) ctrl->tick(now);

    bool short_loop = false;
    if (auto it = last_seen.find(line); it != last_seen.end())
      short_loop = fetch_no - it->second <= 32;
    last_seen[line] = fetch_no;

    const AccessResult r = cache.demand_fetch(line, now);

    if (r.hit_level != HitLevel::L1 || r.late_prefetch) {
      log({SimEvent::Type::DemandMiss, 0, line, now, 0});
      classifier.on_demand_miss(line, now);
      if (r.late_prefetch) classifier.on_demand_late(line, now);

      // Entangle: pair this destination with a source old enough that a
      // trigger there would have hidden the full miss latency.
      if (eip || meta) {
        const auto src = history.find_source(now, full_latency(r.hit_level));
        if (src && *src != line) {
          if (eip) {
            eip->entangle(*src, line);
          } else {
            const UpdateStatus st =
                meta->observe_pair(*src, line, cache.l1_resident(*src));
            ++observations;
            if (st == UpdateStatus::Dropped ||
                st == UpdateStatus::NotRepresentable)
              ++uncovered;
          }
        }
      }
    } else {
      log({SimEvent::Type::DemandHit, 0, line, now, 0});
      if (r.fill_was_prefetch) classifier.on_demand_prefetch_hit(line, now);
    }

    history.record_fetch(line, now);
    trigger_path(line, tag, short_loop);

    if (auto cand = next_line.candidate(r, line)) {
      Route route;  // next-line issues carry no metadata feedback
      try_issue(*cand, now, route);
    }

    const Cycle cost = 1 + r.latency_cycles;
    for (auto& [id, acc] : open_rpcs) acc.first += cost;
    now += cost;
    ++fetch_no;
    if (!past_warmup && fetch_no >= cfg.warmup_instructions) take_snapshot();
  }

  SimulationReport run(std::span<const TraceRecord> trace) {
    std::uint64_t total_fetches = 0;
    for (const auto& rec : trace) total_fetches += rec.kind == RecordKind::Fetch;
    if (total_fetches == 0) throw EmptyTraceError();
    if (cfg.warmup_instructions >= total_fetches)
      throw ConfigError("warmup_instructions must be below the trace's fetch count");
    if (cfg.warmup_instructions == 0) take_snapshot();

    for (const TraceRecord& rec : trace) {
      switch (rec.kind) {
        case RecordKind::Fetch:
          fetch(rec.line(), rec.thread_tag);
          break;
        case RecordKind::RpcBegin:
          open_rpcs[rec.rpc_id()] = {0, past_warmup};
          break;
        case RecordKind::RpcEnd: {
          auto it = open_rpcs.find(rec.rpc_id());
          if (it != open_rpcs.end()) {
            if (it->second.second) rpc_latencies.push_back(it->second.first);
            open_rpcs.erase(it);
          }
          break;
        }
      }
    }

    cache.drain_completions(now);
    classifier.advance(now);
    classifier.finalize(now);
    if (opts.metadata_dump && meta) meta->dump(*opts.metadata_dump);

    SimulationReport rep;
    rep.variant = to_string(cfg.variant);
    rep.instructions = fetch_no - snap.instructions;
    rep.cycles = now - snap.cycles;
    rep.l1i_misses = cache.l1_demand_misses - snap.misses;
    rep.mpki = rep.instructions > 0
                   ? double(rep.l1i_misses) / double(rep.instructions) * 1000.0
                   : 0.0;
    rep.issued = classifier.issued - snap.issued;
    rep.useful = classifier.useful - snap.useful;
    rep.useless = classifier.useless - snap.useless;
    rep.late = classifier.late - snap.late;
    rep.polluting = classifier.polluting - snap.polluting;
    rep.accuracy = rep.issued > 0 ? double(rep.useful) / double(rep.issued) : 0.0;
    rep.bandwidth_fills_per_kilo_instr =
        rep.instructions > 0
            ? double(cache.prefetch_fills - snap.fills) /
                  double(rep.instructions) * 1000.0
            : 0.0;
    if (!rpc_latencies.empty()) {
      rep.rpc_latencies.p50 = percentile(rpc_latencies, 0.50);
      rep.rpc_latencies.p95 = percentile(rpc_latencies, 0.95);
      rep.rpc_latencies.p99 = percentile(rpc_latencies, 0.99);
    }
    const std::uint64_t obs = observations - snap.observations;
    rep.uncovered_destination_fraction =
        obs > 0 ? double(uncovered - snap.uncovered) / double(obs) : 0.0;
    return rep;
  }
};

Simulator::Simulator(const RunConfig& cfg, SimOptions opts) {
  cfg.validate();
  impl_ = std::make_unique<Impl>(cfg, opts, &events_);
}

Simulator::~Simulator() = default;

SimulationReport Simulator::run(std::span<const TraceRecord> trace) {
  return impl_->run(trace);
}

const CacheHierarchy& Simulator::cache() const { return impl_->cache; }

const Controller* Simulator::controller() const { return impl_->ctrl.get(); }

SimulationReport run_with_baseline(const RunConfig& cfg,
                                   std::span<const TraceRecord> trace,
                                   SimOptions opts) {
  if (cfg.variant == Variant::NextLineOnly) {
    Simulator sim(cfg, opts);
    return sim.run(trace);
  }
  RunConfig base_cfg = cfg;
  base_cfg.variant = Variant::NextLineOnly;
  Simulator base_sim(base_cfg);
  const SimulationReport base = base_sim.run(trace);

  Simulator sim(cfg, opts);
  SimulationReport rep = sim.run(trace);
  rep.mpki_reduction_vs_baseline =
      base.mpki > 0.0 ? (base.mpki - rep.mpki) / base.mpki : 0.0;
  rep.coverage = base.l1i_misses > 0 && base.l1i_misses > rep.l1i_misses
                     ? double(base.l1i_misses - rep.l1i_misses) /
                           double(base.l1i_misses)
                     : 0.0;
  rep.utility = utility(base, rep);
  return rep;
}

std::vector<TraceRecord> acquire_trace(const RunConfig& cfg) {
  if (cfg.trace_path) return load_trace(*cfg.trace_path);
  return generate_synthetic(cfg.synth);
}

}  // namespace ipf
