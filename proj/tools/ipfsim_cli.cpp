// Experiment runner: trace generation, variant simulation, comparisons,
// metadata budgets, and trace statistics.
//
// Exit codes:
//   0  success
//   1  usage error (bad flags, unknown subcommand)
//   2  configuration error (bad key, bad value, invalid workload spec)
//   3  trace content error (bad magic/version, truncated or unknown records,
//      empty trace)
//   4  I/O error (unreadable or unwritable files)
//   5  internal error

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ipfsim/config.hpp"
#include "ipfsim/hierarchy.hpp"
#include "ipfsim/metrics.hpp"
#include "ipfsim/simulator.hpp"
#include "ipfsim/trace.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitTrace = 3;
constexpr int kExitIo = 4;
constexpr int kExitInternal = 5;

struct CommonArgs {
  std::string config_path;
  std::string out_path;
  std::string format = "csv";
  std::map<std::string, std::string> overrides;
};

// Every config key doubles as a long flag (--seed, --variant, ...), so
// command lines can override file settings without editing them.
void add_common(CLI::App* sub, CommonArgs& args, bool with_format = false) {
  sub->add_option("--config", args.config_path, "key = value config file");
  sub->add_option("--out", args.out_path, "output path (default stdout)");
  if (with_format) {
    sub->add_option("--format", args.format, "output format")
        ->check(CLI::IsMember({"json", "csv"}));
  }
  for (const std::string& key : ipf::known_keys()) {
    sub->add_option("--" + key, args.overrides[key], "config key override");
  }
}

ipf::KeyValueConfig assemble(const CLI::App* sub, const CommonArgs& args) {
  ipf::KeyValueConfig kv;
  if (!args.config_path.empty())
    kv = ipf::KeyValueConfig::from_file(args.config_path);
  for (const std::string& key : ipf::known_keys()) {
    if (sub->count("--" + key) > 0) kv.set(key, args.overrides.at(key));
  }
  return kv;
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw ipf::TraceError(ipf::TraceError::Kind::Io, 0,
                          "cannot open " + out_path + " for writing");
  out << text;
  if (!out)
    throw ipf::TraceError(ipf::TraceError::Kind::Io, 0,
                          "write failed for " + out_path);
}

std::string cluster_stats_json(const ipf::ClusterStats& stats) {
  nlohmann::ordered_json j;
  j["pair_count"] = stats.pair_count;
  j["delta20_fraction"] = stats.delta20_fraction;
  j["window8_fraction"] = stats.window8_fraction;
  nlohmann::ordered_json hist;
  for (const auto& [w, covered] : stats.per_window_histogram)
    hist[std::to_string(w)] = covered;
  j["per_window_covered"] = hist;
  return j.dump(2);
}

int cmd_generate(const CLI::App* sub, const CommonArgs& args) {
  const ipf::RunConfig cfg = ipf::build_run_config(assemble(sub, args));
  if (cfg.trace_path)
    throw ipf::ConfigError("generate needs a synthetic source, not trace.path");
  if (args.out_path.empty())
    throw ipf::ConfigError("generate requires --out for the trace file");
  const auto trace = ipf::generate_synthetic(cfg.synth);
  ipf::save_trace(args.out_path, trace);
  std::cout << cluster_stats_json(ipf::cluster_stats(trace)) << "\n";
  return 0;
}

int cmd_run(const CLI::App* sub, const CommonArgs& args,
            const std::string& shadow_log_path,
            const std::string& metadata_dump_path) {
  const ipf::RunConfig cfg = ipf::build_run_config(assemble(sub, args));
  const auto trace = ipf::acquire_trace(cfg);

  std::ofstream shadow_log, metadata_dump;
  ipf::SimOptions opts;
  if (!shadow_log_path.empty()) {
    shadow_log.open(shadow_log_path, std::ios::trunc);
    if (!shadow_log)
      throw ipf::TraceError(ipf::TraceError::Kind::Io, 0,
                            "cannot open " + shadow_log_path);
    opts.shadow_log = &shadow_log;
  }
  if (!metadata_dump_path.empty()) {
    metadata_dump.open(metadata_dump_path, std::ios::binary | std::ios::trunc);
    if (!metadata_dump)
      throw ipf::TraceError(ipf::TraceError::Kind::Io, 0,
                            "cannot open " + metadata_dump_path);
    opts.metadata_dump = &metadata_dump;
  }

  const ipf::SimulationReport rep = ipf::run_with_baseline(cfg, trace, opts);
  emit(args.out_path, rep.to_json());
  return 0;
}

int cmd_compare(const CLI::App* sub, const CommonArgs& args,
                const std::string& variants_csv) {
  const ipf::RunConfig cfg = ipf::build_run_config(assemble(sub, args));
  const auto trace = ipf::acquire_trace(cfg);

  std::vector<ipf::Variant> variants;
  std::stringstream ss(variants_csv);
  std::string name;
  while (std::getline(ss, name, ',')) {
    const auto v = ipf::parse_variant(name);
    if (!v) throw ipf::ConfigError("unknown variant '" + name + "'");
    variants.push_back(*v);
  }
  if (variants.empty()) throw ipf::ConfigError("empty variant list");

  ipf::RunConfig base_cfg = cfg;
  base_cfg.variant = ipf::Variant::NextLineOnly;
  ipf::Simulator base_sim(base_cfg);
  const ipf::SimulationReport base = base_sim.run(trace);

  std::vector<ipf::SimulationReport> reports;
  std::vector<std::uint64_t> budgets;
  for (ipf::Variant v : variants) {
    ipf::RunConfig vcfg = cfg;
    vcfg.variant = v;
    ipf::SimulationReport rep;
    if (v == ipf::Variant::NextLineOnly) {
      rep = base;
    } else {
      ipf::Simulator sim(vcfg);
      rep = sim.run(trace);
      rep.mpki_reduction_vs_baseline =
          base.mpki > 0.0 ? (base.mpki - rep.mpki) / base.mpki : 0.0;
      rep.coverage = base.l1i_misses > rep.l1i_misses
                         ? double(base.l1i_misses - rep.l1i_misses) /
                               double(base.l1i_misses)
                         : 0.0;
      rep.utility = ipf::utility(base, rep);
    }
    reports.push_back(rep);
    budgets.push_back(vcfg.metadata_budget_bytes());
  }

  const auto rows = ipf::compare(base, reports, budgets);
  if (args.format == "csv") {
    emit(args.out_path, ipf::comparison_csv(rows));
  } else {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
      nlohmann::ordered_json j;
      j["variant"] = r.variant;
      j["speedup"] = r.speedup;
      j["mpki_reduction"] = r.mpki_reduction;
      j["accuracy"] = r.accuracy;
      j["coverage"] = r.coverage;
      j["bandwidth"] = r.bandwidth;
      j["p95"] = r.p95;
      j["utility"] = r.utility;
      j["uncovered_fraction"] = r.uncovered_fraction;
      j["budget_bytes"] = r.budget_bytes;
      arr.push_back(j);
    }
    emit(args.out_path, arr.dump(2));
  }
  return 0;
}

int cmd_budget(const CLI::App* sub, const CommonArgs& args) {
  const ipf::RunConfig cfg = ipf::build_run_config(assemble(sub, args));
  const ipf::BudgetReport b =
      ipf::compute_budget(cfg.table.entries(), cfg.cache.l1i.lines());
  nlohmann::ordered_json j;
  j["history_bytes"] = b.history_bytes;
  j["attached_bytes"] = b.attached_bytes;
  j["table_bytes"] = b.table_bytes;
  j["total_bytes"] = b.total_bytes;
  emit(args.out_path, j.dump(2));
  return 0;
}

int cmd_stats(const CLI::App* sub, const CommonArgs& args,
              const std::string& trace_arg) {
  std::vector<ipf::TraceRecord> trace;
  if (!trace_arg.empty()) {
    trace = ipf::load_trace(trace_arg);
  } else {
    trace = ipf::acquire_trace(ipf::build_run_config(assemble(sub, args)));
  }
  emit(args.out_path, cluster_stats_json(ipf::cluster_stats(trace)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic instruction-prefetch simulator"};
  app.require_subcommand(1);

  CommonArgs gen_args, run_args, cmp_args, budget_args, stats_args;
  std::string shadow_log_path, metadata_dump_path, trace_arg;
  std::string variants_csv = "NextLineOnly,EIP,CEIP,CHEIP,CHEIP+Controller";

  CLI::App* gen = app.add_subcommand(
      "generate", "write a synthetic trace and print its clustering stats");
  add_common(gen, gen_args);

  CLI::App* run = app.add_subcommand(
      "run", "simulate one variant and report metrics as JSON");
  add_common(run, run_args);
  run->add_option("--shadow-log", shadow_log_path,
                  "calibration CSV for controller shadow mode");
  run->add_option("--metadata-dump", metadata_dump_path,
                  "binary dump of surviving compressed entries");

  CLI::App* cmp = app.add_subcommand(
      "compare", "run several variants on one trace; CSV or JSON table");
  add_common(cmp, cmp_args, true);
  cmp->add_option("--variants", variants_csv, "comma-separated variant list");

  CLI::App* budget = app.add_subcommand(
      "budget", "print metadata budget arithmetic as JSON");
  add_common(budget, budget_args);

  CLI::App* stats = app.add_subcommand(
      "stats", "clustering statistics of a trace file or synthetic source");
  add_common(stats, stats_args);
  stats->add_option("trace", trace_arg, "trace file path");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_generate(gen, gen_args);
    if (run->parsed())
      return cmd_run(run, run_args, shadow_log_path, metadata_dump_path);
    if (cmp->parsed()) return cmd_compare(cmp, cmp_args, variants_csv);
    if (budget->parsed()) return cmd_budget(budget, budget_args);
    if (stats->parsed()) return cmd_stats(stats, stats_args, trace_arg);
    return 1;
  } catch (const CLI::ParseError& e) {
    // Collapse CLI11's parse codes onto the documented usage-error code;
    // --help still exits 0.
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const ipf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ipf::InvalidSpecError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ipf::TraceError& e) {
    if (e.kind == ipf::TraceError::Kind::Io) {
      std::cerr << "io error: " << e.what() << "\n";
      return kExitIo;
    }
    std::cerr << "trace error at byte " << e.byte_offset << ": " << e.what()
              << "\n";
    return kExitTrace;
  } catch (const ipf::EmptyTraceError& e) {
    std::cerr << "trace error: " << e.what() << "\n";
    return kExitTrace;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}
