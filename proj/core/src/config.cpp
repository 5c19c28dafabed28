#include "ipfsim/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace ipf {

const char* to_string(Variant v) {
  switch (v) {
    case Variant::NextLineOnly: return "NextLineOnly";
    case Variant::Eip: return "EIP";
    case Variant::Ceip: return "CEIP";
    case Variant::Cheip: return "CHEIP";
    case Variant::CheipController: return "CHEIP+Controller";
  }
  return "?";
}

std::optional<Variant> parse_variant(const std::string& name) {
  std::string low;
  for (char c : name) low += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (low == "nextlineonly" || low == "baseline") return Variant::NextLineOnly;
  if (low == "eip") return Variant::Eip;
  if (low == "ceip") return Variant::Ceip;
  if (low == "cheip") return Variant::Cheip;
  if (low == "cheip+controller" || low == "cheip_controller" || low == "controller")
    return Variant::CheipController;
  return std::nullopt;
}

std::vector<Variant> all_variants() {
  return {Variant::NextLineOnly, Variant::Eip, Variant::Ceip, Variant::Cheip,
          Variant::CheipController};
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

KeyValueConfig KeyValueConfig::from_string(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos)
      line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("line " + std::to_string(lineno) +
                        ": empty key or value");
    cfg.set(key, value);
  }
  return cfg;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  kv_[key] = value;
}

bool KeyValueConfig::has(const std::string& key) const {
  return kv_.count(key) > 0;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& dflt) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? dflt : it->second;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key,
                                      std::uint64_t dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  try {
    std::size_t pos = 0;
    const std::uint64_t v = std::stoull(it->second, &pos, 0);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected unsigned integer, got '" + it->second +
                      "'");
  }
}

double KeyValueConfig::get_double(const std::string& key, double dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected number, got '" + it->second + "'");
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  const std::string& v = it->second;
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "variant",
      "seed",
      "warmup_instructions",
      "next_line.enabled",
      "trace.path",
      "l1i.size_kb", "l1i.ways", "l1i.latency",
      "l2.size_kb", "l2.ways", "l2.latency",
      "l3.size_kb", "l3.ways", "l3.latency",
      "dram.latency",
      "prefetch.tokens_per_kcycle",
      "eip.sets", "eip.ways", "eip.trigger_confidence",
      "table.sets", "table.ways",
      "ctrl.lr", "ctrl.epsilon", "ctrl.period", "ctrl.horizon",
      "ctrl.shadow", "ctrl.lambda_useless", "ctrl.lambda_evict",
      "synth.seed", "synth.function_count", "synth.mean_function_lines",
      "synth.call_depth_max", "synth.loop_probability",
      "synth.call_probability", "synth.phase_churn_probability",
      "synth.footprint_lines", "synth.rpc_length_mean", "synth.record_count",
  };
  return keys;
}

namespace {

std::uint32_t u32_key(const KeyValueConfig& kv, const std::string& key,
                      std::uint32_t dflt) {
  const std::uint64_t v = kv.get_u64(key, dflt);
  if (v > 0xFFFFFFFFull) throw ConfigError(key + ": out of range");
  return static_cast<std::uint32_t>(v);
}

bool power_of_two(std::uint64_t v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

void RunConfig::validate() const {
  cache.validate();
  if (!power_of_two(eip.sets)) throw ConfigError("eip.sets must be a power of two");
  if (eip.ways == 0) throw ConfigError("eip.ways must be > 0");
  if (eip.trigger_confidence > 3)
    throw ConfigError("eip.trigger_confidence must be in [0,3]");
  if (!power_of_two(table.sets))
    throw ConfigError("table.sets must be a power of two");
  const std::uint64_t entries = table.entries();
  if (entries != 2048 && entries != 4096)
    throw ConfigError("table must hold 2048 or 4096 entries (sets x ways)");
  if (!(ctrl.learning_rate > 0.0))
    throw ConfigError("ctrl.lr must be > 0");
  if (!(ctrl.epsilon >= 0.0 && ctrl.epsilon <= 1.0))
    throw ConfigError("ctrl.epsilon must be in [0,1]");
  if (ctrl.update_period_cycles == 0) throw ConfigError("ctrl.period must be > 0");
  if (ctrl.horizon_cycles == 0) throw ConfigError("ctrl.horizon must be > 0");
  if (ctrl.lambda_useless < 0.0 || ctrl.lambda_evict < 0.0)
    throw ConfigError("ctrl.lambda_* must be >= 0");
  if (!trace_path) synth.validate();
}

std::uint64_t RunConfig::metadata_budget_bytes() const {
  switch (variant) {
    case Variant::NextLineOnly:
      return 0;
    case Variant::Eip: {
      // Reconstructed baseline entry: 58-bit source plus eight destination
      // records of 58-bit line + 2-bit confidence.
      const std::uint64_t entry_bits = 58 + 8ull * (58 + 2);
      return HistoryQueue::byte_cost() +
             std::uint64_t(eip.sets) * eip.ways * entry_bits / 8;
    }
    case Variant::Ceip:
      // Flat-table variant: no attached slots.
      return compute_budget(table.entries(), 0).total_bytes;
    case Variant::Cheip:
    case Variant::CheipController:
      return compute_budget(table.entries(), cache.l1i.lines()).total_bytes;
  }
  return 0;
}

RunConfig build_run_config(const KeyValueConfig& kv) {
  for (const auto& [key, value] : kv.entries()) {
    if (std::find(known_keys().begin(), known_keys().end(), key) ==
        known_keys().end())
      throw ConfigError("unknown config key '" + key + "'");
  }

  RunConfig cfg;
  const std::string vname = kv.get_string("variant", "NextLineOnly");
  const auto variant = parse_variant(vname);
  if (!variant) throw ConfigError("unknown variant '" + vname + "'");
  cfg.variant = *variant;

  cfg.seed = kv.get_u64("seed", cfg.seed);
  cfg.warmup_instructions =
      kv.get_u64("warmup_instructions", cfg.warmup_instructions);
  cfg.next_line_enabled = kv.get_bool("next_line.enabled", cfg.next_line_enabled);

  cfg.cache.l1i.size_kb = u32_key(kv, "l1i.size_kb", cfg.cache.l1i.size_kb);
  cfg.cache.l1i.ways = u32_key(kv, "l1i.ways", cfg.cache.l1i.ways);
  cfg.cache.l1i.latency = u32_key(kv, "l1i.latency", cfg.cache.l1i.latency);
  cfg.cache.l2.size_kb = u32_key(kv, "l2.size_kb", cfg.cache.l2.size_kb);
  cfg.cache.l2.ways = u32_key(kv, "l2.ways", cfg.cache.l2.ways);
  cfg.cache.l2.latency = u32_key(kv, "l2.latency", cfg.cache.l2.latency);
  cfg.cache.l3.size_kb = u32_key(kv, "l3.size_kb", cfg.cache.l3.size_kb);
  cfg.cache.l3.ways = u32_key(kv, "l3.ways", cfg.cache.l3.ways);
  cfg.cache.l3.latency = u32_key(kv, "l3.latency", cfg.cache.l3.latency);
  cfg.cache.dram_latency = u32_key(kv, "dram.latency", cfg.cache.dram_latency);
  cfg.cache.prefetch_tokens_per_kcycle =
      u32_key(kv, "prefetch.tokens_per_kcycle",
              cfg.cache.prefetch_tokens_per_kcycle);

  cfg.eip.sets = u32_key(kv, "eip.sets", cfg.eip.sets);
  cfg.eip.ways = u32_key(kv, "eip.ways", cfg.eip.ways);
  cfg.eip.trigger_confidence = static_cast<std::uint8_t>(
      u32_key(kv, "eip.trigger_confidence", cfg.eip.trigger_confidence));

  cfg.table.sets = u32_key(kv, "table.sets", cfg.table.sets);
  cfg.table.ways = u32_key(kv, "table.ways", cfg.table.ways);

  cfg.ctrl.learning_rate = kv.get_double("ctrl.lr", cfg.ctrl.learning_rate);
  cfg.ctrl.epsilon = kv.get_double("ctrl.epsilon", cfg.ctrl.epsilon);
  cfg.ctrl.update_period_cycles =
      kv.get_u64("ctrl.period", cfg.ctrl.update_period_cycles);
  cfg.ctrl.horizon_cycles = kv.get_u64("ctrl.horizon", cfg.ctrl.horizon_cycles);
  cfg.ctrl.shadow = kv.get_bool("ctrl.shadow", cfg.ctrl.shadow);
  cfg.ctrl.lambda_useless =
      kv.get_double("ctrl.lambda_useless", cfg.ctrl.lambda_useless);
  cfg.ctrl.lambda_evict =
      kv.get_double("ctrl.lambda_evict", cfg.ctrl.lambda_evict);

  bool any_synth = false;
  for (const auto& [key, value] : kv.entries()) {
    if (key.rfind("synth.", 0) == 0) any_synth = true;
  }
  if (kv.has("trace.path")) {
    if (any_synth)
      throw ConfigError("trace.path and synth.* are mutually exclusive");
    cfg.trace_path = kv.get_string("trace.path", "");
  } else {
    cfg.synth.seed = kv.get_u64("synth.seed", cfg.synth.seed);
    cfg.synth.function_count =
        u32_key(kv, "synth.function_count", cfg.synth.function_count);
    cfg.synth.mean_function_lines =
        u32_key(kv, "synth.mean_function_lines", cfg.synth.mean_function_lines);
    cfg.synth.call_depth_max =
        u32_key(kv, "synth.call_depth_max", cfg.synth.call_depth_max);
    cfg.synth.loop_probability =
        kv.get_double("synth.loop_probability", cfg.synth.loop_probability);
    cfg.synth.call_probability =
        kv.get_double("synth.call_probability", cfg.synth.call_probability);
    cfg.synth.phase_churn_probability = kv.get_double(
        "synth.phase_churn_probability", cfg.synth.phase_churn_probability);
    cfg.synth.footprint_lines =
        kv.get_u64("synth.footprint_lines", cfg.synth.footprint_lines);
    cfg.synth.rpc_length_mean =
        u32_key(kv, "synth.rpc_length_mean", cfg.synth.rpc_length_mean);
    cfg.synth.record_count =
        kv.get_u64("synth.record_count", cfg.synth.record_count);
  }

  cfg.validate();
  return cfg;
}

}  // namespace ipf
