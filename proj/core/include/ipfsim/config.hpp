#ifndef IPFSIM_CONFIG_HPP
#define IPFSIM_CONFIG_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ipfsim/cache.hpp"
#include "ipfsim/controller.hpp"
#include "ipfsim/eip.hpp"
#include "ipfsim/hierarchy.hpp"
#include "ipfsim/trace.hpp"

namespace ipf {

enum class Variant { NextLineOnly, Eip, Ceip, Cheip, CheipController };

const char* to_string(Variant v);
std::optional<Variant> parse_variant(const std::string& name);
std::vector<Variant> all_variants();

struct RunConfig {
  Variant variant = Variant::NextLineOnly;
  CacheConfig cache;
  EipConfig eip;
  TableConfig table;
  ControllerConfig ctrl;
  std::optional<std::string> trace_path;  // file source; else synthetic
  SyntheticWorkloadSpec synth;
  std::uint64_t warmup_instructions = 0;
  std::uint64_t seed = 1;
  bool next_line_enabled = true;  // debug gate

  void validate() const;
  std::uint64_t metadata_budget_bytes() const;
};

// Flat "key = value" config with dotted keys; '#' starts a comment. Unknown
// keys are rejected against the registry below.
class KeyValueConfig {
 public:
  static KeyValueConfig from_file(const std::string& path);
  static KeyValueConfig from_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& dflt) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t dflt) const;
  double get_double(const std::string& key, double dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

// Every recognized config key, for strict validation and CLI flag mirroring.
const std::vector<std::string>& known_keys();

// Builds a RunConfig, throwing ConfigError on unknown keys, malformed
// values, or two trace sources at once.
RunConfig build_run_config(const KeyValueConfig& kv);

}  // namespace ipf

#endif
