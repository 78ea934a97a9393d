/// @file config.hpp
/// @brief Run configuration: file format, validation, CLI overrides, and
/// construction of the configured backends.
///
/// Config file (JSON, relative paths resolve against the file's directory):
///
///     {
///       "schema_version": 1,
///       "preset": "full" | "single-pass-chunked" | "single-pass-whole",
///       "documents": ["docs/history-7.manifest.json"],
///       "output_dir": "runs/history-7",
///       "batch_size": 5,
///       "seed": 0,
///       "backends": {
///         "<id>": {"kind": "http", "endpoint": "https://.../v1/chat/completions",
///                  "model": "...", "credential_env": "API_KEY_VAR",
///                  "price": {"input_usd_per_million": 1.25, "output_usd_per_million": 10},
///                  "max_output_tokens": 4096, "max_concurrency": 4, "timeout_s": 120},
///         "<id>": {"kind": "scripted", "script": "scripts/juror-a.json", "price": {...}}
///       },
///       "screening": {"backend": "<id>", "temperature": 0.7},
///       "jury": {"jurors": ["<id>", ...], "calibration": true, "temperature": 0.2,
///                "block_rule": "first"},
///       "meta": {"backend": "<id>", "strategy": "heuristic", "confidence_threshold": 0.7,
///                "divergence_threshold": 1.5, "min_quorum": 3, "temperature": 0.2},
///       "single_pass": {"backend": "<id>", "temperature": 0.2},
///       "max_attempts": 3,
///       "prompts": {"screening": "prompts/screening.txt", "jury": "...", "meta_deliberation": "...",
///                   "meta_heuristic": "...", "single_pass": "..."},
///       "taxonomy": "config/taxonomy.json",
///       "concurrency": {"global": 16},
///       "transport_retry": {"max_attempts": 3, "base_delay_ms": 1000},
///       "renderer": {"command": "pdftoppm -r 200 -scale-to 1280 -png {pdf} {out}/page"},
///       "estimate": {"excerpts_per_batch": 3, "input_tokens_per_page": 1500}
///     }
///
/// Secrets never appear in the file: HTTP backends name an environment
/// variable through "credential_env".

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "biasaudit/backend.hpp"
#include "biasaudit/cost.hpp"
#include "biasaudit/domain.hpp"
#include "biasaudit/gateway.hpp"
#include "biasaudit/json_blocks.hpp"
#include "biasaudit/meta.hpp"
#include "biasaudit/prompt_template.hpp"

namespace biasaudit {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kConfigSchemaVersion = 1;

enum class Preset { Full, SinglePassChunked, SinglePassWhole };
std::string_view to_string(Preset p);
std::optional<Preset> parse_preset(std::string_view text);
inline bool is_single_pass(Preset p) { return p != Preset::Full; }

/// Accepts "heuristic", "deliberation" (or "independent-deliberation"),
/// "prompted-heuristic", and the canonical enum spellings.
std::optional<VerdictStrategy> parse_strategy_name(std::string_view text);

struct BackendSpec {
  enum class Kind { Http, Scripted };
  std::string id;
  Kind kind = Kind::Scripted;
  std::string endpoint;
  std::string model;
  std::string credential_env;
  std::filesystem::path script;
  double input_usd_per_million = 0.0;
  double output_usd_per_million = 0.0;
  int max_output_tokens = 4096;
  int max_concurrency = 4;
  int timeout_s = 120;
};

struct EstimateAssumptions {
  int excerpts_per_batch = 3;
  int input_tokens_per_page = 1500;
};

struct RunConfig {
  /// Directory that relative paths in the file were resolved against.
  std::filesystem::path base_dir;
  Preset preset = Preset::Full;
  std::vector<std::filesystem::path> documents;
  std::filesystem::path output_dir = "run";
  /// Reserved; no stage currently samples.
  std::uint64_t seed = 0;
  int batch_size = 5;
  std::map<std::string, BackendSpec> backends;

  std::string screening_backend;
  double screening_temperature = 0.7;

  std::vector<std::string> jurors;
  bool calibration = true;
  double jury_temperature = 0.2;
  BlockRule block_rule = BlockRule::First;

  std::string meta_backend;
  AggregationConfig aggregation;
  double meta_temperature = 0.2;

  /// Defaults to the screening backend.
  std::string single_pass_backend;
  double single_pass_temperature = 0.2;

  int max_attempts = 3;
  std::map<PromptKind, std::filesystem::path> prompt_paths;
  std::optional<std::filesystem::path> taxonomy_path;
  int global_concurrency = 16;
  RetryPolicy transport_retry;
  std::optional<std::string> renderer_command;
  EstimateAssumptions estimate;
};

RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

/// Serialized form with absolute paths and no secrets; written into every
/// run directory.
nlohmann::json run_config_to_json(const RunConfig& cfg);

struct ConfigOverrides {
  std::optional<Preset> preset;
  std::optional<VerdictStrategy> strategy;
  std::optional<bool> calibration;
  std::optional<std::filesystem::path> output_dir;
};

RunConfig apply_overrides(RunConfig cfg, const ConfigOverrides& overrides);

/// Throws ConfigError on the first violated constraint.
void validate_run_config(const RunConfig& cfg);

/// Backend ids a run with this config will call.
std::vector<std::string> referenced_backends(const RunConfig& cfg);

/// Strategy in effect: SinglePass for single-pass presets.
VerdictStrategy effective_strategy(const RunConfig& cfg);

/// Configured template, or the shipped default.
PromptTemplate load_prompt(const RunConfig& cfg, PromptKind kind);
TaxonomyRegistry load_run_taxonomy(const RunConfig& cfg);

struct BackendSet {
  std::map<std::string, BackendBinding> bindings;
  PriceTable prices;
  /// Unwrapped scripted backends, for inspecting their call logs.
  std::map<std::string, std::shared_ptr<ScriptedBackend>> scripted;
};

/// Builds every referenced backend, wrapped as retry(throttle(backend)).
BackendSet make_backends(const RunConfig& cfg, Sleeper sleeper = {});

}  // namespace biasaudit
