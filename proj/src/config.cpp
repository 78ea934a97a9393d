#include "biasaudit/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace biasaudit {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(Preset p) {
  switch (p) {
    case Preset::Full:
      return "full";
    case Preset::SinglePassChunked:
      return "single-pass-chunked";
    case Preset::SinglePassWhole:
      return "single-pass-whole";
  }
  return "?";
}

std::optional<Preset> parse_preset(std::string_view text) {
  for (auto p : {Preset::Full, Preset::SinglePassChunked, Preset::SinglePassWhole}) {
    if (to_string(p) == text) return p;
  }
  return std::nullopt;
}

std::optional<VerdictStrategy> parse_strategy_name(std::string_view text) {
  if (text == "heuristic") return VerdictStrategy::Heuristic;
  if (text == "deliberation" || text == "independent-deliberation") return VerdictStrategy::IndependentDeliberation;
  if (text == "prompted-heuristic") return VerdictStrategy::PromptedHeuristic;
  if (text == "single-pass") return VerdictStrategy::SinglePass;
  return parse_verdict_strategy(text);
}

namespace {

constexpr std::string_view kSecretKeys[] = {"api_key", "apiKey", "key", "token", "secret", "password", "credential"};

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path.lexically_normal() : (base / path).lexically_normal();
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

const json& object_at(const json& doc, const char* key) {
  static const json empty = json::object();
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return empty;
  if (!it->is_object()) throw ConfigError(std::string(key) + " must be an object");
  return *it;
}

BackendSpec parse_backend(const std::string& id, const json& b, const fs::path& base) {
  const std::string where = "backends." + id;
  if (!b.is_object()) throw ConfigError(where + " must be an object");
  for (auto key : kSecretKeys) {
    if (b.contains(std::string(key))) {
      throw ConfigError(where + " contains '" + std::string(key) +
                        "'; credentials are read from the environment variable named by credential_env");
    }
  }
  BackendSpec s;
  s.id = id;
  const auto kind = get_or<std::string>(b, "kind", "", where);
  if (kind == "http") {
    s.kind = BackendSpec::Kind::Http;
    s.endpoint = get_or<std::string>(b, "endpoint", "", where);
    s.model = get_or<std::string>(b, "model", "", where);
    s.credential_env = get_or<std::string>(b, "credential_env", "", where);
    if (s.endpoint.empty() || s.model.empty()) throw ConfigError(where + " needs endpoint and model");
  } else if (kind == "scripted") {
    s.kind = BackendSpec::Kind::Scripted;
    const auto script = get_or<std::string>(b, "script", "", where);
    if (script.empty()) throw ConfigError(where + " needs a script path");
    s.script = resolve(base, script);
  } else {
    throw ConfigError(where + ".kind must be 'http' or 'scripted'");
  }
  if (!b.contains("price")) throw ConfigError(where + " needs a price");
  const json& price = b["price"];
  s.input_usd_per_million = get_or<double>(price, "input_usd_per_million", -1.0, where + ".price");
  s.output_usd_per_million = get_or<double>(price, "output_usd_per_million", -1.0, where + ".price");
  if (s.input_usd_per_million < 0 || s.output_usd_per_million < 0) {
    throw ConfigError(where + ".price needs non-negative input_usd_per_million and output_usd_per_million");
  }
  s.max_output_tokens = get_or<int>(b, "max_output_tokens", 4096, where);
  s.max_concurrency = get_or<int>(b, "max_concurrency", 4, where);
  s.timeout_s = get_or<int>(b, "timeout_s", 120, where);
  return s;
}

std::optional<PromptKind> prompt_kind_for_key(std::string_view key) {
  for (auto k : {PromptKind::Screening, PromptKind::Jury, PromptKind::Deliberation, PromptKind::PromptedHeuristic,
                 PromptKind::SinglePass}) {
    auto file = template_file_name(k);
    if (file.substr(0, file.size() - 4) == key) return k;
  }
  return std::nullopt;
}

std::string prompt_key(PromptKind k) {
  auto file = template_file_name(k);
  return std::string(file.substr(0, file.size() - 4));
}

}  // namespace

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  if (doc.value("schema_version", 0) != kConfigSchemaVersion) {
    throw ConfigError("config schema_version must be " + std::to_string(kConfigSchemaVersion));
  }
  RunConfig cfg;
  cfg.base_dir = base_dir;

  const auto preset = get_or<std::string>(doc, "preset", "full", "config");
  if (auto p = parse_preset(preset)) {
    cfg.preset = *p;
  } else {
    throw ConfigError("unknown preset '" + preset + "'");
  }
  for (const auto& d : get_or<std::vector<std::string>>(doc, "documents", {}, "config")) {
    cfg.documents.push_back(resolve(base_dir, d));
  }
  cfg.output_dir = resolve(base_dir, get_or<std::string>(doc, "output_dir", "run", "config"));
  cfg.seed = get_or<std::uint64_t>(doc, "seed", 0, "config");
  cfg.batch_size = get_or<int>(doc, "batch_size", 5, "config");
  cfg.max_attempts = get_or<int>(doc, "max_attempts", 3, "config");

  for (const auto& [id, b] : object_at(doc, "backends").items()) cfg.backends.emplace(id, parse_backend(id, b, base_dir));

  const json& screening = object_at(doc, "screening");
  cfg.screening_backend = get_or<std::string>(screening, "backend", "", "screening");
  cfg.screening_temperature = get_or<double>(screening, "temperature", 0.7, "screening");

  const json& jury = object_at(doc, "jury");
  cfg.jurors = get_or<std::vector<std::string>>(jury, "jurors", {}, "jury");
  cfg.calibration = get_or<bool>(jury, "calibration", true, "jury");
  cfg.jury_temperature = get_or<double>(jury, "temperature", 0.2, "jury");
  const auto rule = get_or<std::string>(jury, "block_rule", "first", "jury");
  if (rule == "first") {
    cfg.block_rule = BlockRule::First;
  } else if (rule == "last") {
    cfg.block_rule = BlockRule::Last;
  } else {
    throw ConfigError("jury.block_rule must be 'first' or 'last'");
  }

  const json& meta = object_at(doc, "meta");
  cfg.meta_backend = get_or<std::string>(meta, "backend", "", "meta");
  const auto strategy = get_or<std::string>(meta, "strategy", "heuristic", "meta");
  if (auto s = parse_strategy_name(strategy)) {
    cfg.aggregation.strategy = *s;
  } else {
    throw ConfigError("unknown meta.strategy '" + strategy + "'");
  }
  cfg.aggregation.confidence_threshold = get_or<double>(meta, "confidence_threshold", 0.7, "meta");
  cfg.aggregation.divergence_threshold = get_or<double>(meta, "divergence_threshold", 1.5, "meta");
  cfg.aggregation.min_quorum = get_or<int>(meta, "min_quorum", 3, "meta");
  cfg.meta_temperature = get_or<double>(meta, "temperature", 0.2, "meta");

  const json& single = object_at(doc, "single_pass");
  cfg.single_pass_backend = get_or<std::string>(single, "backend", cfg.screening_backend, "single_pass");
  cfg.single_pass_temperature = get_or<double>(single, "temperature", 0.2, "single_pass");

  for (const auto& [key, value] : object_at(doc, "prompts").items()) {
    auto kind = prompt_kind_for_key(key);
    if (!kind) throw ConfigError("unknown prompt '" + key + "'");
    if (!value.is_string()) throw ConfigError("prompts." + key + " must be a path");
    cfg.prompt_paths[*kind] = resolve(base_dir, value.get<std::string>());
  }
  if (doc.contains("taxonomy") && !doc["taxonomy"].is_null()) {
    cfg.taxonomy_path = resolve(base_dir, get_or<std::string>(doc, "taxonomy", "", "config"));
  }
  cfg.global_concurrency = get_or<int>(object_at(doc, "concurrency"), "global", 16, "concurrency");
  const json& retry = object_at(doc, "transport_retry");
  cfg.transport_retry.max_attempts = get_or<int>(retry, "max_attempts", 3, "transport_retry");
  cfg.transport_retry.base_delay =
      std::chrono::milliseconds(get_or<std::int64_t>(retry, "base_delay_ms", 1000, "transport_retry"));
  const json& renderer = object_at(doc, "renderer");
  if (renderer.contains("command")) cfg.renderer_command = get_or<std::string>(renderer, "command", "", "renderer");
  const json& estimate = object_at(doc, "estimate");
  cfg.estimate.excerpts_per_batch = get_or<int>(estimate, "excerpts_per_batch", 3, "estimate");
  cfg.estimate.input_tokens_per_page = get_or<int>(estimate, "input_tokens_per_page", 1500, "estimate");
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  return parse_run_config(doc, fs::absolute(path).parent_path());
}

json run_config_to_json(const RunConfig& cfg) {
  json backends = json::object();
  for (const auto& [id, s] : cfg.backends) {
    json b = {{"price",
               {{"input_usd_per_million", s.input_usd_per_million},
                {"output_usd_per_million", s.output_usd_per_million}}},
              {"max_output_tokens", s.max_output_tokens},
              {"max_concurrency", s.max_concurrency},
              {"timeout_s", s.timeout_s}};
    if (s.kind == BackendSpec::Kind::Http) {
      b["kind"] = "http";
      b["endpoint"] = s.endpoint;
      b["model"] = s.model;
      b["credential_env"] = s.credential_env;
    } else {
      b["kind"] = "scripted";
      b["script"] = s.script.string();
    }
    backends[id] = b;
  }
  json docs = json::array();
  for (const auto& d : cfg.documents) docs.push_back(d.string());
  json prompts = json::object();
  for (const auto& [kind, path] : cfg.prompt_paths) prompts[prompt_key(kind)] = path.string();

  json j = {{"schema_version", kConfigSchemaVersion},
            {"preset", to_string(cfg.preset)},
            {"documents", docs},
            {"output_dir", cfg.output_dir.string()},
            {"seed", cfg.seed},
            {"batch_size", cfg.batch_size},
            {"max_attempts", cfg.max_attempts},
            {"backends", backends},
            {"screening", {{"backend", cfg.screening_backend}, {"temperature", cfg.screening_temperature}}},
            {"jury",
             {{"jurors", cfg.jurors},
              {"calibration", cfg.calibration},
              {"temperature", cfg.jury_temperature},
              {"block_rule", cfg.block_rule == BlockRule::First ? "first" : "last"}}},
            {"meta",
             {{"backend", cfg.meta_backend},
              {"strategy", to_string(cfg.aggregation.strategy)},
              {"confidence_threshold", cfg.aggregation.confidence_threshold},
              {"divergence_threshold", cfg.aggregation.divergence_threshold},
              {"min_quorum", cfg.aggregation.min_quorum},
              {"temperature", cfg.meta_temperature}}},
            {"single_pass", {{"backend", cfg.single_pass_backend}, {"temperature", cfg.single_pass_temperature}}},
            {"prompts", prompts},
            {"taxonomy", cfg.taxonomy_path ? json(cfg.taxonomy_path->string()) : json(nullptr)},
            {"concurrency", {{"global", cfg.global_concurrency}}},
            {"transport_retry",
             {{"max_attempts", cfg.transport_retry.max_attempts},
              {"base_delay_ms", cfg.transport_retry.base_delay.count()}}},
            {"estimate",
             {{"excerpts_per_batch", cfg.estimate.excerpts_per_batch},
              {"input_tokens_per_page", cfg.estimate.input_tokens_per_page}}}};
  if (cfg.renderer_command) j["renderer"] = {{"command", *cfg.renderer_command}};
  return j;
}

RunConfig apply_overrides(RunConfig cfg, const ConfigOverrides& o) {
  if (o.preset) cfg.preset = *o.preset;
  if (o.strategy) cfg.aggregation.strategy = *o.strategy;
  if (o.calibration) cfg.calibration = *o.calibration;
  if (o.output_dir) cfg.output_dir = fs::absolute(*o.output_dir).lexically_normal();
  return cfg;
}

std::vector<std::string> referenced_backends(const RunConfig& cfg) {
  std::set<std::string> ids;
  if (is_single_pass(cfg.preset)) {
    ids.insert(cfg.single_pass_backend);
  } else {
    ids.insert(cfg.screening_backend);
    ids.insert(cfg.jurors.begin(), cfg.jurors.end());
    if (cfg.aggregation.strategy == VerdictStrategy::IndependentDeliberation ||
        cfg.aggregation.strategy == VerdictStrategy::PromptedHeuristic) {
      ids.insert(cfg.meta_backend);
    }
  }
  return {ids.begin(), ids.end()};
}

VerdictStrategy effective_strategy(const RunConfig& cfg) {
  return is_single_pass(cfg.preset) ? VerdictStrategy::SinglePass : cfg.aggregation.strategy;
}

namespace {

void check_temperature(double t, const std::string& what) {
  if (!(t >= 0.0 && t <= 2.0)) throw ConfigError(what + " temperature must lie in [0,2]");
}

}  // namespace

void validate_run_config(const RunConfig& cfg) {
  if (cfg.documents.empty()) throw ConfigError("no documents configured");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (cfg.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
  if (cfg.global_concurrency < 1) throw ConfigError("concurrency.global must be >= 1");
  if (cfg.transport_retry.max_attempts < 1) throw ConfigError("transport_retry.max_attempts must be >= 1");
  if (cfg.transport_retry.base_delay.count() < 0) throw ConfigError("transport_retry.base_delay_ms must be >= 0");
  for (const auto& [id, s] : cfg.backends) {
    if (s.max_output_tokens < 1) throw ConfigError("backends." + id + ".max_output_tokens must be >= 1");
    if (s.max_concurrency < 1) throw ConfigError("backends." + id + ".max_concurrency must be >= 1");
    if (s.timeout_s < 1) throw ConfigError("backends." + id + ".timeout_s must be >= 1");
  }
  check_temperature(cfg.screening_temperature, "screening");
  check_temperature(cfg.jury_temperature, "jury");
  check_temperature(cfg.meta_temperature, "meta");
  check_temperature(cfg.single_pass_temperature, "single_pass");

  if (is_single_pass(cfg.preset)) {
    if (cfg.single_pass_backend.empty()) throw ConfigError("single-pass presets need single_pass.backend");
    if (cfg.aggregation.strategy != VerdictStrategy::Heuristic &&
        cfg.aggregation.strategy != VerdictStrategy::SinglePass) {
      throw ConfigError("single-pass presets always use the SinglePass strategy");
    }
  } else {
    if (cfg.screening_backend.empty()) throw ConfigError("screening.backend is required");
    if (cfg.jurors.empty()) throw ConfigError("jury.jurors must not be empty");
    std::set<std::string> unique(cfg.jurors.begin(), cfg.jurors.end());
    if (unique.size() != cfg.jurors.size()) throw ConfigError("jury.jurors must be unique");
    if (cfg.aggregation.strategy == VerdictStrategy::SinglePass) {
      throw ConfigError("the SinglePass strategy requires a single-pass preset");
    }
    const bool model_meta = cfg.aggregation.strategy != VerdictStrategy::Heuristic;
    if (model_meta && cfg.meta_backend.empty()) throw ConfigError("meta.backend is required for this strategy");
    try {
      cfg.aggregation.validate(cfg.jurors.size());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("meta: ") + e.what());
    }
  }
  for (const auto& id : referenced_backends(cfg)) {
    if (!cfg.backends.contains(id)) throw ConfigError("backend '" + id + "' is referenced but not defined");
  }
  if (!is_single_pass(cfg.preset) && cfg.calibration) {
    const auto jury = load_prompt(cfg, PromptKind::Jury);
    if (!jury.mentions("calibration") && jury.user.find(kCalibrationSentence) == std::string::npos &&
        jury.system.find(kCalibrationSentence) == std::string::npos) {
      throw ConfigError("calibration is on but the jury template has neither {{calibration}} nor the sentence");
    }
  }
}

PromptTemplate load_prompt(const RunConfig& cfg, PromptKind kind) {
  auto it = cfg.prompt_paths.find(kind);
  if (it == cfg.prompt_paths.end()) return default_template(kind);
  try {
    return load_prompt_template(it->second);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

TaxonomyRegistry load_run_taxonomy(const RunConfig& cfg) {
  if (!cfg.taxonomy_path) return default_taxonomy();
  try {
    return load_taxonomy(*cfg.taxonomy_path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

BackendSet make_backends(const RunConfig& cfg, Sleeper sleeper) {
  BackendSet set;
  for (const auto& id : referenced_backends(cfg)) {
    const BackendSpec& s = cfg.backends.at(id);
    std::shared_ptr<Backend> inner;
    if (s.kind == BackendSpec::Kind::Scripted) {
      std::shared_ptr<ScriptedBackend> scripted;
      try {
        scripted = load_scripted_backend(s.script);
      } catch (const std::exception& e) {
        throw ConfigError("backend '" + id + "': " + e.what());
      }
      set.scripted[id] = scripted;
      inner = scripted;
    } else {
      inner = std::make_shared<HttpChatBackend>(
          HttpBackendConfig{s.endpoint, s.model, s.credential_env, std::chrono::seconds(s.timeout_s)});
    }
    auto throttled = std::make_shared<ThrottledBackend>(inner, s.max_concurrency);
    auto retrying = std::make_shared<RetryingBackend>(throttled, cfg.transport_retry, sleeper);
    set.bindings[id] = BackendBinding{retrying, s.max_output_tokens};
    set.prices[id] = Price::from_usd_per_million(s.input_usd_per_million, s.output_usd_per_million);
  }
  return set;
}

}  // namespace biasaudit
