#include "biasaudit/meta.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "biasaudit/executor.hpp"
#include "biasaudit/log.hpp"
#include "biasaudit/schema_retry.hpp"

namespace biasaudit {

using json = nlohmann::json;

void AggregationConfig::validate(std::size_t jury_size) const {
  if (!(confidence_threshold > 0.0 && confidence_threshold < 1.0)) {
    throw std::invalid_argument("confidence_threshold must lie strictly between 0 and 1");
  }
  if (!(divergence_threshold > 0.0)) throw std::invalid_argument("divergence_threshold must be positive");
  if (min_quorum < 1 || static_cast<std::size_t>(min_quorum) > jury_size) {
    throw std::invalid_argument("min_quorum must lie in [1, jury size]");
  }
}

int severity_range(std::span<const JurorVerdict> verdicts) {
  if (verdicts.empty()) throw EmptyJury();
  auto [lo, hi] = std::minmax_element(verdicts.begin(), verdicts.end(),
                                      [](const auto& a, const auto& b) { return a.severity < b.severity; });
  return hi->severity.value() - lo->severity.value();
}

std::optional<SeverityScore> high_confidence_consensus(std::span<const JurorVerdict> verdicts, double threshold) {
  std::optional<SeverityScore> agreed;
  for (const auto& v : verdicts) {
    if (!(v.confidence > threshold)) continue;
    if (agreed && *agreed != v.severity) return std::nullopt;
    agreed = v.severity;
  }
  return agreed;
}

double confidence_weighted_severity(std::span<const JurorVerdict> verdicts) {
  if (verdicts.empty()) throw EmptyJury();
  // Offsets from the lowest severity keep a unanimous jury exactly on its value.
  int lo = SeverityScore::kMax;
  for (const auto& v : verdicts) lo = std::min(lo, v.severity.value());
  double weighted = 0.0;
  double total = 0.0;
  for (const auto& v : verdicts) {
    weighted += (v.severity.value() - lo) * v.confidence;
    total += v.confidence;
  }
  if (total <= 0.0) throw ZeroTotalConfidence();
  return lo + weighted / total;
}

SeverityScore round_severity(double mean) {
  if (!(mean >= SeverityScore::kMin && mean <= SeverityScore::kMax)) {
    throw std::out_of_range("mean severity outside [1,7]: " + std::to_string(mean));
  }
  return SeverityScore(static_cast<int>(std::ceil(mean - 0.5)));
}

TaxonomyCategory plurality_category(std::span<const JurorVerdict> verdicts) {
  if (verdicts.empty()) throw EmptyJury();
  struct Tally {
    const TaxonomyCategory* category = nullptr;
    double sum = 0.0;
    double best = 0.0;
  };
  std::map<std::string, Tally> tallies;
  for (const auto& v : verdicts) {
    auto& t = tallies[v.category.label];
    t.category = &v.category;
    t.sum += v.confidence;
    t.best = std::max(t.best, v.confidence);
  }
  // std::map iterates labels in ascending order, so a strict comparison keeps
  // the lexicographically smaller label on a full tie.
  const Tally* winner = nullptr;
  for (const auto& [label, t] : tallies) {
    if (!winner || t.sum > winner->sum || (t.sum == winner->sum && t.best > winner->best)) winner = &t;
  }
  return *winner->category;
}

namespace {

std::string juror_summary(std::span<const JurorVerdict> verdicts) {
  std::string out;
  for (const auto& v : verdicts) {
    if (!out.empty()) out += ", ";
    out += fmt::format("{}: {} @ {:.2f}", v.juror_id, v.severity.value(), v.confidence);
  }
  return out;
}

std::vector<std::string> escalation_for(int range, std::size_t valid, const AggregationConfig& cfg,
                                        std::string& narrative) {
  std::vector<std::string> reasons;
  if (range > cfg.divergence_threshold) {
    reasons.emplace_back("divergence");
    narrative += fmt::format(" Severity range {} exceeds the divergence threshold {:.2f}; escalated for human review.",
                             range, cfg.divergence_threshold);
  }
  if (valid < static_cast<std::size_t>(cfg.min_quorum)) {
    reasons.emplace_back("quorum");
    narrative += fmt::format(" Only {} valid verdicts, below the quorum of {}; escalated for human review.", valid,
                             cfg.min_quorum);
  }
  return reasons;
}

}  // namespace

FinalVerdict aggregate_heuristic(const JuryRecord& record, const AggregationConfig& cfg) {
  const std::span<const JurorVerdict> verdicts(record.verdicts);
  if (verdicts.empty()) throw EmptyJury();

  const int range = severity_range(verdicts);
  std::string branch;
  std::string narrative = fmt::format("Heuristic aggregation of {} valid juror verdicts ({}).", verdicts.size(),
                                      juror_summary(verdicts));
  std::optional<SeverityScore> severity = high_confidence_consensus(verdicts, cfg.confidence_threshold);
  if (severity) {
    branch = "consensus";
    narrative += fmt::format(" All jurors with confidence above {:.2f} agree on severity {}.",
                             cfg.confidence_threshold, severity->value());
  } else {
    double mean = 0.0;
    try {
      mean = confidence_weighted_severity(verdicts);
      branch = "weighted_mean";
      narrative += fmt::format(" No high-confidence consensus; confidence-weighted mean {:.4f}.", mean);
    } catch (const ZeroTotalConfidence&) {
      double sum = 0.0;
      for (const auto& v : verdicts) sum += v.severity.value();
      mean = sum / static_cast<double>(verdicts.size());
      branch = "unweighted_mean";
      narrative += fmt::format(" All confidences are zero; unweighted mean {:.4f} used instead.", mean);
    }
    severity = round_severity(mean);
    narrative += fmt::format(" Rounded to {} (halves round down).", severity->value());
  }

  const TaxonomyCategory category = plurality_category(verdicts);
  narrative += fmt::format(" Category '{}' carries the largest summed confidence.", category.label);

  auto reasons = escalation_for(range, verdicts.size(), cfg, narrative);
  FinalVerdict out{record.excerpt.excerpt_id,
                   *severity,
                   category,
                   std::move(narrative),
                   !reasons.empty(),
                   VerdictStrategy::Heuristic,
                   static_cast<int>(verdicts.size()),
                   false,
                   std::move(branch),
                   std::move(reasons)};
  return out;
}

std::string_view meta_schema_text() {
  return R"({
  "severity": <integer 1-7>,
  "category": "<one taxonomy label>",
  "justification": "synthesized justification",
  "human_review": true | false
})";
}

std::variant<MetaDecision, ParseError> parse_meta_output(std::string_view text, const TaxonomyRegistry& registry,
                                                         BlockRule rule) {
  using K = ValidationError::Kind;
  const auto blocks = find_json_blocks(text);
  std::vector<const JsonBlock*> objects;
  for (const auto& b : blocks) {
    if (b.value.is_object()) objects.push_back(&b);
  }
  if (objects.empty()) return ParseError{ParseError::Kind::NoStructuredBlock, "no JSON object in reply", {}};
  const json& raw = (rule == BlockRule::First ? objects.front() : objects.back())->value;

  std::vector<ValidationError> errors;
  std::optional<int> severity;
  std::optional<TaxonomyCategory> category;
  std::optional<std::string> justification;
  std::optional<bool> review;

  if (!raw.contains("severity") || raw["severity"].is_null()) {
    errors.push_back({K::MissingField, "severity", ""});
  } else if (!raw["severity"].is_number_integer()) {
    errors.push_back({K::WrongType, "severity", "expected an integer"});
  } else if (auto s = raw["severity"].get<long long>(); !SeverityScore::in_range(s)) {
    errors.push_back({K::OutOfRange, "severity", std::to_string(s) + " not in [1,7]"});
  } else {
    severity = static_cast<int>(s);
  }

  if (!raw.contains("category") || raw["category"].is_null()) {
    errors.push_back({K::MissingField, "category", ""});
  } else if (!raw["category"].is_string()) {
    errors.push_back({K::WrongType, "category", "expected a string"});
  } else if (!(category = registry.resolve(raw["category"].get<std::string>()))) {
    errors.push_back({K::UnknownCategory, "category", raw["category"].get<std::string>()});
  }

  if (!raw.contains("justification") || raw["justification"].is_null()) {
    errors.push_back({K::MissingField, "justification", ""});
  } else if (!raw["justification"].is_string()) {
    errors.push_back({K::WrongType, "justification", "expected a string"});
  } else if (trim(raw["justification"].get<std::string>()).empty()) {
    errors.push_back({K::EmptyReasoning, "justification", ""});
  } else {
    justification = raw["justification"].get<std::string>();
  }

  if (!raw.contains("human_review") || raw["human_review"].is_null()) {
    errors.push_back({K::MissingField, "human_review", ""});
  } else if (!raw["human_review"].is_boolean()) {
    errors.push_back({K::WrongType, "human_review", "expected a boolean"});
  } else {
    review = raw["human_review"].get<bool>();
  }

  if (!errors.empty()) {
    return ParseError{ParseError::Kind::SchemaViolation, "meta payload failed validation", std::move(errors)};
  }
  return MetaDecision{SeverityScore(*severity), *category, *justification, *review};
}

ModelRequest build_meta_request(const JuryRecord& record, const MetaSettings& settings,
                                const TaxonomyRegistry& registry) {
  std::ostringstream jurors;
  jurors << record.verdicts.size() << " of " << record.juror_count() << " jurors returned valid assessments.\n";
  for (const auto& v : record.verdicts) {
    jurors << "\nJuror " << v.juror_id << ":\n"
           << "  attribution: " << to_string(v.attribution) << "\n"
           << "  category: " << v.category.label << "\n"
           << "  severity: " << v.severity.value() << "\n"
           << "  confidence: " << fmt::format("{:.2f}", v.confidence) << "\n"
           << "  reasoning: " << v.reasoning << "\n";
  }
  const auto& cfg = settings.aggregation;
  const TemplateVars vars{{"excerpt_id", record.excerpt.excerpt_id},
                         {"page", std::to_string(record.excerpt.page)},
                         {"attribution", std::string(to_string(record.excerpt.attribution))},
                         {"screening_reasoning", record.excerpt.screening_reasoning},
                         {"quote", record.excerpt.quote},
                         {"juror_verdicts", jurors.str()},
                         {"severity_scale", severity_scale_text()},
                         {"taxonomy", registry.prompt_listing()},
                         {"confidence_threshold", fmt::format("{:.2f}", cfg.confidence_threshold)},
                         {"divergence_threshold", fmt::format("{:.2f}", cfg.divergence_threshold)},
                         {"min_quorum", std::to_string(cfg.min_quorum)},
                         {"schema", std::string(meta_schema_text())}};
  const PromptTemplate& prompt =
      cfg.strategy == VerdictStrategy::PromptedHeuristic ? settings.heuristic_prompt : settings.deliberation_prompt;
  ModelRequest req;
  req.system_prompt = render(prompt.system, vars);
  req.user_content.push_back(ContentPart::from_text(render(prompt.user, vars)));
  req.temperature = settings.temperature;
  return req;
}

FinalVerdict aggregate_deliberative(const JuryRecord& record, const MetaSettings& settings, ModelGateway& gateway,
                                    const TaxonomyRegistry& registry) {
  if (record.verdicts.empty()) throw EmptyJury();
  const ModelRequest base = build_meta_request(record, settings, registry);
  const std::string tag_base = record.excerpt.excerpt_id + "/meta";

  auto invoke = [&](int attempt, const std::string& corrective) {
    ModelRequest req = base;
    if (!corrective.empty()) {
      req.user_content.push_back(ContentPart::from_text(corrective_suffix(corrective, "a single JSON object")));
    }
    return gateway.call(settings.backend_id, std::move(req), Stage::Meta, tag_base + "#a" + std::to_string(attempt))
        .text;
  };
  auto parse = [&](const std::string& text) -> std::variant<MetaDecision, std::string> {
    auto parsed = parse_meta_output(text, registry, settings.block_rule);
    if (auto* d = std::get_if<MetaDecision>(&parsed)) return std::move(*d);
    return std::get<ParseError>(parsed).describe();
  };
  auto outcome = retry_schema<MetaDecision>(invoke, parse, settings.max_attempts);

  if (!outcome.value) {
    log().warn("event=meta_fallback excerpt={} attempts={} reason=\"{}\"", record.excerpt.excerpt_id,
               outcome.attempts_used, outcome.last_error);
    FinalVerdict fallback = aggregate_heuristic(record, settings.aggregation);
    fallback.fallback = true;
    fallback.justification = fmt::format("Meta synthesis unavailable after {} attempt(s) ({}); heuristic fallback. {}",
                                         outcome.attempts_used, outcome.last_error, fallback.justification);
    return fallback;
  }

  MetaDecision& d = *outcome.value;
  std::vector<std::string> reasons;
  if (d.human_review) reasons.emplace_back("model");
  if (record.verdicts.size() < static_cast<std::size_t>(settings.aggregation.min_quorum)) {
    reasons.emplace_back("quorum");
  }
  FinalVerdict out{record.excerpt.excerpt_id,
                   d.severity,
                   std::move(d.category),
                   std::move(d.justification),
                   !reasons.empty(),
                   settings.aggregation.strategy,
                   static_cast<int>(record.verdicts.size()),
                   false,
                   "model",
                   std::move(reasons)};
  return out;
}

FinalVerdict single_pass_verdict(const JuryRecord& record) {
  if (record.verdicts.empty()) throw EmptyJury();
  const JurorVerdict& v = record.verdicts.front();
  FinalVerdict out{record.excerpt.excerpt_id,
                   v.severity,
                   v.category,
                   v.reasoning,
                   false,
                   VerdictStrategy::SinglePass,
                   static_cast<int>(record.verdicts.size()),
                   false,
                   "single_pass",
                   {}};
  return out;
}

std::optional<FinalVerdict> synthesize(const JuryRecord& record, const MetaSettings& settings, ModelGateway* gateway,
                                       const TaxonomyRegistry& registry) {
  if (record.verdicts.empty()) return std::nullopt;
  switch (settings.aggregation.strategy) {
    case VerdictStrategy::Heuristic:
      return aggregate_heuristic(record, settings.aggregation);
    case VerdictStrategy::SinglePass:
      return single_pass_verdict(record);
    case VerdictStrategy::IndependentDeliberation:
    case VerdictStrategy::PromptedHeuristic:
      if (!gateway) throw std::invalid_argument("model-backed aggregation needs a gateway");
      return aggregate_deliberative(record, settings, *gateway, registry);
  }
  return std::nullopt;
}

std::vector<std::optional<FinalVerdict>> synthesize_all(const std::vector<JuryRecord>& records,
                                                        const MetaSettings& settings, ModelGateway* gateway,
                                                        const TaxonomyRegistry& registry, std::size_t workers,
                                                        const std::atomic<bool>* stop) {
  std::vector<std::optional<FinalVerdict>> out(records.size());
  parallel_for(
      records.size(), workers, [&](std::size_t i) { out[i] = synthesize(records[i], settings, gateway, registry); },
      stop);
  return out;
}

}  // namespace biasaudit
