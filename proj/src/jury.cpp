#include "biasaudit/jury.hpp"

#include <set>
#include <stdexcept>

#include "biasaudit/executor.hpp"
#include "biasaudit/log.hpp"
#include "biasaudit/schema_retry.hpp"

namespace biasaudit {

const JurorTrace* JuryRecord::trace_for(std::string_view juror_id) const {
  for (const auto& t : traces) {
    if (t.juror_id == juror_id) return &t;
  }
  return nullptr;
}

std::string_view juror_schema_text() {
  return R"({
  "attribution": "Textbook Narrative" | "Primary Source Usage",
  "category": "<one taxonomy label>",
  "severity": <integer 1-7>,
  "confidence": <number between 0.0 and 1.0>,
  "reasoning": "your justification"
})";
}

std::variant<JurorVerdict, ParseError> parse_juror_output(std::string_view text, const std::string& juror_id,
                                                         const TaxonomyRegistry& registry, BlockRule rule) {
  const auto blocks = find_json_blocks(text);
  std::vector<const JsonBlock*> objects;
  for (const auto& b : blocks) {
    if (b.value.is_object()) objects.push_back(&b);
  }
  if (objects.empty()) return ParseError{ParseError::Kind::NoStructuredBlock, "no JSON object in reply", {}};
  if (objects.size() > 1) {
    log().info("event=multiple_blocks juror={} count={} rule={}", juror_id, objects.size(),
               rule == BlockRule::First ? "first" : "last");
  }
  const JsonBlock& chosen = rule == BlockRule::First ? *objects.front() : *objects.back();
  auto validated = validate_juror_verdict(chosen.value, juror_id, registry);
  if (!validated.ok()) {
    return ParseError{ParseError::Kind::SchemaViolation, "juror payload failed validation", std::move(validated.errors)};
  }
  return std::move(*validated.verdict);
}

ModelRequest build_juror_request(const FlaggedExcerpt& excerpt, const JurySettings& settings,
                                 const TaxonomyRegistry& registry) {
  const TemplateVars vars{{"excerpt_id", excerpt.excerpt_id},
                         {"page", std::to_string(excerpt.page)},
                         {"attribution", std::string(to_string(excerpt.attribution))},
                         {"screening_reasoning", excerpt.screening_reasoning},
                         {"quote", excerpt.quote},
                         {"severity_scale", severity_scale_text()},
                         {"taxonomy", registry.prompt_listing()},
                         {"calibration", settings.calibration ? std::string(kCalibrationSentence) : std::string()},
                         {"schema", std::string(juror_schema_text())}};
  ModelRequest req;
  req.system_prompt = render(settings.prompt.system, vars);
  req.user_content.push_back(ContentPart::from_text(render(settings.prompt.user, vars)));
  req.temperature = settings.temperature;
  return req;
}

JurorOutcome query_juror(const FlaggedExcerpt& excerpt, const std::string& juror_id, const JurySettings& settings,
                         ModelGateway& gateway, const TaxonomyRegistry& registry) {
  const ModelRequest base = build_juror_request(excerpt, settings, registry);
  const std::string tag_base = excerpt.excerpt_id + "/" + juror_id;

  auto invoke = [&](int attempt, const std::string& corrective) {
    ModelRequest req = base;
    if (!corrective.empty()) {
      req.user_content.push_back(ContentPart::from_text(corrective_suffix(corrective, "a single JSON object")));
    }
    return gateway.call(juror_id, std::move(req), Stage::Jury, tag_base + "#a" + std::to_string(attempt)).text;
  };
  auto parse = [&](const std::string& text) -> std::variant<JurorVerdict, std::string> {
    auto parsed = parse_juror_output(text, juror_id, registry, settings.block_rule);
    if (auto* v = std::get_if<JurorVerdict>(&parsed)) return std::move(*v);
    return std::get<ParseError>(parsed).describe();
  };
  auto outcome = retry_schema<JurorVerdict>(invoke, parse, settings.max_attempts);

  JurorOutcome out;
  out.trace = {juror_id, outcome.attempts_used, std::move(outcome.raw_responses)};
  if (outcome.value) {
    out.verdict = std::move(outcome.value);
  } else {
    out.failure = JurorFailure{juror_id, outcome.last_error, outcome.attempts_used, outcome.backend_error.has_value()};
    log().warn("event=juror_discarded excerpt={} juror={} attempts={} reason=\"{}\"", excerpt.excerpt_id, juror_id,
               outcome.attempts_used, outcome.last_error);
  }
  return out;
}

JuryRecord assemble_record(const FlaggedExcerpt& excerpt, std::vector<JurorOutcome> outcomes) {
  JuryRecord record{excerpt, {}, {}, {}};
  std::set<std::string> seen;
  for (auto& o : outcomes) {
    if (!seen.insert(o.trace.juror_id).second) throw std::invalid_argument("duplicate juror " + o.trace.juror_id);
    if (o.verdict) {
      record.verdicts.push_back(std::move(*o.verdict));
    } else if (o.failure) {
      record.failures.push_back(std::move(*o.failure));
    } else {
      throw std::logic_error("juror outcome has neither verdict nor failure");
    }
    record.traces.push_back(std::move(o.trace));
  }
  return record;
}

namespace {

void check_roster(const JurySettings& settings) {
  if (settings.jurors.empty()) throw std::invalid_argument("jury needs at least one juror");
  std::set<std::string> ids(settings.jurors.begin(), settings.jurors.end());
  if (ids.size() != settings.jurors.size()) throw std::invalid_argument("juror ids must be unique");
}

}  // namespace

JuryRecord adjudicate_excerpt(const FlaggedExcerpt& excerpt, const JurySettings& settings, ModelGateway& gateway,
                              const TaxonomyRegistry& registry, std::size_t workers) {
  check_roster(settings);
  std::vector<JurorOutcome> outcomes(settings.jurors.size());
  parallel_for(outcomes.size(), workers, [&](std::size_t j) {
    outcomes[j] = query_juror(excerpt, settings.jurors[j], settings, gateway, registry);
  });
  return assemble_record(excerpt, std::move(outcomes));
}

std::vector<JuryRecord> adjudicate_all(const std::vector<FlaggedExcerpt>& excerpts, const JurySettings& settings,
                                       ModelGateway& gateway, const TaxonomyRegistry& registry, std::size_t workers,
                                       const std::atomic<bool>* stop) {
  check_roster(settings);
  const std::size_t n_jurors = settings.jurors.size();
  std::vector<JurorOutcome> outcomes(excerpts.size() * n_jurors);
  parallel_for(
      outcomes.size(), workers,
      [&](std::size_t i) {
        const auto& excerpt = excerpts[i / n_jurors];
        outcomes[i] = query_juror(excerpt, settings.jurors[i % n_jurors], settings, gateway, registry);
      },
      stop);

  std::vector<JuryRecord> records;
  records.reserve(excerpts.size());
  for (std::size_t e = 0; e < excerpts.size(); ++e) {
    std::vector<JurorOutcome> slice(std::make_move_iterator(outcomes.begin() + e * n_jurors),
                                    std::make_move_iterator(outcomes.begin() + (e + 1) * n_jurors));
    records.push_back(assemble_record(excerpts[e], std::move(slice)));
  }
  return records;
}

}  // namespace biasaudit
