#include "biasaudit/single_pass.hpp"

#include <algorithm>

#include "biasaudit/executor.hpp"
#include "biasaudit/log.hpp"
#include "biasaudit/schema_retry.hpp"

namespace biasaudit {

using json = nlohmann::json;

std::string_view single_pass_schema_text() {
  return R"([
  {
    "quote": "verbatim passage text",
    "page": <page number>,
    "attribution": "Textbook Narrative" | "Primary Source Usage",
    "category": "<one taxonomy label>",
    "severity": <integer 1-7>,
    "confidence": <number between 0.0 and 1.0>,
    "reasoning": "your justification"
  }
])";
}

std::variant<SinglePassParse, ParseError> parse_single_pass_output(std::string_view text, PageRange range,
                                                                   const std::string& backend_id,
                                                                   const TaxonomyRegistry& registry) {
  const auto blocks = find_json_blocks(text);
  if (blocks.empty()) return ParseError{ParseError::Kind::NoStructuredBlock, "no JSON block in reply", {}};
  const json* records = nullptr;
  for (const auto& b : blocks) {
    if ((records = excerpt_records(b.value))) break;
  }
  if (!records) return ParseError{ParseError::Kind::SchemaViolation, "expected a JSON array of passage records", {}};

  SinglePassParse out;
  for (std::size_t i = 0; i < records->size(); ++i) {
    const json& r = (*records)[i];
    ExcerptCandidate candidate;
    if (auto reason = check_excerpt_record(r, range, candidate)) {
      out.rejected.push_back({i, *reason});
      continue;
    }
    auto verdict = validate_juror_verdict(r, backend_id, registry);
    if (!verdict.ok()) {
      out.rejected.push_back({i, describe(verdict.errors)});
      continue;
    }
    out.items.push_back({std::move(candidate), std::move(*verdict.verdict)});
  }
  return out;
}

ModelRequest build_single_pass_request(const PageBatch& batch, const SinglePassSettings& settings,
                                       const TaxonomyRegistry& registry) {
  const TemplateVars vars{{"document_id", batch.document_id},
                         {"first_page", std::to_string(batch.range.first)},
                         {"last_page", std::to_string(batch.range.last)},
                         {"severity_scale", severity_scale_text()},
                         {"taxonomy", registry.prompt_listing()},
                         {"calibration", settings.calibration ? std::string(kCalibrationSentence) : std::string()},
                         {"schema", std::string(single_pass_schema_text())}};
  ModelRequest req;
  req.system_prompt = render(settings.prompt.system, vars);
  req.user_content.push_back(ContentPart::from_text(render(settings.prompt.user, vars)));
  for (const auto& image : batch.image_refs) req.user_content.push_back(ContentPart::from_image(image));
  req.temperature = settings.temperature;
  return req;
}

SinglePassBatch single_pass_batch(const PageBatch& batch, const SinglePassSettings& settings, ModelGateway& gateway,
                                  const TaxonomyRegistry& registry) {
  if (static_cast<int>(batch.image_refs.size()) != batch.range.size()) {
    throw std::invalid_argument("batch image count does not match its page range");
  }
  const ModelRequest base = build_single_pass_request(batch, settings, registry);
  const std::string tag_base = batch.document_id + "/b" + std::to_string(batch.index);

  auto invoke = [&](int attempt, const std::string& corrective) {
    ModelRequest req = base;
    if (!corrective.empty()) req.user_content.push_back(ContentPart::from_text(corrective_suffix(corrective, "a JSON array")));
    return gateway.call(settings.backend_id, std::move(req), Stage::Screening, tag_base + "#a" + std::to_string(attempt))
        .text;
  };
  auto parse = [&](const std::string& text) -> std::variant<SinglePassParse, std::string> {
    auto parsed = parse_single_pass_output(text, batch.range, settings.backend_id, registry);
    if (auto* ok = std::get_if<SinglePassParse>(&parsed)) return std::move(*ok);
    return std::get<ParseError>(parsed).describe();
  };
  auto outcome = retry_schema<SinglePassParse>(invoke, parse, settings.max_attempts);

  SinglePassBatch out;
  BatchOutcome& b = out.outcome;
  b.document_id = batch.document_id;
  b.index = batch.index;
  b.range = batch.range;
  b.raw_responses = std::move(outcome.raw_responses);
  b.attempts_used = outcome.attempts_used;
  if (outcome.discarded()) {
    b.failure = outcome.last_error;
    b.backend_failure = outcome.backend_error.has_value();
    log().warn("event=batch_failed doc={} batch={} attempts={} reason=\"{}\"", batch.document_id, batch.index,
               b.attempts_used, outcome.last_error);
    return out;
  }
  b.rejected = std::move(outcome.value->rejected);
  int ordinal = 1;
  for (auto& item : outcome.value->items) {
    FlaggedExcerpt e{make_excerpt_id(batch.document_id, batch.index, ordinal), batch.document_id, batch.index, ordinal,
                     std::move(item.excerpt.quote), item.excerpt.page, item.excerpt.attribution,
                     item.excerpt.reasoning};
    b.excerpts.push_back(e);
    out.records.push_back(JuryRecord{std::move(e), {std::move(item.verdict)}, {}, {{settings.backend_id, b.attempts_used, {}}}});
    ++ordinal;
  }
  return out;
}

SinglePassRun single_pass_documents(const std::vector<DocumentManifest>& documents, int batch_size,
                                    const SinglePassSettings& settings, ModelGateway& gateway,
                                    const TaxonomyRegistry& registry, std::size_t workers,
                                    const std::atomic<bool>* stop) {
  std::vector<PageBatch> work;
  std::vector<std::pair<std::size_t, std::size_t>> slots;
  SinglePassRun run;
  std::vector<std::vector<SinglePassBatch>> results(documents.size());
  for (std::size_t d = 0; d < documents.size(); ++d) {
    const int pages = static_cast<int>(documents[d].pages.size());
    auto batches = batch_document(documents[d], batch_size > 0 ? batch_size : std::max(pages, 1));
    results[d].resize(batches.size());
    for (std::size_t b = 0; b < batches.size(); ++b) {
      work.push_back(std::move(batches[b]));
      slots.emplace_back(d, b);
    }
  }
  parallel_for(
      work.size(), workers,
      [&](std::size_t i) {
        auto [d, b] = slots[i];
        results[d][b] = single_pass_batch(work[i], settings, gateway, registry);
      },
      stop);
  for (std::size_t d = 0; d < documents.size(); ++d) {
    DocumentScreening doc{documents[d].document_id, static_cast<int>(documents[d].pages.size()), {}};
    for (auto& r : results[d]) {
      doc.batches.push_back(std::move(r.outcome));
      for (auto& rec : r.records) run.records.push_back(std::move(rec));
    }
    run.documents.push_back(std::move(doc));
  }
  return run;
}

}  // namespace biasaudit
