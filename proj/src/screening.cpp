#include "biasaudit/screening.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "biasaudit/executor.hpp"
#include "biasaudit/log.hpp"
#include "biasaudit/schema_retry.hpp"

namespace biasaudit {

using json = nlohmann::json;

namespace fs = std::filesystem;

std::vector<PageRange> make_batches(int page_count, int batch_size) {
  if (page_count < 0) throw std::invalid_argument("page_count must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  std::vector<PageRange> ranges;
  for (int first = 1; first <= page_count; first += batch_size) {
    ranges.push_back({first, std::min(first + batch_size - 1, page_count)});
  }
  return ranges;
}

std::vector<fs::path> list_page_images(const fs::path& dir) {
  std::vector<fs::path> pages;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".webp") pages.push_back(entry.path());
  }
  std::sort(pages.begin(), pages.end());
  return pages;
}

DocumentManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw std::runtime_error("manifest " + path.string() + " is not a JSON object");
  if (doc.value("schema_version", 0) != 1) throw std::runtime_error("manifest " + path.string() + " has unsupported schema_version");
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

  DocumentManifest m;
  m.document_id = doc.value("document_id", std::string());
  if (m.document_id.empty()) throw std::runtime_error("manifest " + path.string() + " lacks document_id");
  if (doc.contains("source_pdf")) m.source_pdf = resolve(doc["source_pdf"].get<std::string>());
  if (doc.contains("pages")) {
    for (const auto& p : doc["pages"]) m.pages.push_back(resolve(p.get<std::string>()));
  } else if (doc.contains("page_dir")) {
    m.page_dir = resolve(doc["page_dir"].get<std::string>());
    if (fs::is_directory(*m.page_dir)) m.pages = list_page_images(*m.page_dir);
  } else {
    throw std::runtime_error("manifest " + path.string() + " needs 'pages' or 'page_dir'");
  }
  return m;
}

std::vector<PageBatch> batch_document(const DocumentManifest& manifest, int batch_size) {
  std::vector<PageBatch> batches;
  int index = 1;
  for (const auto& range : make_batches(static_cast<int>(manifest.pages.size()), batch_size)) {
    PageBatch b{manifest.document_id, index++, range, {}};
    b.image_refs.assign(manifest.pages.begin() + (range.first - 1), manifest.pages.begin() + range.last);
    batches.push_back(std::move(b));
  }
  return batches;
}

std::string make_excerpt_id(std::string_view document_id, int batch_index, int ordinal) {
  return std::string(document_id) + "-b" + std::to_string(batch_index) + "-e" + std::to_string(ordinal);
}

std::string_view screening_schema_text() {
  return R"([
  {
    "quote": "verbatim passage text",
    "page": <page number>,
    "attribution": "Textbook Narrative" | "Primary Source Usage",
    "reasoning": "why this passage may need review"
  }
])";
}

std::optional<std::string> check_excerpt_record(const json& r, PageRange range, ExcerptCandidate& out) {
  if (!r.is_object()) return "record is not an object";
  if (!r.contains("quote") || !r["quote"].is_string() || trim(r["quote"].get<std::string>()).empty()) {
    return "quote missing or empty";
  }
  if (!r.contains("page") || !r["page"].is_number_integer()) return "page missing or not an integer";
  const auto page = r["page"].get<long long>();
  if (page < range.first || page > range.last) {
    return "page " + std::to_string(page) + " outside " + std::to_string(range.first) + "-" +
           std::to_string(range.last);
  }
  if (!r.contains("attribution") || !r["attribution"].is_string()) return "attribution missing";
  auto attribution = parse_attribution(r["attribution"].get<std::string>());
  if (!attribution) return "unknown attribution '" + r["attribution"].get<std::string>() + "'";
  if (!r.contains("reasoning") || !r["reasoning"].is_string() || trim(r["reasoning"].get<std::string>()).empty()) {
    return "reasoning missing or empty";
  }
  out = {r["quote"].get<std::string>(), static_cast<int>(page), *attribution, r["reasoning"].get<std::string>()};
  return std::nullopt;
}

const json* excerpt_records(const json& block) {
  if (block.is_array()) return &block;
  if (block.is_object()) {
    auto it = block.find("excerpts");
    if (it != block.end() && it->is_array()) return &*it;
  }
  return nullptr;
}

std::variant<ScreeningParse, ParseError> parse_screening_output(std::string_view text, PageRange range) {
  const auto blocks = find_json_blocks(text);
  if (blocks.empty()) return ParseError{ParseError::Kind::NoStructuredBlock, "no JSON block in reply", {}};

  const json* records = nullptr;
  for (const auto& b : blocks) {
    if ((records = excerpt_records(b.value))) break;
  }
  if (!records) {
    return ParseError{ParseError::Kind::SchemaViolation, "expected a JSON array of excerpt records", {}};
  }

  ScreeningParse out;
  for (std::size_t i = 0; i < records->size(); ++i) {
    ExcerptCandidate candidate;
    if (auto reason = check_excerpt_record((*records)[i], range, candidate)) {
      out.rejected.push_back({i, *reason});
    } else {
      out.records.push_back(std::move(candidate));
    }
  }
  return out;
}

ModelRequest build_screening_request(const PageBatch& batch, const ScreeningSettings& settings) {
  const TemplateVars vars{{"document_id", batch.document_id},
                         {"first_page", std::to_string(batch.range.first)},
                         {"last_page", std::to_string(batch.range.last)},
                         {"schema", std::string(screening_schema_text())}};
  ModelRequest req;
  req.system_prompt = render(settings.prompt.system, vars);
  req.user_content.push_back(ContentPart::from_text(render(settings.prompt.user, vars)));
  for (const auto& image : batch.image_refs) req.user_content.push_back(ContentPart::from_image(image));
  req.temperature = settings.temperature;
  return req;
}

BatchOutcome screen_batch(const PageBatch& batch, const ScreeningSettings& settings, ModelGateway& gateway) {
  if (static_cast<int>(batch.image_refs.size()) != batch.range.size()) {
    throw std::invalid_argument("batch image count does not match its page range");
  }
  const ModelRequest base = build_screening_request(batch, settings);
  const std::string tag_base = batch.document_id + "/b" + std::to_string(batch.index);

  auto invoke = [&](int attempt, const std::string& corrective) {
    ModelRequest req = base;
    if (!corrective.empty()) req.user_content.push_back(ContentPart::from_text(corrective_suffix(corrective, "a JSON array")));
    return gateway.call(settings.backend_id, std::move(req), Stage::Screening, tag_base + "#a" + std::to_string(attempt))
        .text;
  };
  auto parse = [&](const std::string& text) -> std::variant<ScreeningParse, std::string> {
    auto parsed = parse_screening_output(text, batch.range);
    if (auto* ok = std::get_if<ScreeningParse>(&parsed)) return std::move(*ok);
    return std::get<ParseError>(parsed).describe();
  };
  auto outcome = retry_schema<ScreeningParse>(invoke, parse, settings.max_attempts);

  BatchOutcome out;
  out.document_id = batch.document_id;
  out.index = batch.index;
  out.range = batch.range;
  out.raw_responses = std::move(outcome.raw_responses);
  out.attempts_used = outcome.attempts_used;

  if (outcome.discarded()) {
    out.failure = outcome.last_error;
    out.backend_failure = outcome.backend_error.has_value();
    log().warn("event=batch_failed doc={} batch={} attempts={} reason=\"{}\"", batch.document_id, batch.index,
               out.attempts_used, outcome.last_error);
    return out;
  }

  out.rejected = std::move(outcome.value->rejected);
  for (const auto& r : out.rejected) {
    log().info("event=record_rejected doc={} batch={} index={} reason=\"{}\"", batch.document_id, batch.index, r.index,
               r.reason);
  }
  int ordinal = 1;
  for (auto& c : outcome.value->records) {
    out.excerpts.push_back({make_excerpt_id(batch.document_id, batch.index, ordinal), batch.document_id, batch.index,
                            ordinal, std::move(c.quote), c.page, c.attribution, std::move(c.reasoning)});
    ++ordinal;
  }
  return out;
}

std::vector<FlaggedExcerpt> DocumentScreening::excerpts() const {
  std::vector<FlaggedExcerpt> all;
  for (const auto& b : batches) all.insert(all.end(), b.excerpts.begin(), b.excerpts.end());
  return all;
}

std::vector<DocumentScreening> screen_documents(const std::vector<DocumentManifest>& documents, int batch_size,
                                                const ScreeningSettings& settings, ModelGateway& gateway,
                                                std::size_t workers, const std::atomic<bool>* stop) {
  std::vector<DocumentScreening> result;
  std::vector<PageBatch> work;
  std::vector<std::pair<std::size_t, std::size_t>> slots;  // (document, batch) per work item
  for (std::size_t d = 0; d < documents.size(); ++d) {
    auto batches = batch_document(documents[d], batch_size);
    result.push_back({documents[d].document_id, static_cast<int>(documents[d].pages.size()), {}});
    result.back().batches.resize(batches.size());
    for (std::size_t b = 0; b < batches.size(); ++b) {
      work.push_back(std::move(batches[b]));
      slots.emplace_back(d, b);
    }
  }
  parallel_for(
      work.size(), workers,
      [&](std::size_t i) {
        auto [d, b] = slots[i];
        result[d].batches[b] = screen_batch(work[i], settings, gateway);
      },
      stop);
  return result;
}

}  // namespace biasaudit
