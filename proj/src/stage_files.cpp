#include "biasaudit/stage_files.hpp"

#include <fstream>
#include <sstream>

namespace biasaudit {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

json header(std::string_view kind) { return {{"schema_version", kStageSchemaVersion}, {"kind", kind}}; }

Attribution attribution_of(const json& j) {
  auto a = parse_attribution(j.get<std::string>());
  if (!a) throw std::invalid_argument("unknown attribution " + j.get<std::string>());
  return *a;
}

JurorVerdict juror_verdict_from_json(const json& j, const TaxonomyRegistry& registry) {
  auto checked = validate_juror_verdict(j, j.at("juror_id").get<std::string>(), registry);
  if (!checked.ok()) throw std::invalid_argument("stored juror verdict invalid: " + describe(checked.errors));
  return std::move(*checked.verdict);
}

}  // namespace

json to_json(const FlaggedExcerpt& e) {
  return {{"excerpt_id", e.excerpt_id},
          {"document_id", e.document_id},
          {"batch_index", e.batch_index},
          {"ordinal", e.ordinal},
          {"page", e.page},
          {"attribution", std::string(to_string(e.attribution))},
          {"quote", e.quote},
          {"screening_reasoning", e.screening_reasoning}};
}

FlaggedExcerpt flagged_excerpt_from_json(const json& j) {
  FlaggedExcerpt e;
  e.excerpt_id = j.at("excerpt_id").get<std::string>();
  e.document_id = j.at("document_id").get<std::string>();
  e.batch_index = j.at("batch_index").get<int>();
  e.ordinal = j.at("ordinal").get<int>();
  e.page = j.at("page").get<int>();
  e.attribution = attribution_of(j.at("attribution"));
  e.quote = j.at("quote").get<std::string>();
  e.screening_reasoning = j.at("screening_reasoning").get<std::string>();
  return e;
}

json to_json(const JuryRecord& r) {
  json verdicts = json::array();
  for (const auto& v : r.verdicts) verdicts.push_back(to_json(v));
  json failures = json::array();
  for (const auto& f : r.failures) {
    failures.push_back({{"juror_id", f.juror_id},
                        {"reason", f.reason},
                        {"attempts_used", f.attempts_used},
                        {"backend_error", f.backend_error}});
  }
  json traces = json::array();
  for (const auto& t : r.traces) {
    traces.push_back({{"juror_id", t.juror_id}, {"attempts_used", t.attempts_used}, {"raw_responses", t.raw_responses}});
  }
  return {{"excerpt", to_json(r.excerpt)},
          {"complete", r.complete()},
          {"verdicts", verdicts},
          {"failures", failures},
          {"traces", traces}};
}

JuryRecord jury_record_from_json(const json& j, const TaxonomyRegistry& registry) {
  JuryRecord r;
  r.excerpt = flagged_excerpt_from_json(j.at("excerpt"));
  for (const auto& v : j.at("verdicts")) r.verdicts.push_back(juror_verdict_from_json(v, registry));
  for (const auto& f : j.at("failures")) {
    r.failures.push_back({f.at("juror_id").get<std::string>(), f.at("reason").get<std::string>(),
                          f.at("attempts_used").get<int>(), f.at("backend_error").get<bool>()});
  }
  for (const auto& t : j.at("traces")) {
    r.traces.push_back({t.at("juror_id").get<std::string>(), t.at("attempts_used").get<int>(),
                        t.at("raw_responses").get<std::vector<std::string>>()});
  }
  return r;
}

json screening_to_json(const ScreeningFile& f) {
  json out = header("screening");
  out["documents"] = json::array();
  for (const auto& doc : f.documents) {
    json batches = json::array();
    for (const auto& b : doc.batches) {
      json excerpts = json::array();
      for (const auto& e : b.excerpts) excerpts.push_back(to_json(e));
      json rejected = json::array();
      for (const auto& r : b.rejected) rejected.push_back({{"index", r.index}, {"reason", r.reason}});
      batches.push_back({{"index", b.index},
                         {"first_page", b.range.first},
                         {"last_page", b.range.last},
                         {"attempts_used", b.attempts_used},
                         {"failure", b.failure ? json(*b.failure) : json(nullptr)},
                         {"backend_failure", b.backend_failure},
                         {"excerpts", excerpts},
                         {"rejected", rejected},
                         {"raw_responses", b.raw_responses}});
    }
    out["documents"].push_back({{"document_id", doc.document_id}, {"page_count", doc.page_count}, {"batches", batches}});
  }
  return out;
}

ScreeningFile screening_from_json(const json& j) {
  ScreeningFile f;
  for (const auto& d : j.at("documents")) {
    DocumentScreening doc;
    doc.document_id = d.at("document_id").get<std::string>();
    doc.page_count = d.at("page_count").get<int>();
    for (const auto& b : d.at("batches")) {
      BatchOutcome o;
      o.document_id = doc.document_id;
      o.index = b.at("index").get<int>();
      o.range = {b.at("first_page").get<int>(), b.at("last_page").get<int>()};
      o.attempts_used = b.at("attempts_used").get<int>();
      if (!b.at("failure").is_null()) o.failure = b.at("failure").get<std::string>();
      o.backend_failure = b.at("backend_failure").get<bool>();
      for (const auto& e : b.at("excerpts")) o.excerpts.push_back(flagged_excerpt_from_json(e));
      for (const auto& r : b.at("rejected")) {
        o.rejected.push_back({r.at("index").get<std::size_t>(), r.at("reason").get<std::string>()});
      }
      o.raw_responses = b.at("raw_responses").get<std::vector<std::string>>();
      doc.batches.push_back(std::move(o));
    }
    f.documents.push_back(std::move(doc));
  }
  return f;
}

json jury_to_json(const JuryFile& f) {
  json out = header("jury");
  out["jurors"] = f.jurors;
  out["taxonomy"] = taxonomy_to_json(f.taxonomy);
  out["records"] = json::array();
  for (const auto& r : f.records) out["records"].push_back(to_json(r));
  return out;
}

JuryFile jury_from_json(const json& j) {
  JuryFile f{j.at("jurors").get<std::vector<std::string>>(), taxonomy_from_json(j.at("taxonomy")), {}};
  for (const auto& r : j.at("records")) f.records.push_back(jury_record_from_json(r, f.taxonomy));
  return f;
}

json verdicts_to_json(const VerdictsFile& f) {
  if (f.records.size() != f.verdicts.size()) throw std::invalid_argument("verdicts must parallel jury records");
  json out = header("verdicts");
  out["strategy"] = to_string(f.strategy);
  out["taxonomy"] = taxonomy_to_json(f.taxonomy);
  out["entries"] = json::array();
  for (std::size_t i = 0; i < f.records.size(); ++i) {
    out["entries"].push_back(
        {{"record", to_json(f.records[i])}, {"verdict", f.verdicts[i] ? to_json(*f.verdicts[i]) : json(nullptr)}});
  }
  return out;
}

VerdictsFile verdicts_from_json(const json& j) {
  auto strategy = parse_verdict_strategy(j.at("strategy").get<std::string>());
  if (!strategy) throw std::invalid_argument("unknown strategy " + j.at("strategy").get<std::string>());
  VerdictsFile f{*strategy, taxonomy_from_json(j.at("taxonomy")), {}, {}};
  for (const auto& e : j.at("entries")) {
    f.records.push_back(jury_record_from_json(e.at("record"), f.taxonomy));
    const auto& v = e.at("verdict");
    if (v.is_null()) {
      f.verdicts.emplace_back(std::nullopt);
    } else {
      f.verdicts.emplace_back(final_verdict_from_json(v, f.taxonomy));
      if (f.verdicts.back()->excerpt_id != f.records.back().excerpt.excerpt_id) {
        throw std::invalid_argument("verdict " + f.verdicts.back()->excerpt_id + " stored under another excerpt");
      }
    }
  }
  return f;
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_json_file(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

json read_stage_json(const fs::path& path, std::string_view kind) {
  if (!fs::exists(path)) throw MissingStageFile(path);
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  json j = json::parse(buf.str(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw SchemaVersionMismatch(path.string() + ": not a JSON document");
  }
  const auto version = j.find("schema_version");
  if (version == j.end() || !version->is_number_integer() || version->get<int>() != kStageSchemaVersion) {
    throw SchemaVersionMismatch(path.string() + ": expected schema_version " + std::to_string(kStageSchemaVersion));
  }
  if (j.value("kind", std::string()) != kind) {
    throw SchemaVersionMismatch(path.string() + ": expected kind '" + std::string(kind) + "'");
  }
  return j;
}

namespace {

template <typename F>
auto read_checked(const fs::path& path, std::string_view kind, F&& convert) {
  json j = read_stage_json(path, kind);
  try {
    return convert(j);
  } catch (const std::exception& e) {
    throw SchemaVersionMismatch(path.string() + ": content does not match schema version " +
                                std::to_string(kStageSchemaVersion) + " (" + e.what() + ")");
  }
}

}  // namespace

ScreeningFile read_screening_file(const fs::path& path) {
  return read_checked(path, "screening", [](const json& j) { return screening_from_json(j); });
}

JuryFile read_jury_file(const fs::path& path) {
  return read_checked(path, "jury", [](const json& j) { return jury_from_json(j); });
}

VerdictsFile read_verdicts_file(const fs::path& path) {
  return read_checked(path, "verdicts", [](const json& j) { return verdicts_from_json(j); });
}

CostLedger read_ledger_file(const fs::path& path) {
  return read_checked(path, "ledger", [](const json& j) { return ledger_from_json(j); });
}

}  // namespace biasaudit
