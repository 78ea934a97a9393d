#include "support/fixtures.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

#include <fmt/format.h>

#include "biasaudit/config.hpp"

namespace testsupport {

using namespace biasaudit;

namespace {

constexpr unsigned char kPng[] = {
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44, 0x52,
    0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x08, 0x06, 0x00, 0x00, 0x00, 0x1f, 0x15, 0xc4,
    0x89, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9c, 0x63, 0xf8, 0xff, 0xff, 0x3f,
    0x00, 0x05, 0xfe, 0x02, 0xfe, 0xa7, 0x35, 0x81, 0x84, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e,
    0x44, 0xae, 0x42, 0x60, 0x82};

std::atomic<int> g_counter{0};

}  // namespace

TempDir::TempDir() {
  const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  path_ = fs::temp_directory_path() /
          fmt::format("biasaudit-test-{}-{}-{}", static_cast<long>(::getpid()), stamp, g_counter++);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

void write_png(const fs::path& path) {
  write_file(path, std::string(reinterpret_cast<const char*>(kPng), sizeof kPng));
}

fs::path write_document(const fs::path& dir, const std::string& document_id, int pages) {
  json manifest = {{"schema_version", 1}, {"document_id", document_id}, {"pages", json::array()}};
  for (int p = 1; p <= pages; ++p) {
    const auto name = fmt::format("pages/{}/p{:03}.png", document_id, p);
    write_png(dir / name);
    manifest["pages"].push_back(name);
  }
  const auto path = dir / (document_id + ".manifest.json");
  write_file(path, manifest.dump(2));
  return path;
}

json verdict_payload(const std::string& category, int severity, double confidence, const std::string& attribution,
                     const std::string& reasoning) {
  return {{"attribution", attribution},
          {"category", category},
          {"severity", severity},
          {"confidence", confidence},
          {"reasoning", reasoning}};
}

json meta_payload(int severity, const std::string& category, bool human_review, const std::string& justification) {
  return {{"severity", severity},
          {"category", category},
          {"human_review", human_review},
          {"justification", justification}};
}

json script_entry(const std::string& match, const Reply& reply) {
  json e = {{"match", match}, {"input_tokens", reply.input_tokens}, {"output_tokens", reply.output_tokens}};
  if (reply.raw) {
    e["text"] = reply.body;
  } else {
    e["json"] = reply.body;
  }
  return e;
}

std::string juror_id(int index) { return fmt::format("juror-{}", index + 1); }

std::string excerpt_id(const RunPlan& plan, int batch, int ordinal) {
  return fmt::format("{}-b{}-e{}", plan.document_id, batch, ordinal);
}

namespace {

std::vector<Reply> uniform_jury(const std::string& category, const std::vector<int>& severities,
                                const std::vector<double>& confidences, const std::string& attribution) {
  std::vector<Reply> out;
  for (std::size_t i = 0; i < severities.size(); ++i) {
    out.push_back(Reply::payload(verdict_payload(category, severities[i], confidences[i], attribution,
                                                 fmt::format("Juror {} rates severity {}.", i + 1, severities[i])),
                                 900, 180));
  }
  return out;
}

std::vector<std::vector<Reply>> one_each(std::vector<Reply> replies) {
  std::vector<std::vector<Reply>> out;
  for (auto& r : replies) out.push_back({std::move(r)});
  return out;
}

}  // namespace

RunPlan standard_plan() {
  RunPlan plan;
  BatchPlan b1;
  ExcerptPlan e1;
  e1.quote = "Our ancestors heroically defended the homeland, proving the nation was destined to endure.";
  e1.page = 2;
  e1.jurors = one_each(uniform_jury("Narrative Framing", {3, 3, 3, 3, 2}, {0.8, 0.8, 0.8, 0.8, 0.8},
                                    "Textbook Narrative"));
  e1.meta = {Reply::payload(meta_payload(3, "Narrative Framing"), 2400, 300)};
  ExcerptPlan e2;
  e2.quote = "\"Let every loyal son take up arms against the foreign oppressor!\"";
  e2.page = 4;
  e2.attribution = "Primary Source Usage";
  e2.jurors = one_each(uniform_jury("Uncontextualized Source", {2, 2, 2, 2, 2}, {0.8, 0.8, 0.8, 0.8, 0.8},
                                    "Primary Source Usage"));
  e2.meta = {Reply::payload(meta_payload(2, "Uncontextualized Source"), 2400, 300)};
  b1.excerpts = {e1, e2};

  BatchPlan b2;
  ExcerptPlan e3;
  e3.quote = "The minority communities of the region played no significant role in these events.";
  e3.page = 8;
  e3.jurors = one_each(uniform_jury("Marginalization of Minorities", {2, 2, 2, 2, 5}, {0.8, 0.8, 0.8, 0.8, 0.6},
                                    "Textbook Narrative"));
  e3.meta = {Reply::payload(meta_payload(5, "Marginalization of Minorities", true,
                                         "The dissenting juror documents an erasure the majority overlooked."),
                            2400, 300)};
  b2.excerpts = {e3};

  BatchPlan b3;
  plan.batches = {b1, b2, b3};
  return plan;
}

fs::path write_run(const fs::path& root, const RunPlan& plan) {
  const auto manifest = write_document(root, plan.document_id, plan.pages);
  const auto ranges = make_batches(plan.pages, plan.batch_size);
  if (ranges.size() < plan.batches.size()) throw std::invalid_argument("plan has more batches than the document");

  json screener = {{"on_exhaustion", "fail"}, {"responses", json::array()}};
  json meta = {{"on_exhaustion", "fail"}, {"responses", json::array()}};
  std::vector<json> jurors(plan.juror_count, json{{"on_exhaustion", "fail"}, {"responses", json::array()}});

  for (std::size_t b = 0; b < plan.batches.size(); ++b) {
    const auto& batch = plan.batches[b];
    const auto key = fmt::format("Pages: {}-{}\n", ranges[b].first, ranges[b].last);
    if (!batch.screening.empty()) {
      for (const auto& r : batch.screening) screener["responses"].push_back(script_entry(key, r));
    } else {
      json records = json::array();
      for (const auto& e : batch.excerpts) {
        records.push_back({{"quote", e.quote}, {"page", e.page}, {"attribution", e.attribution}, {"reasoning", e.reasoning}});
      }
      screener["responses"].push_back(
          script_entry(key, Reply::payload(records, batch.input_tokens, batch.output_tokens)));
    }
    for (std::size_t k = 0; k < batch.excerpts.size(); ++k) {
      const auto& e = batch.excerpts[k];
      const auto ekey = fmt::format("Excerpt ID: {}\n", excerpt_id(plan, static_cast<int>(b) + 1, static_cast<int>(k) + 1));
      for (std::size_t j = 0; j < e.jurors.size() && j < jurors.size(); ++j) {
        for (const auto& r : e.jurors[j]) jurors[j]["responses"].push_back(script_entry(ekey, r));
      }
      for (const auto& r : e.meta) meta["responses"].push_back(script_entry(ekey, r));
    }
  }

  const json price = {{"input_usd_per_million", plan.input_usd_per_million},
                      {"output_usd_per_million", plan.output_usd_per_million}};
  json config = {{"schema_version", 1},
                 {"preset", plan.preset},
                 {"documents", {manifest.filename().string()}},
                 {"output_dir", "run"},
                 {"batch_size", plan.batch_size},
                 {"backends", json::object()},
                 {"screening", {{"backend", "screener"}}},
                 {"jury", {{"jurors", json::array()}, {"calibration", true}}},
                 {"meta", {{"backend", "meta"}, {"strategy", plan.strategy}}},
                 {"transport_retry", {{"max_attempts", 3}, {"base_delay_ms", 0}}}};
  write_file(root / "scripts/screener.json", screener.dump(2));
  write_file(root / "scripts/meta.json", meta.dump(2));
  config["backends"]["screener"] = {{"kind", "scripted"}, {"script", "scripts/screener.json"}, {"price", price}};
  config["backends"]["meta"] = {{"kind", "scripted"}, {"script", "scripts/meta.json"}, {"price", price}};
  for (int j = 0; j < plan.juror_count; ++j) {
    const auto id = juror_id(j);
    write_file(root / ("scripts/" + id + ".json"), jurors[j].dump(2));
    config["backends"][id] = {{"kind", "scripted"}, {"script", "scripts/" + id + ".json"}, {"price", price}};
    config["jury"]["jurors"].push_back(id);
  }
  config.merge_patch(plan.config_patch);
  const auto path = root / "config.json";
  write_file(path, config.dump(2));
  return path;
}

RunSummary run_config(const fs::path& config, const RunOptions& options) {
  return run_pipeline(load_run_config(config), options);
}

JurorVerdict juror(const std::string& id, int severity, double confidence, const std::string& category,
                   Attribution attribution) {
  auto c = default_taxonomy().lookup(category);
  if (!c) throw std::invalid_argument("unknown category " + category);
  return {id, attribution, *c, SeverityScore(severity), confidence, "reasoning of " + id};
}

FlaggedExcerpt excerpt(const std::string& id, Attribution attribution) {
  FlaggedExcerpt e;
  e.excerpt_id = id;
  e.document_id = "doc";
  e.quote = "Quoted passage " + id;
  e.page = 1;
  e.attribution = attribution;
  e.screening_reasoning = "flagged";
  return e;
}

JuryRecord record(const std::string& id, std::vector<JurorVerdict> verdicts) {
  JuryRecord r;
  r.excerpt = excerpt(id);
  r.verdicts = std::move(verdicts);
  return r;
}

std::vector<std::string> labels(std::size_t n) {
  std::vector<std::string> out;
  for (const auto& c : default_taxonomy().categories()) {
    if (out.size() == n) break;
    out.push_back(c.label);
  }
  return out;
}

std::vector<JurorVerdict> random_jury(std::mt19937_64& rng, const JuryShape& shape) {
  std::uniform_int_distribution<int> size(shape.min_size, shape.max_size);
  std::uniform_int_distribution<int> severity(1, 7);
  std::uniform_real_distribution<double> confidence(0.0, 1.0);
  std::uniform_int_distribution<int> step(0, 4);
  const auto pool = shape.labels.empty() ? labels(3) : shape.labels;
  std::uniform_int_distribution<std::size_t> label(0, pool.size() - 1);
  const int n = size(rng);
  std::vector<JurorVerdict> out;
  for (int i = 0; i < n; ++i) {
    const double c = shape.grid ? step(rng) * 0.25 : confidence(rng);
    out.push_back(juror(juror_id(i), severity(rng), c, pool[label(rng)]));
  }
  return out;
}

ScriptEntry reply(std::string text, std::optional<std::string> match, std::int64_t input_tokens,
                  std::int64_t output_tokens) {
  ScriptEntry e;
  e.match = std::move(match);
  e.text = std::move(text);
  e.input_tokens = input_tokens;
  e.output_tokens = output_tokens;
  return e;
}

ScriptEntry failure(BackendErrorKind kind, std::optional<std::string> match) {
  ScriptEntry e;
  e.match = std::move(match);
  e.error = kind;
  return e;
}

Bench::Bench(const std::map<std::string, std::vector<ScriptEntry>>& scripts) {
  std::map<std::string, BackendBinding> bindings;
  PriceTable prices;
  for (const auto& [id, script] : scripts) {
    backends[id] = std::make_shared<ScriptedBackend>(script);
    bindings[id] = {backends[id], 4096};
    prices[id] = Price::from_usd_per_million(1.0, 2.0);
  }
  gateway = std::make_unique<ModelGateway>(bindings, prices, ledger);
}

std::size_t Bench::total_calls() const {
  std::size_t n = 0;
  for (const auto& [id, b] : backends) n += b->call_count();
  return n;
}

Corpus reference_corpus() {
  struct Slot {
    int severity;
    Attribution attribution;
    bool narrative_framing;
  };
  std::vector<Slot> slots;
  auto add = [&](int n, int severity, Attribution a, bool nf = false) {
    for (int i = 0; i < n; ++i) slots.push_back({severity, a, nf});
  };
  const auto P = Attribution::PrimarySourceUsage;
  const auto T = Attribution::TextbookNarrative;
  add(18, 2, P);
  add(38, 3, P);
  add(6, 1, T);
  add(8, 2, T, true);
  add(37, 2, T);
  add(60, 3, T, true);
  add(58, 3, T);
  add(43, 4, T);
  add(2, 5, T);

  const auto others = labels(15);
  Corpus c;
  int escalated = 0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const int range = i < 16 ? 0 : i < 188 ? 1 : i < 261 ? 2 : 3;
    const auto& s = slots[(i * 7) % slots.size()];
    const int lo = s.severity + range <= 7 ? s.severity : s.severity - range;
    const auto id = fmt::format("corpus-b{}-e{}", i / 3 + 1, i % 3 + 1);
    std::string label = s.narrative_framing ? "Narrative Framing" : others[1 + i % 14];
    std::vector<JurorVerdict> verdicts;
    for (int j = 0; j < 5; ++j) verdicts.push_back(juror(juror_id(j), j == 4 ? lo + range : lo, 0.8, label, s.attribution));
    JuryRecord r = record(id, verdicts);
    r.excerpt.attribution = s.attribution;
    if (i % 27 == 5) {
      r.failures.push_back({r.verdicts.front().juror_id, "schema validation failed 3 times", 3, false});
      r.verdicts.erase(r.verdicts.begin());
    }
    const bool review = range >= 2 && escalated < 18;
    escalated += review;
    FinalVerdict v{id, SeverityScore(s.severity), *default_taxonomy().lookup(label), "fixture", review,
                   VerdictStrategy::Heuristic, static_cast<int>(r.verdicts.size()), false, "consensus", {}};
    if (review) v.escalation_reasons = {"divergence"};
    c.records.push_back(std::move(r));
    c.verdicts.push_back(std::move(v));
  }
  return c;
}

std::map<std::string, std::string> html_figures(const std::string& html) {
  static const std::regex span(R"re(<span class="num" data-key="([^"]+)">([^<]*)</span>)re");
  std::map<std::string, std::string> out;
  for (auto it = std::sregex_iterator(html.begin(), html.end(), span); it != std::sregex_iterator(); ++it) {
    out[(*it)[1].str()] = (*it)[2].str();
  }
  return out;
}

namespace {

std::string unescape_html(std::string s) {
  const std::pair<const char*, const char*> entities[] = {
      {"&lt;", "<"}, {"&gt;", ">"}, {"&quot;", "\""}, {"&#39;", "'"}, {"&amp;", "&"}};
  for (const auto& [from, to] : entities) {
    for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + 1)) {
      s.replace(pos, std::strlen(from), to);
    }
  }
  return s;
}

std::vector<std::string> split_key(const std::string& key) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (auto dot = key.find('.'); dot != std::string::npos; dot = key.find('.', start)) {
    parts.push_back(key.substr(start, dot - start));
    start = dot + 1;
  }
  parts.push_back(key.substr(start));
  return parts;
}

/// The numeric summary field a formatted key stands for, or nullptr.
const json* numeric_field(const json& s, const std::string& key) {
  const auto p = split_key(key);
  const auto n = p.size();
  if (p[0] == "distribution" && n == 3 && (p[1] == "pct" || p[1] == "count")) {
    return &s["distribution"][p[1] == "pct" ? "percentages" : "counts"].at(std::stoul(p[2]) - 1);
  }
  if (p[0] == "categories") {
    const auto label = key.substr(11, key.rfind('.') - 11);
    for (const auto& row : s["categories"]) {
      if (row["label"] == label) return &row[p.back() == "count" ? "count" : "mean_severity"];
    }
    return nullptr;
  }
  if (p[0] == "cost" && n >= 3 && p[1] == "backend") {
    const auto id = key.substr(13, key.rfind('.') - 13);
    for (const auto& row : s["cost"]["backends"]) {
      if (row["backend_id"] == id) return &row[p.back()];
    }
    return nullptr;
  }
  if (p[0] == "cost" && n == 4 && p[1] == "stage") return &s["cost"]["stages"][p[2]][p[3]];
  const json* cur = &s;
  for (const auto& part : p) {
    if (!cur->is_object() || !cur->contains(part)) return nullptr;
    cur = &(*cur)[part];
  }
  return cur;
}

}  // namespace

std::vector<std::string> report_mismatches(const std::string& html, const json& summary) {
  std::vector<std::string> problems;
  const auto figures = html_figures(html);
  const auto& formatted = summary.at("formatted");
  if (figures.empty()) problems.push_back("report carries no figures");
  for (const auto& [key, text] : figures) {
    if (!formatted.contains(key)) {
      problems.push_back("report figure " + key + " missing from summary");
    } else if (formatted[key].get<std::string>() != unescape_html(text)) {
      problems.push_back(key + ": report " + text + " vs summary " + formatted[key].get<std::string>());
    }
  }
  for (const auto& [key, value] : formatted.items()) {
    if (!figures.contains(key)) problems.push_back("summary figure " + key + " missing from report");
    const auto number = numeric_field(summary, key);
    if (!number) {
      problems.push_back("no numeric field for " + key);
      continue;
    }
    const auto text = value.get<std::string>();
    if (text == "n/a") {
      if (!number->is_null()) problems.push_back(key + ": n/a but numeric field is " + number->dump());
    } else if (!number->is_number() || std::abs(std::stod(text) - number->get<double>()) > 1e-9) {
      problems.push_back(key + ": formatted " + text + " vs numeric " + number->dump());
    }
  }
  return problems;
}

}  // namespace testsupport
