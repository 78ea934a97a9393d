#include "biasaudit/report.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include <fmt/format.h>

namespace biasaudit {

using json = nlohmann::json;

namespace {

std::int64_t pow10(int places) {
  std::int64_t p = 1;
  for (int i = 0; i < places; ++i) p *= 10;
  return p;
}

std::optional<Decimal> ratio_if(std::int64_t num, std::int64_t den, int places) {
  if (den == 0) return std::nullopt;
  return round_ratio(num, den, places);
}

std::optional<Decimal> percent_if(std::int64_t part, std::int64_t whole) {
  return ratio_if(100 * part, whole, kPercentPlaces);
}

}  // namespace

std::string Decimal::str() const {
  const std::int64_t scale = pow10(places);
  const std::int64_t mag = units < 0 ? -units : units;
  std::string out = units < 0 ? "-" : "";
  out += std::to_string(mag / scale);
  if (places > 0) out += fmt::format(".{:0{}}", mag % scale, places);
  return out;
}

double Decimal::to_double() const { return std::strtod(str().c_str(), nullptr); }

__extension__ using Wide = __int128;

Decimal round_ratio(std::int64_t num, std::int64_t den, int places) {
  if (den <= 0) throw std::invalid_argument("round_ratio: denominator must be positive");
  if (places < 0 || places > 9) throw std::invalid_argument("round_ratio: places must lie in [0,9]");
  const Wide scaled = static_cast<Wide>(num) * pow10(places);
  Wide q = scaled / den;
  const Wide r = scaled % den;
  const Wide twice = r < 0 ? -2 * r : 2 * r;
  if (twice >= den) q += scaled < 0 ? -1 : 1;
  return Decimal{static_cast<std::int64_t>(q), places};
}

std::optional<Decimal> SeverityDistribution::share_at_most(int s) const {
  std::int64_t part = 0;
  for (int k = 1; k <= s && k <= 7; ++k) part += counts[k - 1];
  return percent_if(part, n);
}

SeverityDistribution distribution_from_counts(const std::array<std::int64_t, 7>& counts) {
  SeverityDistribution d;
  d.counts = counts;
  std::int64_t weighted = 0;
  for (int k = 0; k < 7; ++k) {
    if (counts[k] < 0) throw std::invalid_argument("severity counts must be non-negative");
    d.n += counts[k];
    weighted += counts[k] * (k + 1);
  }
  for (int k = 0; k < 7; ++k) d.percentages[k] = percent_if(counts[k], d.n).value_or(Decimal{0, kPercentPlaces});
  d.mean = ratio_if(weighted, d.n, kMeanPlaces);
  return d;
}

SeverityDistribution severity_distribution(std::span<const SeverityScore> severities) {
  std::array<std::int64_t, 7> counts{};
  for (auto s : severities) ++counts[s.value() - 1];
  return distribution_from_counts(counts);
}

SeverityDistribution severity_distribution(std::span<const FinalVerdict> verdicts) {
  std::array<std::int64_t, 7> counts{};
  for (const auto& v : verdicts) ++counts[v.severity.value() - 1];
  return distribution_from_counts(counts);
}

AgreementStats agreement_stats(std::span<const JuryRecord> records, std::span<const FinalVerdict> verdicts) {
  if (records.size() != verdicts.size()) {
    throw MismatchedIds(fmt::format("{} jury records but {} verdicts", records.size(), verdicts.size()));
  }
  AgreementStats s;
  s.n_excerpts = static_cast<std::int64_t>(records.size());
  std::int64_t range_sum = 0, le1 = 0, ge3 = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    if (rec.excerpt.excerpt_id != verdicts[i].excerpt_id) {
      throw MismatchedIds("record " + rec.excerpt.excerpt_id + " paired with verdict " + verdicts[i].excerpt_id);
    }
    if (rec.verdicts.empty()) throw MismatchedIds("record " + rec.excerpt.excerpt_id + " has no juror verdicts");
    auto [lo, hi] = std::minmax_element(rec.verdicts.begin(), rec.verdicts.end(),
                                        [](const auto& a, const auto& b) { return a.severity < b.severity; });
    const int range = hi->severity.value() - lo->severity.value();
    range_sum += range;
    le1 += range <= 1;
    ge3 += range >= 3;
    s.full_jury_count += rec.complete();
    s.escalation_count += verdicts[i].human_review;
  }
  s.full_jury_rate = percent_if(s.full_jury_count, s.n_excerpts);
  s.mean_range = ratio_if(range_sum, s.n_excerpts, kMeanPlaces);
  s.pct_range_le_1 = percent_if(le1, s.n_excerpts);
  s.pct_range_ge_3 = percent_if(ge3, s.n_excerpts);
  s.escalation_rate = percent_if(s.escalation_count, s.n_excerpts);
  return s;
}

AttributionSplit attribution_split(std::span<const AuditItem> items) {
  AttributionSplit split;
  for (const auto& item : items) {
    auto& row = item.excerpt.attribution == Attribution::PrimarySourceUsage ? split.primary : split.narrative;
    ++row.n;
    row.severity_sum += item.verdict.severity.value();
  }
  for (auto* row : {&split.primary, &split.narrative}) row->mean = ratio_if(row->severity_sum, row->n, kMeanPlaces);
  if (split.primary.n > 0 && split.narrative.n > 0) {
    // s_n/n_n - s_p/n_p over the common denominator.
    const std::int64_t num =
        split.narrative.severity_sum * split.primary.n - split.primary.severity_sum * split.narrative.n;
    split.gap = round_ratio(num, split.narrative.n * split.primary.n, kMeanPlaces);
  }
  return split;
}

std::vector<CategoryRow> category_table(std::span<const FinalVerdict> verdicts) {
  struct Acc {
    TaxonomyCategory category;
    std::int64_t count = 0;
    std::int64_t sum = 0;
  };
  std::map<std::string, Acc> acc;
  for (const auto& v : verdicts) {
    auto [it, inserted] = acc.try_emplace(v.category.label, Acc{v.category});
    ++it->second.count;
    it->second.sum += v.severity.value();
  }
  std::vector<CategoryRow> rows;
  for (const auto& [label, a] : acc) rows.push_back({a.category, a.count, round_ratio(a.sum, a.count, kMeanPlaces)});
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.category.label < b.category.label;
  });
  return rows;
}

Decimal usd(std::int64_t nanousd) { return round_ratio(nanousd, kNanoPerDollar, 4); }

CostBreakdown cost_breakdown(const CostLedger& ledger) {
  CostBreakdown c;
  const auto totals = ledger.stage_totals_nanousd();
  c.total_nanousd = ledger.total_nanousd();
  for (int i = 0; i < 3; ++i) {
    c.stages[i].nanousd = totals[i];
    c.stages[i].share = percent_if(totals[i], c.total_nanousd);
  }
  std::map<std::string, BackendCost> by_backend;
  for (const auto& e : ledger.entries()) {
    auto& b = by_backend[e.backend_id];
    b.backend_id = e.backend_id;
    ++b.calls;
    b.input_tokens += e.input_tokens;
    b.output_tokens += e.output_tokens;
    b.nanousd += e.cost_nanousd;
    ++c.calls;
  }
  for (auto& [id, b] : by_backend) c.backends.push_back(std::move(b));
  return c;
}

ReportModel build_report_model(std::string title, std::vector<DocumentSummary> documents,
                               const std::vector<JuryRecord>& records,
                               const std::vector<std::optional<FinalVerdict>>& verdicts,
                               const CostLedger* ledger) {
  if (records.size() != verdicts.size()) {
    throw MismatchedIds(fmt::format("{} jury records but {} verdict slots", records.size(), verdicts.size()));
  }
  ReportModel m;
  m.title = std::move(title);
  m.documents = std::move(documents);
  std::vector<JuryRecord> resolved;
  std::vector<FinalVerdict> finals;
  std::vector<AuditItem> audit;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!verdicts[i]) {
      m.unresolved.push_back(records[i]);
      continue;
    }
    m.items.push_back({records[i], *verdicts[i]});
    resolved.push_back(records[i]);
    finals.push_back(*verdicts[i]);
    audit.push_back({records[i].excerpt, *verdicts[i]});
  }
  m.distribution = severity_distribution(std::span<const FinalVerdict>(finals));
  m.agreement = agreement_stats(resolved, finals);
  m.attribution = attribution_split(audit);
  m.categories = category_table(finals);
  if (ledger) m.cost = cost_breakdown(*ledger);
  return m;
}

ReportModel document_report_model(const ReportModel& run, const std::string& document_id) {
  std::vector<DocumentSummary> docs;
  for (const auto& d : run.documents) {
    if (d.document_id == document_id) docs.push_back(d);
  }
  std::vector<JuryRecord> records;
  std::vector<std::optional<FinalVerdict>> verdicts;
  for (const auto& item : run.items) {
    if (item.record.excerpt.document_id != document_id) continue;
    records.push_back(item.record);
    verdicts.emplace_back(item.verdict);
  }
  for (const auto& rec : run.unresolved) {
    if (rec.excerpt.document_id != document_id) continue;
    records.push_back(rec);
    verdicts.emplace_back(std::nullopt);
  }
  return build_report_model(run.title + " / " + document_id, std::move(docs), records, verdicts, nullptr);
}

namespace {

std::string text_of(const std::optional<Decimal>& d) { return d ? d->str() : std::string(kUndefined); }

json number_of(const std::optional<Decimal>& d) { return d ? json(d->to_double()) : json(nullptr); }

}  // namespace

std::map<std::string, std::string> formatted_values(const ReportModel& m) {
  std::map<std::string, std::string> out;
  const auto& d = m.distribution;
  out["distribution.n"] = std::to_string(d.n);
  for (int k = 1; k <= 7; ++k) {
    out[fmt::format("distribution.count.{}", k)] = std::to_string(d.counts[k - 1]);
    out[fmt::format("distribution.pct.{}", k)] = d.percentages[k - 1].str();
  }
  out["distribution.mean"] = text_of(d.mean);
  out["distribution.share_le_3"] = text_of(d.share_at_most(3));

  const auto& a = m.agreement;
  out["agreement.n_excerpts"] = std::to_string(a.n_excerpts);
  out["agreement.full_jury_count"] = std::to_string(a.full_jury_count);
  out["agreement.full_jury_rate"] = text_of(a.full_jury_rate);
  out["agreement.mean_range"] = text_of(a.mean_range);
  out["agreement.pct_range_le_1"] = text_of(a.pct_range_le_1);
  out["agreement.pct_range_ge_3"] = text_of(a.pct_range_ge_3);
  out["agreement.escalation_count"] = std::to_string(a.escalation_count);
  out["agreement.escalation_rate"] = text_of(a.escalation_rate);
  out["agreement.unresolved"] = std::to_string(m.unresolved.size());

  out["attribution.primary.n"] = std::to_string(m.attribution.primary.n);
  out["attribution.primary.mean"] = text_of(m.attribution.primary.mean);
  out["attribution.narrative.n"] = std::to_string(m.attribution.narrative.n);
  out["attribution.narrative.mean"] = text_of(m.attribution.narrative.mean);
  out["attribution.gap"] = text_of(m.attribution.gap);

  for (const auto& row : m.categories) {
    out["categories." + row.category.label + ".count"] = std::to_string(row.count);
    out["categories." + row.category.label + ".mean"] = row.mean_severity.str();
  }

  if (m.cost) {
    out["cost.total_usd"] = usd(m.cost->total_nanousd).str();
    out["cost.calls"] = std::to_string(m.cost->calls);
    for (const auto& s : m.cost->stages) {
      const std::string base = "cost.stage." + std::string(to_string(s.stage));
      out[base + ".usd"] = usd(s.nanousd).str();
      out[base + ".share"] = text_of(s.share);
    }
    for (const auto& b : m.cost->backends) {
      const std::string base = "cost.backend." + b.backend_id;
      out[base + ".calls"] = std::to_string(b.calls);
      out[base + ".input_tokens"] = std::to_string(b.input_tokens);
      out[base + ".output_tokens"] = std::to_string(b.output_tokens);
      out[base + ".usd"] = usd(b.nanousd).str();
    }
  }
  return out;
}

json summary_to_json(const ReportModel& m) {
  json j;
  j["schema_version"] = 1;
  j["kind"] = "summary";
  j["title"] = m.title;
  j["documents"] = json::array();
  for (const auto& d : m.documents) {
    j["documents"].push_back({{"document_id", d.document_id},
                              {"page_count", d.page_count},
                              {"batches", d.batches},
                              {"failed_batches", d.failed_batches},
                              {"excerpts", d.excerpts}});
  }
  j["n_verdicts"] = m.items.size();
  j["n_unresolved"] = m.unresolved.size();

  const auto& d = m.distribution;
  json pct = json::array();
  for (const auto& p : d.percentages) pct.push_back(p.to_double());
  j["distribution"] = {{"n", d.n},
                       {"counts", d.counts},
                       {"percentages", pct},
                       {"mean", number_of(d.mean)},
                       {"share_le_3", number_of(d.share_at_most(3))}};

  const auto& a = m.agreement;
  j["agreement"] = {{"n_excerpts", a.n_excerpts},
                    {"full_jury_count", a.full_jury_count},
                    {"full_jury_rate", number_of(a.full_jury_rate)},
                    {"mean_range", number_of(a.mean_range)},
                    {"pct_range_le_1", number_of(a.pct_range_le_1)},
                    {"pct_range_ge_3", number_of(a.pct_range_ge_3)},
                    {"escalation_count", a.escalation_count},
                    {"escalation_rate", number_of(a.escalation_rate)},
                    {"unresolved", m.unresolved.size()}};

  auto row = [](const AttributionRow& r) { return json{{"n", r.n}, {"mean", number_of(r.mean)}}; };
  j["attribution"] = {{"primary", row(m.attribution.primary)},
                      {"narrative", row(m.attribution.narrative)},
                      {"gap", number_of(m.attribution.gap)}};

  j["categories"] = json::array();
  for (const auto& r : m.categories) {
    j["categories"].push_back({{"label", r.category.label},
                               {"domain", to_string(r.category.domain)},
                               {"count", r.count},
                               {"mean_severity", r.mean_severity.to_double()}});
  }

  if (m.cost) {
    json stages = json::object();
    for (const auto& s : m.cost->stages) {
      stages[std::string(to_string(s.stage))] = {
          {"nanousd", s.nanousd}, {"usd", usd(s.nanousd).to_double()}, {"share", number_of(s.share)}};
    }
    json backends = json::array();
    for (const auto& b : m.cost->backends) {
      backends.push_back({{"backend_id", b.backend_id},
                          {"calls", b.calls},
                          {"input_tokens", b.input_tokens},
                          {"output_tokens", b.output_tokens},
                          {"nanousd", b.nanousd},
                          {"usd", usd(b.nanousd).to_double()}});
    }
    j["cost"] = {{"total_nanousd", m.cost->total_nanousd},
                 {"total_usd", usd(m.cost->total_nanousd).to_double()},
                 {"calls", m.cost->calls},
                 {"stages", stages},
                 {"backends", backends}};
  } else {
    j["cost"] = nullptr;
  }
  j["formatted"] = formatted_values(m);
  return j;
}

std::string render_text(const ReportModel& m) {
  const auto f = formatted_values(m);
  std::ostringstream out;
  out << m.title << "\n\n";
  out << fmt::format("Final severity distribution (n = {})\n", f.at("distribution.n"));
  out << fmt::format("  {:<3} {:<12} {:>7} {:>7}\n", "", "label", "count", "%");
  for (int k = 1; k <= 7; ++k) {
    out << fmt::format("  {:<3} {:<12} {:>7} {:>7}\n", k, severity_label(SeverityScore(k)).name,
                       f.at(fmt::format("distribution.count.{}", k)), f.at(fmt::format("distribution.pct.{}", k)));
  }
  out << fmt::format("  mean severity {}; severity <= 3: {}%\n\n", f.at("distribution.mean"),
                     f.at("distribution.share_le_3"));

  out << "Agreement\n";
  out << fmt::format("  excerpts {}; full juries {} ({}%)\n", f.at("agreement.n_excerpts"),
                     f.at("agreement.full_jury_count"), f.at("agreement.full_jury_rate"));
  out << fmt::format("  mean severity range {}; range <= 1: {}%; range >= 3: {}%\n", f.at("agreement.mean_range"),
                     f.at("agreement.pct_range_le_1"), f.at("agreement.pct_range_ge_3"));
  out << fmt::format("  escalated {} ({}%); unresolved {}\n\n", f.at("agreement.escalation_count"),
                     f.at("agreement.escalation_rate"), f.at("agreement.unresolved"));

  out << "Attribution\n";
  out << fmt::format("  {:<22} n {:>5}  mean {}\n", to_string(Attribution::PrimarySourceUsage),
                     f.at("attribution.primary.n"), f.at("attribution.primary.mean"));
  out << fmt::format("  {:<22} n {:>5}  mean {}\n", to_string(Attribution::TextbookNarrative),
                     f.at("attribution.narrative.n"), f.at("attribution.narrative.mean"));
  out << fmt::format("  gap (narrative - primary) {}\n\n", f.at("attribution.gap"));

  out << "Categories\n";
  if (m.categories.empty()) out << "  (none)\n";
  for (const auto& r : m.categories) {
    out << fmt::format("  {:<34} {:>5}  mean {}\n", r.category.label, r.count, r.mean_severity.str());
  }
  if (m.cost) {
    out << fmt::format("\nCost: ${} over {} calls\n", f.at("cost.total_usd"), f.at("cost.calls"));
    for (const auto& s : m.cost->stages) {
      const std::string base = "cost.stage." + std::string(to_string(s.stage));
      out << fmt::format("  {:<10} ${:>10} {:>6}%\n", to_string(s.stage), f.at(base + ".usd"), f.at(base + ".share"));
    }
  }
  return out.str();
}

}  // namespace biasaudit
