#include <sstream>

#include <fmt/format.h>

#include "biasaudit/report.hpp"

namespace biasaudit {

namespace {

std::string escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr std::string_view kStyle = R"(
body { font-family: system-ui, sans-serif; margin: 2rem auto; max-width: 60rem; color: #222; line-height: 1.45; }
h1 { font-size: 1.6rem; } h2 { font-size: 1.25rem; margin-top: 2rem; border-bottom: 1px solid #ccc; }
table { border-collapse: collapse; margin: .5rem 0; } td, th { padding: .2rem .6rem; border: 1px solid #ddd; text-align: right; }
th { background: #f4f4f4; } td.l, th.l { text-align: left; }
.banner { padding: 1rem; background: #eef6ee; border: 1px solid #9c9; }
.card { border: 1px solid #ccc; border-radius: 6px; padding: .8rem 1rem; margin: 1rem 0; }
.card.escalated { border-color: #c33; }
.badge { display: inline-block; padding: .1rem .5rem; border-radius: 4px; font-size: .8rem; font-weight: 600; }
.badge.review { background: #c33; color: #fff; } .badge.fallback { background: #e90; color: #fff; }
.badge.sev { background: #335; color: #fff; }
blockquote { margin: .5rem 0; padding-left: .8rem; border-left: 3px solid #999; font-style: italic; }
.meta { color: #555; font-size: .9rem; }
.bar { display: inline-block; height: .7rem; background: #557; }
)";

class Page {
 public:
  explicit Page(const std::map<std::string, std::string>& values) : values_(values) {}

  /// A reported figure, tagged with its summary key.
  std::string num(const std::string& key) const {
    return "<span class=\"num\" data-key=\"" + escape(key) + "\">" + escape(values_.at(key)) + "</span>";
  }

 private:
  const std::map<std::string, std::string>& values_;
};

void summary_section(std::ostringstream& out, const ReportModel& m, const Page& p) {
  out << "<h2>Final severity distribution</h2>\n<table>\n"
      << "<tr><th>Severity</th><th class=\"l\">Label</th><th>Count</th><th>%</th><th class=\"l\"></th></tr>\n";
  for (int k = 1; k <= 7; ++k) {
    const auto& pct = m.distribution.percentages[k - 1];
    out << "<tr><td>" << k << "</td><td class=\"l\">" << escape(severity_label(SeverityScore(k)).name) << "</td><td>"
        << p.num(fmt::format("distribution.count.{}", k)) << "</td><td>"
        << p.num(fmt::format("distribution.pct.{}", k)) << "</td><td class=\"l\"><span class=\"bar\" style=\"width:"
        << pct.units * 3 / 10 << "px\"></span></td></tr>\n";
  }
  out << "</table>\n<p>n = " << p.num("distribution.n") << "; mean final severity " << p.num("distribution.mean")
      << "/7; severity 3 or below: " << p.num("distribution.share_le_3") << "%</p>\n";

  out << "<h2>Jury agreement</h2>\n<table>\n"
      << "<tr><td class=\"l\">Excerpts with a final verdict</td><td>" << p.num("agreement.n_excerpts") << "</td></tr>\n"
      << "<tr><td class=\"l\">Full juries</td><td>" << p.num("agreement.full_jury_count") << " ("
      << p.num("agreement.full_jury_rate") << "%)</td></tr>\n"
      << "<tr><td class=\"l\">Mean inter-juror severity range</td><td>" << p.num("agreement.mean_range")
      << "</td></tr>\n"
      << "<tr><td class=\"l\">Range at most 1</td><td>" << p.num("agreement.pct_range_le_1") << "%</td></tr>\n"
      << "<tr><td class=\"l\">Range 3 or more</td><td>" << p.num("agreement.pct_range_ge_3") << "%</td></tr>\n"
      << "<tr><td class=\"l\">Escalated for human review</td><td>" << p.num("agreement.escalation_count") << " ("
      << p.num("agreement.escalation_rate") << "%)</td></tr>\n"
      << "<tr><td class=\"l\">Excerpts without any valid juror verdict</td><td>" << p.num("agreement.unresolved")
      << "</td></tr>\n</table>\n";

  out << "<h2>Severity by source attribution</h2>\n<table>\n"
      << "<tr><th class=\"l\">Attribution</th><th>n</th><th>Mean severity</th></tr>\n"
      << "<tr><td class=\"l\">" << to_string(Attribution::PrimarySourceUsage) << "</td><td>"
      << p.num("attribution.primary.n") << "</td><td>" << p.num("attribution.primary.mean") << "</td></tr>\n"
      << "<tr><td class=\"l\">" << to_string(Attribution::TextbookNarrative) << "</td><td>"
      << p.num("attribution.narrative.n") << "</td><td>" << p.num("attribution.narrative.mean") << "</td></tr>\n"
      << "</table>\n<p>Narrative minus primary-source mean: " << p.num("attribution.gap") << "</p>\n";

  out << "<h2>Bias categories</h2>\n";
  if (m.categories.empty()) {
    out << "<p>No categorized verdicts.</p>\n";
  } else {
    out << "<table>\n<tr><th class=\"l\">Category</th><th class=\"l\">Domain</th><th>Count</th><th>Mean "
           "severity</th></tr>\n";
    for (const auto& r : m.categories) {
      out << "<tr><td class=\"l\">" << escape(r.category.label) << "</td><td class=\"l\">"
          << escape(to_string(r.category.domain)) << "</td><td>" << p.num("categories." + r.category.label + ".count")
          << "</td><td>" << p.num("categories." + r.category.label + ".mean") << "</td></tr>\n";
    }
    out << "</table>\n";
  }
}

void cost_section(std::ostringstream& out, const CostBreakdown& c, const Page& p) {
  out << "<h2>Cost</h2>\n<p>Total $" << p.num("cost.total_usd") << " over " << p.num("cost.calls")
      << " model calls.</p>\n<table>\n<tr><th class=\"l\">Stage</th><th>USD</th><th>Share %</th></tr>\n";
  for (const auto& s : c.stages) {
    const std::string base = "cost.stage." + std::string(to_string(s.stage));
    out << "<tr><td class=\"l\">" << to_string(s.stage) << "</td><td>" << p.num(base + ".usd") << "</td><td>"
        << p.num(base + ".share") << "</td></tr>\n";
  }
  out << "</table>\n<table>\n<tr><th class=\"l\">Backend</th><th>Calls</th><th>Input tokens</th><th>Output "
         "tokens</th><th>USD</th></tr>\n";
  for (const auto& b : c.backends) {
    const std::string base = "cost.backend." + b.backend_id;
    out << "<tr><td class=\"l\">" << escape(b.backend_id) << "</td><td>" << p.num(base + ".calls") << "</td><td>"
        << p.num(base + ".input_tokens") << "</td><td>" << p.num(base + ".output_tokens") << "</td><td>"
        << p.num(base + ".usd") << "</td></tr>\n";
  }
  out << "</table>\n";
}

void card(std::ostringstream& out, const ReportItem& item) {
  const auto& e = item.record.excerpt;
  const auto& v = item.verdict;
  out << "<div class=\"card" << (v.human_review ? " escalated" : "") << "\" id=\"" << escape(e.excerpt_id) << "\">\n"
      << "<div><span class=\"badge sev\">" << v.severity.value() << " - " << escape(severity_label(v.severity).name)
      << "</span> ";
  if (v.human_review) {
    std::string reasons;
    for (const auto& r : v.escalation_reasons) reasons += (reasons.empty() ? "" : ", ") + r;
    out << "<span class=\"badge review\">Human review";
    if (!reasons.empty()) out << " (" << escape(reasons) << ")";
    out << "</span> ";
  }
  if (v.fallback) out << "<span class=\"badge fallback\">Heuristic fallback</span> ";
  out << "<strong>" << escape(v.category.label) << "</strong> <span class=\"meta\">("
      << escape(to_string(v.category.domain)) << ")</span></div>\n"
      << "<div class=\"meta\">" << escape(e.excerpt_id) << ", page " << e.page << ", " << escape(to_string(e.attribution))
      << ", " << escape(to_string(v.strategy)) << "</div>\n"
      << "<blockquote>" << escape(e.quote) << "</blockquote>\n"
      << "<p>" << escape(v.justification) << "</p>\n"
      << "<details><summary>Jurors (" << item.record.verdicts.size() << " of " << item.record.juror_count()
      << " valid)</summary>\n<table>\n<tr><th class=\"l\">Juror</th><th>Severity</th><th>Confidence</th>"
         "<th class=\"l\">Category</th><th class=\"l\">Reasoning</th></tr>\n";
  for (const auto& j : item.record.verdicts) {
    out << "<tr><td class=\"l\">" << escape(j.juror_id) << "</td><td>" << j.severity.value() << "</td><td>"
        << fmt::format("{:.2f}", j.confidence) << "</td><td class=\"l\">" << escape(j.category.label)
        << "</td><td class=\"l\">" << escape(j.reasoning) << "</td></tr>\n";
  }
  for (const auto& f : item.record.failures) {
    out << "<tr><td class=\"l\">" << escape(f.juror_id) << "</td><td colspan=\"4\" class=\"l\">discarded after "
        << f.attempts_used << " attempt(s): " << escape(f.reason) << "</td></tr>\n";
  }
  out << "</table>\n</details>\n</div>\n";
}

}  // namespace

std::string render_html(const ReportModel& m) {
  const auto values = formatted_values(m);
  const Page p(values);
  std::ostringstream out;
  out << "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>" << escape(m.title)
      << "</title>\n<style>" << kStyle << "</style>\n</head>\n<body>\n<h1>" << escape(m.title) << "</h1>\n";

  if (!m.documents.empty()) {
    out << "<table>\n<tr><th class=\"l\">Document</th><th>Pages</th><th>Batches</th><th>Failed batches</th>"
           "<th>Flagged excerpts</th></tr>\n";
    for (const auto& d : m.documents) {
      out << "<tr><td class=\"l\">" << escape(d.document_id) << "</td><td>" << d.page_count << "</td><td>"
          << d.batches << "</td><td>" << d.failed_batches << "</td><td>" << d.excerpts << "</td></tr>\n";
    }
    out << "</table>\n";
  }

  if (m.items.empty() && m.unresolved.empty()) {
    out << "<p class=\"banner\">No excerpts were flagged for review.</p>\n";
  }
  summary_section(out, m, p);
  if (m.cost) cost_section(out, *m.cost, p);

  if (!m.items.empty()) {
    out << "<h2>Excerpts</h2>\n";
    for (const auto& item : m.items) card(out, item);
  }
  if (!m.unresolved.empty()) {
    out << "<h2>Unresolved excerpts</h2>\n<p>No juror returned a valid assessment for these excerpts.</p>\n<ul>\n";
    for (const auto& r : m.unresolved) {
      out << "<li>" << escape(r.excerpt.excerpt_id) << ", page " << r.excerpt.page << ": <q>"
          << escape(r.excerpt.quote) << "</q></li>\n";
    }
    out << "</ul>\n";
  }
  out << "</body>\n</html>\n";
  return out.str();
}

}  // namespace biasaudit
