/// @file report.hpp
/// @brief Corpus statistics over final verdicts and the report model shared by
/// the HTML renderer and the structured summary file.
///
/// Every reported figure is a ratio of integers rounded once, half away from
/// zero, so the same inputs give the same digits on every platform.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "biasaudit/cost.hpp"
#include "biasaudit/domain.hpp"
#include "biasaudit/jury.hpp"
#include "biasaudit/screening.hpp"

namespace biasaudit {

/// units / 10^places, e.g. {290, 2} is 2.90.
struct Decimal {
  std::int64_t units = 0;
  int places = 0;

  std::string str() const;
  double to_double() const;
  bool operator==(const Decimal&) const = default;
};

/// num/den rounded to `places` decimals, half away from zero. den must be > 0.
Decimal round_ratio(std::int64_t num, std::int64_t den, int places);

inline constexpr int kPercentPlaces = 1;
inline constexpr int kMeanPlaces = 2;

struct SeverityDistribution {
  std::array<std::int64_t, 7> counts{};
  std::int64_t n = 0;
  std::array<Decimal, 7> percentages{};
  /// Absent for an empty input.
  std::optional<Decimal> mean;

  /// Share of items with severity <= s, in percent. Absent when n = 0.
  std::optional<Decimal> share_at_most(int s) const;
};

SeverityDistribution distribution_from_counts(const std::array<std::int64_t, 7>& counts);
SeverityDistribution severity_distribution(std::span<const SeverityScore> severities);
SeverityDistribution severity_distribution(std::span<const FinalVerdict> verdicts);

class MismatchedIds : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct AgreementStats {
  std::int64_t n_excerpts = 0;
  std::int64_t full_jury_count = 0;
  std::int64_t escalation_count = 0;
  std::optional<Decimal> full_jury_rate;
  std::optional<Decimal> mean_range;
  std::optional<Decimal> pct_range_le_1;
  std::optional<Decimal> pct_range_ge_3;
  std::optional<Decimal> escalation_rate;
};

/// records[i] and verdicts[i] must refer to the same excerpt; every record
/// must hold at least one verdict.
AgreementStats agreement_stats(std::span<const JuryRecord> records, std::span<const FinalVerdict> verdicts);

/// A final verdict together with the excerpt it judges.
struct AuditItem {
  FlaggedExcerpt excerpt;
  FinalVerdict verdict;
};

struct AttributionRow {
  Attribution attribution;
  std::int64_t n = 0;
  std::int64_t severity_sum = 0;
  std::optional<Decimal> mean;
};

struct AttributionSplit {
  AttributionRow primary{Attribution::PrimarySourceUsage, 0, 0, std::nullopt};
  AttributionRow narrative{Attribution::TextbookNarrative, 0, 0, std::nullopt};
  /// narrative mean minus primary-source mean, from the exact means.
  std::optional<Decimal> gap;
};

AttributionSplit attribution_split(std::span<const AuditItem> items);

struct CategoryRow {
  TaxonomyCategory category;
  std::int64_t count = 0;
  Decimal mean_severity;
};

/// Sorted by count descending, then label.
std::vector<CategoryRow> category_table(std::span<const FinalVerdict> verdicts);

struct StageCost {
  Stage stage;
  std::int64_t nanousd = 0;
  std::optional<Decimal> share;  // percent of the run total
};

struct BackendCost {
  std::string backend_id;
  std::int64_t calls = 0;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  std::int64_t nanousd = 0;
};

struct CostBreakdown {
  std::array<StageCost, 3> stages{StageCost{Stage::Screening, 0, std::nullopt}, StageCost{Stage::Jury, 0, std::nullopt},
                                   StageCost{Stage::Meta, 0, std::nullopt}};
  std::vector<BackendCost> backends;
  std::int64_t total_nanousd = 0;
  std::int64_t calls = 0;
};

CostBreakdown cost_breakdown(const CostLedger& ledger);

/// Dollars with four decimals, e.g. 2000000000 -> "2.0000".
Decimal usd(std::int64_t nanousd);

struct DocumentSummary {
  std::string document_id;
  int page_count = 0;
  int batches = 0;
  int failed_batches = 0;
  int excerpts = 0;
};

struct ReportItem {
  JuryRecord record;
  FinalVerdict verdict;
};

struct ReportModel {
  std::string title;
  std::vector<DocumentSummary> documents;
  std::vector<ReportItem> items;
  /// Excerpts for which no juror produced a valid verdict.
  std::vector<JuryRecord> unresolved;
  SeverityDistribution distribution;
  AgreementStats agreement;
  AttributionSplit attribution;
  std::vector<CategoryRow> categories;
  std::optional<CostBreakdown> cost;
};

/// `verdicts` is parallel to `records`; nullopt marks an unresolved record.
ReportModel build_report_model(std::string title, std::vector<DocumentSummary> documents,
                               const std::vector<JuryRecord>& records,
                               const std::vector<std::optional<FinalVerdict>>& verdicts,
                               const CostLedger* ledger);

/// Restriction of a model to one document's items (no cost section).
ReportModel document_report_model(const ReportModel& run, const std::string& document_id);

/// Every reported figure as display text, keyed by a stable dotted name.
/// Both the HTML report and the summary file draw their numbers from here.
std::map<std::string, std::string> formatted_values(const ReportModel& model);

/// Text used for figures that are undefined (e.g. the mean of nothing).
inline constexpr std::string_view kUndefined = "n/a";

nlohmann::json summary_to_json(const ReportModel& model);

/// Self-contained page: inline CSS, no external assets.
std::string render_html(const ReportModel& model);

/// Plain-text tables for terminal output.
std::string render_text(const ReportModel& model);

}  // namespace biasaudit
