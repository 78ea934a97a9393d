/// @file pipeline.hpp
/// @brief End-to-end runs: screen -> adjudicate -> synthesize -> report, with
/// every stage persisted before the next starts, plus resume, dry-run
/// planning, and ad-hoc statistics over verdict files.
///
/// Run directory layout:
///
///     config.snapshot.json   effective configuration, no secrets
///     screening.json         flagged excerpts and failed batches
///     jury.json              juror verdicts, failures and raw replies
///     verdicts.json          final verdicts with their jury records
///     ledger.json            one entry per model response
///     summary.json           corpus statistics
///     report.html            corpus report
///     reports/<doc>.html     one report per document

#pragma once

#include <atomic>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "biasaudit/config.hpp"
#include "biasaudit/report.hpp"
#include "biasaudit/screening.hpp"

namespace biasaudit {

enum class PipelineStage { Screening, Jury, Meta, Report };
std::string_view to_string(PipelineStage s);
std::optional<PipelineStage> parse_pipeline_stage(std::string_view text);

class MissingInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every call of a required stage failed at the transport level.
class FatalBackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunOptions {
  /// Recompute from this stage onward, reading earlier results from the run
  /// directory.
  std::optional<PipelineStage> resume_from;
  const std::atomic<bool>* stop = nullptr;
};

struct RunSummary {
  std::filesystem::path run_dir;
  std::vector<PipelineStage> stages_run;
  int documents = 0;
  int batches = 0;
  int failed_batches = 0;
  int excerpts = 0;
  int verdicts = 0;
  int unresolved = 0;
  int escalated = 0;
  std::int64_t total_nanousd = 0;
};

/// Loads manifests, invoking the configured renderer for documents that only
/// name a source PDF, and checks that every page image exists.
std::vector<DocumentManifest> load_documents(const RunConfig& cfg);

RunSummary run_pipeline(const RunConfig& cfg, BackendSet& backends, const RunOptions& options = {});

/// Builds the configured backends, then runs.
RunSummary run_pipeline(const RunConfig& cfg, const RunOptions& options = {});

struct PlannedStage {
  std::string name;
  std::string backend_ids;
  std::int64_t calls = 0;
  std::int64_t max_calls = 0;
  std::int64_t expected_nanousd = 0;
  std::int64_t upper_bound_nanousd = 0;
};

struct DryRunPlan {
  int documents = 0;
  int pages = 0;
  int batches = 0;
  std::int64_t estimated_excerpts = 0;
  std::vector<PlannedStage> stages;
  std::int64_t expected_nanousd = 0;
  std::int64_t upper_bound_nanousd = 0;
  std::vector<std::string> notes;
};

/// Validates the config and inputs and estimates calls and cost without
/// contacting any backend.
DryRunPlan plan_run(const RunConfig& cfg);
std::string format_plan(const DryRunPlan& plan);

/// Merged report model over one or more verdict files.
ReportModel stats_from_files(const std::vector<std::filesystem::path>& verdict_files);

/// Writes summary.json, report.html and reports/<doc>.html.
void write_reports(const std::filesystem::path& run_dir, const ReportModel& model);

}  // namespace biasaudit
