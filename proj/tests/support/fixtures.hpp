// Shared helpers for the test binaries: temporary directories, synthetic
// documents, scripted-backend run builders and random jury generators.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "biasaudit/backend.hpp"
#include "biasaudit/cost.hpp"
#include "biasaudit/domain.hpp"
#include "biasaudit/gateway.hpp"
#include "biasaudit/jury.hpp"
#include "biasaudit/pipeline.hpp"

namespace testsupport {

namespace fs = std::filesystem;
using nlohmann::json;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& path);
void write_file(const fs::path& path, const std::string& text);

/// A valid 1x1 PNG.
void write_png(const fs::path& path);

/// Writes `pages` page images and a manifest; returns the manifest path.
fs::path write_document(const fs::path& dir, const std::string& document_id, int pages);

json verdict_payload(const std::string& category, int severity, double confidence,
                     const std::string& attribution = "Textbook Narrative",
                     const std::string& reasoning = "Assessed against the rubric.");

json meta_payload(int severity, const std::string& category, bool human_review = false,
                  const std::string& justification = "Best supported by the evidence.");

/// One scripted reply: a JSON payload, or raw text when `raw` holds a string.
struct Reply {
  json body;
  bool raw = false;
  std::int64_t input_tokens = 1000;
  std::int64_t output_tokens = 100;

  static Reply payload(json j, std::int64_t in = 1000, std::int64_t out = 100) { return {std::move(j), false, in, out}; }
  static Reply text(std::string t, std::int64_t in = 1000, std::int64_t out = 100) { return {json(std::move(t)), true, in, out}; }
};

json script_entry(const std::string& match, const Reply& reply);

struct ExcerptPlan {
  std::string quote;
  int page = 1;
  std::string attribution = "Textbook Narrative";
  std::string reasoning = "Flagged for review.";
  /// Replies per juror, in roster order; several entries give successive attempts.
  std::vector<std::vector<Reply>> jurors;
  std::vector<Reply> meta;
};

struct BatchPlan {
  std::vector<ExcerptPlan> excerpts;
  /// When non-empty, replaces the generated screening reply.
  std::vector<Reply> screening;
  std::int64_t input_tokens = 8000;
  std::int64_t output_tokens = 400;
};

struct RunPlan {
  std::string document_id = "synthetic";
  int pages = 15;
  int batch_size = 5;
  int juror_count = 5;
  std::string strategy = "heuristic";
  std::string preset = "full";
  double input_usd_per_million = 1.0;
  double output_usd_per_million = 4.0;
  std::vector<BatchPlan> batches;
  /// Merge-patched into the generated config.
  json config_patch = json::object();
};

/// 15 pages in three batches: two excerpts in batch 1, one in batch 2 (a
/// lone severity-5 dissent with deliberation choosing it), none in batch 3.
RunPlan standard_plan();

std::string excerpt_id(const RunPlan& plan, int batch, int ordinal);
std::string juror_id(int index);

/// Writes pages, manifest, scripts and config under `root`; returns the config path.
fs::path write_run(const fs::path& root, const RunPlan& plan);

biasaudit::RunSummary run_config(const fs::path& config, const biasaudit::RunOptions& options = {});

biasaudit::JurorVerdict juror(const std::string& id, int severity, double confidence,
                              const std::string& category = "Narrative Framing",
                              biasaudit::Attribution attribution = biasaudit::Attribution::TextbookNarrative);

biasaudit::FlaggedExcerpt excerpt(const std::string& id,
                                  biasaudit::Attribution attribution = biasaudit::Attribution::TextbookNarrative);

biasaudit::JuryRecord record(const std::string& id, std::vector<biasaudit::JurorVerdict> verdicts);

/// First `n` taxonomy labels.
std::vector<std::string> labels(std::size_t n);

struct JuryShape {
  int min_size = 1;
  int max_size = 5;
  std::vector<std::string> labels;
  /// Confidences from {0, .25, .5, .75, 1} instead of uniform [0,1).
  bool grid = false;
};

std::vector<biasaudit::JurorVerdict> random_jury(std::mt19937_64& rng, const JuryShape& shape);

biasaudit::ScriptEntry reply(std::string text, std::optional<std::string> match = std::nullopt,
                             std::int64_t input_tokens = 100, std::int64_t output_tokens = 10);
biasaudit::ScriptEntry failure(biasaudit::BackendErrorKind kind, std::optional<std::string> match = std::nullopt);

/// Scripted backends behind a gateway, priced at $1/M input and $2/M output.
struct Bench {
  explicit Bench(const std::map<std::string, std::vector<biasaudit::ScriptEntry>>& scripts);

  biasaudit::ScriptedBackend& backend(const std::string& id) { return *backends.at(id); }
  std::size_t total_calls() const;

  std::map<std::string, std::shared_ptr<biasaudit::ScriptedBackend>> backends;
  biasaudit::CostLedger ledger;
  std::unique_ptr<biasaudit::ModelGateway> gateway;
};

/// 270 judged excerpts whose statistics are fixed in advance: severity
/// counts 6/63/156/43/2/0/0, 56 primary-source items averaging 150/56,
/// 68 "Narrative Framing" items averaging 196/68, 188 juries with range <= 1,
/// 9 with range >= 3, total range 345, 18 escalations, 260 complete juries.
struct Corpus {
  std::vector<biasaudit::JuryRecord> records;
  std::vector<biasaudit::FinalVerdict> verdicts;
};
Corpus reference_corpus();

/// Every `data-key` figure of a rendered report.
std::map<std::string, std::string> html_figures(const std::string& html);

/// Differences between the report figures, the summary's formatted map and
/// its numeric fields. Empty when they agree.
std::vector<std::string> report_mismatches(const std::string& html, const json& summary);

}  // namespace testsupport
