/// @file stage_files.hpp
/// @brief Versioned JSON files that carry results between stages. They are
/// the only channel between stages, so a run can resume from any of them.

#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "biasaudit/cost.hpp"
#include "biasaudit/domain.hpp"
#include "biasaudit/jury.hpp"
#include "biasaudit/screening.hpp"

namespace biasaudit {

inline constexpr int kStageSchemaVersion = 1;

inline constexpr std::string_view kScreeningFile = "screening.json";
inline constexpr std::string_view kJuryFile = "jury.json";
inline constexpr std::string_view kVerdictsFile = "verdicts.json";
inline constexpr std::string_view kLedgerFile = "ledger.json";
inline constexpr std::string_view kSummaryFile = "summary.json";
inline constexpr std::string_view kReportFile = "report.html";
inline constexpr std::string_view kConfigSnapshotFile = "config.snapshot.json";
inline constexpr std::string_view kDocumentReportDir = "reports";

class MissingStageFile : public std::runtime_error {
 public:
  explicit MissingStageFile(const std::filesystem::path& path)
      : std::runtime_error("missing stage file " + path.string()) {}
};

/// Raised for a wrong or absent schema_version and for any file whose content
/// does not match the expected layout.
class SchemaVersionMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ScreeningFile {
  std::vector<DocumentScreening> documents;
};

struct JuryFile {
  std::vector<std::string> jurors;
  TaxonomyRegistry taxonomy = default_taxonomy();
  std::vector<JuryRecord> records;
};

struct VerdictsFile {
  VerdictStrategy strategy = VerdictStrategy::Heuristic;
  TaxonomyRegistry taxonomy = default_taxonomy();
  std::vector<JuryRecord> records;
  /// Parallel to records; nullopt where no valid juror verdict existed.
  std::vector<std::optional<FinalVerdict>> verdicts;
};

nlohmann::json to_json(const FlaggedExcerpt& e);
FlaggedExcerpt flagged_excerpt_from_json(const nlohmann::json& j);
nlohmann::json to_json(const JuryRecord& r);
JuryRecord jury_record_from_json(const nlohmann::json& j, const TaxonomyRegistry& registry);

nlohmann::json screening_to_json(const ScreeningFile& f);
ScreeningFile screening_from_json(const nlohmann::json& j);
nlohmann::json jury_to_json(const JuryFile& f);
JuryFile jury_from_json(const nlohmann::json& j);
nlohmann::json verdicts_to_json(const VerdictsFile& f);
VerdictsFile verdicts_from_json(const nlohmann::json& j);

/// Pretty-printed with a trailing newline, written through a temporary file
/// and renamed into place.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Reads and checks `kind` and schema_version. Throws MissingStageFile or
/// SchemaVersionMismatch.
nlohmann::json read_stage_json(const std::filesystem::path& path, std::string_view kind);

ScreeningFile read_screening_file(const std::filesystem::path& path);
JuryFile read_jury_file(const std::filesystem::path& path);
VerdictsFile read_verdicts_file(const std::filesystem::path& path);
CostLedger read_ledger_file(const std::filesystem::path& path);

}  // namespace biasaudit
