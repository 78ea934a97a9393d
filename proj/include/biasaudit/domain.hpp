/// @file domain.hpp
/// @brief Shared vocabulary: severity scale, attribution labels, bias taxonomy,
/// and the verdict records exchanged between pipeline stages.

#pragma once

#include <array>
#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace biasaudit {

/// Ordinal severity on the 1..7 scale. Construction outside the scale throws.
class SeverityScore {
 public:
  static constexpr int kMin = 1;
  static constexpr int kMax = 7;

  constexpr explicit SeverityScore(int value) : value_(value) {
    if (value < kMin || value > kMax) {
      throw std::out_of_range("severity must be in [1,7], got " + std::to_string(value));
    }
  }

  static constexpr bool in_range(long long value) { return value >= kMin && value <= kMax; }

  constexpr int value() const { return value_; }
  auto operator<=>(const SeverityScore&) const = default;

 private:
  int value_;
};

struct SeverityLabel {
  SeverityScore score;
  std::string_view name;
  std::string_view description;
};

const SeverityLabel& severity_label(SeverityScore score);
const std::array<SeverityLabel, 7>& severity_scale();

/// Multi-line rendering of the scale used inside prompts.
std::string severity_scale_text();

enum class Attribution { TextbookNarrative, PrimarySourceUsage };

std::string_view to_string(Attribution a);
/// Accepts the display form ("Primary Source Usage") or the compact identifier
/// ("PrimarySourceUsage"), after trimming surrounding whitespace.
std::optional<Attribution> parse_attribution(std::string_view text);

enum class TaxonomyDomain {
  LanguageAndFraming,
  PerspectiveAndRepresentation,
  StructureAndEmphasis,
  SourceHandling,
};

std::string_view to_string(TaxonomyDomain d);
std::optional<TaxonomyDomain> parse_taxonomy_domain(std::string_view text);

struct TaxonomyCategory {
  std::string label;
  TaxonomyDomain domain;

  bool operator==(const TaxonomyCategory&) const = default;
};

class TaxonomyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fixed registry of bias labels. Loading fails closed unless exactly
/// kRequiredSize unique labels are supplied and every alias targets one of them.
class TaxonomyRegistry {
 public:
  static constexpr std::size_t kRequiredSize = 15;

  TaxonomyRegistry(std::vector<TaxonomyCategory> categories,
                   std::map<std::string, std::string> aliases = {});

  /// Exact, case-sensitive lookup.
  std::optional<TaxonomyCategory> lookup(std::string_view label) const;

  /// Trims whitespace, then tries an exact match, then the alias table.
  std::optional<TaxonomyCategory> resolve(std::string_view raw) const;

  const std::vector<TaxonomyCategory>& categories() const { return categories_; }
  const std::map<std::string, std::string>& aliases() const { return aliases_; }

  /// Bullet list of labels grouped by domain, for prompts.
  std::string prompt_listing() const;

 private:
  std::vector<TaxonomyCategory> categories_;
  std::map<std::string, std::string> aliases_;
};

TaxonomyRegistry taxonomy_from_json(const nlohmann::json& doc);
TaxonomyRegistry load_taxonomy(const std::filesystem::path& path);
nlohmann::json taxonomy_to_json(const TaxonomyRegistry& registry);

/// The shipped registry (identical to config/taxonomy.json).
const TaxonomyRegistry& default_taxonomy();

struct JurorVerdict {
  std::string juror_id;
  Attribution attribution;
  TaxonomyCategory category;
  SeverityScore severity;
  double confidence;
  std::string reasoning;

  bool operator==(const JurorVerdict&) const = default;
};

struct ValidationError {
  enum class Kind { MissingField, WrongType, OutOfRange, UnknownCategory, UnknownAttribution, EmptyReasoning };

  Kind kind;
  std::string field;
  std::string detail;

  bool operator==(const ValidationError&) const = default;
};

std::string_view to_string(ValidationError::Kind kind);
std::string describe(const ValidationError& error);
std::string describe(const std::vector<ValidationError>& errors);

struct VerdictValidation {
  std::optional<JurorVerdict> verdict;
  std::vector<ValidationError> errors;

  bool ok() const { return verdict.has_value(); }
};

/// Checks a parsed juror payload. Total over any JSON value: returns either a
/// verdict or every violated constraint.
VerdictValidation validate_juror_verdict(const nlohmann::json& raw, std::string juror_id,
                                         const TaxonomyRegistry& registry);

nlohmann::json to_json(const JurorVerdict& verdict);

enum class VerdictStrategy { Heuristic, IndependentDeliberation, PromptedHeuristic, SinglePass };

std::string_view to_string(VerdictStrategy s);
std::optional<VerdictStrategy> parse_verdict_strategy(std::string_view text);

struct FinalVerdict {
  std::string excerpt_id;
  SeverityScore severity;
  TaxonomyCategory category;
  std::string justification;
  bool human_review = false;
  VerdictStrategy strategy = VerdictStrategy::Heuristic;
  int juror_count_valid = 0;
  /// Set when a model-backed strategy failed and the heuristic stood in.
  bool fallback = false;
  /// Which rule produced the severity ("consensus", "weighted_mean", "model", ...).
  std::string branch;
  /// Why human_review was raised ("divergence", "quorum", "model").
  std::vector<std::string> escalation_reasons;

  bool operator==(const FinalVerdict&) const = default;
};

nlohmann::json to_json(const FinalVerdict& verdict);
FinalVerdict final_verdict_from_json(const nlohmann::json& j, const TaxonomyRegistry& registry);

std::string trim(std::string_view text);

}  // namespace biasaudit
