/// @file meta.hpp
/// @brief Stage 3: final verdict synthesis.
///
/// Two strategies are available. The heuristic one is a fixed decision tree:
///
///   1. H = jurors with confidence > confidence_threshold. If H is non-empty
///      and unanimous, its severity is adopted ("consensus").
///   2. Otherwise the confidence-weighted mean severity is rounded to the
///      nearest integer, exact halves going down ("weighted_mean"). If every
///      confidence is zero the plain mean is used ("unweighted_mean").
///   3. human_review is raised when max - min juror severity exceeds
///      divergence_threshold, or when fewer than min_quorum verdicts survived.
///      Escalation never replaces the severity.
///
/// Independent deliberation hands every juror tuple to a meta model acting
/// as an appellate judge; if it cannot produce a valid payload the heuristic
/// result is used and marked as a fallback.

#pragma once

#include <atomic>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "biasaudit/domain.hpp"
#include "biasaudit/gateway.hpp"
#include "biasaudit/json_blocks.hpp"
#include "biasaudit/jury.hpp"
#include "biasaudit/prompt_template.hpp"

namespace biasaudit {

class EmptyJury : public std::invalid_argument {
 public:
  EmptyJury() : std::invalid_argument("aggregation needs at least one juror verdict") {}
};

class ZeroTotalConfidence : public std::domain_error {
 public:
  ZeroTotalConfidence() : std::domain_error("confidence-weighted mean undefined: all confidences are zero") {}
};

struct AggregationConfig {
  VerdictStrategy strategy = VerdictStrategy::Heuristic;
  double confidence_threshold = 0.7;
  double divergence_threshold = 1.5;
  int min_quorum = 3;

  /// Throws std::invalid_argument unless 0 < threshold < 1, divergence > 0 and
  /// 1 <= min_quorum <= jury_size.
  void validate(std::size_t jury_size) const;
};

int severity_range(std::span<const JurorVerdict> verdicts);

std::optional<SeverityScore> high_confidence_consensus(std::span<const JurorVerdict> verdicts, double threshold);

double confidence_weighted_severity(std::span<const JurorVerdict> verdicts);

/// Nearest integer; exact .5 rounds down. Input must lie in [1,7].
SeverityScore round_severity(double mean);

/// Largest summed confidence; ties go to the highest single confidence, then
/// to the lexicographically smaller label.
TaxonomyCategory plurality_category(std::span<const JurorVerdict> verdicts);

/// Pure function of (record, cfg).
FinalVerdict aggregate_heuristic(const JuryRecord& record, const AggregationConfig& cfg);

/// The meta model's standardized reply.
struct MetaDecision {
  SeverityScore severity;
  TaxonomyCategory category;
  std::string justification;
  bool human_review = false;
};

std::string_view meta_schema_text();

std::variant<MetaDecision, ParseError> parse_meta_output(std::string_view text, const TaxonomyRegistry& registry,
                                                         BlockRule rule = BlockRule::First);

struct MetaSettings {
  std::string backend_id;
  AggregationConfig aggregation;
  PromptTemplate deliberation_prompt;
  PromptTemplate heuristic_prompt;
  int max_attempts = 3;
  double temperature = 0.2;
  BlockRule block_rule = BlockRule::First;
};

ModelRequest build_meta_request(const JuryRecord& record, const MetaSettings& settings,
                                const TaxonomyRegistry& registry);

/// Model-backed synthesis (IndependentDeliberation or PromptedHeuristic).
FinalVerdict aggregate_deliberative(const JuryRecord& record, const MetaSettings& settings, ModelGateway& gateway,
                                    const TaxonomyRegistry& registry);

/// Verdict for the single-pass presets: the lone verdict is final.
FinalVerdict single_pass_verdict(const JuryRecord& record);

/// nullopt for records without any valid juror verdict.
std::optional<FinalVerdict> synthesize(const JuryRecord& record, const MetaSettings& settings, ModelGateway* gateway,
                                       const TaxonomyRegistry& registry);

std::vector<std::optional<FinalVerdict>> synthesize_all(const std::vector<JuryRecord>& records,
                                                        const MetaSettings& settings, ModelGateway* gateway,
                                                        const TaxonomyRegistry& registry, std::size_t workers,
                                                        const std::atomic<bool>* stop = nullptr);

}  // namespace biasaudit
