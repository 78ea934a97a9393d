/// @file jury.hpp
/// @brief Stage 2: independent juror assessments of each flagged excerpt.

#pragma once

#include <atomic>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "biasaudit/domain.hpp"
#include "biasaudit/gateway.hpp"
#include "biasaudit/json_blocks.hpp"
#include "biasaudit/prompt_template.hpp"
#include "biasaudit/screening.hpp"

namespace biasaudit {

struct JurorFailure {
  std::string juror_id;
  std::string reason;
  int attempts_used = 0;
  bool backend_error = false;

  bool operator==(const JurorFailure&) const = default;
};

/// Raw replies of one juror for one excerpt, kept for audit.
struct JurorTrace {
  std::string juror_id;
  int attempts_used = 0;
  std::vector<std::string> raw_responses;

  bool operator==(const JurorTrace&) const = default;
};

/// Every configured juror appears exactly once, in either `verdicts` or
/// `failures`. Both lists follow roster order.
struct JuryRecord {
  FlaggedExcerpt excerpt;
  std::vector<JurorVerdict> verdicts;
  std::vector<JurorFailure> failures;
  std::vector<JurorTrace> traces;

  std::size_t juror_count() const { return verdicts.size() + failures.size(); }
  bool complete() const { return failures.empty() && !verdicts.empty(); }
  const JurorTrace* trace_for(std::string_view juror_id) const;

  bool operator==(const JuryRecord&) const = default;
};

std::string_view juror_schema_text();

/// Extracts the juror payload from a possibly prose-wrapped reply and
/// validates it. With BlockRule::First the first JSON object wins.
std::variant<JurorVerdict, ParseError> parse_juror_output(std::string_view text, const std::string& juror_id,
                                                         const TaxonomyRegistry& registry,
                                                         BlockRule rule = BlockRule::First);

struct JurySettings {
  std::vector<std::string> jurors;
  PromptTemplate prompt;
  bool calibration = true;
  int max_attempts = 3;
  double temperature = 0.2;
  BlockRule block_rule = BlockRule::First;
};

/// Juror prompt: excerpt, page, attribution, screening note, the severity
/// scale and taxonomy listing. No page image and no other juror's output.
ModelRequest build_juror_request(const FlaggedExcerpt& excerpt, const JurySettings& settings,
                                 const TaxonomyRegistry& registry);

struct JurorOutcome {
  std::optional<JurorVerdict> verdict;
  std::optional<JurorFailure> failure;
  JurorTrace trace;
};

/// One juror with the schema-retry discipline: re-prompts with a corrective
/// note after each rejected reply, discards after max_attempts.
JurorOutcome query_juror(const FlaggedExcerpt& excerpt, const std::string& juror_id, const JurySettings& settings,
                         ModelGateway& gateway, const TaxonomyRegistry& registry);

JuryRecord assemble_record(const FlaggedExcerpt& excerpt, std::vector<JurorOutcome> outcomes);

JuryRecord adjudicate_excerpt(const FlaggedExcerpt& excerpt, const JurySettings& settings, ModelGateway& gateway,
                              const TaxonomyRegistry& registry, std::size_t workers = 8);

/// All (excerpt, juror) pairs run concurrently; records come back in excerpt order.
std::vector<JuryRecord> adjudicate_all(const std::vector<FlaggedExcerpt>& excerpts, const JurySettings& settings,
                                       ModelGateway& gateway, const TaxonomyRegistry& registry, std::size_t workers,
                                       const std::atomic<bool>* stop = nullptr);

}  // namespace biasaudit
