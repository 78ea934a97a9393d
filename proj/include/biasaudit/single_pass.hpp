/// @file single_pass.hpp
/// @brief Single-model baseline: one call per page batch both finds and
/// judges passages. Used by the single-pass presets.

#pragma once

#include <atomic>
#include <string>
#include <variant>
#include <vector>

#include "biasaudit/jury.hpp"
#include "biasaudit/screening.hpp"

namespace biasaudit {

struct SinglePassItem {
  ExcerptCandidate excerpt;
  JurorVerdict verdict;
};

struct SinglePassParse {
  std::vector<SinglePassItem> items;
  std::vector<RecordRejection> rejected;
};

std::string_view single_pass_schema_text();

/// Same extraction and per-record salvage as screening; each record must
/// also carry a valid verdict (category, severity, confidence).
std::variant<SinglePassParse, ParseError> parse_single_pass_output(std::string_view text, PageRange range,
                                                                   const std::string& backend_id,
                                                                   const TaxonomyRegistry& registry);

struct SinglePassSettings {
  std::string backend_id;
  PromptTemplate prompt;
  bool calibration = true;
  int max_attempts = 3;
  double temperature = 0.2;
};

ModelRequest build_single_pass_request(const PageBatch& batch, const SinglePassSettings& settings,
                                       const TaxonomyRegistry& registry);

struct SinglePassBatch {
  BatchOutcome outcome;
  /// One record per accepted passage, each holding exactly one verdict.
  std::vector<JuryRecord> records;
};

SinglePassBatch single_pass_batch(const PageBatch& batch, const SinglePassSettings& settings, ModelGateway& gateway,
                                  const TaxonomyRegistry& registry);

struct SinglePassRun {
  std::vector<DocumentScreening> documents;
  std::vector<JuryRecord> records;
};

/// batch_size 0 means one batch per document.
SinglePassRun single_pass_documents(const std::vector<DocumentManifest>& documents, int batch_size,
                                    const SinglePassSettings& settings, ModelGateway& gateway,
                                    const TaxonomyRegistry& registry, std::size_t workers,
                                    const std::atomic<bool>* stop = nullptr);

}  // namespace biasaudit
