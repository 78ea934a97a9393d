/// @file screening.hpp
/// @brief Stage 1: page batching, the screening call, and parsing of flagged
/// excerpts with their source attribution.

#pragma once

#include <atomic>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "biasaudit/domain.hpp"
#include "biasaudit/gateway.hpp"
#include "biasaudit/json_blocks.hpp"
#include "biasaudit/prompt_template.hpp"

namespace biasaudit {

/// Inclusive, 1-based page interval.
struct PageRange {
  int first = 1;
  int last = 0;

  int size() const { return last - first + 1; }
  bool contains(int page) const { return page >= first && page <= last; }
  bool operator==(const PageRange&) const = default;
};

/// Splits pages 1..page_count into consecutive ranges of batch_size; the last
/// range may be short. Zero pages yield no ranges.
std::vector<PageRange> make_batches(int page_count, int batch_size);

struct DocumentManifest {
  std::string document_id;
  std::vector<std::filesystem::path> pages;
  /// Set when pages are to be produced by an external renderer.
  std::optional<std::filesystem::path> source_pdf;
  std::optional<std::filesystem::path> page_dir;
};

/// Manifest file: {"schema_version": 1, "document_id": "...",
///   "pages": ["p001.png", ...]} or {"page_dir": "pages/"} (image files in
/// lexicographic order), optionally with "source_pdf". Relative paths are
/// resolved against the manifest's directory.
DocumentManifest load_manifest(const std::filesystem::path& path);

/// Image files (png/jpg/jpeg/webp) in `dir`, lexicographically ordered.
std::vector<std::filesystem::path> list_page_images(const std::filesystem::path& dir);

struct PageBatch {
  std::string document_id;
  int index = 1;  // 1-based
  PageRange range;
  std::vector<std::filesystem::path> image_refs;
};

std::vector<PageBatch> batch_document(const DocumentManifest& manifest, int batch_size);

struct FlaggedExcerpt {
  std::string excerpt_id;
  std::string document_id;
  int batch_index = 1;
  int ordinal = 1;
  std::string quote;
  int page = 1;
  Attribution attribution = Attribution::TextbookNarrative;
  std::string screening_reasoning;

  bool operator==(const FlaggedExcerpt&) const = default;
};

std::string make_excerpt_id(std::string_view document_id, int batch_index, int ordinal);

struct ExcerptCandidate {
  std::string quote;
  int page = 1;
  Attribution attribution = Attribution::TextbookNarrative;
  std::string reasoning;
};

struct RecordRejection {
  std::size_t index = 0;  // position in the payload
  std::string reason;

  bool operator==(const RecordRejection&) const = default;
};

struct ScreeningParse {
  std::vector<ExcerptCandidate> records;
  std::vector<RecordRejection> rejected;
};

/// Accepts a JSON array of excerpt records, or an object carrying one under
/// "excerpts", anywhere in the reply. Invalid records are dropped and listed
/// in `rejected`; the rest are kept.
std::variant<ScreeningParse, ParseError> parse_screening_output(std::string_view text, PageRange range);

/// Checks one excerpt record; on success fills `out` and returns nullopt,
/// otherwise returns the rejection reason.
std::optional<std::string> check_excerpt_record(const nlohmann::json& record, PageRange range, ExcerptCandidate& out);

/// The record list of a block: the block itself if it is an array, or its
/// "excerpts" member. nullptr for any other shape.
const nlohmann::json* excerpt_records(const nlohmann::json& block);

/// Shape description inserted into the screening prompt.
std::string_view screening_schema_text();

struct ScreeningSettings {
  std::string backend_id;
  PromptTemplate prompt;
  int max_attempts = 3;
  double temperature = 0.7;
};

struct BatchOutcome {
  std::string document_id;
  int index = 1;
  PageRange range;
  std::vector<FlaggedExcerpt> excerpts;
  std::vector<RecordRejection> rejected;
  std::vector<std::string> raw_responses;
  int attempts_used = 0;
  /// Present when the batch produced no usable payload.
  std::optional<std::string> failure;
  bool backend_failure = false;
};

ModelRequest build_screening_request(const PageBatch& batch, const ScreeningSettings& settings);

BatchOutcome screen_batch(const PageBatch& batch, const ScreeningSettings& settings, ModelGateway& gateway);

struct DocumentScreening {
  std::string document_id;
  int page_count = 0;
  std::vector<BatchOutcome> batches;

  std::vector<FlaggedExcerpt> excerpts() const;
};

/// Screens every batch of every document concurrently. Output is ordered by
/// (document, batch, ordinal) regardless of completion order.
std::vector<DocumentScreening> screen_documents(const std::vector<DocumentManifest>& documents, int batch_size,
                                                const ScreeningSettings& settings, ModelGateway& gateway,
                                                std::size_t workers, const std::atomic<bool>* stop = nullptr);

}  // namespace biasaudit
