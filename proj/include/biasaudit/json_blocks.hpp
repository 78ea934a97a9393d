#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "biasaudit/domain.hpp"

namespace biasaudit {

/// A well-formed JSON object or array found inside free text.
struct JsonBlock {
  std::size_t offset = 0;
  std::size_t length = 0;
  nlohmann::json value;
};

/// Scans model output for top-level JSON blocks. Prose, reasoning traces and
/// markdown fences around the payload are skipped; bracketed text that does
/// not parse is ignored. Blocks nested inside an accepted block are not
/// reported separately.
std::vector<JsonBlock> find_json_blocks(std::string_view text);

/// Why a model reply could not be turned into a structured record.
struct ParseError {
  enum class Kind { NoStructuredBlock, SchemaViolation };

  Kind kind = Kind::NoStructuredBlock;
  std::string message;
  std::vector<ValidationError> violations;

  std::string describe() const;
};

/// Which block wins when a reply carries more than one candidate payload.
enum class BlockRule { First, Last };

}  // namespace biasaudit
