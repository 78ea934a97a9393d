#include "biasaudit/json_blocks.hpp"

#include <optional>
#include <string>

namespace biasaudit {

namespace {

// End (exclusive) of the bracket group opening at `start`, honoring string
// literals. nullopt when the group is unbalanced or mismatched.
std::optional<std::size_t> match_group(std::string_view text, std::size_t start) {
  std::string stack;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_string = true;
        break;
      case '{':
        stack.push_back('}');
        break;
      case '[':
        stack.push_back(']');
        break;
      case '}':
      case ']':
        if (stack.empty() || stack.back() != c) return std::nullopt;
        stack.pop_back();
        if (stack.empty()) return i + 1;
        break;
      default:
        break;
    }
  }
  return std::nullopt;
}

}  // namespace

std::vector<JsonBlock> find_json_blocks(std::string_view text) {
  std::vector<JsonBlock> blocks;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '{' && text[i] != '[') {
      ++i;
      continue;
    }
    if (auto end = match_group(text, i)) {
      auto candidate = text.substr(i, *end - i);
      auto parsed = nlohmann::json::parse(candidate.begin(), candidate.end(), nullptr, false);
      if (!parsed.is_discarded()) {
        blocks.push_back({i, *end - i, std::move(parsed)});
        i = *end;
        continue;
      }
    }
    ++i;
  }
  return blocks;
}

std::string ParseError::describe() const {
  std::string out = kind == Kind::NoStructuredBlock ? "NoStructuredBlock" : "SchemaViolation";
  if (!message.empty()) out += ": " + message;
  if (!violations.empty()) out += " [" + biasaudit::describe(violations) + "]";
  return out;
}

}  // namespace biasaudit
