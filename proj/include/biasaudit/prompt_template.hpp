#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

namespace biasaudit {

class TemplateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Prompt file layout:
///
///     === system ===
///     ...system prompt...
///     === user ===
///     ...user message with {{placeholders}}...
struct PromptTemplate {
  std::string system;
  std::string user;

  bool mentions(std::string_view placeholder) const;
};

using TemplateVars = std::map<std::string, std::string>;

PromptTemplate parse_prompt_template(std::string_view text);
PromptTemplate load_prompt_template(const std::filesystem::path& path);
std::string format_prompt_template(const PromptTemplate& t);

/// Substitutes every {{name}}. Throws TemplateError for placeholders that have
/// no value, so a typo in an edited template fails loudly.
std::string render(std::string_view text, const TemplateVars& vars);

inline constexpr std::string_view kCalibrationSentence =
    "You are encouraged to assign low severity or dismiss concerns when appropriate.";

enum class PromptKind { Screening, Jury, Deliberation, PromptedHeuristic, SinglePass };

std::string_view to_string(PromptKind kind);
/// File name of the shipped template under prompts/.
std::string_view template_file_name(PromptKind kind);
const PromptTemplate& default_template(PromptKind kind);

/// Appended to the user message when a reply failed schema validation.
std::string corrective_suffix(std::string_view error, std::string_view expected_shape);

}  // namespace biasaudit
