#include "biasaudit/prompt_template.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

namespace biasaudit {

namespace {

constexpr std::string_view kSystemMarker = "=== system ===";
constexpr std::string_view kUserMarker = "=== user ===";

constexpr std::string_view kScreeningText = R"(=== system ===
You are the screening agent of a history textbook audit. You receive
textbook pages as images. Read every part of each page, including headings,
sidebars, marginalia, captions and boxed source material.

Your job is discovery, not judgement. Flag every passage that may deserve
scrutiny by a panel of reviewers, for example nationalist framing, omission
of historical context, or uncontextualized primary sources. Prefer
sensitivity over precision: when in doubt, flag the passage. Do not assign
any severity; later reviewers do that.

For every flagged passage you must also decide who is speaking:
- "Textbook Narrative": the authors' own explanatory voice.
- "Primary Source Usage": quoted historical material (documents, speeches,
  testimonies, period texts) reproduced by the textbook.
=== user ===
Document: {{document_id}}
Pages: {{first_page}}-{{last_page}}

Transcribe each flagged passage verbatim. Give the page number it appears on
(between {{first_page}} and {{last_page}}) and a short reason why it may need
review. If nothing on these pages needs review, return an empty array.

Return the result as JSON in this shape:
{{schema}}
)";

constexpr std::string_view kJuryText = R"(=== system ===
You are one member of an independent review panel auditing excerpts from
history textbooks for bias. Judge the excerpt on its pedagogical effect for
upper-secondary students. Language that would be problematic in the
authors' own voice can be entirely appropriate when it is a quoted
historical source presented as such; take the attribution into account.
{{calibration}}

Severity scale:
{{severity_scale}}
Bias taxonomy (use exactly one label):
{{taxonomy}}
=== user ===
Excerpt ID: {{excerpt_id}}
Page: {{page}}
Attribution: {{attribution}}
Screening note: {{screening_reasoning}}

Excerpt:
"""
{{quote}}
"""

Assess this excerpt. Return a single JSON object in this shape:
{{schema}}
)";

constexpr std::string_view kDeliberationText = R"(=== system ===
You are the appellate judge of a textbook audit. A panel of independent
jurors has assessed one excerpt. Weigh the quality of each juror's
reasoning against the historical evidence and select the severity that is
best supported, regardless of how many jurors hold that position. A single
well-argued minority view may prevail. Decide whether the disagreement or
the stakes require review by a human expert.

Severity scale:
{{severity_scale}}
Bias taxonomy (use exactly one label):
{{taxonomy}}
=== user ===
Excerpt ID: {{excerpt_id}}
Page: {{page}}
Attribution: {{attribution}}
Screening note: {{screening_reasoning}}

Excerpt:
"""
{{quote}}
"""

Juror assessments:
{{juror_verdicts}}

Return a single JSON object in this shape:
{{schema}}
)";

constexpr std::string_view kPromptedHeuristicText = R"(=== system ===
You are the aggregator of a textbook audit panel. Apply the following
decision rules exactly, without adding your own judgement of the excerpt:

1. Let H be the jurors whose confidence is strictly greater than
   {{confidence_threshold}}. If H is non-empty and every juror in H gave the
   same severity, that severity is final.
2. Otherwise the final severity is the confidence-weighted mean of all
   juror severities, rounded to the nearest integer with halves rounded down.
3. Set human_review to true if the highest and lowest juror severities
   differ by more than {{divergence_threshold}}, or if fewer than
   {{min_quorum}} jurors are listed.
4. The category is the label with the largest summed juror confidence.

Severity scale:
{{severity_scale}}
Bias taxonomy:
{{taxonomy}}
=== user ===
Excerpt ID: {{excerpt_id}}
Attribution: {{attribution}}

Excerpt:
"""
{{quote}}
"""

Juror assessments:
{{juror_verdicts}}

Return a single JSON object in this shape:
{{schema}}
)";

constexpr std::string_view kSinglePassText = R"(=== system ===
You audit history textbooks for bias. You receive textbook pages as images.
Find every passage that shows bias and assess each one.
{{calibration}}

For every passage decide who is speaking:
- "Textbook Narrative": the authors' own explanatory voice.
- "Primary Source Usage": quoted historical material reproduced by the textbook.

Severity scale:
{{severity_scale}}
Bias taxonomy (use exactly one label per passage):
{{taxonomy}}
=== user ===
Document: {{document_id}}
Pages: {{first_page}}-{{last_page}}

Return a JSON array with one object per passage, in this shape:
{{schema}}
)";

}  // namespace

bool PromptTemplate::mentions(std::string_view placeholder) const {
  const std::string token = "{{" + std::string(placeholder) + "}}";
  return system.find(token) != std::string::npos || user.find(token) != std::string::npos;
}

PromptTemplate parse_prompt_template(std::string_view text) {
  const auto sys = text.find(kSystemMarker);
  const auto usr = text.find(kUserMarker);
  if (sys == std::string_view::npos || usr == std::string_view::npos || usr < sys) {
    throw TemplateError("prompt template needs '=== system ===' followed by '=== user ===' sections");
  }
  auto section = [](std::string_view s) {
    if (!s.empty() && s.front() == '\n') s.remove_prefix(1);
    while (!s.empty() && s.back() == '\n') s.remove_suffix(1);
    return std::string(s);
  };
  const auto sys_body = sys + kSystemMarker.size();
  return {section(text.substr(sys_body, usr - sys_body)), section(text.substr(usr + kUserMarker.size()))};
}

PromptTemplate load_prompt_template(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TemplateError("cannot open prompt template " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_prompt_template(text);
}

std::string format_prompt_template(const PromptTemplate& t) {
  return std::string(kSystemMarker) + "\n" + t.system + "\n" + std::string(kUserMarker) + "\n" + t.user + "\n";
}

std::string render(std::string_view text, const TemplateVars& vars) {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto open = text.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    const auto close = text.find("}}", open + 2);
    if (close == std::string_view::npos) throw TemplateError("unterminated placeholder in prompt template");
    out.append(text.substr(pos, open - pos));
    const std::string name(text.substr(open + 2, close - open - 2));
    auto it = vars.find(name);
    if (it == vars.end()) throw TemplateError("prompt template placeholder '{{" + name + "}}' has no value");
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

std::string_view to_string(PromptKind kind) {
  switch (kind) {
    case PromptKind::Screening:
      return "screening";
    case PromptKind::Jury:
      return "jury";
    case PromptKind::Deliberation:
      return "deliberation";
    case PromptKind::PromptedHeuristic:
      return "prompted_heuristic";
    case PromptKind::SinglePass:
      return "single_pass";
  }
  return "?";
}

std::string_view template_file_name(PromptKind kind) {
  switch (kind) {
    case PromptKind::Screening:
      return "screening.txt";
    case PromptKind::Jury:
      return "jury.txt";
    case PromptKind::Deliberation:
      return "meta_deliberation.txt";
    case PromptKind::PromptedHeuristic:
      return "meta_heuristic.txt";
    case PromptKind::SinglePass:
      return "single_pass.txt";
  }
  return "?";
}

const PromptTemplate& default_template(PromptKind kind) {
  static const PromptTemplate screening = parse_prompt_template(kScreeningText);
  static const PromptTemplate jury = parse_prompt_template(kJuryText);
  static const PromptTemplate deliberation = parse_prompt_template(kDeliberationText);
  static const PromptTemplate prompted = parse_prompt_template(kPromptedHeuristicText);
  static const PromptTemplate single_pass = parse_prompt_template(kSinglePassText);
  switch (kind) {
    case PromptKind::Screening:
      return screening;
    case PromptKind::Jury:
      return jury;
    case PromptKind::Deliberation:
      return deliberation;
    case PromptKind::PromptedHeuristic:
      return prompted;
    case PromptKind::SinglePass:
      return single_pass;
  }
  return screening;
}

std::string corrective_suffix(std::string_view error, std::string_view expected_shape) {
  std::ostringstream out;
  out << "Your previous reply could not be used: " << error << ". Reply again with only " << expected_shape
      << " that follows the requested shape exactly.";
  return out.str();
}

}  // namespace biasaudit
