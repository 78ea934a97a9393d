#include "biasaudit/domain.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace biasaudit {

using json = nlohmann::json;

namespace {

constexpr std::array<SeverityLabel, 7> kScale = {{
    {SeverityScore(1), "Neutral", "Pedagogically sound or properly contextualized source."},
    {SeverityScore(2), "Negligible", "Stylistic choices without substantive bias."},
    {SeverityScore(3), "Minor", "Lack of secondary perspective or slight tonal loading."},
    {SeverityScore(4), "Moderate", "Loaded language, stereotyping, or insufficient context."},
    {SeverityScore(5), "Significant", "Selective omission of key facts or one-sided narratives."},
    {SeverityScore(6), "Severe", "Nationalist myth-making, whitewashing, or propaganda."},
    {SeverityScore(7), "Harmful", "Hate speech, fabrication, or incitement as instruction."},
}};

constexpr std::array<std::pair<TaxonomyDomain, std::string_view>, 4> kDomainNames = {{
    {TaxonomyDomain::LanguageAndFraming, "Language & Framing"},
    {TaxonomyDomain::PerspectiveAndRepresentation, "Perspective & Representation"},
    {TaxonomyDomain::StructureAndEmphasis, "Structure & Emphasis"},
    {TaxonomyDomain::SourceHandling, "Source Handling"},
}};

constexpr std::array<std::string_view, 4> kDomainIdentifiers = {
    "LanguageAndFraming", "PerspectiveAndRepresentation", "StructureAndEmphasis", "SourceHandling"};

bool is_integral_number(const json& value) {
  if (value.is_number_integer()) return true;
  if (value.is_number_float()) {
    double d = value.get<double>();
    return std::isfinite(d) && std::floor(d) == d;
  }
  return false;
}

long long integral_value(const json& value) {
  if (value.is_number_integer()) return value.get<long long>();
  double d = value.get<double>();
  if (d > 1e15 || d < -1e15) return d > 0 ? 1000000000000000LL : -1000000000000000LL;
  return static_cast<long long>(d);
}

}  // namespace

const SeverityLabel& severity_label(SeverityScore score) { return kScale[score.value() - 1]; }

const std::array<SeverityLabel, 7>& severity_scale() { return kScale; }

std::string severity_scale_text() {
  std::ostringstream out;
  for (const auto& level : kScale) {
    out << level.score.value() << " - " << level.name << ": " << level.description << "\n";
  }
  return out.str();
}

std::string trim(std::string_view text) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
  while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
  return std::string(text);
}

std::string_view to_string(Attribution a) {
  switch (a) {
    case Attribution::TextbookNarrative:
      return "Textbook Narrative";
    case Attribution::PrimarySourceUsage:
      return "Primary Source Usage";
  }
  return "?";
}

std::optional<Attribution> parse_attribution(std::string_view text) {
  const std::string t = trim(text);
  if (t == "Textbook Narrative" || t == "TextbookNarrative") return Attribution::TextbookNarrative;
  if (t == "Primary Source Usage" || t == "PrimarySourceUsage") return Attribution::PrimarySourceUsage;
  return std::nullopt;
}

std::string_view to_string(TaxonomyDomain d) {
  for (const auto& [domain, name] : kDomainNames) {
    if (domain == d) return name;
  }
  return "?";
}

std::optional<TaxonomyDomain> parse_taxonomy_domain(std::string_view text) {
  const std::string t = trim(text);
  for (std::size_t i = 0; i < kDomainNames.size(); ++i) {
    if (t == kDomainNames[i].second || t == kDomainIdentifiers[i]) return kDomainNames[i].first;
  }
  return std::nullopt;
}

TaxonomyRegistry::TaxonomyRegistry(std::vector<TaxonomyCategory> categories,
                                   std::map<std::string, std::string> aliases)
    : categories_(std::move(categories)), aliases_(std::move(aliases)) {
  if (categories_.size() != kRequiredSize) {
    throw TaxonomyError("taxonomy must contain exactly " + std::to_string(kRequiredSize) +
                        " labels, got " + std::to_string(categories_.size()));
  }
  std::set<std::string> seen;
  for (const auto& c : categories_) {
    if (c.label.empty()) throw TaxonomyError("taxonomy label must be non-empty");
    if (c.label != trim(c.label)) throw TaxonomyError("taxonomy label has surrounding whitespace: '" + c.label + "'");
    if (!seen.insert(c.label).second) throw TaxonomyError("duplicate taxonomy label: " + c.label);
  }
  for (const auto& [alias, target] : aliases_) {
    if (!seen.contains(target)) {
      throw TaxonomyError("alias '" + alias + "' targets unknown label '" + target + "'");
    }
    if (seen.contains(alias)) throw TaxonomyError("alias '" + alias + "' shadows a label");
  }
}

std::optional<TaxonomyCategory> TaxonomyRegistry::lookup(std::string_view label) const {
  for (const auto& c : categories_) {
    if (c.label == label) return c;
  }
  return std::nullopt;
}

std::optional<TaxonomyCategory> TaxonomyRegistry::resolve(std::string_view raw) const {
  const std::string t = trim(raw);
  if (auto hit = lookup(t)) return hit;
  if (auto it = aliases_.find(t); it != aliases_.end()) return lookup(it->second);
  return std::nullopt;
}

std::string TaxonomyRegistry::prompt_listing() const {
  std::ostringstream out;
  for (const auto& [domain, name] : kDomainNames) {
    out << name << ":\n";
    for (const auto& c : categories_) {
      if (c.domain == domain) out << "  - " << c.label << "\n";
    }
  }
  return out.str();
}

TaxonomyRegistry taxonomy_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("labels") || !doc["labels"].is_array()) {
    throw TaxonomyError("taxonomy document must be an object with a 'labels' array");
  }
  if (doc.value("schema_version", 0) != 1) throw TaxonomyError("unsupported taxonomy schema_version");
  std::vector<TaxonomyCategory> categories;
  for (const auto& entry : doc["labels"]) {
    if (!entry.is_object() || !entry.contains("label") || !entry["label"].is_string() ||
        !entry.contains("domain") || !entry["domain"].is_string()) {
      throw TaxonomyError("taxonomy entry needs string 'label' and 'domain'");
    }
    auto domain = parse_taxonomy_domain(entry["domain"].get<std::string>());
    if (!domain) throw TaxonomyError("unknown taxonomy domain: " + entry["domain"].get<std::string>());
    categories.push_back({entry["label"].get<std::string>(), *domain});
  }
  std::map<std::string, std::string> aliases;
  if (doc.contains("aliases")) {
    if (!doc["aliases"].is_object()) throw TaxonomyError("'aliases' must be an object");
    for (const auto& [alias, target] : doc["aliases"].items()) {
      if (!target.is_string()) throw TaxonomyError("alias target must be a string");
      aliases.emplace(alias, target.get<std::string>());
    }
  }
  return TaxonomyRegistry(std::move(categories), std::move(aliases));
}

TaxonomyRegistry load_taxonomy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TaxonomyError("cannot open taxonomy file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw TaxonomyError("taxonomy file " + path.string() + " is not valid JSON: " + e.what());
  }
  return taxonomy_from_json(doc);
}

json taxonomy_to_json(const TaxonomyRegistry& registry) {
  json labels = json::array();
  for (const auto& c : registry.categories()) {
    labels.push_back({{"label", c.label}, {"domain", std::string(to_string(c.domain))}});
  }
  return {{"schema_version", 1}, {"labels", labels}, {"aliases", registry.aliases()}};
}

const TaxonomyRegistry& default_taxonomy() {
  using D = TaxonomyDomain;
  static const TaxonomyRegistry registry(
      {
          {"Narrative Framing", D::LanguageAndFraming},
          {"Moral Loading", D::LanguageAndFraming},
          {"Teleological Narrative", D::LanguageAndFraming},
          {"Loaded Terminology", D::LanguageAndFraming},
          {"Perspective Limitation", D::PerspectiveAndRepresentation},
          {"National or Cultural Centering", D::PerspectiveAndRepresentation},
          {"Stereotyping", D::PerspectiveAndRepresentation},
          {"Marginalization of Minorities", D::PerspectiveAndRepresentation},
          {"Selection Bias", D::StructureAndEmphasis},
          {"Omission / Underdevelopment", D::StructureAndEmphasis},
          {"Causal Oversimplification", D::StructureAndEmphasis},
          {"Disproportionate Emphasis", D::StructureAndEmphasis},
          {"Primary Source Framing", D::SourceHandling},
          {"Source Selection Bias", D::SourceHandling},
          {"Uncontextualized Source", D::SourceHandling},
      },
      {
          {"Omission/Underdevelopment", "Omission / Underdevelopment"},
          {"Omission", "Omission / Underdevelopment"},
          {"National/Cultural Centering", "National or Cultural Centering"},
      });
  return registry;
}

std::string_view to_string(ValidationError::Kind kind) {
  using K = ValidationError::Kind;
  switch (kind) {
    case K::MissingField:
      return "MissingField";
    case K::WrongType:
      return "WrongType";
    case K::OutOfRange:
      return "OutOfRange";
    case K::UnknownCategory:
      return "UnknownCategory";
    case K::UnknownAttribution:
      return "UnknownAttribution";
    case K::EmptyReasoning:
      return "EmptyReasoning";
  }
  return "?";
}

std::string describe(const ValidationError& error) {
  std::string out = std::string(to_string(error.kind)) + "(" + error.field + ")";
  if (!error.detail.empty()) out += ": " + error.detail;
  return out;
}

std::string describe(const std::vector<ValidationError>& errors) {
  std::string out;
  for (const auto& e : errors) {
    if (!out.empty()) out += "; ";
    out += describe(e);
  }
  return out;
}

VerdictValidation validate_juror_verdict(const json& raw, std::string juror_id,
                                         const TaxonomyRegistry& registry) {
  using K = ValidationError::Kind;
  VerdictValidation result;
  auto& errors = result.errors;

  if (!raw.is_object()) {
    errors.push_back({K::WrongType, "record", "expected an object"});
    return result;
  }

  auto field = [&](const char* name) -> const json* {
    auto it = raw.find(name);
    if (it == raw.end() || it->is_null()) {
      errors.push_back({K::MissingField, name, ""});
      return nullptr;
    }
    return &*it;
  };

  std::optional<Attribution> attribution;
  if (const json* v = field("attribution")) {
    if (!v->is_string()) {
      errors.push_back({K::WrongType, "attribution", "expected a string"});
    } else if (!(attribution = parse_attribution(v->get<std::string>()))) {
      errors.push_back({K::UnknownAttribution, "attribution", v->get<std::string>()});
    }
  }

  std::optional<TaxonomyCategory> category;
  if (const json* v = field("category")) {
    if (!v->is_string()) {
      errors.push_back({K::WrongType, "category", "expected a string"});
    } else if (!(category = registry.resolve(v->get<std::string>()))) {
      errors.push_back({K::UnknownCategory, "category", v->get<std::string>()});
    }
  }

  std::optional<int> severity;
  if (const json* v = field("severity")) {
    if (!is_integral_number(*v)) {
      errors.push_back({K::WrongType, "severity", "expected an integer"});
    } else if (long long s = integral_value(*v); !SeverityScore::in_range(s)) {
      errors.push_back({K::OutOfRange, "severity", std::to_string(s) + " not in [1,7]"});
    } else {
      severity = static_cast<int>(s);
    }
  }

  std::optional<double> confidence;
  if (const json* v = field("confidence")) {
    if (!v->is_number()) {
      errors.push_back({K::WrongType, "confidence", "expected a number"});
    } else if (double c = v->get<double>(); !(c >= 0.0 && c <= 1.0)) {
      errors.push_back({K::OutOfRange, "confidence", v->dump() + " not in [0,1]"});
    } else {
      confidence = c;
    }
  }

  std::optional<std::string> reasoning;
  if (const json* v = field("reasoning")) {
    if (!v->is_string()) {
      errors.push_back({K::WrongType, "reasoning", "expected a string"});
    } else if (trim(v->get<std::string>()).empty()) {
      errors.push_back({K::EmptyReasoning, "reasoning", ""});
    } else {
      reasoning = v->get<std::string>();
    }
  }

  if (errors.empty()) {
    result.verdict = JurorVerdict{std::move(juror_id), *attribution, *category,
                                  SeverityScore(*severity), *confidence, *reasoning};
  }
  return result;
}

json to_json(const JurorVerdict& v) {
  return {{"juror_id", v.juror_id},
          {"attribution", std::string(to_string(v.attribution))},
          {"category", v.category.label},
          {"severity", v.severity.value()},
          {"confidence", v.confidence},
          {"reasoning", v.reasoning}};
}

std::string_view to_string(VerdictStrategy s) {
  switch (s) {
    case VerdictStrategy::Heuristic:
      return "Heuristic";
    case VerdictStrategy::IndependentDeliberation:
      return "IndependentDeliberation";
    case VerdictStrategy::PromptedHeuristic:
      return "PromptedHeuristic";
    case VerdictStrategy::SinglePass:
      return "SinglePass";
  }
  return "?";
}

std::optional<VerdictStrategy> parse_verdict_strategy(std::string_view text) {
  for (auto s : {VerdictStrategy::Heuristic, VerdictStrategy::IndependentDeliberation,
                 VerdictStrategy::PromptedHeuristic, VerdictStrategy::SinglePass}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

json to_json(const FinalVerdict& v) {
  return {{"excerpt_id", v.excerpt_id},
          {"severity", v.severity.value()},
          {"severity_label", std::string(severity_label(v.severity).name)},
          {"category", v.category.label},
          {"domain", std::string(to_string(v.category.domain))},
          {"justification", v.justification},
          {"human_review", v.human_review},
          {"strategy", std::string(to_string(v.strategy))},
          {"juror_count_valid", v.juror_count_valid},
          {"fallback", v.fallback},
          {"branch", v.branch},
          {"escalation_reasons", v.escalation_reasons}};
}

FinalVerdict final_verdict_from_json(const json& j, const TaxonomyRegistry& registry) {
  auto category = registry.lookup(j.at("category").get<std::string>());
  if (!category) throw TaxonomyError("verdict references unknown category " + j.at("category").get<std::string>());
  auto strategy = parse_verdict_strategy(j.at("strategy").get<std::string>());
  if (!strategy) throw std::invalid_argument("unknown verdict strategy " + j.at("strategy").get<std::string>());
  FinalVerdict v{j.at("excerpt_id").get<std::string>(),
                 SeverityScore(j.at("severity").get<int>()),
                 *category,
                 j.at("justification").get<std::string>(),
                 j.at("human_review").get<bool>(),
                 *strategy,
                 j.at("juror_count_valid").get<int>(),
                 j.value("fallback", false),
                 j.value("branch", std::string()),
                 j.value("escalation_reasons", std::vector<std::string>{})};
  return v;
}

}  // namespace biasaudit
