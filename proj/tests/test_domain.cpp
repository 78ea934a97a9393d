#include <random>

#include <gtest/gtest.h>

#include "biasaudit/domain.hpp"
#include "support/fixtures.hpp"

using namespace biasaudit;
using nlohmann::json;
using Kind = ValidationError::Kind;

namespace {

json valid_payload() {
  return {{"attribution", "Primary Source Usage"},
          {"category", "Narrative Framing"},
          {"severity", 3},
          {"confidence", 0.8},
          {"reasoning", "Frames the conflict as inevitable."}};
}

bool has_error(const VerdictValidation& v, Kind kind, const std::string& field) {
  for (const auto& e : v.errors) {
    if (e.kind == kind && e.field == field) return true;
  }
  return false;
}

}  // namespace

TEST(Severity, ScaleBounds) {
  EXPECT_THROW(SeverityScore(0), std::out_of_range);
  EXPECT_THROW(SeverityScore(8), std::out_of_range);
  EXPECT_EQ(SeverityScore(7).value(), 7);
  EXPECT_LT(SeverityScore(2), SeverityScore(3));
}

TEST(Severity, LabelsFollowTheScale) {
  EXPECT_EQ(severity_label(SeverityScore(1)).name, "Neutral");
  EXPECT_EQ(severity_label(SeverityScore(4)).name, "Moderate");
  EXPECT_EQ(severity_label(SeverityScore(7)).name, "Harmful");
  for (int s = 1; s <= 7; ++s) EXPECT_EQ(severity_scale()[s - 1].score.value(), s);
  const auto text = severity_scale_text();
  EXPECT_NE(text.find("1 - Neutral"), std::string::npos);
  EXPECT_NE(text.find("7 - Harmful"), std::string::npos);
}

TEST(Attribution, ParsesBothSpellings) {
  EXPECT_EQ(parse_attribution("Primary Source Usage"), Attribution::PrimarySourceUsage);
  EXPECT_EQ(parse_attribution(" TextbookNarrative "), Attribution::TextbookNarrative);
  EXPECT_FALSE(parse_attribution("primary").has_value());
  EXPECT_EQ(to_string(Attribution::TextbookNarrative), "Textbook Narrative");
}

TEST(Taxonomy, LookupIsExactAndCarriesDomain) {
  const auto& t = default_taxonomy();
  ASSERT_EQ(t.categories().size(), TaxonomyRegistry::kRequiredSize);
  auto selection = t.lookup("Selection Bias");
  ASSERT_TRUE(selection);
  EXPECT_EQ(selection->domain, TaxonomyDomain::StructureAndEmphasis);
  EXPECT_FALSE(t.lookup("selection bias"));
  auto teleo = t.lookup("Teleological Narrative");
  ASSERT_TRUE(teleo);
  EXPECT_EQ(teleo->domain, TaxonomyDomain::LanguageAndFraming);
}

TEST(Taxonomy, ResolveTrimsAndFollowsAliases) {
  const auto& t = default_taxonomy();
  EXPECT_EQ(t.resolve("  Narrative Framing ")->label, "Narrative Framing");
  EXPECT_EQ(t.resolve("Omission")->label, "Omission / Underdevelopment");
  EXPECT_FALSE(t.resolve("Nonexistent"));
}

TEST(Taxonomy, FailsClosedOnWrongSizeOrDuplicates) {
  auto cats = default_taxonomy().categories();
  auto fewer = cats;
  fewer.pop_back();
  EXPECT_THROW(TaxonomyRegistry{fewer}, TaxonomyError);
  auto dup = cats;
  dup.back() = dup.front();
  EXPECT_THROW(TaxonomyRegistry{dup}, TaxonomyError);
  auto more = cats;
  more.push_back({"Extra", TaxonomyDomain::SourceHandling});
  EXPECT_THROW(TaxonomyRegistry{more}, TaxonomyError);
  EXPECT_THROW((TaxonomyRegistry{cats, {{"alias", "Missing Target"}}}), TaxonomyError);
}

TEST(Taxonomy, JsonRoundTrip) {
  const auto j = taxonomy_to_json(default_taxonomy());
  const auto back = taxonomy_from_json(j);
  EXPECT_EQ(back.categories(), default_taxonomy().categories());
  EXPECT_EQ(back.aliases(), default_taxonomy().aliases());
  auto broken = j;
  broken["labels"].erase(broken["labels"].begin());
  EXPECT_THROW(taxonomy_from_json(broken), TaxonomyError);
}

TEST(ValidateVerdict, AcceptsWellFormedPayload) {
  auto v = validate_juror_verdict(valid_payload(), "j1", default_taxonomy());
  ASSERT_TRUE(v.ok());
  EXPECT_TRUE(v.errors.empty());
  EXPECT_EQ(v.verdict->attribution, Attribution::PrimarySourceUsage);
  EXPECT_EQ(v.verdict->category.label, "Narrative Framing");
  EXPECT_EQ(v.verdict->severity.value(), 3);
  EXPECT_DOUBLE_EQ(v.verdict->confidence, 0.8);
  EXPECT_EQ(v.verdict->juror_id, "j1");
}

TEST(ValidateVerdict, SeverityAboveScale) {
  auto raw = valid_payload();
  raw["severity"] = 8;
  raw["confidence"] = 0.5;
  auto v = validate_juror_verdict(raw, "j1", default_taxonomy());
  EXPECT_FALSE(v.ok());
  EXPECT_TRUE(has_error(v, Kind::OutOfRange, "severity"));
  EXPECT_EQ(v.errors.size(), 1u);
}

TEST(ValidateVerdict, ReportsEveryViolation) {
  auto raw = valid_payload();
  raw["confidence"] = 1.2;
  raw["category"] = "Nonexistent";
  auto v = validate_juror_verdict(raw, "j1", default_taxonomy());
  EXPECT_FALSE(v.ok());
  EXPECT_TRUE(has_error(v, Kind::OutOfRange, "confidence"));
  EXPECT_TRUE(has_error(v, Kind::UnknownCategory, "category"));
  EXPECT_EQ(v.errors.size(), 2u);
}

TEST(ValidateVerdict, MissingFieldsEmptyReasoningAndTypes) {
  auto v = validate_juror_verdict(json::object(), "j1", default_taxonomy());
  EXPECT_EQ(v.errors.size(), 5u);
  for (const char* f : {"attribution", "category", "severity", "confidence", "reasoning"}) {
    EXPECT_TRUE(has_error(v, Kind::MissingField, f)) << f;
  }
  auto raw = valid_payload();
  raw["reasoning"] = "   ";
  raw["confidence"] = "high";
  raw["severity"] = 2.5;
  raw["attribution"] = "Marginal";
  v = validate_juror_verdict(raw, "j1", default_taxonomy());
  EXPECT_TRUE(has_error(v, Kind::EmptyReasoning, "reasoning"));
  EXPECT_TRUE(has_error(v, Kind::WrongType, "confidence"));
  EXPECT_TRUE(has_error(v, Kind::WrongType, "severity"));
  EXPECT_TRUE(has_error(v, Kind::UnknownAttribution, "attribution"));
}

TEST(ValidateVerdict, NonObjectInput) {
  for (const json& raw : {json(nullptr), json(3), json("text"), json::array({1, 2})}) {
    auto v = validate_juror_verdict(raw, "j1", default_taxonomy());
    EXPECT_FALSE(v.ok());
    EXPECT_FALSE(v.errors.empty());
  }
}

namespace {

json random_value(std::mt19937_64& rng, int depth);

json random_scalar(std::mt19937_64& rng) {
  switch (rng() % 8) {
    case 0: return nullptr;
    case 1: return rng() % 2 == 0;
    case 2: return static_cast<int>(rng() % 20) - 5;
    case 3: return std::uniform_real_distribution<double>(-2.0, 9.0)(rng);
    case 4: return "Narrative Framing";
    case 5: return "Primary Source Usage";
    case 6: return "";
    default: return "free text";
  }
}

json random_value(std::mt19937_64& rng, int depth) {
  const auto pick = rng() % 6;
  if (depth > 2 || pick < 4) return random_scalar(rng);
  if (pick == 4) return json::array({random_value(rng, depth + 1)});
  return json{{"nested", random_value(rng, depth + 1)}};
}

}  // namespace

TEST(ValidateVerdictProperty, TotalOverArbitraryRecords) {
  std::mt19937_64 rng(11);
  const char* fields[] = {"attribution", "category", "severity", "confidence", "reasoning", "extra"};
  for (int i = 0; i < 5000; ++i) {
    json raw = json::object();
    for (const char* f : fields) {
      if (rng() % 3 != 0) raw[f] = random_value(rng, 0);
    }
    VerdictValidation v;
    ASSERT_NO_THROW(v = validate_juror_verdict(raw, "j", default_taxonomy())) << raw.dump();
    EXPECT_NE(v.ok(), !v.errors.empty()) << raw.dump();
  }
}

TEST(ValidateVerdictProperty, SerializationRoundTrips) {
  std::mt19937_64 rng(5);
  testsupport::JuryShape shape{1, 5, testsupport::labels(15), false};
  for (int i = 0; i < 2000; ++i) {
    for (const auto& v : testsupport::random_jury(rng, shape)) {
      auto back = validate_juror_verdict(to_json(v), v.juror_id, default_taxonomy());
      ASSERT_TRUE(back.ok()) << describe(back.errors);
      EXPECT_EQ(*back.verdict, v);
    }
  }
}

TEST(FinalVerdictJson, RoundTrip) {
  FinalVerdict f{"doc-b1-e1", SeverityScore(5), *default_taxonomy().lookup("Stereotyping"), "because", true,
                 VerdictStrategy::IndependentDeliberation, 4, true, "model", {"model", "quorum"}};
  EXPECT_EQ(final_verdict_from_json(to_json(f), default_taxonomy()), f);
}

TEST(Strategy, NamesRoundTrip) {
  for (auto s : {VerdictStrategy::Heuristic, VerdictStrategy::IndependentDeliberation,
                 VerdictStrategy::PromptedHeuristic, VerdictStrategy::SinglePass}) {
    EXPECT_EQ(parse_verdict_strategy(to_string(s)), s);
  }
}
