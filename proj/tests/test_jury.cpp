#include <random>
#include <variant>

#include <gtest/gtest.h>

#include "biasaudit/jury.hpp"
#include "biasaudit/schema_retry.hpp"
#include "support/fixtures.hpp"

using namespace biasaudit;
using namespace testsupport;

namespace {

std::string payload(int severity, double confidence = 0.8, const std::string& category = "Narrative Framing") {
  return verdict_payload(category, severity, confidence).dump();
}

JurySettings settings(int n) {
  JurySettings s;
  for (int i = 0; i < n; ++i) s.jurors.push_back(juror_id(i));
  s.prompt = default_template(PromptKind::Jury);
  return s;
}

FlaggedExcerpt the_excerpt() {
  auto e = excerpt("doc-b1-e1");
  e.quote = "The nation was destined to prevail.";
  e.screening_reasoning = "teleological framing";
  return e;
}

}  // namespace

TEST(ParseJuror, PayloadAfterLongReasoningTrace) {
  std::string text(4000, '.');
  text = "<think>" + text + " weighing the rubric {not json} </think>\nFinal answer:\n" + payload(4);
  auto parsed = parse_juror_output(text, "j", default_taxonomy());
  ASSERT_TRUE(std::holds_alternative<JurorVerdict>(parsed));
  EXPECT_EQ(std::get<JurorVerdict>(parsed).severity.value(), 4);
}

TEST(ParseJuror, FirstBlockWinsByDefault) {
  const auto text = payload(2) + "\nrevised:\n" + payload(5);
  EXPECT_EQ(std::get<JurorVerdict>(parse_juror_output(text, "j", default_taxonomy())).severity.value(), 2);
  EXPECT_EQ(std::get<JurorVerdict>(parse_juror_output(text, "j", default_taxonomy(), BlockRule::Last)).severity.value(), 5);
}

TEST(ParseJuror, NonNumericConfidenceIsSchemaViolation) {
  auto raw = verdict_payload("Narrative Framing", 3, 0.5);
  raw["confidence"] = "high";
  auto parsed = parse_juror_output(raw.dump(), "j", default_taxonomy());
  ASSERT_TRUE(std::holds_alternative<ParseError>(parsed));
  const auto& err = std::get<ParseError>(parsed);
  EXPECT_EQ(err.kind, ParseError::Kind::SchemaViolation);
  ASSERT_EQ(err.violations.size(), 1u);
  EXPECT_EQ(err.violations[0].field, "confidence");
}

TEST(ParseJuror, NoBlock) {
  auto parsed = parse_juror_output("I think it is a 3.", "j", default_taxonomy());
  EXPECT_EQ(std::get<ParseError>(parsed).kind, ParseError::Kind::NoStructuredBlock);
}

TEST(RetrySchema, Examples) {
  auto run = [](std::vector<std::string> replies) {
    std::size_t i = 0;
    std::vector<std::string> correctives;
    auto out = retry_schema<int>(
        [&](int, const std::string& c) {
          correctives.push_back(c);
          return replies.at(i++);
        },
        [](const std::string& t) -> std::variant<int, std::string> {
          if (t == "ok") return 1;
          return std::string("bad: " + t);
        },
        3);
    return std::make_pair(out, correctives);
  };
  auto [second, corr] = run({"x", "ok"});
  EXPECT_TRUE(second.value);
  EXPECT_EQ(second.attempts_used, 2);
  EXPECT_EQ(corr, (std::vector<std::string>{"", "bad: x"}));
  auto [discard, _] = run({"x", "y", "z"});
  EXPECT_TRUE(discard.discarded());
  EXPECT_EQ(discard.attempts_used, 3);
  EXPECT_EQ(discard.last_error, "bad: z");
  EXPECT_EQ(discard.raw_responses.size(), 3u);
  auto [first, __] = run({"ok"});
  EXPECT_EQ(first.attempts_used, 1);
  EXPECT_THROW(retry_schema<int>([](int, const std::string&) { return std::string(); },
                                 [](const std::string&) -> std::variant<int, std::string> { return 1; }, 0),
               std::invalid_argument);
}

TEST(RetrySchema, BackendErrorStopsImmediately) {
  int calls = 0;
  auto out = retry_schema<int>(
      [&](int, const std::string&) -> std::string {
        ++calls;
        throw BackendError(BackendErrorKind::Transport, "down");
      },
      [](const std::string&) -> std::variant<int, std::string> { return 1; }, 3);
  EXPECT_EQ(calls, 1);
  EXPECT_TRUE(out.backend_error);
}

TEST(Adjudicate, FiveValidJurors) {
  Bench bench({{"juror-1", {reply(payload(2))}}, {"juror-2", {reply(payload(2))}}, {"juror-3", {reply(payload(3))}},
               {"juror-4", {reply(payload(2))}}, {"juror-5", {reply(payload(2))}}});
  auto r = adjudicate_excerpt(the_excerpt(), settings(5), *bench.gateway, default_taxonomy());
  EXPECT_TRUE(r.complete());
  ASSERT_EQ(r.verdicts.size(), 5u);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(r.verdicts[i].juror_id, juror_id(i));
  EXPECT_EQ(r.traces.size(), 5u);
}

TEST(Adjudicate, JurorDiscardedAfterThreeMalformedReplies) {
  Bench bench({{"juror-1", {reply(payload(2))}},
               {"juror-2", {reply("{\"severity\": \"bad\""), reply("no json"), reply(payload(9))}},
               {"juror-3", {reply(payload(2))}},
               {"juror-4", {reply(payload(2))}},
               {"juror-5", {reply(payload(5))}}});
  auto r = adjudicate_excerpt(the_excerpt(), settings(5), *bench.gateway, default_taxonomy());
  EXPECT_FALSE(r.complete());
  EXPECT_EQ(r.verdicts.size(), 4u);
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.failures[0].juror_id, "juror-2");
  EXPECT_EQ(r.failures[0].attempts_used, 3);
  EXPECT_FALSE(r.failures[0].backend_error);
  EXPECT_EQ(bench.total_calls(), 7u);
  ASSERT_NE(r.trace_for("juror-2"), nullptr);
  EXPECT_EQ(r.trace_for("juror-2")->raw_responses.size(), 3u);
}

TEST(Adjudicate, SingleJuror) {
  Bench bench({{"juror-1", {reply(payload(4))}}});
  auto r = adjudicate_excerpt(the_excerpt(), settings(1), *bench.gateway, default_taxonomy());
  EXPECT_TRUE(r.complete());
  EXPECT_EQ(r.verdicts.size(), 1u);
}

TEST(Adjudicate, PromptCarriesExcerptContextButNoImage) {
  Bench bench({{"juror-1", {reply(payload(4))}}});
  auto s = settings(1);
  adjudicate_excerpt(the_excerpt(), s, *bench.gateway, default_taxonomy());
  const auto call = bench.backend("juror-1").calls().at(0);
  const auto text = call.joined_text();
  EXPECT_NE(text.find("The nation was destined to prevail."), std::string::npos);
  EXPECT_NE(text.find("Textbook Narrative"), std::string::npos);
  EXPECT_NE(text.find("teleological framing"), std::string::npos);
  EXPECT_NE(text.find(std::string(kCalibrationSentence)), std::string::npos);
  EXPECT_NE(text.find("7 - Harmful"), std::string::npos);
  EXPECT_NE(text.find("Uncontextualized Source"), std::string::npos);
  for (const auto& part : call.user_content) EXPECT_EQ(part.kind, ContentPart::Kind::Text);
  EXPECT_DOUBLE_EQ(call.temperature, 0.2);

  s.calibration = false;
  auto req = build_juror_request(the_excerpt(), s, default_taxonomy());
  EXPECT_EQ(req.joined_text().find(std::string(kCalibrationSentence)), std::string::npos);
}

TEST(Adjudicate, JurorsNeverSeeEachOther) {
  std::map<std::string, std::vector<ScriptEntry>> scripts;
  for (int i = 0; i < 5; ++i) {
    auto p = verdict_payload("Narrative Framing", 3, 0.8, "Textbook Narrative", "marker-" + juror_id(i));
    scripts[juror_id(i)] = {reply("garbage-" + juror_id(i)), reply(p.dump())};
  }
  Bench bench(scripts);
  adjudicate_all({the_excerpt(), excerpt("doc-b1-e2")}, settings(5), *bench.gateway, default_taxonomy(), 8);
  for (int i = 0; i < 5; ++i) {
    for (const auto& call : bench.backend(juror_id(i)).calls()) {
      const auto text = call.joined_text();
      for (int k = 0; k < 5; ++k) {
        if (k == i) continue;
        EXPECT_EQ(text.find("marker-" + juror_id(k)), std::string::npos);
        EXPECT_EQ(text.find("garbage-" + juror_id(k)), std::string::npos);
      }
    }
  }
}

TEST(AdjudicateProperty, EveryJurorAccountedForAndCallsBounded) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 5);
    const int max_attempts = 1 + static_cast<int>(rng() % 3);
    std::map<std::string, std::vector<ScriptEntry>> scripts;
    for (int j = 0; j < n; ++j) {
      std::vector<ScriptEntry> s;
      for (int a = 0; a < 4; ++a) {
        switch (rng() % 4) {
          case 0: s.push_back(reply(payload(1 + static_cast<int>(rng() % 7)))); break;
          case 1: s.push_back(reply("prose only")); break;
          case 2: s.push_back(reply(payload(8))); break;
          default: s.push_back(failure(BackendErrorKind::Transport)); break;
        }
      }
      scripts[juror_id(j)] = s;
    }
    Bench bench(scripts);
    auto st = settings(n);
    st.max_attempts = max_attempts;
    auto r = adjudicate_excerpt(the_excerpt(), st, *bench.gateway, default_taxonomy());
    EXPECT_EQ(static_cast<int>(r.verdicts.size() + r.failures.size()), n);
    EXPECT_LE(bench.total_calls(), static_cast<std::size_t>(n * max_attempts));
    for (const auto& f : r.failures) EXPECT_LE(f.attempts_used, max_attempts);
  }
}

TEST(AdjudicateProperty, DeterministicUnderScriptedBackends) {
  auto make = [] {
    std::map<std::string, std::vector<ScriptEntry>> scripts;
    for (int j = 0; j < 5; ++j) {
      for (int e = 1; e <= 4; ++e) {
        const auto key = "Excerpt ID: doc-b1-e" + std::to_string(e) + "\n";
        if ((j + e) % 3 == 0) scripts[juror_id(j)].push_back(reply("oops", key));
        scripts[juror_id(j)].push_back(reply(payload(1 + (j * e) % 7, 0.1 * (j + 1)), key));
      }
    }
    return scripts;
  };
  std::vector<FlaggedExcerpt> excerpts;
  for (int e = 1; e <= 4; ++e) excerpts.push_back(excerpt("doc-b1-e" + std::to_string(e)));
  Bench a(make());
  Bench b(make());
  auto ra = adjudicate_all(excerpts, settings(5), *a.gateway, default_taxonomy(), 1);
  auto rb = adjudicate_all(excerpts, settings(5), *b.gateway, default_taxonomy(), 16);
  EXPECT_EQ(ra, rb);
  EXPECT_EQ(a.ledger.entries(), b.ledger.entries());
}
