#include <gtest/gtest.h>

#include "biasaudit/stage_files.hpp"
#include "support/fixtures.hpp"

using namespace biasaudit;
using namespace testsupport;

namespace {

JuryFile sample_jury() {
  JuryFile f;
  f.jurors = {"juror-1", "juror-2"};
  auto r = record("doc-b1-e1", {juror("juror-1", 3, 0.8)});
  r.failures.push_back({"juror-2", "no structured block", 3, false});
  r.traces.push_back({"juror-1", 1, {"{...}"}});
  r.traces.push_back({"juror-2", 3, {"a", "b", "c"}});
  f.records.push_back(r);
  return f;
}

}  // namespace

TEST(StageFiles, JuryRoundTrip) {
  TempDir dir;
  const auto f = sample_jury();
  write_json_file(dir / "jury.json", jury_to_json(f));
  const auto back = read_jury_file(dir / "jury.json");
  EXPECT_EQ(back.jurors, f.jurors);
  EXPECT_EQ(back.records, f.records);
  EXPECT_FALSE(fs::exists(dir / "jury.json.tmp"));
  const auto text = slurp(dir / "jury.json");
  EXPECT_EQ(text.back(), '\n');
  EXPECT_NE(text.find("\"schema_version\": 1"), std::string::npos);
}

TEST(StageFiles, ScreeningRoundTrip) {
  ScreeningFile f;
  DocumentScreening d{"doc", 7, {}};
  BatchOutcome ok;
  ok.document_id = "doc";
  ok.index = 1;
  ok.range = {1, 5};
  ok.attempts_used = 1;
  ok.excerpts.push_back(excerpt("doc-b1-e1"));
  ok.rejected.push_back({2, "page 9 outside 1-5"});
  ok.raw_responses = {"[...]"};
  BatchOutcome failed;
  failed.document_id = "doc";
  failed.index = 2;
  failed.range = {6, 7};
  failed.attempts_used = 3;
  failed.failure = "no structured block";
  d.batches = {ok, failed};
  f.documents.push_back(d);
  const auto back = screening_from_json(screening_to_json(f));
  ASSERT_EQ(back.documents.size(), 1u);
  EXPECT_EQ(back.documents[0].batches[0].excerpts, ok.excerpts);
  EXPECT_EQ(back.documents[0].batches[0].rejected, ok.rejected);
  EXPECT_EQ(back.documents[0].batches[1].failure, failed.failure);
  EXPECT_EQ(back.documents[0].batches[1].range, failed.range);
}

TEST(StageFiles, VerdictsRoundTripWithUnresolvedEntries) {
  VerdictsFile f;
  f.strategy = VerdictStrategy::IndependentDeliberation;
  f.records = sample_jury().records;
  f.records.push_back(record("doc-b1-e2", {}));
  f.verdicts = {FinalVerdict{"doc-b1-e1", SeverityScore(3), *default_taxonomy().lookup("Narrative Framing"), "why",
                             false, VerdictStrategy::IndependentDeliberation, 1, false, "model", {}},
                std::nullopt};
  const auto back = verdicts_from_json(verdicts_to_json(f));
  EXPECT_EQ(back.strategy, f.strategy);
  EXPECT_EQ(back.records, f.records);
  EXPECT_EQ(back.verdicts, f.verdicts);
  f.verdicts.pop_back();
  EXPECT_THROW(verdicts_to_json(f), std::invalid_argument);
}

TEST(StageFiles, MissingAndCorruptFiles) {
  TempDir dir;
  EXPECT_THROW(read_jury_file(dir / "jury.json"), MissingStageFile);
  write_file(dir / "jury.json", "{ not json");
  EXPECT_THROW(read_jury_file(dir / "jury.json"), SchemaVersionMismatch);
  auto j = jury_to_json(sample_jury());
  j["schema_version"] = 2;
  write_file(dir / "jury.json", j.dump());
  EXPECT_THROW(read_jury_file(dir / "jury.json"), SchemaVersionMismatch);
  j["schema_version"] = 1;
  j["kind"] = "screening";
  write_file(dir / "jury.json", j.dump());
  EXPECT_THROW(read_jury_file(dir / "jury.json"), SchemaVersionMismatch);
  j["kind"] = "jury";
  j["records"][0]["verdicts"][0]["severity"] = 11;
  write_file(dir / "jury.json", j.dump());
  EXPECT_THROW(read_jury_file(dir / "jury.json"), SchemaVersionMismatch);
  j = jury_to_json(sample_jury());
  j["records"][0].erase("excerpt");
  write_file(dir / "jury.json", j.dump());
  EXPECT_THROW(read_jury_file(dir / "jury.json"), SchemaVersionMismatch);
}

TEST(StageFiles, LedgerFile) {
  TempDir dir;
  CostLedger ledger;
  ledger.append({"b", Stage::Jury, "t", 1, 2, 3});
  write_json_file(dir / "ledger.json", ledger_to_json(ledger));
  EXPECT_EQ(read_ledger_file(dir / "ledger.json").entries(), ledger.entries());
}
