#include <gtest/gtest.h>

#include "biasaudit/json_blocks.hpp"

using namespace biasaudit;

TEST(JsonBlocks, FindsPayloadAfterProse) {
  const std::string text = "Let me think about this carefully. {\"a\": 1} trailing";
  auto blocks = find_json_blocks(text);
  ASSERT_EQ(blocks.size(), 1u);
  EXPECT_EQ(blocks[0].value["a"], 1);
  EXPECT_EQ(text.substr(blocks[0].offset, blocks[0].length), "{\"a\": 1}");
}

TEST(JsonBlocks, SkipsMarkdownFencesAndBrokenBrackets) {
  const std::string text = "Notes [see page 3] {not json}\n```json\n[{\"q\": \"x}\"}]\n```\n";
  auto blocks = find_json_blocks(text);
  ASSERT_EQ(blocks.size(), 1u);
  ASSERT_TRUE(blocks[0].value.is_array());
  EXPECT_EQ(blocks[0].value[0]["q"], "x}");
}

TEST(JsonBlocks, NestedBlocksAreNotReportedTwice) {
  auto blocks = find_json_blocks("{\"outer\": {\"inner\": [1, 2]}} and {\"second\": true}");
  ASSERT_EQ(blocks.size(), 2u);
  EXPECT_TRUE(blocks[0].value.contains("outer"));
  EXPECT_TRUE(blocks[1].value.contains("second"));
}

TEST(JsonBlocks, NothingInPlainText) {
  EXPECT_TRUE(find_json_blocks("no issues found").empty());
  EXPECT_TRUE(find_json_blocks("").empty());
  EXPECT_TRUE(find_json_blocks("{{{{ [[[").empty());
}

TEST(JsonBlocks, BracesInsideStringsDoNotConfuseTheScanner) {
  auto blocks = find_json_blocks(R"(x {"t": "a { b [ c \" }"} y)");
  ASSERT_EQ(blocks.size(), 1u);
  EXPECT_EQ(blocks[0].value["t"], "a { b [ c \" }");
}

TEST(ParseErrorText, DescribesKindAndViolations) {
  ParseError e{ParseError::Kind::SchemaViolation, "bad payload",
               {{ValidationError::Kind::OutOfRange, "severity", "9"}}};
  const auto d = e.describe();
  EXPECT_NE(d.find("bad payload"), std::string::npos);
  EXPECT_NE(d.find("severity"), std::string::npos);
}
