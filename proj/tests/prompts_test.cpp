#include "spur/prompts.hpp"

#include <gtest/gtest.h>

#include "test_support.hpp"

using spur::Polarity;
using spur_test::make_conversation;

namespace {

std::size_t count_occurrences(const std::string& haystack, const std::string& needle) {
  std::size_t count = 0, pos = 0;
  while ((pos = haystack.find(needle, pos)) != std::string::npos) {
    ++count;
    pos += needle.size();
  }
  return count;
}

TEST(Serialize, PrefixesRolesAndJoinsWithNewlines) {
  auto conv = make_conversation("c", std::nullopt, {"hi"});
  conv.turns.push_back({spur::Role::User, "thanks"});
  EXPECT_EQ(spur::serialize_conversation(conv),
            "user: hi\nagent: noted, let me check that\nuser: thanks");
}

TEST(PolaritySwap, RewritesSatisfactionStems) {
  EXPECT_EQ(spur::swap_to_dissatisfaction("the user is satisfied"),
            "the user is dissatisfied");
  EXPECT_EQ(spur::swap_to_dissatisfaction("Satisfaction matters"),
            "Dissatisfaction matters");
  EXPECT_EQ(spur::swap_to_dissatisfaction("already dissatisfied"),
            "already dissatisfied");
  EXPECT_EQ(spur::swap_to_dissatisfaction("signal through a like button"),
            "signal through a dislike button");
  EXPECT_EQ(spur::swap_to_dissatisfaction("I would like tea"), "I would like tea");
}

// The wording below is load-bearing: downstream parsers and the scripted
// providers key on these exact lines, so they are asserted verbatim.
TEST(ExtractionPrompt, ContainsTheCanonicalInstructionLines) {
  const std::string prompt =
      spur::extraction_prompt_text("user: thanks so much", Polarity::Sat, 3);

  EXPECT_EQ(prompt.rfind("You job is to understand and elaborate how a user expresses "
                         "that they are **satisfied**",
                         0),
            0u);
  EXPECT_TRUE(spur::contains(prompt, "provide no more than 3 reasons"));
  EXPECT_TRUE(spur::contains(
      prompt, "Provide your answer in xml format between <REASONS></REASONS> tags."));
  EXPECT_TRUE(spur::contains(prompt,
                             "Return NONE if you can't think of any part of the user's "
                             "utterances that expresses satisfaction."));
  EXPECT_TRUE(spur::contains(prompt, "expresses satisfaction"));
  EXPECT_TRUE(spur::contains(prompt, "signal of satisfaction through a like button"));
  // double spaces preserved from the source text
  EXPECT_TRUE(spur::contains(prompt, "grounded  on"));
  EXPECT_TRUE(spur::contains(prompt, "hallucinate  beyond"));
  EXPECT_TRUE(spur::contains(prompt, "<CONVERSATION>\nuser: thanks so much\n</CONVERSATION>"));
  EXPECT_TRUE(prompt.size() >= 60 &&
              prompt.substr(prompt.size() - 60).find(
                  "user is satisfied with the interaction are:") != std::string::npos);
}

TEST(ExtractionPrompt, DsatVariantSwapsEveryPolarityTerm) {
  const std::string prompt =
      spur::extraction_prompt_text("user: this is wrong", Polarity::Dsat, 3);

  EXPECT_TRUE(spur::contains(prompt, "**dissatisfied**"));
  EXPECT_TRUE(spur::contains(prompt, "signal of dissatisfaction through a dislike button"));
  EXPECT_TRUE(spur::contains(prompt, "expresses dissatisfaction"));
  EXPECT_TRUE(spur::contains(prompt,
                             "reasons why the user is dissatisfied with the interaction"));
  EXPECT_FALSE(spur::contains(prompt, " satisfied"));
  EXPECT_FALSE(spur::contains(prompt, " satisfaction"));
}

TEST(ExtractionPrompt, ParameterizesTheReasonCap) {
  const std::string prompt = spur::extraction_prompt_text("user: hi", Polarity::Sat, 5);
  EXPECT_TRUE(spur::contains(prompt, "provide no more than 5 reasons"));
  EXPECT_THROW(spur::extraction_prompt_text("user: hi", Polarity::Sat, 0),
               spur::SpurError);
}

TEST(SummarizationPrompt, StatesTheRubricSizeInBothInstructionBlocks) {
  const std::string prompt =
      spur::summarization_prompt_text("- example pattern", 10, Polarity::Sat);

  EXPECT_EQ(count_occurrences(prompt, "up to 10 bullet items"), 2u);
  EXPECT_TRUE(spur::contains(prompt,
                             "The number of items in the rubric should be less than 10."));
  EXPECT_TRUE(spur::contains(prompt, "<Rubric></Rubric>"));
  EXPECT_TRUE(spur::contains(prompt, "# Example Explanations of User Satisfaction\n"
                                     "- example pattern"));
  EXPECT_TRUE(spur::contains(prompt, "1. [item 1]"));
  EXPECT_EQ(prompt.rfind("# Output"), prompt.size() - std::string("# Output").size());
}

TEST(SummarizationPrompt, DsatVariantRelabelsTheExamplesHeader) {
  const std::string prompt =
      spur::summarization_prompt_text("- example", 10, Polarity::Dsat);
  EXPECT_TRUE(spur::contains(prompt, "# Example Explanations of User Dissatisfaction"));
  EXPECT_TRUE(spur::contains(prompt, "why a user feels **dissatisfied**"));
  EXPECT_TRUE(spur::contains(prompt, "signal of dissatisfaction"));
}

TEST(ScoringPrompt, EqualSizedRubricsUseOneCount) {
  std::string sat_rows, dsat_rows;
  for (int i = 1; i <= 10; ++i) {
    sat_rows += "S" + std::to_string(i) + "|sat item\n";
    dsat_rows += "D" + std::to_string(i) + "|dsat item\n";
  }
  const std::string prompt =
      spur::scoring_prompt_text(sat_rows, dsat_rows, 10, 10, "user: hello");

  EXPECT_TRUE(spur::contains(prompt, "- Each rubric contains 10 criteria."));
  EXPECT_TRUE(spur::contains(prompt, "answer Y to each statement"));
  EXPECT_TRUE(spur::contains(
      prompt, "If the statement is not applicable answer N and give an overall score of 0."));
  EXPECT_TRUE(spur::contains(
      prompt, "You *MUST* output your answers to all 10 questions provided in each rubric."));
  EXPECT_TRUE(spur::contains(prompt, "# SATISFACTION RUBRIC\nS1|sat item"));
  EXPECT_TRUE(spur::contains(prompt, "# DISSATISFACTION RUBRIC\nD1|dsat item"));
  EXPECT_TRUE(spur::contains(prompt, "S1..S10 first, then D1..D10"));
  EXPECT_TRUE(spur::contains(prompt, "`S<i>|Y|<score 1-10>` or `S<i>|N|0`"));
  EXPECT_TRUE(spur::contains(prompt, "# Conversation:\nuser: hello"));
  EXPECT_EQ(prompt.rfind("# Answers"), prompt.size() - std::string("# Answers").size());
}

TEST(ScoringPrompt, UnequalRubricsGetPerSideCounts) {
  const std::string prompt =
      spur::scoring_prompt_text("S1|a\nS2|b\nS3|c", "D1|x\nD2|y", 3, 2, "user: hi");
  EXPECT_TRUE(spur::contains(prompt,
                             "- The satisfaction rubric contains 3 criteria and the "
                             "dissatisfaction rubric contains 2 criteria."));
  EXPECT_TRUE(spur::contains(
      prompt, "You *MUST* output your answers to all questions provided in each rubric."));
  EXPECT_TRUE(spur::contains(prompt, "S1..S3 first, then D1..D2"));
  EXPECT_FALSE(spur::contains(prompt, "{n_sat}"));
}

TEST(ScoringPrompt, RejectsEmptyRubrics) {
  EXPECT_THROW(spur::scoring_prompt_text("", "D1|x", 0, 1, "user: hi"), spur::SpurError);
}

TEST(Templates, NoPlaceholdersLeakIntoAnyPrompt) {
  for (const std::string prompt :
       {spur::extraction_prompt_text("user: a", Polarity::Dsat, 3),
        spur::summarization_prompt_text("- b", 7, Polarity::Dsat),
        spur::scoring_prompt_text("S1|a", "D1|b\nD2|c", 1, 2, "user: d")}) {
    EXPECT_FALSE(spur::contains(prompt, "{")) << prompt.substr(0, 200);
  }
}

}  // namespace
