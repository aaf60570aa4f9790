#pragma once

// Prompt templates for the three pipeline stages. The template text is load
// bearing: golden tests pin exact instruction lines, so edits here are
// protocol changes, not wording cleanups. Idiosyncrasies in the text
// (doubled spaces, "You job is to") are deliberate and must stay.

#include <string>
#include <vector>

#include "spur/corpus.hpp"
#include "spur/errors.hpp"
#include "spur/util.hpp"

namespace spur {

enum class Polarity { Sat, Dsat };

// Decoding knobs shared by the three stage prompt builders. Temperature 0
// keeps reruns reproducible; override per stage when exploring.
struct PromptOptions {
  double temperature = 0.0;
  int max_output_tokens = 2048;
  std::string model_tag = "default";
};

inline const char* to_string(Polarity p) { return p == Polarity::Sat ? "sat" : "dsat"; }

inline std::optional<Polarity> parse_polarity(std::string_view s) {
  if (s == "sat") return Polarity::Sat;
  if (s == "dsat") return Polarity::Dsat;
  return std::nullopt;
}

inline SatLabel to_sat_label(Polarity p) {
  return p == Polarity::Sat ? SatLabel::Sat : SatLabel::Dsat;
}

// One line per turn, "user: " / "agent: " prefixed, corpus order.
inline std::string serialize_conversation(const Conversation& conv) {
  std::string out;
  for (const auto& turn : conv.turns) {
    out += to_string(turn.role);
    out += ": ";
    out += turn.text;
    out += '\n';
  }
  if (!out.empty()) out.pop_back();
  return out;
}

// Rewrites a satisfaction-framed template into its dissatisfaction twin:
// every "satisf*" stem gains a case-matched "dis" prefix (stems already
// carrying one are left alone) and "a like" becomes "a dislike". Applied to
// template text only, never to conversation content.
inline std::string swap_to_dissatisfaction(const std::string& text) {
  auto lower_at = [&](std::size_t i) {
    return static_cast<char>(std::tolower(static_cast<unsigned char>(text[i])));
  };
  auto stem_at = [&](std::size_t i) {
    static const char* stem = "satisf";
    for (std::size_t j = 0; j < 6; ++j) {
      if (i + j >= text.size() || lower_at(i + j) != stem[j]) return false;
    }
    return true;
  };
  std::string out;
  out.reserve(text.size() + 64);
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (stem_at(i)) {
      const bool already_prefixed =
          i >= 3 && lower_at(i - 3) == 'd' && lower_at(i - 2) == 'i' && lower_at(i - 1) == 's';
      if (!already_prefixed) {
        out += std::isupper(static_cast<unsigned char>(text[i])) ? "Diss" : "diss";
        continue;  // the lowercase 's' replaces text[i]
      }
    }
    out += text[i];
  }
  return replace_all(out, "a like", "a dislike");
}

namespace prompt_detail {

inline constexpr const char* kExtractionTemplate =
    R"(You job is to understand and elaborate how a user expresses that they are **satisfied** with their interaction with an AI agent. You will be given a conversation that a user had with an AI agent where the user provided a signal of satisfaction through a like button.

Your task is to summarize how the user expressed satisfaction with the conversation.
Instructions:
- Provide your answer in xml format between <REASONS></REASONS> tags.
- Return NONE if you can't think of any part of the user's utterances that expresses satisfaction.
- The reasons you summarized should be grounded  on the conversation history only. You should **NOT** extrapolate, imagine, or hallucinate  beyond the text of the conversation that is given.
- The reasons should be mutually exclusive.
- You should **NOT** refer to the fact that there was a like in your summary.
- Your summary should be concise, use bullet points, and provide no more than {max_reasons} reasons.

<CONVERSATION>
{conversation}
</CONVERSATION>

The main reasons why the user is satisfied with the interaction are:)";

inline constexpr const char* kSummarizationTemplate =
    R"(# Task
You job is to summarize why a user feels **satisfied** with their interaction with an AI agent and provide a rubric for evaluation of a single conversation. You will be given a list of example explanations from conversations that users had with an AI agent where these users provided a signal of satisfaction.

# Instruction
Your task is to provide a rubric to identify user satisfaction with respect to a conversation. Requirements:
* Provide your answer as a numbered list of up to {num_rubric} bullet items.
* The rubric should be user-centric, concise, and mutually exclusive.


# Example Explanations of User Satisfaction
{examples}


# Now summarize these examples into a rubric to identify user satisfaction with respect to a conversation. Requirements:
* Provide your answer as a numbered list of up to {num_rubric} bullet items.
* The number of items in the rubric should be less than {num_rubric}.
* The rubric should be user-centric, concise, and mutually exclusive.
* Provide your answer as a numbered list of bullet items in <Rubric></Rubric>. The output format is as follows:
```
# Output
<Rubric>
1. [item 1]
2. [item 2]
3. [item 3]
...
</Rubric>
```

# Output)";

inline constexpr const char* kScoringTemplate =
    R"(# Your task is to evaluate both user satisfaction and dissatisfaction with a conversational AI agent by applying the given rubrics to the given conversation history between the user and the agent.

# Rubric instructions
{criteria_count_line}
- Each criterion has a Yes or No statement.
- Your job is to go through the conversation history carefully and answer Y to each statement that applies to the user utterances in the conversation, then give the statement a score of 1-10 to reflect how likely the expressed sentiment will impact the user's overall satisfaction/dissatisfaction with the interaction. If the statement is not applicable answer N and give an overall score of 0.
{table_format_line}

# SATISFACTION RUBRIC
{sat_rubric}

# DISSATISFACTION RUBRIC
{dsat_rubric}

# Task:
- Go through the conversation history thoroughly and evaluate the user's utterances. Do not consider the AI's responses except to put the user's response in context.
- For each rubric question think about your answer to each question carefully.
- Answer Y or N only to each rubric question.
- For Y answer, score your answer on a scale of 1-10 (low to high) to reflect how likely the expressed sentiment will impact the user's overall satisfaction or dissatisfaction with the interaction. For N answer, score 0.
- Only provide ONE most confident answer to each question.
{answer_all_line}

# Answer format
- Output exactly one line per rubric item, S1..S{n_sat} first, then D1..D{n_dsat}, in order.
- Each line must be `S<i>|Y|<score 1-10>` or `S<i>|N|0` (likewise `D<j>|...`), with no other text.

# Conversation:
{conversation}

# Answers)";

}  // namespace prompt_detail

// Renders the extraction prompt. `conversation_text` is the serialized
// turn block; the Dsat variant swaps polarity wording in the template before
// the conversation is spliced in, so user content is never rewritten.
inline std::string extraction_prompt_text(const std::string& conversation_text,
                                          Polarity polarity, int max_reasons = 3) {
  if (max_reasons < 1) fail(ErrorKind::InvalidConfig, "max_reasons must be >= 1");
  std::string tpl = prompt_detail::kExtractionTemplate;
  if (polarity == Polarity::Dsat) tpl = swap_to_dissatisfaction(tpl);
  tpl = replace_all(tpl, "{max_reasons}", std::to_string(max_reasons));
  return replace_all(tpl, "{conversation}", conversation_text);
}

// Rubric-summarization prompt. `examples_block` already holds the batch
// patterns (and any carried-over rubric lines) formatted by the caller.
inline std::string summarization_prompt_text(const std::string& examples_block, int n,
                                             Polarity polarity) {
  if (n < 1) fail(ErrorKind::InvalidConfig, "rubric size must be >= 1");
  std::string tpl = prompt_detail::kSummarizationTemplate;
  if (polarity == Polarity::Dsat) tpl = swap_to_dissatisfaction(tpl);
  tpl = replace_all(tpl, "{num_rubric}", std::to_string(n));
  return replace_all(tpl, "{examples}", examples_block);
}

// Scoring prompt over both rubric tables. The three sentences that state a
// rubric size hold a single count when the rubrics match in size and are
// reworded when they differ, so the prompt never lies about the table shape.
inline std::string scoring_prompt_text(const std::string& sat_rubric_rows,
                                       const std::string& dsat_rubric_rows, int n_sat,
                                       int n_dsat, const std::string& conversation_text) {
  if (n_sat < 1 || n_dsat < 1) {
    fail(ErrorKind::InvalidConfig, "both rubrics must be non-empty");
  }
  std::string criteria_line;
  std::string table_line;
  std::string answer_all_line;
  if (n_sat == n_dsat) {
    const std::string n = std::to_string(n_sat);
    criteria_line = "- Each rubric contains " + n + " criteria.";
    table_line = "- Each rubric is formatted in a table format with " + n +
                 " rows and two columns: Index|Y/N Question.";
    answer_all_line = "- You *MUST* output your answers to all " + n +
                      " questions provided in each rubric.";
  } else {
    criteria_line = "- The satisfaction rubric contains " + std::to_string(n_sat) +
                    " criteria and the dissatisfaction rubric contains " +
                    std::to_string(n_dsat) + " criteria.";
    table_line =
        "- Each rubric is formatted in a table format with two columns: Index|Y/N "
        "Question.";
    answer_all_line =
        "- You *MUST* output your answers to all questions provided in each rubric.";
  }
  std::string tpl = prompt_detail::kScoringTemplate;
  tpl = replace_all(tpl, "{criteria_count_line}", criteria_line);
  tpl = replace_all(tpl, "{table_format_line}", table_line);
  tpl = replace_all(tpl, "{answer_all_line}", answer_all_line);
  tpl = replace_all(tpl, "{sat_rubric}", sat_rubric_rows);
  tpl = replace_all(tpl, "{dsat_rubric}", dsat_rubric_rows);
  tpl = replace_all(tpl, "{n_sat}", std::to_string(n_sat));
  tpl = replace_all(tpl, "{n_dsat}", std::to_string(n_dsat));
  return replace_all(tpl, "{conversation}", conversation_text);
}

}  // namespace spur
