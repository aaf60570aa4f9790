#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "spur/corpus.hpp"
#include "spur/errors.hpp"
#include "spur/gateway.hpp"
#include "spur/prompts.hpp"
#include "spur/rubric.hpp"
#include "spur/util.hpp"

namespace spur {

enum class Decision { Yes, No };

struct ItemScore {
  int rubric_index = 0;  // 1-based
  Decision decision = Decision::No;
  int score = 0;  // 0 iff No, 1..10 iff Yes
};

struct ScoreCard {
  std::string conversation_id;
  std::vector<ItemScore> sat_items;
  std::vector<ItemScore> dsat_items;
  int aggregate = 0;
  SatLabel predicted = SatLabel::Neutral;
};

inline std::string rubric_table_rows(const Rubric& rubric, char prefix) {
  std::string rows;
  for (const auto& item : rubric.items) {
    rows += prefix + std::to_string(item.index) + "|";
    if (item.keyword.has_value() && !item.keyword->empty()) {
      rows += *item.keyword + ": ";
    }
    rows += item.description + "\n";
  }
  if (!rows.empty()) rows.pop_back();
  return rows;
}

inline PromptRequest build_scoring_prompt(const Conversation& conversation,
                                          const Rubric& sat, const Rubric& dsat,
                                          PromptOptions options = {}) {
  if (sat.items.empty() || dsat.items.empty()) {
    fail(ErrorKind::InvalidConfig, "scoring needs non-empty sat and dsat rubrics");
  }
  validate_conversation(conversation);
  PromptRequest req;
  req.user_text = scoring_prompt_text(
      rubric_table_rows(sat, 'S'), rubric_table_rows(dsat, 'D'),
      static_cast<int>(sat.items.size()), static_cast<int>(dsat.items.size()),
      serialize_conversation(conversation));
  req.temperature = options.temperature;
  req.max_output_tokens = options.max_output_tokens;
  req.model_tag = options.model_tag;
  return req;
}

// Canonical answer block, one `S<i>|Y|<score>` line per item, S rows then D
// rows. parse_item_answers reads this form back unchanged.
inline std::string format_item_answers(const std::vector<ItemScore>& sat_items,
                                       const std::vector<ItemScore>& dsat_items) {
  std::string out;
  auto emit = [&](char prefix, const std::vector<ItemScore>& items) {
    for (const auto& item : items) {
      out += prefix + std::to_string(item.rubric_index) + "|";
      out += item.decision == Decision::Yes ? "Y|" : "N|";
      out += std::to_string(item.score);
      out += '\n';
    }
  };
  emit('S', sat_items);
  emit('D', dsat_items);
  if (!out.empty()) out.pop_back();
  return out;
}

namespace scoring_detail {

struct ParsedAnswer {
  char prefix = 0;  // 'S' or 'D'
  int index = 0;
  Decision decision = Decision::No;
  int score = 0;
  bool has_score = false;
};

// Accepts the directive form "S1|Y|7" plus drift like "S1: Y, 7",
// "D2 - N 0", or "S3|N". Returns nullopt for lines that do not look like
// answers at all (prose, headers); throws only for answer-shaped lines
// that cannot be understood.
inline std::optional<ParsedAnswer> parse_answer_line(const std::string& raw) {
  const std::string line = trim(raw);
  if (line.size() < 2) return std::nullopt;
  ParsedAnswer ans;
  const char head = static_cast<char>(std::toupper(static_cast<unsigned char>(line[0])));
  if (head != 'S' && head != 'D') return std::nullopt;
  std::size_t pos = 1;
  std::size_t digits = 0;
  while (pos + digits < line.size() &&
         std::isdigit(static_cast<unsigned char>(line[pos + digits]))) {
    ++digits;
  }
  if (digits == 0) return std::nullopt;
  ans.prefix = head;
  ans.index = std::stoi(line.substr(pos, digits));
  pos += digits;

  auto skip_separators = [&]() {
    while (pos < line.size()) {
      const char c = line[pos];
      if (c == '|' || c == ':' || c == ',' || c == '-' || c == ' ' || c == '\t' ||
          c == '.' || c == ')') {
        ++pos;
      } else {
        break;
      }
    }
  };
  skip_separators();
  if (pos >= line.size()) return std::nullopt;

  std::string word;
  while (pos < line.size() && std::isalpha(static_cast<unsigned char>(line[pos]))) {
    word += static_cast<char>(std::toupper(static_cast<unsigned char>(line[pos])));
    ++pos;
  }
  if (word == "Y" || word == "YES") {
    ans.decision = Decision::Yes;
  } else if (word == "N" || word == "NO") {
    ans.decision = Decision::No;
  } else {
    fail(ErrorKind::UnparsableAnswer, "cannot read decision in line: " + raw);
  }

  skip_separators();
  digits = 0;
  while (pos + digits < line.size() &&
         std::isdigit(static_cast<unsigned char>(line[pos + digits]))) {
    ++digits;
  }
  if (digits > 0) {
    ans.score = std::stoi(line.substr(pos, digits));
    ans.has_score = true;
    pos += digits;
  }
  return ans;
}

}  // namespace scoring_detail

// Reads per-item answers for both rubrics out of a completion. Invariants
// are enforced by coercion, not rejection: No forces score 0, Yes clamps the
// score into 1..10; each coercion logs a warning. A rubric item that never
// receives an answer is an error since a silent default would bias R.
inline std::pair<std::vector<ItemScore>, std::vector<ItemScore>> parse_item_answers(
    const CompletionText& completion, int n_sat, int n_dsat,
    WarningLog* warnings = nullptr) {
  if (n_sat < 1 || n_dsat < 1) {
    fail(ErrorKind::InvalidConfig, "rubric sizes must be >= 1");
  }
  std::vector<std::optional<ItemScore>> sat(static_cast<std::size_t>(n_sat));
  std::vector<std::optional<ItemScore>> dsat(static_cast<std::size_t>(n_dsat));

  for (const std::string& line : split_lines(completion.text)) {
    auto parsed = scoring_detail::parse_answer_line(line);
    if (!parsed.has_value()) continue;
    auto& slots = parsed->prefix == 'S' ? sat : dsat;
    const int limit = parsed->prefix == 'S' ? n_sat : n_dsat;
    if (parsed->index < 1 || parsed->index > limit) {
      warn(warnings, "ignoring answer for out-of-range item " +
                         std::string(1, parsed->prefix) + std::to_string(parsed->index));
      continue;
    }
    auto& slot = slots[static_cast<std::size_t>(parsed->index) - 1];
    if (slot.has_value()) {
      warn(warnings, "duplicate answer for item " + std::string(1, parsed->prefix) +
                         std::to_string(parsed->index) + "; keeping the first");
      continue;
    }
    ItemScore item;
    item.rubric_index = parsed->index;
    item.decision = parsed->decision;
    item.score = parsed->has_score ? parsed->score : 0;
    const std::string tag = std::string(1, parsed->prefix) + std::to_string(parsed->index);
    if (item.decision == Decision::No && item.score != 0) {
      warn(warnings, tag + ": N answers score 0, coercing from " +
                         std::to_string(item.score));
      item.score = 0;
    } else if (item.decision == Decision::Yes && item.score < 1) {
      warn(warnings, tag + ": Y answers score at least 1, coercing from " +
                         std::to_string(item.score));
      item.score = 1;
    } else if (item.decision == Decision::Yes && item.score > 10) {
      warn(warnings, tag + ": Y answers score at most 10, clamping from " +
                         std::to_string(item.score));
      item.score = 10;
    }
    slot = item;
  }

  auto collect = [](const std::vector<std::optional<ItemScore>>& slots, char prefix) {
    std::vector<ItemScore> items;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (!slots[i].has_value()) {
        fail(ErrorKind::MissingItem,
             "no answer for item " + std::string(1, prefix) + std::to_string(i + 1) +
                 " (" + (prefix == 'S' ? "sat" : "dsat") + ")");
      }
      items.push_back(*slots[i]);
    }
    return items;
  };
  return {collect(sat, 'S'), collect(dsat, 'D')};
}

// R = sum of sat scores minus sum of dsat scores.
inline int aggregate_score(const std::vector<ItemScore>& sat_items,
                           const std::vector<ItemScore>& dsat_items) {
  int total = 0;
  for (const auto& item : sat_items) total += item.score;
  for (const auto& item : dsat_items) total -= item.score;
  return total;
}

// Sign rule with a configurable dead zone: |R| <= band reads as Neutral.
inline SatLabel decide_label(int aggregate, int neutral_band = 0) {
  if (neutral_band < 0) fail(ErrorKind::InvalidConfig, "neutral_band must be >= 0");
  if (aggregate > neutral_band) return SatLabel::Sat;
  if (aggregate < -neutral_band) return SatLabel::Dsat;
  return SatLabel::Neutral;
}

struct ScoreRun {
  std::vector<ScoreCard> cards;
  std::vector<std::string> skipped_ids;
  std::string sat_rubric_digest;
  std::string dsat_rubric_digest;
  int neutral_band = 0;
};

// Stage 3 over a corpus: one ScoreCard per conversation in corpus order.
// Failures follow the same skip/fail policy as extraction.
inline ScoreRun score_corpus(CompletionClient& client, const Corpus& test,
                             const Rubric& sat, const Rubric& dsat, int neutral_band = 0,
                             OnError on_error = OnError::Fail,
                             WarningLog* warnings = nullptr, PromptOptions options = {}) {
  if (neutral_band < 0) fail(ErrorKind::InvalidConfig, "neutral_band must be >= 0");
  ScoreRun run;
  run.sat_rubric_digest = rubric_digest(sat);
  run.dsat_rubric_digest = rubric_digest(dsat);
  run.neutral_band = neutral_band;
  if (test.conversations.empty()) return run;

  const int n_sat = static_cast<int>(sat.items.size());
  const int n_dsat = static_cast<int>(dsat.items.size());
  auto results = parallel_map<ScoreCard>(
      test.conversations.size(), client.config().max_in_flight, [&](std::size_t i) {
        const Conversation& conv = test.conversations[i];
        const PromptRequest req = build_scoring_prompt(conv, sat, dsat, options);
        const CompletionText completion = client.cached_complete(req);
        auto [sat_items, dsat_items] =
            parse_item_answers(completion, n_sat, n_dsat, warnings);
        ScoreCard card;
        card.conversation_id = conv.id;
        card.sat_items = std::move(sat_items);
        card.dsat_items = std::move(dsat_items);
        card.aggregate = aggregate_score(card.sat_items, card.dsat_items);
        card.predicted = decide_label(card.aggregate, neutral_band);
        return card;
      });

  for (std::size_t i = 0; i < results.size(); ++i) {
    if (results[i].error) {
      if (on_error == OnError::Fail) std::rethrow_exception(results[i].error);
      run.skipped_ids.push_back(test.conversations[i].id);
      try {
        std::rethrow_exception(results[i].error);
      } catch (const std::exception& e) {
        warn(warnings, "skipped conversation '" + test.conversations[i].id +
                           "': " + e.what());
      }
      continue;
    }
    run.cards.push_back(std::move(*results[i].value));
  }
  return run;
}

// ---------------------------------------------------------------------------
// persistence
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json scorecard_to_json(const ScoreCard& card) {
  auto items_json = [](const std::vector<ItemScore>& items) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& item : items) {
      arr.push_back({{"index", item.rubric_index},
                     {"decision", item.decision == Decision::Yes ? "Y" : "N"},
                     {"score", item.score}});
    }
    return arr;
  };
  nlohmann::ordered_json j;
  j["conversation_id"] = card.conversation_id;
  j["sat_items"] = items_json(card.sat_items);
  j["dsat_items"] = items_json(card.dsat_items);
  j["aggregate"] = card.aggregate;
  j["predicted"] = to_string(card.predicted);
  return j;
}

inline ScoreCard scorecard_from_json(const nlohmann::json& j) {
  auto items_from = [](const nlohmann::json& arr, const char* field) {
    if (!arr.is_array()) {
      fail(ErrorKind::MalformedRecord, std::string(field) + " must be an array");
    }
    std::vector<ItemScore> items;
    for (const auto& entry : arr) {
      ItemScore item;
      item.rubric_index = entry.at("index").get<int>();
      const std::string decision = entry.at("decision").get<std::string>();
      item.decision = decision == "Y" ? Decision::Yes : Decision::No;
      item.score = entry.at("score").get<int>();
      items.push_back(item);
    }
    return items;
  };
  ScoreCard card;
  card.conversation_id = j.at("conversation_id").get<std::string>();
  card.sat_items = items_from(j["sat_items"], "sat_items");
  card.dsat_items = items_from(j["dsat_items"], "dsat_items");
  card.aggregate = j.at("aggregate").get<int>();
  auto label = parse_sat_label(j.at("predicted").get<std::string>());
  if (!label.has_value()) fail(ErrorKind::MalformedRecord, "unknown predicted label");
  card.predicted = *label;
  return card;
}

inline void save_score_run(const ScoreRun& run, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write scorecard file " + path.string());
  nlohmann::ordered_json manifest;
  manifest["record"] = "manifest";
  manifest["sat_rubric_digest"] = run.sat_rubric_digest;
  manifest["dsat_rubric_digest"] = run.dsat_rubric_digest;
  manifest["neutral_band"] = run.neutral_band;
  manifest["card_count"] = run.cards.size();
  manifest["skipped_ids"] = run.skipped_ids;
  out << manifest.dump() << '\n';
  for (const auto& card : run.cards) {
    out << scorecard_to_json(card).dump() << '\n';
  }
  if (!out) fail(ErrorKind::IoError, "failed writing scorecard file " + path.string());
}

inline ScoreRun load_score_run(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open scorecard file " + path.string());
  ScoreRun run;
  std::string line;
  std::size_t line_number = 0;
  bool saw_manifest = false;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      fail(ErrorKind::MalformedRecord,
           "line " + std::to_string(line_number) + ": invalid JSON");
    }
    if (!saw_manifest) {
      if (!j.contains("record") || j["record"] != "manifest") {
        fail(ErrorKind::MalformedRecord,
             "scorecard file must start with a manifest record");
      }
      run.sat_rubric_digest = j.value("sat_rubric_digest", "");
      run.dsat_rubric_digest = j.value("dsat_rubric_digest", "");
      run.neutral_band = j.value("neutral_band", 0);
      if (j.contains("skipped_ids") && j["skipped_ids"].is_array()) {
        for (const auto& id : j["skipped_ids"]) {
          run.skipped_ids.push_back(id.get<std::string>());
        }
      }
      saw_manifest = true;
      continue;
    }
    try {
      run.cards.push_back(scorecard_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::MalformedRecord,
           "line " + std::to_string(line_number) + ": " + e.what());
    }
  }
  if (!saw_manifest) fail(ErrorKind::EmptyFile, "no records in " + path.string());
  return run;
}

}  // namespace spur
