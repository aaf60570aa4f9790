#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "spur/errors.hpp"
#include "spur/util.hpp"

namespace spur {

enum class Role { User, Agent };
enum class SatLabel { Sat = +1, Dsat = -1, Neutral = 0 };
enum class Click { Like, Dislike };

inline const char* to_string(Role r) { return r == Role::User ? "user" : "agent"; }
inline const char* to_string(SatLabel l) {
  switch (l) {
    case SatLabel::Sat: return "sat";
    case SatLabel::Dsat: return "dsat";
    case SatLabel::Neutral: return "neutral";
  }
  return "neutral";
}
inline const char* to_string(Click c) { return c == Click::Like ? "like" : "dislike"; }

inline std::optional<SatLabel> parse_sat_label(std::string_view s) {
  if (s == "sat") return SatLabel::Sat;
  if (s == "dsat") return SatLabel::Dsat;
  if (s == "neutral") return SatLabel::Neutral;
  return std::nullopt;
}

inline std::optional<Click> parse_click(std::string_view s) {
  if (s == "like") return Click::Like;
  if (s == "dislike") return Click::Dislike;
  return std::nullopt;
}

struct Turn {
  Role role;
  std::string text;
};

// One user/agent session. `label` is the gold conversation-level satisfaction
// label; `click` is explicit like/dislike feedback, kept separate because the
// analyses treat it as an independent signal. `turn_labels` (one per user
// turn) appear in open datasets that annotate satisfaction per exchange.
struct Conversation {
  std::string id;
  std::vector<Turn> turns;
  std::optional<SatLabel> label;
  std::optional<Click> click;
  std::optional<std::vector<SatLabel>> turn_labels;

  std::size_t user_turn_count() const {
    std::size_t n = 0;
    for (const auto& t : turns) {
      if (t.role == Role::User) ++n;
    }
    return n;
  }
};

struct Corpus {
  std::vector<Conversation> conversations;
  std::string source_name;

  std::size_t size() const { return conversations.size(); }
};

struct LabelCounts {
  std::size_t sat = 0;
  std::size_t dsat = 0;
  std::size_t neutral = 0;
  std::size_t unlabeled = 0;
};

inline LabelCounts label_counts(const Corpus& corpus) {
  LabelCounts counts;
  for (const auto& c : corpus.conversations) {
    if (!c.label.has_value()) {
      ++counts.unlabeled;
    } else if (*c.label == SatLabel::Sat) {
      ++counts.sat;
    } else if (*c.label == SatLabel::Dsat) {
      ++counts.dsat;
    } else {
      ++counts.neutral;
    }
  }
  return counts;
}

// Throws MalformedRecord when a conversation violates its invariants.
inline void validate_conversation(const Conversation& conv) {
  if (conv.id.empty()) fail(ErrorKind::MalformedRecord, "conversation id is empty");
  if (conv.turns.empty()) {
    fail(ErrorKind::MalformedRecord, "conversation '" + conv.id + "' has zero turns");
  }
  std::size_t user_turns = 0;
  for (const auto& t : conv.turns) {
    if (trim(t.text).empty()) {
      fail(ErrorKind::MalformedRecord,
           "conversation '" + conv.id + "' has a turn with empty text");
    }
    if (t.role == Role::User) ++user_turns;
  }
  if (user_turns == 0) {
    fail(ErrorKind::MalformedRecord,
         "conversation '" + conv.id + "' has no user turn");
  }
  if (conv.turn_labels.has_value() && conv.turn_labels->size() != user_turns) {
    fail(ErrorKind::MalformedRecord,
         "conversation '" + conv.id + "' has " + std::to_string(conv.turn_labels->size()) +
             " turn labels for " + std::to_string(user_turns) + " user turns");
  }
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json conversation_to_json(const Conversation& conv) {
  nlohmann::ordered_json record;
  record["id"] = conv.id;
  nlohmann::ordered_json turns = nlohmann::ordered_json::array();
  for (const auto& t : conv.turns) {
    turns.push_back({{"role", to_string(t.role)}, {"text", t.text}});
  }
  record["turns"] = std::move(turns);
  if (conv.label.has_value()) record["label"] = to_string(*conv.label);
  if (conv.click.has_value()) record["click"] = to_string(*conv.click);
  if (conv.turn_labels.has_value()) {
    nlohmann::ordered_json labels = nlohmann::ordered_json::array();
    for (SatLabel l : *conv.turn_labels) labels.push_back(to_string(l));
    record["turn_labels"] = std::move(labels);
  }
  return record;
}

inline Conversation conversation_from_json(const nlohmann::json& record) {
  Conversation conv;
  if (!record.is_object() || !record.contains("id") || !record["id"].is_string() ||
      !record.contains("turns") || !record["turns"].is_array()) {
    fail(ErrorKind::MalformedRecord, "record must be an object with id and turns");
  }
  conv.id = record["id"].get<std::string>();
  for (const auto& t : record["turns"]) {
    if (!t.is_object() || !t.contains("role") || !t.contains("text") ||
        !t["role"].is_string() || !t["text"].is_string()) {
      fail(ErrorKind::MalformedRecord,
           "turn must be an object with string role and text");
    }
    const std::string role = t["role"].get<std::string>();
    if (role != "user" && role != "agent") {
      fail(ErrorKind::MalformedRecord, "unknown turn role '" + role + "'");
    }
    conv.turns.push_back(Turn{role == "user" ? Role::User : Role::Agent,
                              t["text"].get<std::string>()});
  }
  if (record.contains("label")) {
    if (!record["label"].is_string()) {
      fail(ErrorKind::MalformedRecord, "label must be a string");
    }
    auto l = parse_sat_label(record["label"].get<std::string>());
    if (!l.has_value()) {
      fail(ErrorKind::MalformedRecord,
           "unknown label '" + record["label"].get<std::string>() + "'");
    }
    conv.label = *l;
  }
  if (record.contains("click")) {
    if (!record["click"].is_string()) {
      fail(ErrorKind::MalformedRecord, "click must be a string");
    }
    auto c = parse_click(record["click"].get<std::string>());
    if (!c.has_value()) {
      fail(ErrorKind::MalformedRecord,
           "unknown click '" + record["click"].get<std::string>() + "'");
    }
    conv.click = *c;
  }
  if (record.contains("turn_labels")) {
    if (!record["turn_labels"].is_array()) {
      fail(ErrorKind::MalformedRecord, "turn_labels must be an array");
    }
    std::vector<SatLabel> labels;
    for (const auto& l : record["turn_labels"]) {
      if (!l.is_string()) fail(ErrorKind::MalformedRecord, "turn label must be a string");
      auto parsed = parse_sat_label(l.get<std::string>());
      if (!parsed.has_value()) {
        fail(ErrorKind::MalformedRecord,
             "unknown turn label '" + l.get<std::string>() + "'");
      }
      labels.push_back(*parsed);
    }
    conv.turn_labels = std::move(labels);
  }
  validate_conversation(conv);
  return conv;
}

// Loads a line-delimited corpus file (one conversation per line, UTF-8).
// Malformed lines fail with their 1-based line number; blank lines are
// tolerated so trailing newlines do not count as records.
inline Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open corpus file " + path.string());
  Corpus corpus;
  corpus.source_name = path.filename().string();
  std::set<std::string> seen_ids;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    nlohmann::json record = nlohmann::json::parse(line, nullptr, false);
    if (record.is_discarded()) {
      fail(ErrorKind::MalformedRecord,
           "line " + std::to_string(line_number) + ": invalid JSON");
    }
    Conversation conv;
    try {
      conv = conversation_from_json(record);
    } catch (const SpurError& e) {
      fail(ErrorKind::MalformedRecord,
           "line " + std::to_string(line_number) + ": " + e.what());
    }
    if (!seen_ids.insert(conv.id).second) {
      fail(ErrorKind::DuplicateId,
           "line " + std::to_string(line_number) + ": duplicate conversation id '" +
               conv.id + "'");
    }
    corpus.conversations.push_back(std::move(conv));
  }
  if (corpus.conversations.empty()) {
    fail(ErrorKind::EmptyFile, "no conversation records in " + path.string());
  }
  return corpus;
}

inline void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write corpus file " + path.string());
  for (const auto& conv : corpus.conversations) {
    out << conversation_to_json(conv).dump() << '\n';
  }
  if (!out) fail(ErrorKind::IoError, "failed writing corpus file " + path.string());
}

// ---------------------------------------------------------------------------
// turn-label collapsing
// ---------------------------------------------------------------------------

// Collapses per-turn satisfaction labels into one conversation label:
//   only neutral and sat   -> sat
//   only neutral and dsat  -> dsat
//   only neutral           -> neutral
//   both sat and dsat      -> first non-neutral label from the start
inline SatLabel collapse_turn_labels(const std::vector<SatLabel>& turn_labels) {
  if (turn_labels.empty()) {
    fail(ErrorKind::EmptyLabelList, "cannot collapse an empty turn-label list");
  }
  bool has_sat = false;
  bool has_dsat = false;
  for (SatLabel l : turn_labels) {
    has_sat = has_sat || l == SatLabel::Sat;
    has_dsat = has_dsat || l == SatLabel::Dsat;
  }
  if (has_sat && has_dsat) {
    for (SatLabel l : turn_labels) {
      if (l != SatLabel::Neutral) return l;
    }
  }
  if (has_sat) return SatLabel::Sat;
  if (has_dsat) return SatLabel::Dsat;
  return SatLabel::Neutral;
}

// Fills in conversation labels from turn labels wherever turn labels exist.
// Conversations that already carry a label keep it unless overwrite is set.
inline Corpus collapse_corpus_labels(Corpus corpus, bool overwrite = false) {
  for (auto& conv : corpus.conversations) {
    if (conv.turn_labels.has_value() && (overwrite || !conv.label.has_value())) {
      conv.label = collapse_turn_labels(*conv.turn_labels);
    }
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// splitting
// ---------------------------------------------------------------------------

struct SplitOptions {
  bool stratified = false;
};

// Deterministic train/test split: a seeded uniform permutation picks
// ceil(train_fraction * N) conversations for the train side; both sides keep
// corpus order. Warns (but does not fail) when the train side carries fewer
// than 10 sat or 10 dsat conversations, the minimum rubric learning wants.
inline std::pair<Corpus, Corpus> split_train_test(const Corpus& corpus,
                                                  double train_fraction,
                                                  std::uint32_t seed,
                                                  SplitOptions options = {},
                                                  WarningLog* warnings = nullptr) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    fail(ErrorKind::InvalidConfig, "train_fraction must lie in (0,1)");
  }
  const std::size_t n = corpus.conversations.size();
  if (n < 2) {
    fail(ErrorKind::InsufficientData,
         "need at least 2 conversations to split, have " + std::to_string(n));
  }

  std::vector<bool> in_train(n, false);
  std::mt19937 rng(seed);
  auto mark_train = [&](const std::vector<std::size_t>& pool, double fraction) {
    const auto take = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(pool.size())));
    std::vector<std::size_t> perm = random_permutation(pool.size(), rng);
    for (std::size_t i = 0; i < take && i < pool.size(); ++i) {
      in_train[pool[perm[i]]] = true;
    }
  };

  if (options.stratified) {
    std::map<int, std::vector<std::size_t>> buckets;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& label = corpus.conversations[i].label;
      buckets[label.has_value() ? static_cast<int>(*label) : 99].push_back(i);
    }
    for (const auto& [key, bucket] : buckets) mark_train(bucket, train_fraction);
  } else {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    mark_train(all, train_fraction);
  }

  Corpus train, test;
  train.source_name = corpus.source_name + "/train";
  test.source_name = corpus.source_name + "/test";
  for (std::size_t i = 0; i < n; ++i) {
    (in_train[i] ? train : test).conversations.push_back(corpus.conversations[i]);
  }

  const LabelCounts counts = label_counts(train);
  if (counts.sat < 10 || counts.dsat < 10) {
    warn(warnings, "train split has " + std::to_string(counts.sat) + " sat and " +
                       std::to_string(counts.dsat) +
                       " dsat conversations; rubric learning wants at least 10 of each");
  }
  return {std::move(train), std::move(test)};
}

}  // namespace spur
