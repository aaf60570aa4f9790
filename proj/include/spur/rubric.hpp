#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "spur/digest.hpp"
#include "spur/errors.hpp"
#include "spur/extraction.hpp"
#include "spur/gateway.hpp"
#include "spur/prompts.hpp"
#include "spur/util.hpp"

namespace spur {

struct RubricItem {
  int index = 0;  // 1-based
  std::string description;
  std::optional<std::string> keyword;

  // Reporting label: the keyword tag when present, else a stub of the text.
  std::string display_name() const {
    if (keyword.has_value() && !keyword->empty()) return *keyword;
    std::vector<std::string> words;
    std::string word;
    for (char c : description) {
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!word.empty()) words.push_back(std::move(word));
        word.clear();
        if (words.size() == 4) break;
      } else {
        word += c;
      }
    }
    if (!word.empty() && words.size() < 4) words.push_back(std::move(word));
    std::string name;
    for (const auto& w : words) {
      if (!name.empty()) name += ' ';
      name += w;
    }
    return name;
  }
};

struct RubricProvenance {
  int n = 10;
  int batch_size = 100;
  int num_batches = 0;
  std::string model_tag;
  std::string pattern_set_digest;
};

struct Rubric {
  Polarity polarity = Polarity::Sat;
  std::vector<RubricItem> items;
  RubricProvenance provenance;

  std::size_t size() const { return items.size(); }
};

struct Batch {
  std::vector<Pattern> patterns;
  int ordinal = 0;  // 1-based
};

// Partitions the pattern set in order into ceil(N / batch_size) batches;
// only the last batch may be short.
inline std::vector<Batch> batch_patterns(const PatternSet& set, int batch_size = 100) {
  if (batch_size < 1) fail(ErrorKind::InvalidConfig, "batch_size must be >= 1");
  if (set.patterns.empty()) {
    fail(ErrorKind::EmptyPatternSet, "cannot batch an empty pattern set");
  }
  std::vector<Batch> batches;
  const std::size_t n = set.patterns.size();
  const std::size_t step = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < n; start += step) {
    Batch batch;
    batch.ordinal = static_cast<int>(batches.size()) + 1;
    const std::size_t end = std::min(n, start + step);
    batch.patterns.assign(set.patterns.begin() + static_cast<std::ptrdiff_t>(start),
                          set.patterns.begin() + static_cast<std::ptrdiff_t>(end));
    batches.push_back(std::move(batch));
  }
  return batches;
}

// The examples section feeds the batch's patterns as bullets; when a rubric
// from the previous batch exists its numbered items follow the bullets, so
// each iteration refines rather than restarts the rubric.
inline std::string summarization_examples_block(const Batch& batch,
                                                const std::optional<Rubric>& previous) {
  std::string block;
  for (const auto& pattern : batch.patterns) {
    block += "- " + pattern.text + "\n";
  }
  if (previous.has_value()) {
    for (const auto& item : previous->items) {
      block += std::to_string(item.index) + ". ";
      if (item.keyword.has_value() && !item.keyword->empty()) {
        block += *item.keyword + ": ";
      }
      block += item.description + "\n";
    }
  }
  if (!block.empty()) block.pop_back();
  return block;
}

inline PromptRequest build_summarization_prompt(const Batch& batch,
                                                const std::optional<Rubric>& previous,
                                                int n, Polarity polarity,
                                                PromptOptions options = {}) {
  if (n < 1) fail(ErrorKind::InvalidConfig, "rubric size must be >= 1");
  PromptRequest req;
  req.user_text =
      summarization_prompt_text(summarization_examples_block(batch, previous), n, polarity);
  req.temperature = options.temperature;
  req.max_output_tokens = options.max_output_tokens;
  req.model_tag = options.model_tag;
  return req;
}

// Splits "Keyword: rest" when the prefix looks like a short tag rather than
// a sentence. Bold markers around the tag are stripped.
inline void split_keyword(const std::string& text, RubricItem& item) {
  const std::size_t colon = text.find(": ");
  if (colon != std::string::npos && colon > 0 && colon <= 48 &&
      text.substr(0, colon).find('.') == std::string::npos) {
    std::string keyword = trim(text.substr(0, colon));
    while (!keyword.empty() && (keyword.front() == '*' || keyword.front() == '_')) {
      keyword.erase(keyword.begin());
    }
    while (!keyword.empty() && (keyword.back() == '*' || keyword.back() == '_')) {
      keyword.pop_back();
    }
    const std::string rest = trim(text.substr(colon + 2));
    if (!keyword.empty() && !rest.empty()) {
      item.keyword = keyword;
      item.description = rest;
      return;
    }
  }
  item.description = text;
}

// Parses the first <Rubric>...</Rubric> block into numbered items. Lines
// beyond n are dropped with a warning; surviving items are reindexed 1..m.
inline Rubric parse_rubric(const CompletionText& completion, int n, Polarity polarity,
                           WarningLog* warnings = nullptr) {
  if (trim(completion.text).empty()) {
    fail(ErrorKind::EmptyCompletion, "provider returned an empty completion");
  }
  const std::string open_tag = "<Rubric>";
  const std::string close_tag = "</Rubric>";
  const std::size_t open = completion.text.find(open_tag);
  const std::size_t close =
      open == std::string::npos ? std::string::npos
                                : completion.text.find(close_tag, open + open_tag.size());
  if (open == std::string::npos || close == std::string::npos) {
    fail(ErrorKind::MissingRubricTags, "no <Rubric></Rubric> pair in completion");
  }
  const std::string body =
      completion.text.substr(open + open_tag.size(), close - open - open_tag.size());

  Rubric rubric;
  rubric.polarity = polarity;
  rubric.provenance.n = n;
  for (const std::string& raw : split_lines(body)) {
    const std::string line = trim(raw);
    if (line.empty()) continue;
    std::size_t digits = 0;
    while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits]))) {
      ++digits;
    }
    if (digits > 0 && digits < line.size() && (line[digits] == '.' || line[digits] == ')')) {
      const std::string text = trim(line.substr(digits + 1));
      if (text.empty()) continue;
      RubricItem item;
      item.index = static_cast<int>(rubric.items.size()) + 1;
      split_keyword(text, item);
      rubric.items.push_back(std::move(item));
    } else if (!rubric.items.empty()) {
      rubric.items.back().description += " " + line;
    }
  }
  if (rubric.items.empty()) {
    fail(ErrorKind::NoNumberedItems, "rubric block has no numbered items");
  }
  if (rubric.items.size() > static_cast<std::size_t>(n)) {
    warn(warnings, "rubric block listed " + std::to_string(rubric.items.size()) +
                       " items; keeping the first " + std::to_string(n));
    rubric.items.resize(static_cast<std::size_t>(n));
  }
  return rubric;
}

// ---------------------------------------------------------------------------
// rubric persistence
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json rubric_to_json(const Rubric& rubric) {
  nlohmann::ordered_json j;
  j["polarity"] = to_string(rubric.polarity);
  nlohmann::ordered_json items = nlohmann::ordered_json::array();
  for (const auto& item : rubric.items) {
    nlohmann::ordered_json entry;
    entry["index"] = item.index;
    entry["keyword"] = item.keyword.has_value() ? nlohmann::ordered_json(*item.keyword)
                                                : nlohmann::ordered_json(nullptr);
    entry["description"] = item.description;
    items.push_back(std::move(entry));
  }
  j["items"] = std::move(items);
  nlohmann::ordered_json prov;
  prov["n"] = rubric.provenance.n;
  prov["batch_size"] = rubric.provenance.batch_size;
  prov["num_batches"] = rubric.provenance.num_batches;
  prov["model_tag"] = rubric.provenance.model_tag;
  prov["pattern_set_digest"] = rubric.provenance.pattern_set_digest;
  j["provenance"] = std::move(prov);
  return j;
}

inline Rubric rubric_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("polarity") || !j.contains("items") ||
      !j["items"].is_array()) {
    fail(ErrorKind::MalformedRecord, "rubric document must carry polarity and items");
  }
  Rubric rubric;
  auto polarity = parse_polarity(j["polarity"].get<std::string>());
  if (!polarity.has_value()) fail(ErrorKind::MalformedRecord, "unknown rubric polarity");
  rubric.polarity = *polarity;
  for (const auto& entry : j["items"]) {
    if (!entry.contains("index") || !entry.contains("description")) {
      fail(ErrorKind::MalformedRecord, "rubric item needs index and description");
    }
    RubricItem item;
    item.index = entry["index"].get<int>();
    item.description = entry["description"].get<std::string>();
    if (entry.contains("keyword") && entry["keyword"].is_string()) {
      item.keyword = entry["keyword"].get<std::string>();
    }
    if (item.description.empty()) {
      fail(ErrorKind::MalformedRecord, "rubric item description is empty");
    }
    rubric.items.push_back(std::move(item));
  }
  if (rubric.items.empty()) fail(ErrorKind::MalformedRecord, "rubric has no items");
  for (std::size_t i = 0; i < rubric.items.size(); ++i) {
    if (rubric.items[i].index != static_cast<int>(i) + 1) {
      fail(ErrorKind::MalformedRecord, "rubric indices must run 1..size");
    }
  }
  if (j.contains("provenance") && j["provenance"].is_object()) {
    const auto& prov = j["provenance"];
    if (prov.contains("n")) rubric.provenance.n = prov["n"].get<int>();
    if (prov.contains("batch_size")) {
      rubric.provenance.batch_size = prov["batch_size"].get<int>();
    }
    if (prov.contains("num_batches")) {
      rubric.provenance.num_batches = prov["num_batches"].get<int>();
    }
    if (prov.contains("model_tag")) {
      rubric.provenance.model_tag = prov["model_tag"].get<std::string>();
    }
    if (prov.contains("pattern_set_digest")) {
      rubric.provenance.pattern_set_digest = prov["pattern_set_digest"].get<std::string>();
    }
  }
  return rubric;
}

inline void save_rubric(const Rubric& rubric, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write rubric file " + path.string());
  out << rubric_to_json(rubric).dump(2) << '\n';
  if (!out) fail(ErrorKind::IoError, "failed writing rubric file " + path.string());
}

inline Rubric load_rubric(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open rubric file " + path.string());
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) {
    fail(ErrorKind::MalformedRecord, "rubric file is not valid JSON: " + path.string());
  }
  return rubric_from_json(j);
}

inline std::string rubric_digest(const Rubric& rubric) {
  return sha256_hex(rubric_to_json(rubric).dump());
}

// ---------------------------------------------------------------------------
// the summarization loop
// ---------------------------------------------------------------------------

struct SummarizeOptions {
  PromptOptions prompt;
  // When set, rubric_batch_NNNN.json checkpoints land here after every batch
  // and `resume` picks up after the newest one.
  std::optional<std::filesystem::path> persist_dir;
  bool resume = false;
  std::optional<std::uint32_t> shuffle_seed;
};

namespace rubric_detail {

inline std::filesystem::path checkpoint_path(const std::filesystem::path& dir,
                                             Polarity polarity, int ordinal) {
  char name[64];
  std::snprintf(name, sizeof(name), "rubric_%s_batch_%04d.json", to_string(polarity),
                ordinal);
  return dir / name;
}

}  // namespace rubric_detail

// Stage 2: strictly sequential minibatch refinement. Batch b's prompt embeds
// the rubric parsed from batch b-1, so batches can never be issued out of
// order; the loop's last output is the final rubric.
inline Rubric summarize_rubric(CompletionClient& client, const PatternSet& set,
                               int n = 10, int batch_size = 100,
                               SummarizeOptions options = {},
                               WarningLog* warnings = nullptr) {
  if (n < 1) fail(ErrorKind::InvalidConfig, "rubric size must be >= 1");

  PatternSet working = set;
  if (options.shuffle_seed.has_value()) {
    std::mt19937 rng(*options.shuffle_seed);
    const auto perm = random_permutation(set.patterns.size(), rng);
    for (std::size_t i = 0; i < perm.size(); ++i) {
      working.patterns[i] = set.patterns[perm[i]];
    }
  }
  const std::vector<Batch> batches = batch_patterns(working, batch_size);

  std::optional<Rubric> previous;
  int start_ordinal = 1;
  if (options.resume && options.persist_dir.has_value()) {
    for (int b = static_cast<int>(batches.size()); b >= 1; --b) {
      const auto path = rubric_detail::checkpoint_path(*options.persist_dir, set.polarity, b);
      if (std::filesystem::exists(path)) {
        previous = load_rubric(path);
        start_ordinal = b + 1;
        break;
      }
    }
  }
  if (options.persist_dir.has_value()) {
    std::filesystem::create_directories(*options.persist_dir);
  }

  const std::string set_digest = pattern_set_digest(set);
  Rubric current = previous.value_or(Rubric{});
  for (std::size_t i = static_cast<std::size_t>(start_ordinal) - 1; i < batches.size(); ++i) {
    const Batch& batch = batches[i];
    try {
      const PromptRequest req =
          build_summarization_prompt(batch, previous, n, set.polarity, options.prompt);
      const CompletionText completion = client.cached_complete(req);
      current = parse_rubric(completion, n, set.polarity, warnings);
    } catch (const SpurError& e) {
      fail(e.kind(), "batch " + std::to_string(batch.ordinal) + ": " + e.message());
    }
    current.provenance.n = n;
    current.provenance.batch_size = batch_size;
    current.provenance.num_batches = static_cast<int>(batches.size());
    current.provenance.model_tag = options.prompt.model_tag;
    current.provenance.pattern_set_digest = set_digest;
    if (options.persist_dir.has_value()) {
      save_rubric(current, rubric_detail::checkpoint_path(*options.persist_dir,
                                                          set.polarity, batch.ordinal));
    }
    previous = current;
  }
  if (current.items.empty()) {
    fail(ErrorKind::EmptyPatternSet, "summarization produced no rubric");
  }
  return current;
}

}  // namespace spur
