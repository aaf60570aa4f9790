#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "spur/corpus.hpp"
#include "spur/digest.hpp"
#include "spur/errors.hpp"
#include "spur/gateway.hpp"
#include "spur/prompts.hpp"
#include "spur/util.hpp"

namespace spur {

struct Pattern {
  std::string text;
  Polarity polarity;
  std::string source_conversation_id;
};

// Ordered collection of extracted patterns for one polarity. The manifest
// records how many patterns each prompted conversation contributed (0 when
// the model answered NONE); skipped ids are conversations dropped under the
// skip-on-error policy.
struct PatternSet {
  std::vector<Pattern> patterns;
  Polarity polarity = Polarity::Sat;
  std::map<std::string, int> extraction_manifest;
  std::vector<std::string> skipped_ids;

  std::size_t size() const { return patterns.size(); }
};

enum class OnError { Fail, Skip };

inline PromptRequest build_extraction_prompt(const Conversation& conversation,
                                             Polarity polarity, int k = 3,
                                             PromptOptions options = {}) {
  validate_conversation(conversation);
  PromptRequest req;
  req.user_text =
      extraction_prompt_text(serialize_conversation(conversation), polarity, k);
  req.temperature = options.temperature;
  req.max_output_tokens = options.max_output_tokens;
  req.model_tag = options.model_tag;
  return req;
}

// Pulls the bullet list out of the first <REASONS>...</REASONS> pair.
// "NONE" means no reasons. Bullets start with -, *, a unicode bullet, or a
// "1." / "1)" number; continuation lines fold into the current bullet. More
// than max_reasons bullets keeps the first max_reasons and logs a warning,
// since live models overshoot caps occasionally and the downstream
// summarization stage tolerates noisy patterns.
inline std::vector<std::string> parse_reasons(const CompletionText& completion,
                                              int max_reasons = 3,
                                              WarningLog* warnings = nullptr) {
  if (trim(completion.text).empty()) {
    fail(ErrorKind::EmptyCompletion, "provider returned an empty completion");
  }
  const std::string open_tag = "<REASONS>";
  const std::string close_tag = "</REASONS>";
  const std::size_t open = completion.text.find(open_tag);
  const std::size_t close =
      open == std::string::npos ? std::string::npos
                                : completion.text.find(close_tag, open + open_tag.size());
  if (open == std::string::npos || close == std::string::npos) {
    fail(ErrorKind::MissingReasonsTags, "no <REASONS></REASONS> pair in completion");
  }
  const std::string body = trim(
      completion.text.substr(open + open_tag.size(), close - open - open_tag.size()));
  if (normalize_text(body) == "none") return {};

  auto bullet_text = [](const std::string& line) -> std::optional<std::string> {
    std::string t = trim(line);
    if (t.rfind("- ", 0) == 0) return trim(t.substr(2));
    if (t.rfind("* ", 0) == 0) return trim(t.substr(2));
    if (t.rfind("\xE2\x80\xA2", 0) == 0) return trim(t.substr(3));
    std::size_t digits = 0;
    while (digits < t.size() && std::isdigit(static_cast<unsigned char>(t[digits]))) {
      ++digits;
    }
    if (digits > 0 && digits < t.size() && (t[digits] == '.' || t[digits] == ')')) {
      return trim(t.substr(digits + 1));
    }
    return std::nullopt;
  };

  std::vector<std::string> reasons;
  bool saw_bullet = false;
  for (const std::string& line : split_lines(body)) {
    if (trim(line).empty()) continue;
    if (auto text = bullet_text(line)) {
      saw_bullet = true;
      if (!text->empty()) reasons.push_back(*text);
    } else if (saw_bullet && !reasons.empty()) {
      reasons.back() += " " + trim(line);
    }
  }
  if (!saw_bullet) reasons.push_back(body);

  if (max_reasons > 0 && reasons.size() > static_cast<std::size_t>(max_reasons)) {
    warn(warnings, "completion listed " + std::to_string(reasons.size()) +
                       " reasons; keeping the first " + std::to_string(max_reasons));
    reasons.resize(static_cast<std::size_t>(max_reasons));
  }
  return reasons;
}

// Stage 1 over a labeled corpus: prompts every conversation whose label
// matches the polarity, in corpus order, and stitches the parsed reasons
// into one PatternSet. Requests fan out up to the gateway's in-flight cap;
// results are reassembled in corpus order so reruns are stable.
inline PatternSet extract_patterns(CompletionClient& client, const Corpus& train,
                                   Polarity polarity, int k = 3,
                                   OnError on_error = OnError::Fail,
                                   WarningLog* warnings = nullptr,
                                   PromptOptions options = {}) {
  std::vector<const Conversation*> matching;
  for (const auto& conv : train.conversations) {
    if (conv.label.has_value() && *conv.label == to_sat_label(polarity)) {
      matching.push_back(&conv);
    }
  }
  if (matching.empty()) {
    fail(ErrorKind::NoMatchingConversations,
         "no conversation labeled '" + std::string(to_string(polarity)) + "' in " +
             train.source_name);
  }

  auto results = parallel_map<std::vector<std::string>>(
      matching.size(), client.config().max_in_flight, [&](std::size_t i) {
        const PromptRequest req =
            build_extraction_prompt(*matching[i], polarity, k, options);
        return parse_reasons(client.cached_complete(req), k, warnings);
      });

  PatternSet set;
  set.polarity = polarity;
  for (std::size_t i = 0; i < matching.size(); ++i) {
    const std::string& id = matching[i]->id;
    if (results[i].error) {
      if (on_error == OnError::Fail) std::rethrow_exception(results[i].error);
      set.skipped_ids.push_back(id);
      try {
        std::rethrow_exception(results[i].error);
      } catch (const std::exception& e) {
        warn(warnings, "skipped conversation '" + id + "': " + e.what());
      }
      continue;
    }
    const auto& reasons = *results[i].value;
    set.extraction_manifest[id] = static_cast<int>(reasons.size());
    for (const auto& text : reasons) {
      set.patterns.push_back(Pattern{text, polarity, id});
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// persistence
// ---------------------------------------------------------------------------

inline std::string pattern_set_to_jsonl(const PatternSet& set) {
  nlohmann::ordered_json manifest;
  manifest["record"] = "manifest";
  manifest["polarity"] = to_string(set.polarity);
  manifest["pattern_count"] = set.patterns.size();
  nlohmann::ordered_json counts = nlohmann::ordered_json::object();
  for (const auto& [id, count] : set.extraction_manifest) counts[id] = count;
  manifest["counts"] = std::move(counts);
  manifest["skipped_ids"] = set.skipped_ids;

  std::string out = manifest.dump() + "\n";
  for (const auto& p : set.patterns) {
    nlohmann::ordered_json record;
    record["text"] = p.text;
    record["polarity"] = to_string(p.polarity);
    record["source_conversation_id"] = p.source_conversation_id;
    out += record.dump() + "\n";
  }
  return out;
}

inline std::string pattern_set_digest(const PatternSet& set) {
  return sha256_hex(pattern_set_to_jsonl(set));
}

inline void save_pattern_set(const PatternSet& set, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write pattern file " + path.string());
  out << pattern_set_to_jsonl(set);
  if (!out) fail(ErrorKind::IoError, "failed writing pattern file " + path.string());
}

inline PatternSet load_pattern_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open pattern file " + path.string());
  PatternSet set;
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
      if (!j.contains("record") || j["record"] != "manifest" || !j.contains("polarity")) {
        fail(ErrorKind::MalformedRecord,
             "pattern file must start with a manifest record");
      }
      auto polarity = parse_polarity(j["polarity"].get<std::string>());
      if (!polarity.has_value()) {
        fail(ErrorKind::MalformedRecord, "manifest has unknown polarity");
      }
      set.polarity = *polarity;
      if (j.contains("counts") && j["counts"].is_object()) {
        for (const auto& [id, count] : j["counts"].items()) {
          set.extraction_manifest[id] = count.get<int>();
        }
      }
      if (j.contains("skipped_ids") && j["skipped_ids"].is_array()) {
        for (const auto& id : j["skipped_ids"]) {
          set.skipped_ids.push_back(id.get<std::string>());
        }
      }
      saw_manifest = true;
      continue;
    }
    if (!j.contains("text") || !j.contains("polarity") ||
        !j.contains("source_conversation_id")) {
      fail(ErrorKind::MalformedRecord,
           "line " + std::to_string(line_number) + ": incomplete pattern record");
    }
    auto polarity = parse_polarity(j["polarity"].get<std::string>());
    if (!polarity.has_value() || *polarity != set.polarity) {
      fail(ErrorKind::MalformedRecord,
           "line " + std::to_string(line_number) + ": polarity mismatch");
    }
    set.patterns.push_back(Pattern{j["text"].get<std::string>(), *polarity,
                                   j["source_conversation_id"].get<std::string>()});
  }
  if (!saw_manifest) fail(ErrorKind::EmptyFile, "no records in " + path.string());
  return set;
}

}  // namespace spur
