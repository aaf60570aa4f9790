#pragma once

// Synthetic conversations with planted satisfaction/dissatisfaction trigger
// phrases, plus a rule-based provider that answers all three pipeline stages
// from those triggers. Because the triggers survive extraction, batching,
// summarization, and scoring verbatim, a noise-free run must reproduce the
// planted gold labels exactly; the end-to-end tests lean on that.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "spur/corpus.hpp"
#include "spur/distill.hpp"
#include "spur/errors.hpp"
#include "spur/gateway.hpp"
#include "spur/prompts.hpp"
#include "spur/rubric.hpp"
#include "spur/scoring.hpp"
#include "spur/util.hpp"

namespace spur {

struct InventoryPattern {
  Polarity polarity = Polarity::Sat;
  std::string trigger;  // exact phrase planted into user turns
  std::string keyword;  // short tag carried into rubric items
};

struct SynthConfig {
  int num_conversations = 200;
  std::vector<InventoryPattern> pattern_inventory;
  double noise_rate = 0.0;  // chance a click ignores the label
  std::uint32_t seed = 42;
  int min_turns = 4;
  int max_turns = 10;
  int embedding_dim = 16;
  double embedding_noise = 0.25;
};

namespace synth_detail {

inline const std::vector<std::string>& user_fillers() {
  static const std::vector<std::string> fillers = {
      "could you help me sort this out",
      "here is some more detail about my situation",
      "let me rephrase what I am looking for",
      "what would you suggest as the next step",
  };
  return fillers;
}

inline const std::vector<std::string>& agent_fillers() {
  static const std::vector<std::string> fillers = {
      "here is what I found for you",
      "let me walk you through the steps",
      "I checked the available options on my side",
      "based on your description, try the following",
  };
  return fillers;
}

inline std::string canonical_item_description(const InventoryPattern& entry) {
  return "The user said: \"" + entry.trigger + "\"";
}

inline std::string filler_item_description(int slot) {
  return "No further recurring pattern identified (slot " + std::to_string(slot) + ").";
}

// First double-quoted span in a rubric description; filler items have none.
inline std::optional<std::string> quoted_trigger(const std::string& text) {
  const std::size_t open = text.find('"');
  if (open == std::string::npos) return std::nullopt;
  const std::size_t close = text.find('"', open + 1);
  if (close == std::string::npos) return std::nullopt;
  return text.substr(open + 1, close - open - 1);
}

}  // namespace synth_detail

inline void validate_synth_config(const SynthConfig& config) {
  if (config.num_conversations < 1) {
    fail(ErrorKind::InvalidConfig, "num_conversations must be >= 1");
  }
  if (config.pattern_inventory.empty()) {
    fail(ErrorKind::InvalidConfig, "pattern inventory is empty");
  }
  if (!(config.noise_rate >= 0.0 && config.noise_rate <= 1.0)) {
    fail(ErrorKind::InvalidConfig, "noise_rate must lie in [0,1]");
  }
  if (config.min_turns < 1 || config.max_turns < config.min_turns) {
    fail(ErrorKind::InvalidConfig, "turns range must satisfy 1 <= min <= max");
  }
  if (config.embedding_dim < 1) {
    fail(ErrorKind::InvalidConfig, "embedding_dim must be >= 1");
  }
  if (config.embedding_noise < 0.0) {
    fail(ErrorKind::InvalidConfig, "embedding_noise must be >= 0");
  }
  std::set<std::string> keywords;
  for (const auto& entry : config.pattern_inventory) {
    if (trim(entry.trigger).empty() || trim(entry.keyword).empty()) {
      fail(ErrorKind::InvalidConfig, "inventory triggers and keywords must be non-empty");
    }
    if (!keywords.insert(entry.keyword).second) {
      fail(ErrorKind::InvalidConfig, "duplicate inventory keyword '" + entry.keyword + "'");
    }
  }
  // Trigger detection is plain substring search, so triggers must not contain
  // one another or hide inside the filler sentences.
  const auto& inventory = config.pattern_inventory;
  for (std::size_t i = 0; i < inventory.size(); ++i) {
    for (std::size_t j = 0; j < inventory.size(); ++j) {
      if (i != j && contains(inventory[i].trigger, inventory[j].trigger)) {
        fail(ErrorKind::InvalidConfig,
             "trigger '" + inventory[j].trigger + "' is a substring of '" +
                 inventory[i].trigger + "'");
      }
    }
    for (const auto& filler : synth_detail::user_fillers()) {
      if (contains(filler, inventory[i].trigger)) {
        fail(ErrorKind::InvalidConfig,
             "trigger '" + inventory[i].trigger + "' collides with filler text");
      }
    }
    for (const auto& filler : synth_detail::agent_fillers()) {
      if (contains(filler, inventory[i].trigger)) {
        fail(ErrorKind::InvalidConfig,
             "trigger '" + inventory[i].trigger + "' collides with filler text");
      }
    }
  }
}

inline SynthConfig default_synth_config() {
  SynthConfig config;
  config.pattern_inventory = {
      {Polarity::Sat, "thank you so much for the help", "Gratitude"},
      {Polarity::Sat, "this answer is excellent work", "Praise"},
      {Polarity::Sat, "that fixed my problem completely", "Resolution"},
      {Polarity::Sat, "wow I did not expect such a clear explanation", "Delight"},
      {Polarity::Sat, "now I finally understand how this works", "Learning"},
      {Polarity::Sat, "I will definitely come back to ask you again", "Return Intent"},
      {Polarity::Dsat, "I already asked this twice with no luck", "Repetition"},
      {Polarity::Dsat, "that is simply not correct at all", "Wrong Answer"},
      {Polarity::Dsat, "you keep ignoring what I actually asked", "Ignored Request"},
      {Polarity::Dsat, "this is getting really frustrating now", "Frustration"},
      {Polarity::Dsat, "that suggestion does not help me whatsoever", "Unhelpful"},
      {Polarity::Dsat, "the booking never went through in the end", "Task Failure"},
  };
  return config;
}

// ---------------------------------------------------------------------------
// corpus generation
// ---------------------------------------------------------------------------

// Each conversation plants 0..3 distinct inventory triggers inside user
// turns. Distinctness matters: the gold label weighs each polarity by its
// number of planted triggers, and stage-3 scoring later recovers exactly one
// Yes per present trigger, so the two counts can only agree when no trigger
// repeats. Ties (including trigger-free conversations) are Neutral.
inline Corpus generate_corpus(const SynthConfig& config) {
  validate_synth_config(config);
  std::mt19937 rng(config.seed);
  const auto& inventory = config.pattern_inventory;
  const std::size_t max_plantable =
      std::min<std::size_t>(3, inventory.size());

  Corpus corpus;
  corpus.source_name = "synth-seed-" + std::to_string(config.seed);
  for (int i = 0; i < config.num_conversations; ++i) {
    Conversation conv;
    char id[32];
    std::snprintf(id, sizeof(id), "synth-%06d", i + 1);
    conv.id = id;

    const auto plant_count = static_cast<std::size_t>(
        draw_below(rng, static_cast<std::uint32_t>(max_plantable) + 1));
    std::vector<std::size_t> chosen;
    {
      std::vector<std::size_t> pool(inventory.size());
      for (std::size_t p = 0; p < pool.size(); ++p) pool[p] = p;
      for (std::size_t p = 0; p < plant_count; ++p) {
        const std::size_t pick =
            p + draw_below(rng, static_cast<std::uint32_t>(pool.size() - p));
        std::swap(pool[p], pool[pick]);
        chosen.push_back(pool[p]);
      }
    }

    int turns = config.min_turns +
                static_cast<int>(draw_below(
                    rng, static_cast<std::uint32_t>(config.max_turns - config.min_turns + 1)));
    turns = std::max(turns, static_cast<int>(plant_count) * 2);
    const int user_turns = (turns + 1) / 2;

    std::vector<std::size_t> trigger_slots;  // user-turn ordinals carrying triggers
    {
      std::vector<std::size_t> slots(static_cast<std::size_t>(user_turns));
      for (std::size_t s = 0; s < slots.size(); ++s) slots[s] = s;
      for (std::size_t p = 0; p < plant_count; ++p) {
        const std::size_t pick =
            p + draw_below(rng, static_cast<std::uint32_t>(slots.size() - p));
        std::swap(slots[p], slots[pick]);
        trigger_slots.push_back(slots[p]);
      }
      std::sort(trigger_slots.begin(), trigger_slots.end());
    }

    std::size_t user_ordinal = 0;
    std::size_t next_trigger = 0;
    for (int t = 0; t < turns; ++t) {
      const bool is_user = t % 2 == 0;
      if (is_user) {
        const auto& fillers = synth_detail::user_fillers();
        std::string text = fillers[draw_below(
            rng, static_cast<std::uint32_t>(fillers.size()))];
        if (next_trigger < trigger_slots.size() &&
            trigger_slots[next_trigger] == user_ordinal) {
          // chosen is rng-ordered; keep trigger placement order aligned with it
          text += ". " + inventory[chosen[next_trigger]].trigger + ".";
          ++next_trigger;
        }
        conv.turns.push_back(Turn{Role::User, text});
        ++user_ordinal;
      } else {
        const auto& fillers = synth_detail::agent_fillers();
        conv.turns.push_back(Turn{
            Role::Agent,
            fillers[draw_below(rng, static_cast<std::uint32_t>(fillers.size()))]});
      }
    }

    int sat_mass = 0, dsat_mass = 0;
    for (std::size_t c : chosen) {
      (inventory[c].polarity == Polarity::Sat ? sat_mass : dsat_mass) += 1;
    }
    conv.label = sat_mass > dsat_mass   ? SatLabel::Sat
                 : dsat_mass > sat_mass ? SatLabel::Dsat
                                        : SatLabel::Neutral;

    if (*conv.label != SatLabel::Neutral) {
      const bool noisy = config.noise_rate > 0.0 && draw_unit(rng) < config.noise_rate;
      if (noisy) {
        conv.click = draw_below(rng, 2) == 0 ? Click::Like : Click::Dislike;
      } else {
        conv.click = *conv.label == SatLabel::Sat ? Click::Like : Click::Dislike;
      }
    }
    corpus.conversations.push_back(std::move(conv));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// synthetic embeddings
// ---------------------------------------------------------------------------

// Per-trigger fixed unit direction derived from the config seed; each
// conversation's embedding is the sum of its planted directions plus
// isotropic Gaussian noise. Triggers are re-detected from the text so this
// works on loaded corpora too, not just freshly generated ones.
inline std::map<std::string, EmbeddingVector> generate_embeddings(
    const Corpus& corpus, const SynthConfig& config) {
  validate_synth_config(config);
  const auto& inventory = config.pattern_inventory;
  const auto dim = static_cast<std::size_t>(config.embedding_dim);

  std::vector<std::vector<double>> directions;
  for (std::size_t j = 0; j < inventory.size(); ++j) {
    std::mt19937 dir_rng(config.seed + 0x9E3779B9u * static_cast<std::uint32_t>(j + 1));
    std::vector<double> dir(dim);
    double norm_sq = 0.0;
    for (auto& v : dir) {
      v = draw_gaussian(dir_rng);
      norm_sq += v * v;
    }
    const double norm = std::sqrt(norm_sq);
    for (auto& v : dir) v /= norm > 0.0 ? norm : 1.0;
    directions.push_back(std::move(dir));
  }

  std::mt19937 noise_rng(config.seed + 0x517CC1B7u);
  std::map<std::string, EmbeddingVector> embeddings;
  for (const auto& conv : corpus.conversations) {
    std::string text;
    for (const auto& turn : conv.turns) text += turn.text + "\n";
    EmbeddingVector vec;
    vec.values.assign(dim, 0.0);
    for (std::size_t j = 0; j < inventory.size(); ++j) {
      if (contains(text, inventory[j].trigger)) {
        for (std::size_t d = 0; d < dim; ++d) vec.values[d] += directions[j][d];
      }
    }
    for (std::size_t d = 0; d < dim; ++d) {
      vec.values[d] += config.embedding_noise * draw_gaussian(noise_rng);
    }
    embeddings[conv.id] = std::move(vec);
  }
  return embeddings;
}

// ---------------------------------------------------------------------------
// rubric helpers shared by the oracle and by test fixtures
// ---------------------------------------------------------------------------

// The rubric the oracle converges to when every inventory keyword has been
// seen: inventory items in declaration order, padded with inert filler items
// up to n. Filler never matches a conversation, so it scores N|0 everywhere.
inline Rubric inventory_rubric(const SynthConfig& config, Polarity polarity, int n = 10) {
  validate_synth_config(config);
  Rubric rubric;
  rubric.polarity = polarity;
  rubric.provenance.n = n;
  for (const auto& entry : config.pattern_inventory) {
    if (entry.polarity != polarity) continue;
    if (static_cast<int>(rubric.items.size()) >= n) break;
    RubricItem item;
    item.index = static_cast<int>(rubric.items.size()) + 1;
    item.keyword = entry.keyword;
    item.description = synth_detail::canonical_item_description(entry);
    rubric.items.push_back(std::move(item));
  }
  while (static_cast<int>(rubric.items.size()) < n) {
    RubricItem item;
    item.index = static_cast<int>(rubric.items.size()) + 1;
    item.description = synth_detail::filler_item_description(item.index);
    rubric.items.push_back(std::move(item));
  }
  return rubric;
}

// Scores one conversation against both rubrics by the oracle's rule: an item
// answers Yes with score 8 exactly when its quoted trigger occurs in the
// conversation text. Useful for building large scorecard fixtures without
// running prompts.
inline ScoreCard rule_scorecard(const Conversation& conv, const Rubric& sat,
                                const Rubric& dsat, int neutral_band = 0) {
  std::string text;
  for (const auto& turn : conv.turns) text += turn.text + "\n";
  auto score_items = [&](const Rubric& rubric) {
    std::vector<ItemScore> items;
    for (const auto& item : rubric.items) {
      ItemScore score;
      score.rubric_index = item.index;
      const auto trigger = synth_detail::quoted_trigger(item.description);
      if (trigger.has_value() && contains(text, *trigger)) {
        score.decision = Decision::Yes;
        score.score = 8;
      }
      items.push_back(score);
    }
    return items;
  };
  ScoreCard card;
  card.conversation_id = conv.id;
  card.sat_items = score_items(sat);
  card.dsat_items = score_items(dsat);
  card.aggregate = aggregate_score(card.sat_items, card.dsat_items);
  card.predicted = decide_label(card.aggregate, neutral_band);
  return card;
}

// ---------------------------------------------------------------------------
// the oracle provider
// ---------------------------------------------------------------------------

// Answers the three stage prompts by pattern rules instead of a model:
//   extraction     -> the polarity-matched triggers found in the conversation
//   summarization  -> distinct keywords in the batch plus carried-over rubric
//                     keywords, ranked by batch frequency then keyword text,
//                     capped at n and padded to n with filler items
//   scoring        -> Y|8 per present trigger, N|0 otherwise
// Anything else is an unscripted request.
class OracleProvider : public Provider {
 public:
  explicit OracleProvider(SynthConfig config) : config_(std::move(config)) {
    validate_synth_config(config_);
  }

  CompletionText complete(const PromptRequest& request) override {
    const std::string& prompt = request.user_text;
    CompletionText out;
    out.provider_meta["provider"] = "oracle";
    if (contains(prompt, "# SATISFACTION RUBRIC")) {
      out.text = answer_scoring(prompt);
    } else if (contains(prompt, "# Example Explanations of User")) {
      out.text = answer_summarization(prompt);
    } else if (contains(prompt, "<CONVERSATION>")) {
      out.text = answer_extraction(prompt);
    } else {
      fail(ErrorKind::UnscriptedRequest,
           "oracle only answers pipeline prompts, got: " + prompt.substr(0, 120));
    }
    return out;
  }

 private:
  static std::string slice_between(const std::string& text, const std::string& from,
                                   const std::string& to) {
    const std::size_t start = text.find(from);
    if (start == std::string::npos) return {};
    const std::size_t begin = start + from.size();
    const std::size_t end = text.find(to, begin);
    if (end == std::string::npos) return text.substr(begin);
    return text.substr(begin, end - begin);
  }

  std::string answer_extraction(const std::string& prompt) const {
    const Polarity polarity =
        contains(prompt, "**dissatisfied**") ? Polarity::Dsat : Polarity::Sat;
    const std::string conversation =
        slice_between(prompt, "<CONVERSATION>", "</CONVERSATION>");
    std::string bullets;
    for (const auto& entry : config_.pattern_inventory) {
      if (entry.polarity == polarity && contains(conversation, entry.trigger)) {
        bullets += "- " + entry.trigger + "\n";
      }
    }
    if (bullets.empty()) return "<REASONS>NONE</REASONS>";
    return "<REASONS>\n" + bullets + "</REASONS>";
  }

  std::string answer_summarization(const std::string& prompt) const {
    const Polarity polarity = contains(prompt, "# Example Explanations of User Dissatisfaction")
                                  ? Polarity::Dsat
                                  : Polarity::Sat;
    int n = 10;
    {
      const std::string marker = "numbered list of up to ";
      const std::size_t at = prompt.find(marker);
      if (at != std::string::npos) {
        n = std::atoi(prompt.c_str() + at + marker.size());
        if (n < 1) n = 10;
      }
    }
    const std::string examples =
        slice_between(prompt, "# Example Explanations of User", "# Now summarize");

    // Batch bullets count trigger frequency; carried rubric lines keep their
    // keywords alive at frequency zero so no batch can evict earlier finds.
    std::map<std::string, int> frequency;
    for (const std::string& raw : split_lines(examples)) {
      const std::string line = trim(raw);
      if (line.empty()) continue;
      if (line.rfind("- ", 0) == 0) {
        for (const auto& entry : config_.pattern_inventory) {
          if (entry.polarity == polarity && contains(line, entry.trigger)) {
            frequency[entry.keyword] += 1;
          }
        }
      } else if (!line.empty() && std::isdigit(static_cast<unsigned char>(line[0]))) {
        for (const auto& entry : config_.pattern_inventory) {
          if (entry.polarity == polarity && contains(line, entry.keyword + ":")) {
            frequency.emplace(entry.keyword, 0);
          }
        }
      }
    }

    std::vector<std::pair<std::string, int>> ranked(frequency.begin(), frequency.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    if (static_cast<int>(ranked.size()) > n) ranked.resize(static_cast<std::size_t>(n));

    std::string body;
    int index = 0;
    for (const auto& [keyword, count] : ranked) {
      (void)count;
      for (const auto& entry : config_.pattern_inventory) {
        if (entry.keyword == keyword) {
          ++index;
          body += std::to_string(index) + ". " + keyword + ": " +
                  synth_detail::canonical_item_description(entry) + "\n";
          break;
        }
      }
    }
    while (index < n) {
      ++index;
      body += std::to_string(index) + ". " +
              synth_detail::filler_item_description(index) + "\n";
    }
    return "<Rubric>\n" + body + "</Rubric>";
  }

  std::string answer_scoring(const std::string& prompt) const {
    const std::string sat_rows =
        slice_between(prompt, "# SATISFACTION RUBRIC\n", "\n\n# DISSATISFACTION RUBRIC");
    const std::string dsat_rows =
        slice_between(prompt, "# DISSATISFACTION RUBRIC\n", "\n\n# Task:");
    const std::string conversation =
        slice_between(prompt, "# Conversation:\n", "\n\n# Answers");

    auto score_rows = [&](const std::string& rows) {
      std::vector<ItemScore> items;
      for (const std::string& raw : split_lines(rows)) {
        const std::string line = trim(raw);
        if (line.size() < 3) continue;
        std::size_t digits = 0;
        while (1 + digits < line.size() &&
               std::isdigit(static_cast<unsigned char>(line[1 + digits]))) {
          ++digits;
        }
        if (digits == 0 || 1 + digits >= line.size() || line[1 + digits] != '|') continue;
        ItemScore item;
        item.rubric_index = std::atoi(line.c_str() + 1);
        const auto trigger = synth_detail::quoted_trigger(line);
        if (trigger.has_value() && contains(conversation, *trigger)) {
          item.decision = Decision::Yes;
          item.score = 8;
        }
        items.push_back(item);
      }
      return items;
    };
    return format_item_answers(score_rows(sat_rows), score_rows(dsat_rows));
  }

  SynthConfig config_;
};

inline std::shared_ptr<Provider> oracle_provider(SynthConfig config) {
  return std::make_shared<OracleProvider>(std::move(config));
}

// ---------------------------------------------------------------------------
// config file format
// ---------------------------------------------------------------------------

inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorKind::InvalidConfig, "synth config must be an object");
  SynthConfig config;
  config.pattern_inventory.clear();
  config.num_conversations = j.value("num_conversations", config.num_conversations);
  config.noise_rate = j.value("noise_rate", config.noise_rate);
  config.seed = j.value("seed", config.seed);
  if (j.contains("turns_range") && j["turns_range"].is_array() &&
      j["turns_range"].size() == 2) {
    config.min_turns = j["turns_range"][0].get<int>();
    config.max_turns = j["turns_range"][1].get<int>();
  }
  config.embedding_dim = j.value("embedding_dim", config.embedding_dim);
  config.embedding_noise = j.value("embedding_noise", config.embedding_noise);
  if (j.contains("pattern_inventory")) {
    for (const auto& entry : j["pattern_inventory"]) {
      InventoryPattern pattern;
      const std::string polarity = entry.value("polarity", "sat");
      auto parsed = parse_polarity(polarity);
      if (!parsed.has_value()) {
        fail(ErrorKind::InvalidConfig, "unknown inventory polarity '" + polarity + "'");
      }
      pattern.polarity = *parsed;
      pattern.trigger = entry.value("trigger", "");
      pattern.keyword = entry.value("keyword", "");
      config.pattern_inventory.push_back(std::move(pattern));
    }
  } else {
    config.pattern_inventory = default_synth_config().pattern_inventory;
  }
  validate_synth_config(config);
  return config;
}

inline nlohmann::ordered_json synth_config_to_json(const SynthConfig& config) {
  nlohmann::ordered_json j;
  j["num_conversations"] = config.num_conversations;
  j["noise_rate"] = config.noise_rate;
  j["seed"] = config.seed;
  j["turns_range"] = {config.min_turns, config.max_turns};
  j["embedding_dim"] = config.embedding_dim;
  j["embedding_noise"] = config.embedding_noise;
  nlohmann::ordered_json inventory = nlohmann::ordered_json::array();
  for (const auto& entry : config.pattern_inventory) {
    inventory.push_back({{"polarity", to_string(entry.polarity)},
                         {"trigger", entry.trigger},
                         {"keyword", entry.keyword}});
  }
  j["pattern_inventory"] = std::move(inventory);
  return j;
}

inline SynthConfig load_synth_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open synth config " + path.string());
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) {
    fail(ErrorKind::InvalidConfig, "synth config is not valid JSON: " + path.string());
  }
  return synth_config_from_json(j);
}

}  // namespace spur
