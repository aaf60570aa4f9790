#include "spur/synthbench.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "spur/extraction.hpp"
#include "spur/rubric.hpp"
#include "spur/scoring.hpp"
#include "test_support.hpp"

using spur::ErrorKind;
using spur::Polarity;
using spur::SatLabel;
using spur::SpurError;
using spur::SynthConfig;

namespace {

template <typename Fn>
void expect_kind(ErrorKind kind, Fn&& fn) {
  try {
    fn();
    FAIL() << "expected error kind " << static_cast<int>(kind);
  } catch (const SpurError& e) {
    EXPECT_EQ(e.kind(), kind) << e.message();
  }
}

std::string full_text(const spur::Conversation& conv) {
  std::string text;
  for (const auto& turn : conv.turns) text += turn.text + "\n";
  return text;
}

// Gold label recomputed from the planted triggers, independently of the
// generator's own bookkeeping.
SatLabel label_from_triggers(const spur::Conversation& conv, const SynthConfig& config) {
  const std::string text = full_text(conv);
  int sat = 0, dsat = 0;
  for (const auto& entry : config.pattern_inventory) {
    if (!spur::contains(text, entry.trigger)) continue;
    (entry.polarity == Polarity::Sat ? sat : dsat) += 1;
  }
  return sat > dsat ? SatLabel::Sat : dsat > sat ? SatLabel::Dsat : SatLabel::Neutral;
}

// ---------------------------------------------------------------------------
// config validation
// ---------------------------------------------------------------------------

TEST(SynthConfigValidation, DefaultConfigIsValid) {
  const auto config = spur::default_synth_config();
  EXPECT_NO_THROW(spur::validate_synth_config(config));
  EXPECT_EQ(config.num_conversations, 200);
  EXPECT_EQ(config.seed, 42u);
  EXPECT_DOUBLE_EQ(config.noise_rate, 0.0);
  EXPECT_EQ(config.embedding_dim, 16);
  EXPECT_DOUBLE_EQ(config.embedding_noise, 0.25);
  int sat = 0, dsat = 0;
  for (const auto& entry : config.pattern_inventory) {
    (entry.polarity == Polarity::Sat ? sat : dsat) += 1;
  }
  EXPECT_EQ(sat, 6);
  EXPECT_EQ(dsat, 6);
}

TEST(SynthConfigValidation, RejectsOutOfRangeValues) {
  const auto base = spur::default_synth_config();
  auto broken = [&](auto mutate) {
    auto config = base;
    mutate(config);
    return config;
  };
  expect_kind(ErrorKind::InvalidConfig, [&] {
    spur::validate_synth_config(broken([](SynthConfig& c) { c.num_conversations = 0; }));
  });
  expect_kind(ErrorKind::InvalidConfig, [&] {
    spur::validate_synth_config(broken([](SynthConfig& c) { c.pattern_inventory.clear(); }));
  });
  expect_kind(ErrorKind::InvalidConfig, [&] {
    spur::validate_synth_config(broken([](SynthConfig& c) { c.noise_rate = -0.1; }));
  });
  expect_kind(ErrorKind::InvalidConfig, [&] {
    spur::validate_synth_config(broken([](SynthConfig& c) { c.noise_rate = 1.1; }));
  });
  expect_kind(ErrorKind::InvalidConfig, [&] {
    spur::validate_synth_config(broken([](SynthConfig& c) { c.min_turns = 0; }));
  });
  expect_kind(ErrorKind::InvalidConfig, [&] {
    spur::validate_synth_config(broken([](SynthConfig& c) { c.max_turns = c.min_turns - 1; }));
  });
  expect_kind(ErrorKind::InvalidConfig, [&] {
    spur::validate_synth_config(broken([](SynthConfig& c) { c.embedding_dim = 0; }));
  });
  expect_kind(ErrorKind::InvalidConfig, [&] {
    spur::validate_synth_config(broken([](SynthConfig& c) { c.embedding_noise = -1.0; }));
  });
}

TEST(SynthConfigValidation, RejectsDegenerateInventories) {
  auto config = spur::default_synth_config();
  config.pattern_inventory[0].keyword = config.pattern_inventory[1].keyword;
  expect_kind(ErrorKind::InvalidConfig, [&] { spur::validate_synth_config(config); });

  config = spur::default_synth_config();
  config.pattern_inventory[0].trigger = "  ";
  expect_kind(ErrorKind::InvalidConfig, [&] { spur::validate_synth_config(config); });

  // one trigger containing another breaks substring detection
  config = spur::default_synth_config();
  config.pattern_inventory[1].trigger = config.pattern_inventory[0].trigger + " truly";
  expect_kind(ErrorKind::InvalidConfig, [&] { spur::validate_synth_config(config); });

  // so does a trigger hiding inside a filler sentence
  config = spur::default_synth_config();
  config.pattern_inventory[0].trigger = "help me sort this";
  expect_kind(ErrorKind::InvalidConfig, [&] { spur::validate_synth_config(config); });
}

// ---------------------------------------------------------------------------
// corpus generation
// ---------------------------------------------------------------------------

TEST(SynthCorpus, IsDeterministicPerSeed) {
  auto config = spur::default_synth_config();
  config.num_conversations = 40;
  const auto a = spur::generate_corpus(config);
  const auto b = spur::generate_corpus(config);
  ASSERT_EQ(a.conversations.size(), b.conversations.size());
  for (std::size_t i = 0; i < a.conversations.size(); ++i) {
    EXPECT_EQ(a.conversations[i].id, b.conversations[i].id);
    EXPECT_EQ(full_text(a.conversations[i]), full_text(b.conversations[i]));
    EXPECT_EQ(a.conversations[i].label, b.conversations[i].label);
    EXPECT_EQ(a.conversations[i].click, b.conversations[i].click);
  }

  config.seed = 43;
  const auto c = spur::generate_corpus(config);
  bool any_difference = false;
  for (std::size_t i = 0; i < a.conversations.size(); ++i) {
    if (full_text(a.conversations[i]) != full_text(c.conversations[i])) {
      any_difference = true;
      break;
    }
  }
  EXPECT_TRUE(any_difference);
}

TEST(SynthCorpus, ShapesAndIdsFollowTheContract) {
  auto config = spur::default_synth_config();
  config.num_conversations = 60;
  const auto corpus = spur::generate_corpus(config);
  ASSERT_EQ(corpus.conversations.size(), 60u);
  EXPECT_EQ(corpus.conversations.front().id, "synth-000001");
  EXPECT_EQ(corpus.conversations.back().id, "synth-000060");
  EXPECT_EQ(corpus.source_name, "synth-seed-42");
  for (const auto& conv : corpus.conversations) {
    ASSERT_GE(conv.turns.size(), static_cast<std::size_t>(config.min_turns));
    ASSERT_LE(conv.turns.size(), static_cast<std::size_t>(config.max_turns));
    for (std::size_t t = 0; t < conv.turns.size(); ++t) {
      EXPECT_EQ(conv.turns[t].role, t % 2 == 0 ? spur::Role::User : spur::Role::Agent);
    }
    ASSERT_TRUE(conv.label.has_value());
  }
}

TEST(SynthCorpus, GoldLabelsMatchThePlantedTriggers) {
  auto config = spur::default_synth_config();
  config.num_conversations = 150;
  const auto corpus = spur::generate_corpus(config);
  std::size_t sat = 0, dsat = 0, neutral = 0;
  for (const auto& conv : corpus.conversations) {
    EXPECT_EQ(*conv.label, label_from_triggers(conv, config)) << conv.id;
    switch (*conv.label) {
      case SatLabel::Sat: ++sat; break;
      case SatLabel::Dsat: ++dsat; break;
      case SatLabel::Neutral: ++neutral; break;
    }
  }
  // the planting scheme must produce all three classes at this size
  EXPECT_GT(sat, 0u);
  EXPECT_GT(dsat, 0u);
  EXPECT_GT(neutral, 0u);
}

TEST(SynthCorpus, NoiseFreeClicksAgreeWithLabels) {
  auto config = spur::default_synth_config();
  config.num_conversations = 100;
  const auto corpus = spur::generate_corpus(config);
  for (const auto& conv : corpus.conversations) {
    if (*conv.label == SatLabel::Neutral) {
      EXPECT_FALSE(conv.click.has_value()) << conv.id;
    } else {
      ASSERT_TRUE(conv.click.has_value()) << conv.id;
      EXPECT_EQ(*conv.click, *conv.label == SatLabel::Sat ? spur::Click::Like
                                                          : spur::Click::Dislike)
          << conv.id;
    }
  }
}

TEST(SynthCorpus, FullNoiseDecouplesSomeClicksFromLabels) {
  auto config = spur::default_synth_config();
  config.num_conversations = 100;
  config.noise_rate = 1.0;
  const auto corpus = spur::generate_corpus(config);
  bool any_flip = false;
  for (const auto& conv : corpus.conversations) {
    if (!conv.click.has_value()) continue;
    const auto aligned =
        *conv.label == SatLabel::Sat ? spur::Click::Like : spur::Click::Dislike;
    if (*conv.click != aligned) any_flip = true;
  }
  EXPECT_TRUE(any_flip);
}

// ---------------------------------------------------------------------------
// embeddings
// ---------------------------------------------------------------------------

TEST(SynthEmbeddings, CoverEveryConversationAtTheConfiguredDim) {
  auto config = spur::default_synth_config();
  config.num_conversations = 30;
  config.embedding_dim = 5;
  const auto corpus = spur::generate_corpus(config);
  const auto embeddings = spur::generate_embeddings(corpus, config);
  ASSERT_EQ(embeddings.size(), corpus.conversations.size());
  for (const auto& conv : corpus.conversations) {
    ASSERT_TRUE(embeddings.count(conv.id)) << conv.id;
    EXPECT_EQ(embeddings.at(conv.id).dim(), 5u);
  }
  const auto again = spur::generate_embeddings(corpus, config);
  EXPECT_EQ(again.at(corpus.conversations[0].id).values,
            embeddings.at(corpus.conversations[0].id).values);
}

TEST(SynthEmbeddings, EncodeTriggersAsUnitDirectionsWithoutNoise) {
  auto config = spur::default_synth_config();
  config.embedding_noise = 0.0;

  spur::Conversation bare = spur_test::make_conversation("bare", SatLabel::Neutral,
                                                         {"no trigger in here"});
  spur::Conversation planted_a = spur_test::make_conversation(
      "planted-a", SatLabel::Sat,
      {"so anyway, " + config.pattern_inventory[0].trigger + "!"});
  spur::Conversation planted_b = spur_test::make_conversation(
      "planted-b", SatLabel::Sat,
      {"completely different filler. " + config.pattern_inventory[0].trigger + "."});
  const auto corpus = spur_test::make_corpus({bare, planted_a, planted_b});

  const auto embeddings = spur::generate_embeddings(corpus, config);
  double bare_norm = 0.0, planted_norm = 0.0;
  for (double v : embeddings.at("bare").values) bare_norm += v * v;
  for (double v : embeddings.at("planted-a").values) planted_norm += v * v;
  EXPECT_DOUBLE_EQ(bare_norm, 0.0);
  EXPECT_NEAR(std::sqrt(planted_norm), 1.0, 1e-12);
  // same trigger, same direction, regardless of surrounding text
  EXPECT_EQ(embeddings.at("planted-a").values, embeddings.at("planted-b").values);
}

// ---------------------------------------------------------------------------
// inventory rubrics and rule scoring
// ---------------------------------------------------------------------------

TEST(InventoryRubric, ListsKeywordsInOrderAndPadsWithFiller) {
  const auto config = spur::default_synth_config();
  const auto rubric = spur::inventory_rubric(config, Polarity::Sat);
  ASSERT_EQ(rubric.items.size(), 10u);
  EXPECT_EQ(rubric.polarity, Polarity::Sat);
  const std::vector<std::string> expected = {"Gratitude", "Praise",   "Resolution",
                                             "Delight",   "Learning", "Return Intent"};
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_EQ(rubric.items[i].index, static_cast<int>(i) + 1);
    ASSERT_TRUE(rubric.items[i].keyword.has_value());
    EXPECT_EQ(*rubric.items[i].keyword, expected[i]);
  }
  for (std::size_t i = expected.size(); i < 10; ++i) {
    EXPECT_FALSE(rubric.items[i].keyword.has_value());
    EXPECT_NE(rubric.items[i].description.find("No further recurring pattern"),
              std::string::npos);
  }
}

TEST(InventoryRubric, HonorsTheRequestedSize) {
  const auto config = spur::default_synth_config();
  const auto rubric = spur::inventory_rubric(config, Polarity::Dsat, 3);
  ASSERT_EQ(rubric.items.size(), 3u);
  EXPECT_EQ(*rubric.items[0].keyword, "Repetition");
  EXPECT_EQ(*rubric.items[2].keyword, "Ignored Request");
}

TEST(RuleScorecard, AnswersYesExactlyForPresentTriggers) {
  const auto config = spur::default_synth_config();
  const auto sat = spur::inventory_rubric(config, Polarity::Sat);
  const auto dsat = spur::inventory_rubric(config, Polarity::Dsat);

  const auto conv = spur_test::make_conversation(
      "x", SatLabel::Neutral,
      {config.pattern_inventory[0].trigger,   // Gratitude (sat 1)
       config.pattern_inventory[7].trigger}); // Wrong Answer (dsat 2)
  const auto card = spur::rule_scorecard(conv, sat, dsat);

  EXPECT_EQ(card.conversation_id, "x");
  ASSERT_EQ(card.sat_items.size(), 10u);
  ASSERT_EQ(card.dsat_items.size(), 10u);
  EXPECT_EQ(card.sat_items[0].decision, spur::Decision::Yes);
  EXPECT_EQ(card.sat_items[0].score, 8);
  EXPECT_EQ(card.dsat_items[1].decision, spur::Decision::Yes);
  for (std::size_t i = 1; i < 10; ++i) EXPECT_EQ(card.sat_items[i].score, 0);
  for (std::size_t i = 0; i < 10; ++i) {
    if (i != 1) EXPECT_EQ(card.dsat_items[i].decision, spur::Decision::No);
  }
  EXPECT_EQ(card.aggregate, 0);  // 8 - 8
  EXPECT_EQ(card.predicted, SatLabel::Neutral);
}

TEST(RuleScorecard, AggregateFollowsTheBand) {
  const auto config = spur::default_synth_config();
  const auto sat = spur::inventory_rubric(config, Polarity::Sat);
  const auto dsat = spur::inventory_rubric(config, Polarity::Dsat);
  const auto conv = spur_test::make_conversation(
      "y", SatLabel::Sat, {config.pattern_inventory[0].trigger,
                           config.pattern_inventory[1].trigger});
  const auto strict = spur::rule_scorecard(conv, sat, dsat);
  EXPECT_EQ(strict.aggregate, 16);
  EXPECT_EQ(strict.predicted, SatLabel::Sat);
  const auto banded = spur::rule_scorecard(conv, sat, dsat, 20);
  EXPECT_EQ(banded.predicted, SatLabel::Neutral);
}

// ---------------------------------------------------------------------------
// the oracle provider, stage by stage
// ---------------------------------------------------------------------------

TEST(Oracle, AnswersExtractionWithTheMatchingTriggers) {
  const auto config = spur::default_synth_config();
  auto provider = spur::oracle_provider(config);

  const auto conv = spur_test::make_conversation(
      "c", SatLabel::Sat,
      {"opening question", config.pattern_inventory[0].trigger,
       config.pattern_inventory[6].trigger});  // one sat, one dsat trigger

  const auto sat_answer =
      provider->complete(spur::build_extraction_prompt(conv, Polarity::Sat));
  EXPECT_NE(sat_answer.text.find("<REASONS>"), std::string::npos);
  EXPECT_NE(sat_answer.text.find("- " + config.pattern_inventory[0].trigger),
            std::string::npos);
  EXPECT_EQ(sat_answer.text.find(config.pattern_inventory[6].trigger), std::string::npos);

  const auto dsat_answer =
      provider->complete(spur::build_extraction_prompt(conv, Polarity::Dsat));
  EXPECT_NE(dsat_answer.text.find("- " + config.pattern_inventory[6].trigger),
            std::string::npos);

  const auto bare = spur_test::make_conversation("b", SatLabel::Neutral, {"nothing here"});
  const auto none =
      provider->complete(spur::build_extraction_prompt(bare, Polarity::Sat));
  EXPECT_EQ(none.text, "<REASONS>NONE</REASONS>");
}

TEST(Oracle, RanksSummarizationKeywordsByFrequencyAndPadsToN) {
  const auto config = spur::default_synth_config();
  auto provider = spur::oracle_provider(config);

  // two Gratitude bullets, one Praise bullet, a carried-over Delight line
  spur::Batch batch;
  batch.ordinal = 2;
  batch.patterns = {{config.pattern_inventory[1].trigger, Polarity::Sat, "c1"},
                    {config.pattern_inventory[0].trigger, Polarity::Sat, "c2"},
                    {config.pattern_inventory[0].trigger, Polarity::Sat, "c3"}};
  spur::Rubric previous;
  previous.polarity = Polarity::Sat;
  spur::RubricItem carried;
  carried.index = 1;
  carried.keyword = "Delight";
  carried.description =
      "The user said: \"wow I did not expect such a clear explanation\"";
  previous.items.push_back(carried);

  const auto completion = provider->complete(
      spur::build_summarization_prompt(batch, previous, 3, Polarity::Sat));
  const auto& text = completion.text;
  const auto pos_gratitude = text.find("1. Gratitude:");
  const auto pos_praise = text.find("2. Praise:");
  const auto pos_delight = text.find("3. Delight:");
  EXPECT_NE(pos_gratitude, std::string::npos) << text;
  EXPECT_NE(pos_praise, std::string::npos) << text;
  EXPECT_NE(pos_delight, std::string::npos) << text;
  EXPECT_EQ(text.find("slot"), std::string::npos) << "no filler when keywords fill n";

  // with n above the keyword count, filler tops up the list
  spur::Batch small;
  small.ordinal = 1;
  small.patterns = {{config.pattern_inventory[0].trigger, Polarity::Sat, "c1"}};
  const auto padded = provider->complete(
      spur::build_summarization_prompt(small, std::nullopt, 4, Polarity::Sat));
  EXPECT_NE(padded.text.find("1. Gratitude:"), std::string::npos);
  EXPECT_NE(padded.text.find("2. No further recurring pattern identified (slot 2)."),
            std::string::npos);
  EXPECT_NE(padded.text.find("4. No further recurring pattern identified (slot 4)."),
            std::string::npos);
}

TEST(Oracle, ScoresAgainstTheRubricTriggersOnly) {
  const auto config = spur::default_synth_config();
  auto provider = spur::oracle_provider(config);
  const auto sat = spur::inventory_rubric(config, Polarity::Sat, 2);
  const auto dsat = spur::inventory_rubric(config, Polarity::Dsat, 2);

  const auto conv = spur_test::make_conversation(
      "c", SatLabel::Sat, {config.pattern_inventory[0].trigger});
  const auto completion =
      provider->complete(spur::build_scoring_prompt(conv, sat, dsat));
  EXPECT_EQ(completion.text, "S1|Y|8\nS2|N|0\nD1|N|0\nD2|N|0");
}

TEST(Oracle, RefusesPromptsItDoesNotRecognize) {
  auto provider = spur::oracle_provider(spur::default_synth_config());
  spur::PromptRequest req;
  req.user_text = "tell me a joke";
  expect_kind(ErrorKind::UnscriptedRequest, [&] { provider->complete(req); });
}

// The point of the whole fixture: a noise-free run through the real pipeline
// recovers every planted label.
TEST(Oracle, FullPipelineReproducesGoldLabels) {
  auto config = spur::default_synth_config();
  config.num_conversations = 30;
  const auto corpus = spur::generate_corpus(config);
  spur::CompletionClient client(spur::oracle_provider(config));

  const auto sat_patterns = spur::extract_patterns(client, corpus, Polarity::Sat);
  const auto dsat_patterns = spur::extract_patterns(client, corpus, Polarity::Dsat);
  ASSERT_GT(sat_patterns.size(), 0u);
  ASSERT_GT(dsat_patterns.size(), 0u);

  const auto sat_rubric = spur::summarize_rubric(client, sat_patterns, 10, 10);
  const auto dsat_rubric = spur::summarize_rubric(client, dsat_patterns, 10, 10);
  ASSERT_EQ(sat_rubric.items.size(), 10u);
  ASSERT_EQ(dsat_rubric.items.size(), 10u);

  const auto run = spur::score_corpus(client, corpus, sat_rubric, dsat_rubric);
  ASSERT_EQ(run.cards.size(), corpus.conversations.size());
  for (std::size_t i = 0; i < run.cards.size(); ++i) {
    EXPECT_EQ(run.cards[i].predicted, *corpus.conversations[i].label)
        << corpus.conversations[i].id;
  }
}

// ---------------------------------------------------------------------------
// config files
// ---------------------------------------------------------------------------

TEST(SynthConfigFiles, JsonRoundTripPreservesEveryField) {
  auto config = spur::default_synth_config();
  config.num_conversations = 77;
  config.noise_rate = 0.125;
  config.seed = 9;
  config.min_turns = 2;
  config.max_turns = 6;
  config.embedding_dim = 8;
  config.embedding_noise = 0.5;

  const auto restored = spur::synth_config_from_json(spur::synth_config_to_json(config));
  EXPECT_EQ(restored.num_conversations, 77);
  EXPECT_DOUBLE_EQ(restored.noise_rate, 0.125);
  EXPECT_EQ(restored.seed, 9u);
  EXPECT_EQ(restored.min_turns, 2);
  EXPECT_EQ(restored.max_turns, 6);
  EXPECT_EQ(restored.embedding_dim, 8);
  EXPECT_DOUBLE_EQ(restored.embedding_noise, 0.5);
  ASSERT_EQ(restored.pattern_inventory.size(), config.pattern_inventory.size());
  for (std::size_t i = 0; i < config.pattern_inventory.size(); ++i) {
    EXPECT_EQ(restored.pattern_inventory[i].polarity, config.pattern_inventory[i].polarity);
    EXPECT_EQ(restored.pattern_inventory[i].trigger, config.pattern_inventory[i].trigger);
    EXPECT_EQ(restored.pattern_inventory[i].keyword, config.pattern_inventory[i].keyword);
  }
}

TEST(SynthConfigFiles, OmittedInventoryFallsBackToTheDefault) {
  const auto config = spur::synth_config_from_json(
      nlohmann::json{{"num_conversations", 5}, {"seed", 1}});
  EXPECT_EQ(config.num_conversations, 5);
  EXPECT_EQ(config.pattern_inventory.size(),
            spur::default_synth_config().pattern_inventory.size());
}

TEST(SynthConfigFiles, LoaderRejectsBadFiles) {
  spur_test::TempDir dir("synthcfg");
  expect_kind(ErrorKind::IoError,
              [&] { spur::load_synth_config(dir.path() / "missing.json"); });

  const auto bad_json = dir.path() / "bad.json";
  std::ofstream(bad_json) << "{nope";
  expect_kind(ErrorKind::InvalidConfig, [&] { spur::load_synth_config(bad_json); });

  const auto bad_polarity = dir.path() / "polarity.json";
  std::ofstream(bad_polarity)
      << R"({"pattern_inventory":[{"polarity":"meh","trigger":"t","keyword":"K"}]})";
  expect_kind(ErrorKind::InvalidConfig, [&] { spur::load_synth_config(bad_polarity); });

  const auto good = dir.path() / "good.json";
  std::ofstream(good) << spur::synth_config_to_json(spur::default_synth_config()).dump();
  EXPECT_NO_THROW(spur::load_synth_config(good));
}

}  // namespace
