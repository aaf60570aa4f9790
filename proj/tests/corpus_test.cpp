#include "spur/corpus.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "test_support.hpp"

using spur::ErrorKind;
using spur::SatLabel;
using spur::SpurError;
using spur_test::make_conversation;
using spur_test::make_corpus;
using spur_test::TempDir;

namespace {

void expect_kind(ErrorKind kind, const std::function<void()>& fn) {
  try {
    fn();
    FAIL() << "expected error " << spur::to_string(kind);
  } catch (const SpurError& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

TEST(Validation, RejectsStructuralProblems) {
  spur::Conversation conv;
  expect_kind(ErrorKind::MalformedRecord, [&] { spur::validate_conversation(conv); });

  conv.id = "c1";
  expect_kind(ErrorKind::MalformedRecord, [&] { spur::validate_conversation(conv); });

  conv.turns.push_back({spur::Role::Agent, "hello"});
  expect_kind(ErrorKind::MalformedRecord, [&] { spur::validate_conversation(conv); });

  conv.turns.push_back({spur::Role::User, "   "});
  expect_kind(ErrorKind::MalformedRecord, [&] { spur::validate_conversation(conv); });

  conv.turns[1].text = "hi there";
  EXPECT_NO_THROW(spur::validate_conversation(conv));

  conv.turn_labels = std::vector<SatLabel>{SatLabel::Sat, SatLabel::Sat};
  expect_kind(ErrorKind::MalformedRecord, [&] { spur::validate_conversation(conv); });
  conv.turn_labels = std::vector<SatLabel>{SatLabel::Sat};
  EXPECT_NO_THROW(spur::validate_conversation(conv));
}

TEST(Serialization, RoundTripsAllFields) {
  auto conv = make_conversation("conv-9", SatLabel::Dsat, {"this broke", "still broken"});
  conv.click = spur::Click::Dislike;
  conv.turn_labels = std::vector<SatLabel>{SatLabel::Neutral, SatLabel::Dsat};

  const auto json = spur::conversation_to_json(conv);
  const auto back = spur::conversation_from_json(json);
  EXPECT_EQ(back.id, conv.id);
  EXPECT_EQ(back.turns.size(), conv.turns.size());
  EXPECT_EQ(back.turns[0].text, "this broke");
  EXPECT_EQ(back.label, conv.label);
  EXPECT_EQ(back.click, conv.click);
  EXPECT_EQ(back.turn_labels, conv.turn_labels);
}

TEST(Serialization, OptionalFieldsStayAbsent) {
  const auto conv = make_conversation("conv-1", std::nullopt, {"hello"});
  const auto json = spur::conversation_to_json(conv);
  EXPECT_FALSE(json.contains("label"));
  EXPECT_FALSE(json.contains("click"));
  EXPECT_FALSE(json.contains("turn_labels"));
  const auto back = spur::conversation_from_json(json);
  EXPECT_FALSE(back.label.has_value());
}

TEST(Serialization, RejectsUnknownEnumValues) {
  nlohmann::json record = {
      {"id", "x"},
      {"turns", {{{"role", "user"}, {"text", "hi"}}}},
      {"label", "meh"},
  };
  expect_kind(ErrorKind::MalformedRecord, [&] { spur::conversation_from_json(record); });
  record["label"] = "sat";
  record["click"] = "thumbs";
  expect_kind(ErrorKind::MalformedRecord, [&] { spur::conversation_from_json(record); });
  record["click"] = "like";
  record["turns"][0]["role"] = "system";
  expect_kind(ErrorKind::MalformedRecord, [&] { spur::conversation_from_json(record); });
}

TEST(CorpusFile, RoundTripsAndSkipsBlankLines) {
  TempDir dir("corpus_rt");
  const auto path = dir.path() / "corpus.jsonl";
  const auto corpus = make_corpus({
      make_conversation("a", SatLabel::Sat, {"thanks a lot"}),
      make_conversation("b", SatLabel::Neutral, {"what time is it"}),
  });
  spur::save_corpus(corpus, path);
  {
    std::ofstream app(path, std::ios::app);
    app << "\n   \n";
  }
  const auto loaded = spur::load_corpus(path);
  EXPECT_EQ(loaded.size(), 2u);
  EXPECT_EQ(loaded.conversations[0].id, "a");
  EXPECT_EQ(loaded.conversations[1].label, SatLabel::Neutral);
  EXPECT_EQ(loaded.source_name, "corpus.jsonl");
}

TEST(CorpusFile, ReportsLineNumbersOnBadJson) {
  TempDir dir("corpus_bad");
  const auto path = dir.path() / "corpus.jsonl";
  {
    std::ofstream out(path);
    out << spur::conversation_to_json(make_conversation("a", std::nullopt, {"hi"})).dump()
        << "\n{not json\n";
  }
  try {
    spur::load_corpus(path);
    FAIL() << "expected MalformedRecord";
  } catch (const SpurError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MalformedRecord);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(CorpusFile, RejectsDuplicateIdsAndEmptyFiles) {
  TempDir dir("corpus_dup");
  const auto path = dir.path() / "corpus.jsonl";
  {
    std::ofstream out(path);
    const auto line =
        spur::conversation_to_json(make_conversation("same", std::nullopt, {"hi"})).dump();
    out << line << '\n' << line << '\n';
  }
  expect_kind(ErrorKind::DuplicateId, [&] { spur::load_corpus(path); });

  const auto empty_path = dir.path() / "empty.jsonl";
  {
    std::ofstream out(empty_path);
    out << "\n";
  }
  expect_kind(ErrorKind::EmptyFile, [&] { spur::load_corpus(empty_path); });
  expect_kind(ErrorKind::IoError, [&] { spur::load_corpus(dir.path() / "missing.jsonl"); });
}

TEST(CollapseLabels, AppliesAllFourRules) {
  using L = SatLabel;
  // only neutral and sat
  EXPECT_EQ(spur::collapse_turn_labels({L::Neutral, L::Sat, L::Neutral}), L::Sat);
  EXPECT_EQ(spur::collapse_turn_labels({L::Sat}), L::Sat);
  // only neutral and dsat
  EXPECT_EQ(spur::collapse_turn_labels({L::Dsat, L::Neutral}), L::Dsat);
  // only neutral
  EXPECT_EQ(spur::collapse_turn_labels({L::Neutral, L::Neutral}), L::Neutral);
  // both present: first non-neutral wins
  EXPECT_EQ(spur::collapse_turn_labels({L::Neutral, L::Dsat, L::Sat, L::Sat}), L::Dsat);
  EXPECT_EQ(spur::collapse_turn_labels({L::Sat, L::Dsat}), L::Sat);
  expect_kind(ErrorKind::EmptyLabelList, [] { spur::collapse_turn_labels({}); });
}

TEST(CollapseLabels, CorpusCollapseRespectsOverwriteFlag) {
  auto conv = make_conversation("c", SatLabel::Sat, {"a", "b"});
  conv.turn_labels = std::vector<SatLabel>{SatLabel::Neutral, SatLabel::Dsat};
  auto corpus = make_corpus({conv});

  const auto keep = spur::collapse_corpus_labels(corpus, false);
  EXPECT_EQ(keep.conversations[0].label, SatLabel::Sat);

  const auto replaced = spur::collapse_corpus_labels(corpus, true);
  EXPECT_EQ(replaced.conversations[0].label, SatLabel::Dsat);
}

spur::Corpus labeled_corpus(std::size_t sat, std::size_t dsat) {
  std::vector<spur::Conversation> convs;
  for (std::size_t i = 0; i < sat; ++i) {
    convs.push_back(make_conversation("sat-" + std::to_string(i), SatLabel::Sat,
                                      {"all good"}));
  }
  for (std::size_t i = 0; i < dsat; ++i) {
    convs.push_back(make_conversation("dsat-" + std::to_string(i), SatLabel::Dsat,
                                      {"not good"}));
  }
  return make_corpus(convs);
}

TEST(Split, PartitionsWithCeilTrainSize) {
  const auto corpus = labeled_corpus(60, 40);
  const auto [train, test] = spur::split_train_test(corpus, 0.8, 7);
  EXPECT_EQ(train.size(), 80u);
  EXPECT_EQ(test.size(), 20u);

  std::set<std::string> ids;
  for (const auto& c : train.conversations) ids.insert(c.id);
  for (const auto& c : test.conversations) ids.insert(c.id);
  EXPECT_EQ(ids.size(), 100u);
  EXPECT_EQ(train.source_name, "test/train");
}

TEST(Split, IsDeterministicPerSeed) {
  const auto corpus = labeled_corpus(30, 30);
  const auto [a_train, a_test] = spur::split_train_test(corpus, 0.5, 11);
  const auto [b_train, b_test] = spur::split_train_test(corpus, 0.5, 11);
  const auto [c_train, c_test] = spur::split_train_test(corpus, 0.5, 12);
  ASSERT_EQ(a_train.size(), b_train.size());
  for (std::size_t i = 0; i < a_train.size(); ++i) {
    EXPECT_EQ(a_train.conversations[i].id, b_train.conversations[i].id);
  }
  bool differs = c_train.size() != a_train.size();
  for (std::size_t i = 0; !differs && i < a_train.size(); ++i) {
    differs = a_train.conversations[i].id != c_train.conversations[i].id;
  }
  EXPECT_TRUE(differs) << "different seeds should pick different train sets";
}

TEST(Split, StratifiedKeepsPerClassFractions) {
  const auto corpus = labeled_corpus(80, 20);
  spur::SplitOptions options;
  options.stratified = true;
  const auto [train, test] = spur::split_train_test(corpus, 0.75, 3, options);
  const auto counts = spur::label_counts(train);
  EXPECT_EQ(counts.sat, 60u);   // ceil(0.75 * 80)
  EXPECT_EQ(counts.dsat, 15u);  // ceil(0.75 * 20)
  EXPECT_EQ(test.size(), 25u);
}

TEST(Split, WarnsWhenTrainSideIsThin) {
  spur::WarningLog warnings;
  const auto corpus = labeled_corpus(4, 4);
  spur::split_train_test(corpus, 0.5, 1, {}, &warnings);
  EXPECT_EQ(warnings.count(), 1u);
  EXPECT_NE(warnings.messages()[0].find("at least 10"), std::string::npos);
}

TEST(Split, ValidatesInputs) {
  const auto corpus = labeled_corpus(2, 2);
  expect_kind(ErrorKind::InvalidConfig, [&] { spur::split_train_test(corpus, 0.0, 1); });
  expect_kind(ErrorKind::InvalidConfig, [&] { spur::split_train_test(corpus, 1.0, 1); });
  const auto tiny = labeled_corpus(1, 0);
  expect_kind(ErrorKind::InsufficientData,
              [&] { spur::split_train_test(tiny, 0.5, 1); });
}

TEST(LabelCounts, CountsEveryBucket) {
  auto corpus = labeled_corpus(2, 1);
  corpus.conversations.push_back(make_conversation("n", SatLabel::Neutral, {"ok"}));
  corpus.conversations.push_back(make_conversation("u", std::nullopt, {"hm"}));
  const auto counts = spur::label_counts(corpus);
  EXPECT_EQ(counts.sat, 2u);
  EXPECT_EQ(counts.dsat, 1u);
  EXPECT_EQ(counts.neutral, 1u);
  EXPECT_EQ(counts.unlabeled, 1u);
}

}  // namespace
