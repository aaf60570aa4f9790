#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "spur/corpus.hpp"
#include "spur/errors.hpp"
#include "spur/gateway.hpp"
#include "spur/prompts.hpp"
#include "spur/rubric.hpp"
#include "spur/scoring.hpp"

namespace spur {

// ---------------------------------------------------------------------------
// classification metrics
// ---------------------------------------------------------------------------

struct ConfusionMatrix {
  std::vector<SatLabel> classes;               // canonical order, observed only
  std::vector<std::vector<std::size_t>> counts;  // rows = gold, cols = predicted

  std::size_t total() const {
    std::size_t sum = 0;
    for (const auto& row : counts) {
      for (std::size_t c : row) sum += c;
    }
    return sum;
  }
};

inline ConfusionMatrix confusion(const std::vector<SatLabel>& golds,
                                 const std::vector<SatLabel>& preds) {
  if (golds.size() != preds.size()) {
    fail(ErrorKind::LengthMismatch,
         std::to_string(golds.size()) + " golds vs " + std::to_string(preds.size()) +
             " predictions");
  }
  if (golds.empty()) fail(ErrorKind::EmptyInput, "no labels to evaluate");

  std::set<SatLabel> observed(golds.begin(), golds.end());
  observed.insert(preds.begin(), preds.end());
  ConfusionMatrix cm;
  for (SatLabel l : {SatLabel::Sat, SatLabel::Dsat, SatLabel::Neutral}) {
    if (observed.count(l)) cm.classes.push_back(l);
  }
  std::map<SatLabel, std::size_t> pos;
  for (std::size_t i = 0; i < cm.classes.size(); ++i) pos[cm.classes[i]] = i;
  cm.counts.assign(cm.classes.size(), std::vector<std::size_t>(cm.classes.size(), 0));
  for (std::size_t i = 0; i < golds.size(); ++i) {
    ++cm.counts[pos[golds[i]]][pos[preds[i]]];
  }
  return cm;
}

struct ClassMetrics {
  SatLabel label = SatLabel::Neutral;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
  // True when the class was never predicted (precision forced to 0) or never
  // appears in gold (recall forced to 0).
  bool degenerate = false;
};

struct EvalReport {
  double accuracy = 0.0;
  double precision = 0.0;  // support-weighted
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<ClassMetrics> per_class;
  std::string manifest_digest;
};

// Support-weighted precision/recall/F1 with the usual 0-for-undefined
// convention; degenerate classes are flagged rather than dropped so reports
// stay honest about what the 0 means.
inline EvalReport weighted_metrics(const ConfusionMatrix& cm) {
  const std::size_t total = cm.total();
  if (total == 0) fail(ErrorKind::EmptyInput, "confusion matrix is empty");

  EvalReport report;
  const std::size_t k = cm.classes.size();
  std::size_t trace = 0;
  for (std::size_t i = 0; i < k; ++i) trace += cm.counts[i][i];
  report.accuracy = static_cast<double>(trace) / static_cast<double>(total);

  for (std::size_t i = 0; i < k; ++i) {
    ClassMetrics m;
    m.label = cm.classes[i];
    const std::size_t tp = cm.counts[i][i];
    std::size_t predicted = 0, gold = 0;
    for (std::size_t j = 0; j < k; ++j) {
      predicted += cm.counts[j][i];
      gold += cm.counts[i][j];
    }
    m.support = gold;
    if (predicted == 0 || gold == 0) m.degenerate = true;
    m.precision = predicted == 0 ? 0.0 : static_cast<double>(tp) / predicted;
    m.recall = gold == 0 ? 0.0 : static_cast<double>(tp) / gold;
    m.f1 = (m.precision + m.recall) == 0.0
               ? 0.0
               : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    report.per_class.push_back(m);

    const double weight = static_cast<double>(gold) / static_cast<double>(total);
    report.precision += weight * m.precision;
    report.recall += weight * m.recall;
    report.f1 += weight * m.f1;
  }
  return report;
}

// ---------------------------------------------------------------------------
// chi-square
// ---------------------------------------------------------------------------

struct ContingencyTable2x2 {
  // [[a, b], [c, d]]; rows = rubric decision Yes/No, cols = click Like/Dislike.
  std::size_t a = 0, b = 0, c = 0, d = 0;
};

enum class PBucket { Below001, Below01, Below05, NotSignificant };

inline const char* to_string(PBucket b) {
  switch (b) {
    case PBucket::Below001: return "<0.001";
    case PBucket::Below01: return "<0.01";
    case PBucket::Below05: return "<0.05";
    case PBucket::NotSignificant: return "n.s.";
  }
  return "n.s.";
}

// df=1 critical values for the 0.001 / 0.01 / 0.05 levels.
inline PBucket p_bucket(double statistic) {
  if (statistic >= 10.828) return PBucket::Below001;
  if (statistic >= 6.635) return PBucket::Below01;
  if (statistic >= 3.841) return PBucket::Below05;
  return PBucket::NotSignificant;
}

struct ChiSquareResult {
  double statistic = 0.0;
  PBucket bucket = PBucket::NotSignificant;
};

// Pearson statistic, no continuity correction by default (set yates for the
// corrected variant). Zero margins leave expected counts undefined.
inline ChiSquareResult chi_square_2x2(const ContingencyTable2x2& t, bool yates = false) {
  const double a = static_cast<double>(t.a), b = static_cast<double>(t.b);
  const double c = static_cast<double>(t.c), d = static_cast<double>(t.d);
  const double total = a + b + c + d;
  if (total <= 0.0) fail(ErrorKind::EmptyInput, "contingency table is empty");
  const double row0 = a + b, row1 = c + d, col0 = a + c, col1 = b + d;
  if (row0 == 0.0 || row1 == 0.0 || col0 == 0.0 || col1 == 0.0) {
    fail(ErrorKind::DegenerateMargins, "a row or column margin is zero");
  }
  const double observed[2][2] = {{a, b}, {c, d}};
  const double rows[2] = {row0, row1};
  const double cols[2] = {col0, col1};
  double statistic = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double expected = rows[i] * cols[j] / total;
      double diff = std::abs(observed[i][j] - expected);
      if (yates) diff = std::max(0.0, diff - 0.5);
      statistic += diff * diff / expected;
    }
  }
  return ChiSquareResult{statistic, p_bucket(statistic)};
}

// ---------------------------------------------------------------------------
// per-item analyses
// ---------------------------------------------------------------------------

struct ItemFeedbackRow {
  Polarity polarity = Polarity::Sat;
  int index = 0;
  std::optional<double> mean_like;     // mean score over click-Like cards
  std::optional<double> mean_dislike;  // mean score over click-Dislike cards
  std::optional<ChiSquareResult> chi;  // decision-vs-click association
};

// Mean item score under each click value plus a decision-vs-click chi-square
// per item. Cards without click feedback are ignored.
inline std::vector<ItemFeedbackRow> item_score_by_feedback(
    const std::vector<ScoreCard>& cards, const std::map<std::string, Click>& clicks) {
  std::vector<const ScoreCard*> with_click;
  for (const auto& card : cards) {
    if (clicks.count(card.conversation_id)) with_click.push_back(&card);
  }
  if (with_click.empty()) {
    fail(ErrorKind::NoClickData, "no scored conversation has click feedback");
  }

  std::vector<ItemFeedbackRow> rows;
  auto analyze = [&](Polarity polarity, std::size_t item_count,
                     auto items_of) {
    for (std::size_t idx = 0; idx < item_count; ++idx) {
      ItemFeedbackRow row;
      row.polarity = polarity;
      row.index = static_cast<int>(idx) + 1;
      double like_sum = 0.0, dislike_sum = 0.0;
      std::size_t like_n = 0, dislike_n = 0;
      ContingencyTable2x2 table;
      for (const ScoreCard* card : with_click) {
        const auto& items = items_of(*card);
        if (idx >= items.size()) continue;
        const ItemScore& item = items[idx];
        const Click click = clicks.at(card->conversation_id);
        if (click == Click::Like) {
          like_sum += item.score;
          ++like_n;
          (item.decision == Decision::Yes ? table.a : table.c) += 1;
        } else {
          dislike_sum += item.score;
          ++dislike_n;
          (item.decision == Decision::Yes ? table.b : table.d) += 1;
        }
      }
      if (like_n > 0) row.mean_like = like_sum / static_cast<double>(like_n);
      if (dislike_n > 0) row.mean_dislike = dislike_sum / static_cast<double>(dislike_n);
      try {
        row.chi = chi_square_2x2(table);
      } catch (const SpurError&) {
        // degenerate margins: association test undefined for this item
      }
      rows.push_back(row);
    }
  };

  std::size_t n_sat = 0, n_dsat = 0;
  for (const ScoreCard* card : with_click) {
    n_sat = std::max(n_sat, card->sat_items.size());
    n_dsat = std::max(n_dsat, card->dsat_items.size());
  }
  analyze(Polarity::Sat, n_sat,
          [](const ScoreCard& c) -> const std::vector<ItemScore>& { return c.sat_items; });
  analyze(Polarity::Dsat, n_dsat,
          [](const ScoreCard& c) -> const std::vector<ItemScore>& { return c.dsat_items; });
  return rows;
}

struct ItemFrequencyRow {
  Polarity polarity = Polarity::Sat;
  int index = 0;
  double yes_rate = 0.0;
};

// Fraction of conversations answering Yes per rubric item.
inline std::vector<ItemFrequencyRow> pattern_frequency(const std::vector<ScoreCard>& cards) {
  if (cards.empty()) fail(ErrorKind::EmptyInput, "no scorecards");
  std::vector<ItemFrequencyRow> rows;
  auto analyze = [&](Polarity polarity, auto items_of) {
    std::size_t item_count = 0;
    for (const auto& card : cards) item_count = std::max(item_count, items_of(card).size());
    for (std::size_t idx = 0; idx < item_count; ++idx) {
      std::size_t yes = 0, n = 0;
      for (const auto& card : cards) {
        const auto& items = items_of(card);
        if (idx >= items.size()) continue;
        ++n;
        if (items[idx].decision == Decision::Yes) ++yes;
      }
      ItemFrequencyRow row;
      row.polarity = polarity;
      row.index = static_cast<int>(idx) + 1;
      row.yes_rate = n == 0 ? 0.0 : static_cast<double>(yes) / static_cast<double>(n);
      rows.push_back(row);
    }
  };
  analyze(Polarity::Sat,
          [](const ScoreCard& c) -> const std::vector<ItemScore>& { return c.sat_items; });
  analyze(Polarity::Dsat,
          [](const ScoreCard& c) -> const std::vector<ItemScore>& { return c.dsat_items; });
  return rows;
}

// ---------------------------------------------------------------------------
// ROC AUC
// ---------------------------------------------------------------------------

// Rank-based AUC (Mann-Whitney with average ranks): the probability a random
// positive scores above a random negative, ties counting one half.
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    fail(ErrorKind::LengthMismatch, std::to_string(scores.size()) + " scores vs " +
                                        std::to_string(labels.size()) + " labels");
  }
  if (scores.empty()) fail(ErrorKind::EmptyInput, "no scores");
  std::size_t positives = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) fail(ErrorKind::InvalidConfig, "labels must be 0 or 1");
    positives += static_cast<std::size_t>(l);
  }
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) {
    fail(ErrorKind::SingleClass, "AUC needs both a positive and a negative example");
  }

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return scores[x] < scores[y]; });

  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) {
      if (labels[order[t]] == 1) positive_rank_sum += avg_rank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(positives);
  const double nn = static_cast<double>(negatives);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

// ---------------------------------------------------------------------------
// feedback coverage
// ---------------------------------------------------------------------------

struct FeedbackCoverage {
  std::size_t click_like = 0;
  std::size_t click_dislike = 0;
  std::size_t textual_like = 0;
  std::size_t textual_dislike = 0;
  std::optional<double> like_ratio;     // textual_like / click_like
  std::optional<double> dislike_ratio;  // textual_dislike / click_dislike
};

// Relative frequency of textual feedback against click feedback, per side.
inline FeedbackCoverage feedback_coverage(const Corpus& corpus,
                                          const std::set<std::string>& textual_like,
                                          const std::set<std::string>& textual_dislike) {
  if (corpus.conversations.empty()) fail(ErrorKind::EmptyInput, "corpus is empty");
  FeedbackCoverage report;
  for (const auto& conv : corpus.conversations) {
    if (conv.click.has_value()) {
      (*conv.click == Click::Like ? report.click_like : report.click_dislike) += 1;
    }
    if (textual_like.count(conv.id)) ++report.textual_like;
    if (textual_dislike.count(conv.id)) ++report.textual_dislike;
  }
  if (report.click_like + report.click_dislike == 0) {
    fail(ErrorKind::NoClicks, "no conversation carries click feedback");
  }
  if (report.click_like > 0) {
    report.like_ratio =
        static_cast<double>(report.textual_like) / static_cast<double>(report.click_like);
  }
  if (report.click_dislike > 0) {
    report.dislike_ratio = static_cast<double>(report.textual_dislike) /
                           static_cast<double>(report.click_dislike);
  }
  return report;
}

// ---------------------------------------------------------------------------
// rubric set difference
// ---------------------------------------------------------------------------

using EquivalenceJudge = std::function<bool(const RubricItem&, const RubricItem&)>;

inline bool items_textually_equivalent(const RubricItem& a, const RubricItem& b) {
  if (a.keyword.has_value() && b.keyword.has_value() &&
      normalize_text(*a.keyword) == normalize_text(*b.keyword)) {
    return true;
  }
  return normalize_text(a.description) == normalize_text(b.description);
}

// Number of target items with no equivalent in source. The default notion of
// equivalence is exact normalized text; pass a judge for semantic matching.
inline int rubric_set_difference(const Rubric& target, const Rubric& source,
                                 const EquivalenceJudge& judge = nullptr) {
  if (target.items.empty() || source.items.empty()) {
    fail(ErrorKind::EmptyInput, "set difference needs two non-empty rubrics");
  }
  const EquivalenceJudge& equivalent = judge ? judge : items_textually_equivalent;
  int new_items = 0;
  for (const auto& t : target.items) {
    bool found = false;
    for (const auto& s : source.items) {
      if (equivalent(t, s)) {
        found = true;
        break;
      }
    }
    if (!found) ++new_items;
  }
  return new_items;
}

// Equivalence oracle backed by a completion endpoint: asks whether two rubric
// items describe the same user behavior and expects a YES/NO verdict.
inline EquivalenceJudge llm_equivalence_judge(CompletionClient& client,
                                              PromptOptions options = {}) {
  return [&client, options](const RubricItem& a, const RubricItem& b) {
    PromptRequest req;
    req.user_text =
        "Do these two rubric items describe the same user behavior?\n"
        "Item A: " + a.description + "\n" +
        "Item B: " + b.description + "\n" +
        "Answer YES or NO only.";
    req.temperature = options.temperature;
    req.max_output_tokens = options.max_output_tokens;
    req.model_tag = options.model_tag;
    const CompletionText completion = client.cached_complete(req);
    const std::string verdict = normalize_text(completion.text);
    return verdict.rfind("yes", 0) == 0;
  };
}

}  // namespace spur
