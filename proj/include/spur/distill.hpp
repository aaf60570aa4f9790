#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "spur/errors.hpp"
#include "spur/metrics.hpp"
#include "spur/prompts.hpp"
#include "spur/scoring.hpp"
#include "spur/util.hpp"

namespace spur {

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
};

enum class ModelKind { Logistic, Linear };

inline const char* to_string(ModelKind k) {
  return k == ModelKind::Logistic ? "logistic" : "linear";
}

struct Hyperparams {
  double learning_rate = 0.1;
  double l2 = 1e-4;
  int max_epochs = 2000;
  double tolerance = 1e-8;
  std::uint32_t seed = 0;
};

struct TrainingManifest {
  int epochs_run = 0;
  double learning_rate = 0.0;
  double l2 = 0.0;
  double final_loss = 0.0;
  std::uint32_t seed = 0;
  std::vector<double> loss_trajectory;
};

struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;
  ModelKind kind = ModelKind::Logistic;
  TrainingManifest training_manifest;
};

namespace distill_detail {

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace distill_detail

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad_weights;
  double grad_bias = 0.0;
};

// Full-batch loss and analytic gradient: mean log-loss (Logistic) or mean
// squared error (Linear) plus (l2/2)||w||^2. The bias is never penalized.
// Exposed so tests can cross-check the gradient with finite differences.
inline LossGrad evaluate_loss(const std::vector<double>& weights, double bias,
                              const std::vector<EmbeddingVector>& features,
                              const std::vector<double>& targets, ModelKind kind,
                              double l2) {
  const std::size_t n = features.size();
  const std::size_t dim = weights.size();
  LossGrad out;
  out.grad_weights.assign(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& x = features[i].values;
    double z = bias;
    for (std::size_t j = 0; j < dim; ++j) z += weights[j] * x[j];
    double residual;
    if (kind == ModelKind::Logistic) {
      out.loss += targets[i] > 0.5 ? distill_detail::softplus(-z)
                                   : distill_detail::softplus(z);
      residual = distill_detail::sigmoid(z) - targets[i];
    } else {
      const double error = z - targets[i];
      out.loss += error * error;
      residual = 2.0 * error;
    }
    for (std::size_t j = 0; j < dim; ++j) out.grad_weights[j] += residual * x[j];
    out.grad_bias += residual;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.loss *= inv_n;
  out.grad_bias *= inv_n;
  for (std::size_t j = 0; j < dim; ++j) {
    out.grad_weights[j] = out.grad_weights[j] * inv_n + l2 * weights[j];
    out.loss += 0.5 * l2 * weights[j] * weights[j];
  }
  return out;
}

// Deterministic full-batch gradient descent from zero-initialized weights.
// Stops when the per-epoch loss improvement falls below tolerance.
inline LinearModel train_linear(const std::vector<EmbeddingVector>& features,
                                const std::vector<double>& targets, ModelKind kind,
                                Hyperparams hp = {}) {
  if (features.size() != targets.size()) {
    fail(ErrorKind::LengthMismatch, std::to_string(features.size()) + " features vs " +
                                        std::to_string(targets.size()) + " targets");
  }
  if (features.size() < 2) {
    fail(ErrorKind::InsufficientData, "training needs at least 2 examples");
  }
  const std::size_t dim = features[0].dim();
  if (dim == 0) fail(ErrorKind::DimensionMismatch, "features have dimension 0");
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].dim() != dim) {
      fail(ErrorKind::DimensionMismatch,
           "feature " + std::to_string(i) + " has dim " +
               std::to_string(features[i].dim()) + ", expected " + std::to_string(dim));
    }
    for (double v : features[i].values) {
      if (!std::isfinite(v)) {
        fail(ErrorKind::NonFiniteFeature, "feature " + std::to_string(i));
      }
    }
    if (!std::isfinite(targets[i])) {
      fail(ErrorKind::NonFiniteFeature, "target " + std::to_string(i));
    }
    if (kind == ModelKind::Logistic && targets[i] != 0.0 && targets[i] != 1.0) {
      fail(ErrorKind::InvalidConfig, "logistic targets must be 0 or 1, got " +
                                         std::to_string(targets[i]));
    }
  }
  if (hp.max_epochs < 1) fail(ErrorKind::InvalidConfig, "max_epochs must be >= 1");
  if (hp.learning_rate <= 0.0) fail(ErrorKind::InvalidConfig, "learning_rate must be > 0");

  LinearModel model;
  model.kind = kind;
  model.weights.assign(dim, 0.0);
  model.bias = 0.0;
  model.training_manifest.learning_rate = hp.learning_rate;
  model.training_manifest.l2 = hp.l2;
  model.training_manifest.seed = hp.seed;

  double previous_loss = std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= hp.max_epochs; ++epoch) {
    const LossGrad lg =
        evaluate_loss(model.weights, model.bias, features, targets, kind, hp.l2);
    if (!std::isfinite(lg.loss)) {
      fail(ErrorKind::DivergedLoss,
           "loss became non-finite at epoch " + std::to_string(epoch));
    }
    for (std::size_t j = 0; j < dim; ++j) {
      model.weights[j] -= hp.learning_rate * lg.grad_weights[j];
    }
    model.bias -= hp.learning_rate * lg.grad_bias;
    model.training_manifest.loss_trajectory.push_back(lg.loss);
    model.training_manifest.epochs_run = epoch;
    model.training_manifest.final_loss = lg.loss;
    if (previous_loss - lg.loss < hp.tolerance && epoch > 1) break;
    previous_loss = lg.loss;
  }
  return model;
}

inline double predict(const LinearModel& model, const EmbeddingVector& x) {
  if (x.dim() != model.weights.size()) {
    fail(ErrorKind::DimensionMismatch, "input dim " + std::to_string(x.dim()) +
                                           " vs model dim " +
                                           std::to_string(model.weights.size()));
  }
  double z = model.bias;
  for (std::size_t j = 0; j < model.weights.size(); ++j) {
    z += model.weights[j] * x.values[j];
  }
  return model.kind == ModelKind::Logistic ? distill_detail::sigmoid(z) : z;
}

// Embedding followed by the raw 0..10 item scores, sat block then dsat block.
inline EmbeddingVector combined_features(const EmbeddingVector& embedding,
                                         const ScoreCard& card) {
  EmbeddingVector out;
  out.values = embedding.values;
  out.values.reserve(embedding.dim() + card.sat_items.size() + card.dsat_items.size());
  for (const auto& item : card.sat_items) {
    out.values.push_back(static_cast<double>(item.score));
  }
  for (const auto& item : card.dsat_items) {
    out.values.push_back(static_cast<double>(item.score));
  }
  return out;
}

// ---------------------------------------------------------------------------
// distilled per-item classifiers
// ---------------------------------------------------------------------------

struct DistilledClassifier {
  Polarity polarity = Polarity::Sat;
  int index = 0;
  std::string keyword;
  LinearModel model;
  double auc = 0.0;
  std::size_t test_size = 0;
};

// Distills one rubric item into an embedding classifier: target is the
// item's Yes/No decision, model is logistic, quality is held-out AUC.
inline DistilledClassifier distill_rubric_item(
    const std::vector<ScoreCard>& cards,
    const std::map<std::string, EmbeddingVector>& embeddings, Polarity polarity,
    int index, double split_fraction = 0.8, std::uint32_t seed = 0,
    Hyperparams hp = {}, const std::string& keyword = "") {
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
    fail(ErrorKind::InvalidConfig, "split_fraction must lie in (0,1)");
  }
  if (cards.size() < 2) {
    fail(ErrorKind::InsufficientData, "distillation needs at least 2 scorecards");
  }

  std::vector<EmbeddingVector> features;
  std::vector<double> targets;
  for (const auto& card : cards) {
    auto it = embeddings.find(card.conversation_id);
    if (it == embeddings.end()) {
      fail(ErrorKind::MissingEmbedding,
           "no embedding for conversation '" + card.conversation_id + "'");
    }
    const auto& items = polarity == Polarity::Sat ? card.sat_items : card.dsat_items;
    if (index < 1 || index > static_cast<int>(items.size())) {
      fail(ErrorKind::InvalidConfig,
           "rubric item index " + std::to_string(index) + " out of range");
    }
    features.push_back(it->second);
    targets.push_back(items[static_cast<std::size_t>(index) - 1].decision == Decision::Yes
                          ? 1.0
                          : 0.0);
  }

  hp.seed = seed;
  std::mt19937 rng(seed);
  const auto perm = random_permutation(cards.size(), rng);
  const auto train_size = static_cast<std::size_t>(
      std::ceil(split_fraction * static_cast<double>(cards.size())));

  std::vector<EmbeddingVector> train_x, test_x;
  std::vector<double> train_y;
  std::vector<double> test_scores;
  std::vector<int> test_labels;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (i < train_size) {
      train_x.push_back(features[perm[i]]);
      train_y.push_back(targets[perm[i]]);
    } else {
      test_x.push_back(features[perm[i]]);
      test_labels.push_back(targets[perm[i]] > 0.5 ? 1 : 0);
    }
  }

  bool has_yes = false, has_no = false;
  for (double y : train_y) (y > 0.5 ? has_yes : has_no) = true;
  if (!has_yes || !has_no) {
    fail(ErrorKind::SingleClassTraining,
         "training split has only one decision class for item " +
             std::string(to_string(polarity)) + std::to_string(index));
  }

  DistilledClassifier out;
  out.polarity = polarity;
  out.index = index;
  out.keyword = keyword;
  out.model = train_linear(train_x, train_y, ModelKind::Logistic, hp);
  for (const auto& x : test_x) test_scores.push_back(predict(out.model, x));
  out.test_size = test_x.size();
  out.auc = roc_auc(test_scores, test_labels);
  return out;
}

// ---------------------------------------------------------------------------
// combined USE model
// ---------------------------------------------------------------------------

struct UseModelOptions {
  Hyperparams hp;
  // Default drops Neutral conversations; setting this folds them into Dsat.
  bool neutral_as_dsat = false;
};

// Binary satisfaction model over arbitrary feature vectors (embedding-only
// or rubric-augmented). Logistic encodes Sat as 1/0, Linear as +1/-1.
inline LinearModel train_use_model(const std::vector<EmbeddingVector>& features,
                                   const std::vector<SatLabel>& labels, ModelKind kind,
                                   UseModelOptions options = {}) {
  if (features.size() != labels.size()) {
    fail(ErrorKind::LengthMismatch, std::to_string(features.size()) + " features vs " +
                                        std::to_string(labels.size()) + " labels");
  }
  std::vector<EmbeddingVector> kept;
  std::vector<double> targets;
  bool has_sat = false, has_dsat = false;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    SatLabel label = labels[i];
    if (label == SatLabel::Neutral) {
      if (!options.neutral_as_dsat) continue;
      label = SatLabel::Dsat;
    }
    kept.push_back(features[i]);
    if (label == SatLabel::Sat) {
      targets.push_back(kind == ModelKind::Logistic ? 1.0 : 1.0);
      has_sat = true;
    } else {
      targets.push_back(kind == ModelKind::Logistic ? 0.0 : -1.0);
      has_dsat = true;
    }
  }
  if (!has_sat || !has_dsat) {
    fail(ErrorKind::SingleClassTraining,
         "binary training needs both sat and dsat examples");
  }
  return train_linear(kept, targets, kind, options.hp);
}

inline SatLabel predict_use_label(const LinearModel& model, const EmbeddingVector& x) {
  const double score = predict(model, x);
  if (model.kind == ModelKind::Logistic) {
    return score > 0.5 ? SatLabel::Sat : SatLabel::Dsat;
  }
  return score > 0.0 ? SatLabel::Sat : SatLabel::Dsat;
}

// ---------------------------------------------------------------------------
// embedding and model files
// ---------------------------------------------------------------------------

inline std::map<std::string, EmbeddingVector> load_embeddings(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open embedding file " + path.string());
  std::map<std::string, EmbeddingVector> out;
  std::string line;
  std::size_t line_number = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("id") ||
        !j.contains("vector") || !j["vector"].is_array()) {
      fail(ErrorKind::MalformedRecord,
           "line " + std::to_string(line_number) + ": expected {id, vector}");
    }
    const std::string id = j["id"].get<std::string>();
    if (out.count(id)) {
      fail(ErrorKind::DuplicateId,
           "line " + std::to_string(line_number) + ": duplicate id '" + id + "'");
    }
    EmbeddingVector vec;
    for (const auto& v : j["vector"]) {
      if (!v.is_number()) {
        fail(ErrorKind::MalformedRecord,
             "line " + std::to_string(line_number) + ": non-numeric vector entry");
      }
      const double value = v.get<double>();
      if (!std::isfinite(value)) {
        fail(ErrorKind::NonFiniteFeature,
             "line " + std::to_string(line_number) + ": non-finite vector entry");
      }
      vec.values.push_back(value);
    }
    if (vec.values.empty()) {
      fail(ErrorKind::MalformedRecord,
           "line " + std::to_string(line_number) + ": empty vector");
    }
    if (dim == 0) {
      dim = vec.dim();
    } else if (vec.dim() != dim) {
      fail(ErrorKind::DimensionMismatch,
           "line " + std::to_string(line_number) + ": dim " + std::to_string(vec.dim()) +
               " differs from " + std::to_string(dim));
    }
    out.emplace(id, std::move(vec));
  }
  if (out.empty()) fail(ErrorKind::EmptyFile, "no embeddings in " + path.string());
  return out;
}

inline void save_embeddings(const std::map<std::string, EmbeddingVector>& embeddings,
                            const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write embedding file " + path.string());
  for (const auto& [id, vec] : embeddings) {
    nlohmann::ordered_json j;
    j["id"] = id;
    j["vector"] = vec.values;
    out << j.dump() << '\n';
  }
  if (!out) fail(ErrorKind::IoError, "failed writing embedding file " + path.string());
}

inline void save_model(const LinearModel& model, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(model.kind);
  j["dim"] = model.weights.size();
  j["weights"] = model.weights;
  j["bias"] = model.bias;
  nlohmann::ordered_json manifest;
  manifest["epochs_run"] = model.training_manifest.epochs_run;
  manifest["learning_rate"] = model.training_manifest.learning_rate;
  manifest["l2"] = model.training_manifest.l2;
  manifest["final_loss"] = model.training_manifest.final_loss;
  manifest["seed"] = model.training_manifest.seed;
  j["training_manifest"] = std::move(manifest);
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write model file " + path.string());
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorKind::IoError, "failed writing model file " + path.string());
}

inline LinearModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open model file " + path.string());
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("kind") ||
      !j.contains("weights") || !j.contains("bias")) {
    fail(ErrorKind::MalformedRecord, "model file is not a model document");
  }
  LinearModel model;
  model.kind = j["kind"] == "linear" ? ModelKind::Linear : ModelKind::Logistic;
  for (const auto& w : j["weights"]) model.weights.push_back(w.get<double>());
  model.bias = j["bias"].get<double>();
  if (j.contains("training_manifest") && j["training_manifest"].is_object()) {
    const auto& m = j["training_manifest"];
    model.training_manifest.epochs_run = m.value("epochs_run", 0);
    model.training_manifest.learning_rate = m.value("learning_rate", 0.0);
    model.training_manifest.l2 = m.value("l2", 0.0);
    model.training_manifest.final_loss = m.value("final_loss", 0.0);
    model.training_manifest.seed = m.value("seed", 0u);
  }
  return model;
}

}  // namespace spur
