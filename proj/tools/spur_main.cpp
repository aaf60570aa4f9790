// Command-line front end for the satisfaction-rubric pipeline. Every
// subcommand writes its outputs plus a manifest.json into --out, so runs are
// auditable and reproducible from the recorded digests.
//
// Exit codes: 0 success, 1 usage/input errors, 2 pipeline/provider failures.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spur/gateway_http.hpp"
#include "spur/spur.hpp"

namespace {

using nlohmann::ordered_json;

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) spur::fail(spur::ErrorKind::IoError, "cannot open " + path.string());
  spur::Sha256 hasher;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    hasher.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return spur::to_hex(hasher.finish());
}

// Accumulates what a run touched; flushed as manifest.json on success.
struct RunRecorder {
  std::string command;
  ordered_json config = ordered_json::object();
  std::map<std::string, std::string> inputs;
  std::vector<std::string> outputs;
  std::string started_at = now_iso8601();
  spur::WarningLog warnings;

  void input(const std::filesystem::path& path) {
    inputs[path.string()] = file_digest(path);
  }
  void output(const std::filesystem::path& path) { outputs.push_back(path.string()); }

  void write(const std::filesystem::path& out_dir) const {
    ordered_json j;
    j["command"] = command;
    j["config"] = config;
    j["config_digest"] = spur::sha256_hex(config.dump());
    ordered_json in = ordered_json::object();
    for (const auto& [path, digest] : inputs) in[path] = digest;
    j["inputs"] = std::move(in);
    j["outputs"] = outputs;
    j["started_at"] = started_at;
    j["finished_at"] = now_iso8601();
    j["warnings"] = {{"count", warnings.count()}, {"messages", warnings.messages()}};
    std::ofstream out(out_dir / "manifest.json");
    if (!out) {
      spur::fail(spur::ErrorKind::IoError,
                 "cannot write manifest in " + out_dir.string());
    }
    out << j.dump(2) << '\n';
  }
};

// ---------------------------------------------------------------------------
// provider wiring
// ---------------------------------------------------------------------------

struct ProviderOptions {
  std::string kind = "oracle";  // oracle | script | http
  std::string synth_config_path;
  std::string script_path;
  std::string endpoint;
  std::string api_key_env = "SPUR_API_KEY";
  std::string cache_dir;
  std::string model_tag = "default";
  double temperature = 0.0;
  int max_output_tokens = 2048;
  std::size_t token_budget = 32768;
  std::size_t concurrency = 8;
};

void add_provider_flags(CLI::App* cmd, ProviderOptions& opts) {
  cmd->add_option("--provider", opts.kind, "Completion provider: oracle, script, or http")
      ->check(CLI::IsMember({"oracle", "script", "http"}))
      ->capture_default_str();
  cmd->add_option("--synth-config", opts.synth_config_path,
                  "Synthetic inventory config for the oracle provider");
  cmd->add_option("--script", opts.script_path,
                  "Scripted responses file for the script provider");
  cmd->add_option("--endpoint", opts.endpoint, "Base URL for the http provider");
  cmd->add_option("--api-key-env", opts.api_key_env,
                  "Environment variable holding the http credential")
      ->capture_default_str();
  cmd->add_option("--cache", opts.cache_dir, "Completion cache directory");
  cmd->add_option("--model-tag", opts.model_tag, "Model tag recorded in request hashes")
      ->capture_default_str();
  cmd->add_option("--temperature", opts.temperature, "Decoding temperature")
      ->capture_default_str();
  cmd->add_option("--max-output-tokens", opts.max_output_tokens, "Completion length cap")
      ->capture_default_str();
  cmd->add_option("--token-budget", opts.token_budget,
                  "Reject prompts whose estimated tokens exceed this")
      ->capture_default_str();
  cmd->add_option("--concurrency", opts.concurrency, "Max in-flight requests")
      ->capture_default_str();
}

std::shared_ptr<spur::Provider> make_provider(const ProviderOptions& opts,
                                              RunRecorder& recorder) {
  if (opts.kind == "oracle") {
    spur::SynthConfig config = spur::default_synth_config();
    if (!opts.synth_config_path.empty()) {
      recorder.input(opts.synth_config_path);
      config = spur::load_synth_config(opts.synth_config_path);
    }
    return spur::oracle_provider(std::move(config));
  }
  if (opts.kind == "script") {
    if (opts.script_path.empty()) {
      spur::fail(spur::ErrorKind::InvalidConfig, "script provider needs --script");
    }
    recorder.input(opts.script_path);
    std::ifstream in(opts.script_path);
    if (!in) {
      spur::fail(spur::ErrorKind::IoError, "cannot open script " + opts.script_path);
    }
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_array()) {
      spur::fail(spur::ErrorKind::InvalidConfig,
                 "script file must be a JSON array of rules");
    }
    std::vector<spur::MockRule> rules;
    for (const auto& entry : j) {
      const std::string match = entry.value("match", "substring");
      const std::string needle = entry.value("needle", "");
      const std::string response = entry.value("response", "");
      if (match == "hash") {
        rules.push_back(spur::match_hash(needle, response));
      } else if (match == "substring") {
        rules.push_back(spur::match_substring(needle, response));
      } else {
        spur::fail(spur::ErrorKind::InvalidConfig, "unknown match kind '" + match + "'");
      }
    }
    return spur::script_mock(std::move(rules));
  }
  if (opts.endpoint.empty()) {
    spur::fail(spur::ErrorKind::InvalidConfig, "http provider needs --endpoint");
  }
  spur::HttpProviderConfig config;
  config.base_url = opts.endpoint;
  config.api_key_env = opts.api_key_env;
  return spur::make_http_provider(std::move(config));
}

std::unique_ptr<spur::CompletionClient> make_client(const ProviderOptions& opts,
                                                    RunRecorder& recorder) {
  spur::GatewayConfig config;
  config.max_in_flight = opts.concurrency;
  config.token_budget = opts.token_budget;
  if (!opts.cache_dir.empty()) config.cache_dir = opts.cache_dir;
  return std::make_unique<spur::CompletionClient>(make_provider(opts, recorder),
                                                  std::move(config));
}

spur::PromptOptions prompt_options(const ProviderOptions& opts) {
  spur::PromptOptions p;
  p.temperature = opts.temperature;
  p.max_output_tokens = opts.max_output_tokens;
  p.model_tag = opts.model_tag;
  return p;
}

ordered_json provider_config_json(const ProviderOptions& opts) {
  ordered_json j;
  j["provider"] = opts.kind;
  if (!opts.synth_config_path.empty()) j["synth_config"] = opts.synth_config_path;
  if (!opts.script_path.empty()) j["script"] = opts.script_path;
  if (!opts.endpoint.empty()) j["endpoint"] = opts.endpoint;
  if (!opts.cache_dir.empty()) j["cache"] = opts.cache_dir;
  j["model_tag"] = opts.model_tag;
  j["temperature"] = opts.temperature;
  j["max_output_tokens"] = opts.max_output_tokens;
  j["token_budget"] = opts.token_budget;
  j["concurrency"] = opts.concurrency;
  return j;
}

spur::OnError parse_on_error(const std::string& value) {
  if (value == "skip") return spur::OnError::Skip;
  return spur::OnError::Fail;
}

std::filesystem::path prepare_out_dir(const std::string& out) {
  if (out.empty()) spur::fail(spur::ErrorKind::InvalidConfig, "--out is required");
  std::filesystem::path dir(out);
  std::filesystem::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------
// subcommand bodies
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string config_path;
  std::string out;
  int num_conversations = -1;
  double noise_rate = -1.0;
  long long seed = -1;
  bool skip_embeddings = false;
};

int run_synth(const SynthArgs& args) {
  RunRecorder recorder;
  recorder.command = "synth";
  spur::SynthConfig config = spur::default_synth_config();
  if (!args.config_path.empty()) {
    recorder.input(args.config_path);
    config = spur::load_synth_config(args.config_path);
  }
  if (args.num_conversations >= 0) config.num_conversations = args.num_conversations;
  if (args.noise_rate >= 0.0) config.noise_rate = args.noise_rate;
  if (args.seed >= 0) config.seed = static_cast<std::uint32_t>(args.seed);
  spur::validate_synth_config(config);
  recorder.config = spur::synth_config_to_json(config);

  const auto out_dir = prepare_out_dir(args.out);
  const spur::Corpus corpus = spur::generate_corpus(config);
  spur::save_corpus(corpus, out_dir / "corpus.jsonl");
  recorder.output(out_dir / "corpus.jsonl");
  if (!args.skip_embeddings) {
    const auto embeddings = spur::generate_embeddings(corpus, config);
    spur::save_embeddings(embeddings, out_dir / "embeddings.jsonl");
    recorder.output(out_dir / "embeddings.jsonl");
  }
  {
    std::ofstream cfg(out_dir / "synth_config.json");
    cfg << spur::synth_config_to_json(config).dump(2) << '\n';
    recorder.output(out_dir / "synth_config.json");
  }
  recorder.write(out_dir);
  std::cout << "generated " << corpus.size() << " conversations in " << out_dir.string()
            << "\n";
  return 0;
}

struct ExtractArgs {
  std::string corpus;
  std::string polarity = "sat";
  int k = 3;
  std::string on_error = "fail";
  std::string out;
  ProviderOptions provider;
};

int run_extract(const ExtractArgs& args) {
  RunRecorder recorder;
  recorder.command = "extract";
  recorder.config = {{"corpus", args.corpus},
                     {"polarity", args.polarity},
                     {"k", args.k},
                     {"on_error", args.on_error}};
  const ordered_json provider_json = provider_config_json(args.provider);
  for (const auto& [key, value] : provider_json.items()) {
    recorder.config[key] = value;
  }
  recorder.input(args.corpus);

  const spur::Corpus corpus = spur::load_corpus(args.corpus);
  const spur::Polarity polarity = *spur::parse_polarity(args.polarity);
  auto client = make_client(args.provider, recorder);
  const spur::PatternSet set =
      spur::extract_patterns(*client, corpus, polarity, args.k,
                             parse_on_error(args.on_error), &recorder.warnings,
                             prompt_options(args.provider));

  const auto out_dir = prepare_out_dir(args.out);
  const auto path = out_dir / ("patterns_" + args.polarity + ".jsonl");
  spur::save_pattern_set(set, path);
  recorder.output(path);
  recorder.write(out_dir);
  std::cout << "extracted " << set.size() << " patterns from "
            << set.extraction_manifest.size() << " conversations ("
            << set.skipped_ids.size() << " skipped) -> " << path.string() << "\n";
  return 0;
}

struct SummarizeArgs {
  std::string patterns;
  int n = 10;
  int batch_size = 100;
  bool resume = false;
  long long shuffle_seed = -1;
  std::string out;
  ProviderOptions provider;
};

int run_summarize(const SummarizeArgs& args) {
  RunRecorder recorder;
  recorder.command = "summarize";
  recorder.config = {{"patterns", args.patterns},
                     {"n", args.n},
                     {"batch_size", args.batch_size},
                     {"resume", args.resume}};
  if (args.shuffle_seed >= 0) recorder.config["shuffle_seed"] = args.shuffle_seed;
  const ordered_json provider_json = provider_config_json(args.provider);
  for (const auto& [key, value] : provider_json.items()) {
    recorder.config[key] = value;
  }
  recorder.input(args.patterns);

  const spur::PatternSet set = spur::load_pattern_set(args.patterns);
  const auto out_dir = prepare_out_dir(args.out);
  auto client = make_client(args.provider, recorder);
  spur::SummarizeOptions options;
  options.prompt = prompt_options(args.provider);
  options.persist_dir = out_dir;
  options.resume = args.resume;
  if (args.shuffle_seed >= 0) {
    options.shuffle_seed = static_cast<std::uint32_t>(args.shuffle_seed);
  }
  const spur::Rubric rubric = spur::summarize_rubric(*client, set, args.n,
                                                     args.batch_size, options,
                                                     &recorder.warnings);

  const auto path =
      out_dir / ("rubric_" + std::string(spur::to_string(rubric.polarity)) + ".json");
  spur::save_rubric(rubric, path);
  recorder.output(path);
  recorder.write(out_dir);
  std::cout << "summarized " << set.size() << " patterns into " << rubric.size()
            << " rubric items -> " << path.string() << "\n";
  return 0;
}

struct ScoreArgs {
  std::string corpus;
  std::string sat_rubric;
  std::string dsat_rubric;
  int band = 0;
  std::string on_error = "fail";
  std::string out;
  ProviderOptions provider;
};

int run_score(const ScoreArgs& args) {
  RunRecorder recorder;
  recorder.command = "score";
  recorder.config = {{"corpus", args.corpus},
                     {"sat_rubric", args.sat_rubric},
                     {"dsat_rubric", args.dsat_rubric},
                     {"band", args.band},
                     {"on_error", args.on_error}};
  const ordered_json provider_json = provider_config_json(args.provider);
  for (const auto& [key, value] : provider_json.items()) {
    recorder.config[key] = value;
  }
  recorder.input(args.corpus);
  recorder.input(args.sat_rubric);
  recorder.input(args.dsat_rubric);

  const spur::Corpus corpus = spur::load_corpus(args.corpus);
  const spur::Rubric sat = spur::load_rubric(args.sat_rubric);
  const spur::Rubric dsat = spur::load_rubric(args.dsat_rubric);
  auto client = make_client(args.provider, recorder);
  const spur::ScoreRun run =
      spur::score_corpus(*client, corpus, sat, dsat, args.band,
                         parse_on_error(args.on_error), &recorder.warnings,
                         prompt_options(args.provider));

  const auto out_dir = prepare_out_dir(args.out);
  const auto path = out_dir / "cards.jsonl";
  spur::save_score_run(run, path);
  recorder.output(path);
  recorder.write(out_dir);
  std::cout << "scored " << run.cards.size() << " conversations ("
            << run.skipped_ids.size() << " skipped) -> " << path.string() << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string cards;
  std::string corpus;
  bool clicks = false;
  std::string textual_like;
  std::string textual_dislike;
  std::string rubric;
  std::string compare_rubric;
  std::string out;
};

ordered_json eval_report_json(const spur::EvalReport& report) {
  ordered_json j;
  j["accuracy"] = report.accuracy;
  j["precision"] = report.precision;
  j["recall"] = report.recall;
  j["f1"] = report.f1;
  ordered_json per_class = ordered_json::array();
  for (const auto& m : report.per_class) {
    per_class.push_back({{"label", spur::to_string(m.label)},
                         {"precision", m.precision},
                         {"recall", m.recall},
                         {"f1", m.f1},
                         {"support", m.support},
                         {"degenerate", m.degenerate}});
  }
  j["per_class"] = std::move(per_class);
  return j;
}

int run_evaluate(const EvaluateArgs& args) {
  RunRecorder recorder;
  recorder.command = "evaluate";
  recorder.config = {{"cards", args.cards}, {"corpus", args.corpus},
                     {"clicks", args.clicks}};
  recorder.input(args.cards);
  recorder.input(args.corpus);

  const spur::ScoreRun run = spur::load_score_run(args.cards);
  const spur::Corpus corpus = spur::load_corpus(args.corpus);
  std::map<std::string, const spur::Conversation*> by_id;
  for (const auto& conv : corpus.conversations) by_id[conv.id] = &conv;

  std::vector<spur::SatLabel> golds, preds;
  std::size_t unmatched = 0;
  for (const auto& card : run.cards) {
    auto it = by_id.find(card.conversation_id);
    if (it == by_id.end() || !it->second->label.has_value()) {
      ++unmatched;
      continue;
    }
    golds.push_back(*it->second->label);
    preds.push_back(card.predicted);
  }
  const spur::EvalReport report = spur::weighted_metrics(spur::confusion(golds, preds));

  ordered_json out_doc;
  out_doc["sat_rubric_digest"] = run.sat_rubric_digest;
  out_doc["dsat_rubric_digest"] = run.dsat_rubric_digest;
  out_doc["neutral_band"] = run.neutral_band;
  out_doc["evaluated"] = golds.size();
  out_doc["without_gold_label"] = unmatched;
  out_doc["metrics"] = eval_report_json(report);

  if (args.clicks) {
    std::map<std::string, spur::Click> clicks;
    for (const auto& conv : corpus.conversations) {
      if (conv.click.has_value()) clicks[conv.id] = *conv.click;
    }
    const auto rows = spur::item_score_by_feedback(run.cards, clicks);
    ordered_json table = ordered_json::array();
    for (const auto& row : rows) {
      ordered_json entry;
      entry["item"] = std::string(row.polarity == spur::Polarity::Sat ? "S" : "D") +
                      std::to_string(row.index);
      entry["mean_like"] =
          row.mean_like.has_value() ? ordered_json(*row.mean_like) : ordered_json(nullptr);
      entry["mean_dislike"] = row.mean_dislike.has_value()
                                  ? ordered_json(*row.mean_dislike)
                                  : ordered_json(nullptr);
      if (row.chi.has_value()) {
        entry["chi_square"] = row.chi->statistic;
        entry["p"] = spur::to_string(row.chi->bucket);
      } else {
        entry["chi_square"] = nullptr;
        entry["p"] = "undefined";
      }
      table.push_back(std::move(entry));
    }
    out_doc["item_feedback"] = std::move(table);
  }

  {
    const auto rows = spur::pattern_frequency(run.cards);
    ordered_json table = ordered_json::array();
    for (const auto& row : rows) {
      table.push_back(
          {{"item", std::string(row.polarity == spur::Polarity::Sat ? "S" : "D") +
                        std::to_string(row.index)},
           {"yes_rate", row.yes_rate}});
    }
    out_doc["pattern_frequency"] = std::move(table);
  }

  if (!args.textual_like.empty() || !args.textual_dislike.empty()) {
    auto read_ids = [&](const std::string& path) {
      std::set<std::string> ids;
      if (path.empty()) return ids;
      recorder.input(path);
      std::ifstream in(path);
      if (!in) spur::fail(spur::ErrorKind::IoError, "cannot open id file " + path);
      std::string line;
      while (std::getline(in, line)) {
        const std::string id = spur::trim(line);
        if (!id.empty()) ids.insert(id);
      }
      return ids;
    };
    const auto coverage = spur::feedback_coverage(corpus, read_ids(args.textual_like),
                                                  read_ids(args.textual_dislike));
    ordered_json j;
    j["click_like"] = coverage.click_like;
    j["click_dislike"] = coverage.click_dislike;
    j["textual_like"] = coverage.textual_like;
    j["textual_dislike"] = coverage.textual_dislike;
    j["like_ratio"] = coverage.like_ratio.has_value() ? ordered_json(*coverage.like_ratio)
                                                      : ordered_json(nullptr);
    j["dislike_ratio"] = coverage.dislike_ratio.has_value()
                             ? ordered_json(*coverage.dislike_ratio)
                             : ordered_json(nullptr);
    out_doc["feedback_coverage"] = std::move(j);
  }

  if (!args.rubric.empty() && !args.compare_rubric.empty()) {
    recorder.input(args.rubric);
    recorder.input(args.compare_rubric);
    const spur::Rubric target = spur::load_rubric(args.rubric);
    const spur::Rubric source = spur::load_rubric(args.compare_rubric);
    out_doc["rubric_new_items"] = spur::rubric_set_difference(target, source);
  }

  const auto out_dir = prepare_out_dir(args.out);
  const auto path = out_dir / "report.json";
  {
    std::ofstream out(path);
    if (!out) spur::fail(spur::ErrorKind::IoError, "cannot write " + path.string());
    out << out_doc.dump(2) << '\n';
  }
  recorder.output(path);
  recorder.write(out_dir);
  char line[160];
  std::snprintf(line, sizeof(line),
                "evaluated %zu conversations: acc %.4f, weighted P %.4f R %.4f F1 %.4f\n",
                golds.size(), report.accuracy, report.precision, report.recall,
                report.f1);
  std::cout << line;
  return 0;
}

struct DistillArgs {
  std::string cards;
  std::string embeddings;
  std::string item = "all";
  double split = 0.8;
  long long seed = 0;
  double learning_rate = 0.1;
  double l2 = 1e-4;
  int max_epochs = 2000;
  double tolerance = 1e-8;
  std::string out;
};

int run_distill(const DistillArgs& args) {
  RunRecorder recorder;
  recorder.command = "distill";
  recorder.config = {{"cards", args.cards},       {"embeddings", args.embeddings},
                     {"item", args.item},         {"split", args.split},
                     {"seed", args.seed},         {"learning_rate", args.learning_rate},
                     {"l2", args.l2},             {"max_epochs", args.max_epochs},
                     {"tolerance", args.tolerance}};
  recorder.input(args.cards);
  recorder.input(args.embeddings);

  const spur::ScoreRun run = spur::load_score_run(args.cards);
  const auto embeddings = spur::load_embeddings(args.embeddings);
  if (run.cards.empty()) {
    spur::fail(spur::ErrorKind::EmptyInput, "scorecard file has no cards");
  }

  spur::Hyperparams hp;
  hp.learning_rate = args.learning_rate;
  hp.l2 = args.l2;
  hp.max_epochs = args.max_epochs;
  hp.tolerance = args.tolerance;

  std::vector<std::pair<spur::Polarity, int>> targets;
  if (args.item == "all") {
    for (std::size_t i = 0; i < run.cards[0].sat_items.size(); ++i) {
      targets.emplace_back(spur::Polarity::Sat, static_cast<int>(i) + 1);
    }
    for (std::size_t i = 0; i < run.cards[0].dsat_items.size(); ++i) {
      targets.emplace_back(spur::Polarity::Dsat, static_cast<int>(i) + 1);
    }
  } else {
    if (args.item.size() < 2 || (args.item[0] != 'S' && args.item[0] != 'D')) {
      spur::fail(spur::ErrorKind::InvalidConfig,
                 "--item must be S<i>, D<j>, or all; got '" + args.item + "'");
    }
    targets.emplace_back(args.item[0] == 'S' ? spur::Polarity::Sat : spur::Polarity::Dsat,
                         std::atoi(args.item.c_str() + 1));
  }

  const auto out_dir = prepare_out_dir(args.out);
  ordered_json report = ordered_json::array();
  for (const auto& [polarity, index] : targets) {
    const std::string tag =
        std::string(polarity == spur::Polarity::Sat ? "S" : "D") + std::to_string(index);
    spur::DistilledClassifier classifier;
    try {
      classifier = spur::distill_rubric_item(run.cards, embeddings, polarity, index,
                                             args.split,
                                             static_cast<std::uint32_t>(args.seed), hp);
    } catch (const spur::SpurError& e) {
      if (e.kind() == spur::ErrorKind::SingleClassTraining && args.item == "all") {
        // constant items (e.g. filler slots) carry no signal to distill
        recorder.warnings.add("skipping " + tag + ": " + e.message());
        report.push_back({{"item", tag}, {"skipped", e.message()}});
        continue;
      }
      throw;
    }
    const auto model_path = out_dir / ("model_" + tag + ".json");
    spur::save_model(classifier.model, model_path);
    recorder.output(model_path);
    report.push_back({{"item", tag},
                      {"auc", classifier.auc},
                      {"test_size", classifier.test_size},
                      {"epochs_run", classifier.model.training_manifest.epochs_run},
                      {"final_loss", classifier.model.training_manifest.final_loss},
                      {"model_file", model_path.filename().string()}});
    std::cout << tag << ": held-out AUC " << classifier.auc << " over "
              << classifier.test_size << " conversations\n";
  }

  const auto report_path = out_dir / "distill_report.json";
  {
    std::ofstream out(report_path);
    if (!out) spur::fail(spur::ErrorKind::IoError, "cannot write " + report_path.string());
    out << report.dump(2) << '\n';
  }
  recorder.output(report_path);
  recorder.write(out_dir);
  return 0;
}

struct RunAllArgs {
  std::string config_path;
  std::string out;
};

int run_all(const RunAllArgs& args) {
  RunRecorder recorder;
  recorder.command = "run-all";
  recorder.input(args.config_path);
  std::ifstream in(args.config_path);
  if (!in) {
    spur::fail(spur::ErrorKind::IoError, "cannot open config " + args.config_path);
  }
  nlohmann::json cfg = nlohmann::json::parse(in, nullptr, false);
  if (cfg.is_discarded() || !cfg.is_object()) {
    spur::fail(spur::ErrorKind::InvalidConfig, "run config is not a JSON object");
  }
  if (!cfg.contains("corpus")) {
    spur::fail(spur::ErrorKind::InvalidConfig, "run config needs a corpus path");
  }

  ProviderOptions provider;
  if (cfg.contains("provider") && cfg["provider"].is_object()) {
    const auto& p = cfg["provider"];
    provider.kind = p.value("kind", provider.kind);
    provider.synth_config_path = p.value("synth_config", provider.synth_config_path);
    provider.script_path = p.value("script", provider.script_path);
    provider.endpoint = p.value("endpoint", provider.endpoint);
    provider.api_key_env = p.value("api_key_env", provider.api_key_env);
  }
  provider.cache_dir = cfg.value("cache_dir", provider.cache_dir);
  provider.model_tag = cfg.value("model_tag", provider.model_tag);
  provider.temperature = cfg.value("temperature", provider.temperature);
  provider.max_output_tokens = cfg.value("max_output_tokens", provider.max_output_tokens);
  provider.token_budget = cfg.value("token_budget", provider.token_budget);
  provider.concurrency = cfg.value("concurrency", provider.concurrency);

  const int k = cfg.value("k", 3);
  const int n = cfg.value("n", 10);
  const int batch_size = cfg.value("batch_size", 100);
  const int band = cfg.value("band", 0);
  const spur::OnError on_error = parse_on_error(cfg.value("on_error", "fail"));
  recorder.config = {{"corpus", cfg["corpus"].get<std::string>()},
                     {"k", k},
                     {"n", n},
                     {"batch_size", batch_size},
                     {"band", band}};
  const ordered_json provider_json = provider_config_json(provider);
  for (const auto& [key, value] : provider_json.items()) {
    recorder.config[key] = value;
  }

  const std::string corpus_path = cfg["corpus"].get<std::string>();
  recorder.input(corpus_path);
  const spur::Corpus corpus = spur::load_corpus(corpus_path);
  auto client = make_client(provider, recorder);
  const spur::PromptOptions prompt = prompt_options(provider);
  const auto out_dir = prepare_out_dir(args.out);

  std::map<spur::Polarity, spur::Rubric> rubrics;
  for (const spur::Polarity polarity : {spur::Polarity::Sat, spur::Polarity::Dsat}) {
    const spur::PatternSet set = spur::extract_patterns(
        *client, corpus, polarity, k, on_error, &recorder.warnings, prompt);
    const auto pattern_path =
        out_dir / ("patterns_" + std::string(spur::to_string(polarity)) + ".jsonl");
    spur::save_pattern_set(set, pattern_path);
    recorder.output(pattern_path);

    spur::SummarizeOptions options;
    options.prompt = prompt;
    options.persist_dir = out_dir;
    const spur::Rubric rubric =
        spur::summarize_rubric(*client, set, n, batch_size, options, &recorder.warnings);
    const auto rubric_path =
        out_dir / ("rubric_" + std::string(spur::to_string(polarity)) + ".json");
    spur::save_rubric(rubric, rubric_path);
    recorder.output(rubric_path);
    rubrics.emplace(polarity, rubric);
  }

  const spur::ScoreRun run = spur::score_corpus(
      *client, corpus, rubrics.at(spur::Polarity::Sat), rubrics.at(spur::Polarity::Dsat),
      band, on_error, &recorder.warnings, prompt);
  const auto cards_path = out_dir / "cards.jsonl";
  spur::save_score_run(run, cards_path);
  recorder.output(cards_path);

  std::vector<spur::SatLabel> golds, preds;
  for (const auto& card : run.cards) {
    for (const auto& conv : corpus.conversations) {
      if (conv.id == card.conversation_id && conv.label.has_value()) {
        golds.push_back(*conv.label);
        preds.push_back(card.predicted);
        break;
      }
    }
  }
  ordered_json out_doc;
  if (!golds.empty()) {
    const spur::EvalReport report =
        spur::weighted_metrics(spur::confusion(golds, preds));
    out_doc["evaluated"] = golds.size();
    out_doc["metrics"] = eval_report_json(report);
    char line[160];
    std::snprintf(line, sizeof(line), "pipeline accuracy %.4f over %zu conversations\n",
                  report.accuracy, golds.size());
    std::cout << line;
  } else {
    out_doc["evaluated"] = 0;
  }
  const auto report_path = out_dir / "report.json";
  {
    std::ofstream out(report_path);
    if (!out) spur::fail(spur::ErrorKind::IoError, "cannot write " + report_path.string());
    out << out_doc.dump(2) << '\n';
  }
  recorder.output(report_path);
  recorder.write(out_dir);
  return 0;
}

int exit_code_for(spur::ErrorKind kind) {
  switch (kind) {
    case spur::ErrorKind::InvalidConfig:
    case spur::ErrorKind::IoError:
    case spur::ErrorKind::MalformedRecord:
    case spur::ErrorKind::EmptyFile:
    case spur::ErrorKind::DuplicateId:
    case spur::ErrorKind::EmptyLabelList:
      return 1;
    default:
      return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rubric-based user satisfaction pipeline"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled corpus");
  synth->add_option("--config", synth_args.config_path, "Synthetic config JSON");
  synth->add_option("--num-conversations", synth_args.num_conversations,
                    "Override conversation count");
  synth->add_option("--noise-rate", synth_args.noise_rate, "Override click noise rate");
  synth->add_option("--seed", synth_args.seed, "Override generator seed");
  synth->add_flag("--no-embeddings", synth_args.skip_embeddings,
                  "Skip embedding generation");
  synth->add_option("--out", synth_args.out, "Output directory")->required();

  ExtractArgs extract_args;
  auto* extract = app.add_subcommand("extract", "Extract labeled patterns (stage 1)");
  extract->add_option("--corpus", extract_args.corpus, "Labeled corpus JSONL")->required();
  extract->add_option("--polarity", extract_args.polarity, "sat or dsat")
      ->check(CLI::IsMember({"sat", "dsat"}))
      ->required();
  extract->add_option("--k", extract_args.k, "Max reasons per conversation")
      ->capture_default_str();
  extract->add_option("--on-error", extract_args.on_error, "fail or skip")
      ->check(CLI::IsMember({"fail", "skip"}))
      ->capture_default_str();
  extract->add_option("--out", extract_args.out, "Output directory")->required();
  add_provider_flags(extract, extract_args.provider);

  SummarizeArgs summarize_args;
  auto* summarize =
      app.add_subcommand("summarize", "Summarize patterns into a rubric (stage 2)");
  summarize->add_option("--patterns", summarize_args.patterns, "Pattern JSONL")->required();
  summarize->add_option("--n", summarize_args.n, "Rubric size")->capture_default_str();
  summarize->add_option("--batch-size", summarize_args.batch_size, "Patterns per batch")
      ->capture_default_str();
  summarize->add_flag("--resume", summarize_args.resume,
                      "Resume from the newest batch checkpoint in --out");
  summarize->add_option("--shuffle-seed", summarize_args.shuffle_seed,
                        "Shuffle pattern order with this seed before batching");
  summarize->add_option("--out", summarize_args.out, "Output directory")->required();
  add_provider_flags(summarize, summarize_args.provider);

  ScoreArgs score_args;
  auto* score = app.add_subcommand("score", "Score conversations with rubrics (stage 3)");
  score->add_option("--corpus", score_args.corpus, "Corpus JSONL")->required();
  score->add_option("--sat-rubric", score_args.sat_rubric, "SAT rubric JSON")->required();
  score->add_option("--dsat-rubric", score_args.dsat_rubric, "DSAT rubric JSON")
      ->required();
  score->add_option("--band", score_args.band, "Neutral band on the aggregate score")
      ->capture_default_str();
  score->add_option("--on-error", score_args.on_error, "fail or skip")
      ->check(CLI::IsMember({"fail", "skip"}))
      ->capture_default_str();
  score->add_option("--out", score_args.out, "Output directory")->required();
  add_provider_flags(score, score_args.provider);

  EvaluateArgs evaluate_args;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate scorecards against labels");
  evaluate->add_option("--cards", evaluate_args.cards, "Scorecard JSONL")->required();
  evaluate->add_option("--corpus", evaluate_args.corpus, "Corpus with gold labels")
      ->required();
  evaluate->add_flag("--clicks", evaluate_args.clicks,
                     "Report per-item score means and chi-square vs click feedback");
  evaluate->add_option("--textual-like", evaluate_args.textual_like,
                       "File of conversation ids with textual positive feedback");
  evaluate->add_option("--textual-dislike", evaluate_args.textual_dislike,
                       "File of conversation ids with textual negative feedback");
  evaluate->add_option("--rubric", evaluate_args.rubric,
                       "Rubric to diff with --compare-rubric");
  evaluate->add_option("--compare-rubric", evaluate_args.compare_rubric,
                       "Baseline rubric for the set-difference report");
  evaluate->add_option("--out", evaluate_args.out, "Output directory")->required();

  DistillArgs distill_args;
  auto* distill =
      app.add_subcommand("distill", "Distill rubric items into embedding classifiers");
  distill->add_option("--cards", distill_args.cards, "Scorecard JSONL")->required();
  distill->add_option("--embeddings", distill_args.embeddings, "Embedding JSONL")
      ->required();
  distill->add_option("--item", distill_args.item, "S<i>, D<j>, or all")
      ->capture_default_str();
  distill->add_option("--split", distill_args.split, "Train fraction")
      ->capture_default_str();
  distill->add_option("--seed", distill_args.seed, "Split seed")->capture_default_str();
  distill->add_option("--learning-rate", distill_args.learning_rate, "Step size")
      ->capture_default_str();
  distill->add_option("--l2", distill_args.l2, "L2 penalty")->capture_default_str();
  distill->add_option("--max-epochs", distill_args.max_epochs, "Epoch cap")
      ->capture_default_str();
  distill->add_option("--tolerance", distill_args.tolerance,
                      "Stop when loss improves less than this")
      ->capture_default_str();
  distill->add_option("--out", distill_args.out, "Output directory")->required();

  RunAllArgs run_all_args;
  auto* runall = app.add_subcommand("run-all", "Run extract, summarize, score, evaluate");
  runall->add_option("--config", run_all_args.config_path, "Pipeline config JSON")
      ->required();
  runall->add_option("--out", run_all_args.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return run_synth(synth_args);
    if (extract->parsed()) return run_extract(extract_args);
    if (summarize->parsed()) return run_summarize(summarize_args);
    if (score->parsed()) return run_score(score_args);
    if (evaluate->parsed()) return run_evaluate(evaluate_args);
    if (distill->parsed()) return run_distill(distill_args);
    if (runall->parsed()) return run_all(run_all_args);
  } catch (const spur::SpurError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
