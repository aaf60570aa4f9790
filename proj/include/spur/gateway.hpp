#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "spur/digest.hpp"
#include "spur/errors.hpp"
#include "spur/util.hpp"

namespace spur {

struct PromptRequest {
  std::string system_text;
  std::string user_text;
  double temperature = 0.0;
  int max_output_tokens = 2048;
  std::string model_tag = "default";
};

struct CompletionText {
  std::string text;
  std::map<std::string, std::string> provider_meta;
};

// Canonical byte-level form of a request: fixed key order, numbers rendered
// with %.17g so the digest is identical across platforms and restarts.
inline std::string canonical_request_json(const PromptRequest& req) {
  char temp_buf[64];
  std::snprintf(temp_buf, sizeof(temp_buf), "%.17g", req.temperature);
  nlohmann::ordered_json j;
  j["max_output_tokens"] = std::to_string(req.max_output_tokens);
  j["model_tag"] = req.model_tag;
  j["system_text"] = req.system_text;
  j["temperature"] = std::string(temp_buf);
  j["user_text"] = req.user_text;
  return j.dump();
}

inline std::string request_hash(const PromptRequest& req) {
  return sha256_hex(canonical_request_json(req));
}

class Provider {
 public:
  virtual ~Provider() = default;
  virtual CompletionText complete(const PromptRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// scripted mock provider
// ---------------------------------------------------------------------------

// A rule matches either an exact request hash or a substring of user_text.
struct MockRule {
  enum class Match { Hash, Substring };
  Match match;
  std::string needle;
  std::string response;
};

inline MockRule match_hash(std::string hash, std::string response) {
  return MockRule{MockRule::Match::Hash, std::move(hash), std::move(response)};
}
inline MockRule match_substring(std::string needle, std::string response) {
  return MockRule{MockRule::Match::Substring, std::move(needle), std::move(response)};
}

// Answers the first rule that matches, in declaration order. Unmatched
// requests throw UnscriptedRequest carrying the prompt so the failing test
// shows what was actually asked.
class MockProvider : public Provider {
 public:
  explicit MockProvider(std::vector<MockRule> rules) : rules_(std::move(rules)) {}

  CompletionText complete(const PromptRequest& request) override {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      ++calls_;
    }
    const std::string hash = request_hash(request);
    for (const auto& rule : rules_) {
      const bool hit = rule.match == MockRule::Match::Hash
                           ? rule.needle == hash
                           : contains(request.user_text, rule.needle);
      if (hit) {
        CompletionText out;
        out.text = rule.response;
        out.provider_meta["provider"] = "mock";
        return out;
      }
    }
    fail(ErrorKind::UnscriptedRequest,
         "no scripted response for prompt: " + request.user_text);
  }

  int call_count() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return calls_;
  }

 private:
  std::vector<MockRule> rules_;
  mutable std::mutex mutex_;
  int calls_ = 0;
};

inline std::shared_ptr<Provider> script_mock(std::vector<MockRule> rules) {
  return std::make_shared<MockProvider>(std::move(rules));
}

// ---------------------------------------------------------------------------
// completion client
// ---------------------------------------------------------------------------

struct RetryPolicy {
  int max_attempts = 5;
  double base_delay_seconds = 1.0;
  double backoff_factor = 2.0;
  bool full_jitter = true;
};

struct GatewayConfig {
  RetryPolicy retry;
  std::size_t max_in_flight = 8;
  // Rough prompt-size guard: one token per 4 characters. Oversized requests
  // are rejected before any provider call so callers can shrink their batch.
  std::size_t token_budget = 32768;
  std::optional<std::filesystem::path> cache_dir;
  std::uint32_t jitter_seed = 1;
  std::function<void(const std::string&)> debug_log;
};

inline std::size_t estimate_tokens(const PromptRequest& req) {
  const std::size_t chars = req.system_text.size() + req.user_text.size();
  return (chars + 3) / 4;
}

// Wraps a Provider with retry, an in-flight cap, and an on-disk cache keyed
// by request hash. Sleeping is injectable so retry tests run instantly.
class CompletionClient {
 public:
  using Sleeper = std::function<void(double seconds)>;

  CompletionClient(std::shared_ptr<Provider> provider, GatewayConfig config = {},
                   Sleeper sleeper = nullptr)
      : provider_(std::move(provider)),
        config_(std::move(config)),
        sleeper_(sleeper ? std::move(sleeper) : default_sleeper()),
        in_flight_(config_.max_in_flight == 0 ? 1 : config_.max_in_flight),
        jitter_rng_(config_.jitter_seed) {
    if (!provider_) fail(ErrorKind::InvalidConfig, "gateway needs a provider");
    if (config_.cache_dir.has_value()) {
      std::filesystem::create_directories(*config_.cache_dir);
    }
  }

  CompletionText complete(const PromptRequest& request) {
    check_request(request);
    return complete_with_retry(request);
  }

  // Cache hit returns the stored text with zero provider calls; a miss goes
  // through complete() and persists the result. Concurrent misses on the same
  // hash are coalesced into a single provider call.
  CompletionText cached_complete(const PromptRequest& request) {
    check_request(request);
    if (!config_.cache_dir.has_value()) return complete_with_retry(request);

    const std::string hash = request_hash(request);
    if (auto hit = cache_read(hash)) {
      hit->provider_meta["cache"] = "hit";
      return *hit;
    }

    std::shared_future<CompletionText> fill;
    bool owner = false;
    {
      std::lock_guard<std::mutex> lock(fills_mutex_);
      auto it = fills_.find(hash);
      if (it == fills_.end()) {
        std::promise<CompletionText> promise;
        fill = promise.get_future().share();
        fills_.emplace(hash, fill);
        pending_.emplace(hash, std::move(promise));
        owner = true;
      } else {
        fill = it->second;
      }
    }
    if (!owner) return fill.get();

    std::promise<CompletionText> promise;
    {
      std::lock_guard<std::mutex> lock(fills_mutex_);
      promise = std::move(pending_.at(hash));
      pending_.erase(hash);
    }
    try {
      CompletionText result = complete_with_retry(request);
      cache_write(hash, request, result);
      promise.set_value(result);
      finish_fill(hash);
      return result;
    } catch (...) {
      promise.set_exception(std::current_exception());
      finish_fill(hash);
      throw;
    }
  }

  const GatewayConfig& config() const { return config_; }

 private:
  static Sleeper default_sleeper() {
    return [](double seconds) {
      std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
    };
  }

  void check_request(const PromptRequest& request) const {
    if (request.user_text.empty()) {
      fail(ErrorKind::RequestRejected, "user_text is empty");
    }
    if (request.max_output_tokens <= 0) {
      fail(ErrorKind::RequestRejected, "max_output_tokens must be positive");
    }
    if (!(request.temperature >= 0.0)) {
      fail(ErrorKind::RequestRejected, "temperature must be >= 0");
    }
    const std::size_t estimate = estimate_tokens(request);
    if (estimate > config_.token_budget) {
      fail(ErrorKind::RequestRejected,
           "estimated " + std::to_string(estimate) + " tokens exceeds budget of " +
               std::to_string(config_.token_budget));
    }
  }

  // Retries only ProviderUnavailable; auth and malformed-request errors are
  // permanent and surface immediately.
  CompletionText complete_with_retry(const PromptRequest& request) {
    SemaphoreGuard guard(in_flight_);
    const int attempts = std::max(1, config_.retry.max_attempts);
    for (int attempt = 1;; ++attempt) {
      try {
        if (config_.debug_log) {
          config_.debug_log("request " + request_hash(request) + " attempt " +
                            std::to_string(attempt));
        }
        CompletionText result = provider_->complete(request);
        result.provider_meta["attempts"] = std::to_string(attempt);
        return result;
      } catch (const SpurError& e) {
        if (e.kind() != ErrorKind::ProviderUnavailable || attempt >= attempts) throw;
        sleeper_(backoff_delay(attempt));
      }
    }
  }

  double backoff_delay(int attempt) {
    double delay = config_.retry.base_delay_seconds;
    for (int i = 1; i < attempt; ++i) delay *= config_.retry.backoff_factor;
    if (config_.retry.full_jitter) {
      std::lock_guard<std::mutex> lock(jitter_mutex_);
      delay *= draw_unit(jitter_rng_);
    }
    return delay;
  }

  std::filesystem::path cache_path(const std::string& hash) const {
    return *config_.cache_dir / (hash + ".json");
  }

  std::optional<CompletionText> cache_read(const std::string& hash) const {
    const std::filesystem::path path = cache_path(hash);
    std::ifstream in(path);
    if (!in) return std::nullopt;
    std::string body((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("text") ||
        !j["text"].is_string()) {
      fail(ErrorKind::CacheCorrupt, "unreadable cache entry " + path.string());
    }
    CompletionText out;
    out.text = j["text"].get<std::string>();
    if (j.contains("provider_meta") && j["provider_meta"].is_object()) {
      for (const auto& [key, value] : j["provider_meta"].items()) {
        if (value.is_string()) out.provider_meta[key] = value.get<std::string>();
      }
    }
    return out;
  }

  void cache_write(const std::string& hash, const PromptRequest& request,
                   const CompletionText& result) const {
    const std::filesystem::path path = cache_path(hash);
    const std::filesystem::path temp =
        path.string() + ".tmp." +
        std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    nlohmann::ordered_json j;
    j["request_hash"] = hash;
    j["model_tag"] = request.model_tag;
    j["text"] = result.text;
    j["provider_meta"] = result.provider_meta;
    {
      std::ofstream out(temp);
      if (!out) fail(ErrorKind::IoError, "cannot write cache entry " + temp.string());
      out << j.dump(2) << '\n';
      if (!out) fail(ErrorKind::IoError, "failed writing cache entry " + temp.string());
    }
    std::filesystem::rename(temp, path);
  }

  void finish_fill(const std::string& hash) {
    std::lock_guard<std::mutex> lock(fills_mutex_);
    fills_.erase(hash);
  }

  std::shared_ptr<Provider> provider_;
  GatewayConfig config_;
  Sleeper sleeper_;
  Semaphore in_flight_;
  std::mutex jitter_mutex_;
  std::mt19937 jitter_rng_;
  std::mutex fills_mutex_;
  std::unordered_map<std::string, std::shared_future<CompletionText>> fills_;
  std::unordered_map<std::string, std::promise<CompletionText>> pending_;
};

}  // namespace spur
