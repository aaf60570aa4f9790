#pragma once

// Live chat-completion provider speaking the common OpenAI-style JSON shape.
// Kept out of gateway.hpp so translation units that only need the mock or the
// cache never pull in the HTTP stack.

#include <cstdlib>
#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "spur/errors.hpp"
#include "spur/gateway.hpp"

namespace spur {

struct HttpProviderConfig {
  std::string base_url;                    // e.g. https://api.example.com
  std::string path = "/v1/chat/completions";
  std::string api_key_env = "SPUR_API_KEY";
  int timeout_seconds = 120;
};

class HttpProvider : public Provider {
 public:
  explicit HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) {
      fail(ErrorKind::InvalidConfig, "http provider needs a base_url");
    }
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (key == nullptr || std::string(key).empty()) {
      fail(ErrorKind::AuthFailure,
           "credential environment variable " + config_.api_key_env + " is not set");
    }
    api_key_ = key;
  }

  CompletionText complete(const PromptRequest& request) override {
    nlohmann::json body;
    body["model"] = request.model_tag;
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_output_tokens;
    body["messages"] = nlohmann::json::array();
    if (!request.system_text.empty()) {
      body["messages"].push_back({{"role", "system"}, {"content", request.system_text}});
    }
    body["messages"].push_back({{"role", "user"}, {"content", request.user_text}});

    httplib::Client client(config_.base_url);
    client.set_connection_timeout(config_.timeout_seconds);
    client.set_read_timeout(config_.timeout_seconds);
    httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};
    auto res = client.Post(config_.path, headers, body.dump(), "application/json");

    if (!res) {
      fail(ErrorKind::ProviderUnavailable,
           "no response from " + config_.base_url + ": " + httplib::to_string(res.error()));
    }
    if (res->status == 401 || res->status == 403) {
      fail(ErrorKind::AuthFailure, "endpoint returned HTTP " + std::to_string(res->status));
    }
    if (res->status == 400 || res->status == 404 || res->status == 422) {
      fail(ErrorKind::RequestRejected,
           "endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    if (res->status != 200) {
      fail(ErrorKind::ProviderUnavailable,
           "endpoint returned HTTP " + std::to_string(res->status));
    }

    nlohmann::json parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (parsed.is_discarded() || !parsed.contains("choices") ||
        !parsed["choices"].is_array() || parsed["choices"].empty() ||
        !parsed["choices"][0].contains("message") ||
        !parsed["choices"][0]["message"].contains("content")) {
      fail(ErrorKind::ProviderUnavailable, "response body is not a chat completion");
    }
    CompletionText out;
    out.text = parsed["choices"][0]["message"]["content"].get<std::string>();
    out.provider_meta["provider"] = "http";
    if (parsed.contains("usage") && parsed["usage"].is_object()) {
      for (const auto& [key, value] : parsed["usage"].items()) {
        if (value.is_number_integer()) {
          out.provider_meta["usage." + key] = std::to_string(value.get<long long>());
        }
      }
    }
    return out;
  }

 private:
  HttpProviderConfig config_;
  std::string api_key_;
};

inline std::shared_ptr<Provider> make_http_provider(HttpProviderConfig config) {
  return std::make_shared<HttpProvider>(std::move(config));
}

}  // namespace spur
