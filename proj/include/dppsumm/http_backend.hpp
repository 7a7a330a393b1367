#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "dppsumm/errors.hpp"
#include "dppsumm/gateway.hpp"

namespace dppsumm {

// Thin adapters for OpenAI-compatible chat and embedding endpoints. The API
// key arrives already resolved from the environment; it is attached as a
// bearer header and never logged or echoed in errors.
namespace http_detail {

inline json post_json(const std::string& base_url, const std::string& path,
                      const std::string& api_key, const json& payload, int timeout_seconds) {
  httplib::Client client(base_url);
  client.set_connection_timeout(timeout_seconds);
  client.set_read_timeout(timeout_seconds);
  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
  auto res = client.Post(path, headers, payload.dump(), "application/json");
  if (!res) {
    throw TransientError("http " + path + ": " + httplib::to_string(res.error()));
  }
  if (res->status >= 500) {
    throw TransientError("http " + path + ": status " + std::to_string(res->status));
  }
  if (res->status >= 400) {
    throw PermanentError("http " + path + ": status " + std::to_string(res->status) + ": " +
                         res->body);
  }
  json body = json::parse(res->body, nullptr, false);
  if (body.is_discarded()) {
    throw TransientError("http " + path + ": response body is not JSON");
  }
  return body;
}

}  // namespace http_detail

class HttpChatBackend : public ChatBackend {
 public:
  HttpChatBackend(std::string base_url, std::string api_key,
                  std::string path = "/v1/chat/completions", int timeout_seconds = 120)
      : base_url_(std::move(base_url)),
        api_key_(std::move(api_key)),
        path_(std::move(path)),
        timeout_seconds_(timeout_seconds) {}

  std::string name() const override { return "http-chat(" + base_url_ + ")"; }

  ChatResponse complete(const ChatRequest& request) override {
    json payload = {{"model", request.model},
                    {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
                    {"temperature", request.temperature},
                    {"max_tokens", request.max_tokens}};
    json body = http_detail::post_json(base_url_, path_, api_key_, payload, timeout_seconds_);
    try {
      const json& choice = body.at("choices").at(0);
      ChatResponse response;
      response.text = choice.at("message").at("content").get<std::string>();
      response.truncated = choice.value("finish_reason", "") == "length";
      return response;
    } catch (const json::exception& e) {
      throw TransientError(std::string("chat response missing expected fields: ") + e.what());
    }
  }

 private:
  std::string base_url_;
  std::string api_key_;
  std::string path_;
  int timeout_seconds_;
};

class HttpEmbeddingBackend : public EmbeddingBackend {
 public:
  HttpEmbeddingBackend(std::string base_url, std::string api_key,
                       std::string path = "/v1/embeddings", int timeout_seconds = 120)
      : base_url_(std::move(base_url)),
        api_key_(std::move(api_key)),
        path_(std::move(path)),
        timeout_seconds_(timeout_seconds) {}

  std::string name() const override { return "http-embed(" + base_url_ + ")"; }

  std::vector<std::vector<double>> embed(const std::string& model,
                                         const std::vector<std::string>& texts) override {
    json payload = {{"model", model}, {"input", texts}};
    json body = http_detail::post_json(base_url_, path_, api_key_, payload, timeout_seconds_);
    try {
      std::vector<std::vector<double>> out(texts.size());
      std::size_t fallback_index = 0;
      for (const json& row : body.at("data")) {
        // Providers may return rows out of order; "index" restores alignment.
        std::size_t index =
            row.contains("index") ? row.at("index").get<std::size_t>() : fallback_index;
        if (index >= out.size()) throw TransientError("embedding row index out of range");
        out[index] = row.at("embedding").get<std::vector<double>>();
        ++fallback_index;
      }
      for (const auto& v : out) {
        if (v.empty()) throw TransientError("embedding response missing a row");
      }
      return out;
    } catch (const json::exception& e) {
      throw TransientError(std::string("embedding response missing expected fields: ") + e.what());
    }
  }

 private:
  std::string base_url_;
  std::string api_key_;
  std::string path_;
  int timeout_seconds_;
};

}  // namespace dppsumm
