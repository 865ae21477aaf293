/*
 * Copyright 2026 The marvis Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "httplib.h"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <regex>
#include <thread>

#include "json.hpp"
#include "marvis/error.hpp"
#include "marvis/vlm.hpp"

namespace marvis {

using nlohmann::json;

void EndpointConfig::validate() const {
  if (base_url.empty()) fail(ErrorCode::kValidation, "endpoint base_url is empty");
  if (model.empty()) fail(ErrorCode::kValidation, "endpoint model is empty");
  if (max_retries < 0) fail(ErrorCode::kValidation, "max_retries must be >= 0");
  if (max_concurrency < 1) fail(ErrorCode::kValidation, "max_concurrency must be >= 1");
  if (!(timeout_seconds > 0.0)) fail(ErrorCode::kValidation, "timeout must be positive");
  if (!(backoff_base_seconds >= 0.0)) {
    fail(ErrorCode::kValidation, "backoff base must be >= 0");
  }
}

std::string base64_encode(const std::vector<unsigned char>& bytes) {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const unsigned v = bytes[i] << 16 | bytes[i + 1] << 8 | bytes[i + 2];
    out.push_back(kAlphabet[v >> 18 & 63]);
    out.push_back(kAlphabet[v >> 12 & 63]);
    out.push_back(kAlphabet[v >> 6 & 63]);
    out.push_back(kAlphabet[v & 63]);
  }
  if (i + 1 == bytes.size()) {
    const unsigned v = bytes[i] << 16;
    out.push_back(kAlphabet[v >> 18 & 63]);
    out.push_back(kAlphabet[v >> 12 & 63]);
    out += "==";
  } else if (i + 2 == bytes.size()) {
    const unsigned v = bytes[i] << 16 | bytes[i + 1] << 8;
    out.push_back(kAlphabet[v >> 18 & 63]);
    out.push_back(kAlphabet[v >> 12 & 63]);
    out.push_back(kAlphabet[v >> 6 & 63]);
    out.push_back('=');
  }
  return out;
}

std::string chat_request_body(const EndpointConfig& cfg, const PromptBundle& p) {
  json content = json::array();
  content.push_back({{"type", "text"}, {"text", p.user_text}});
  content.push_back(
      {{"type", "image_url"},
       {"image_url", {{"url", "data:image/png;base64," + base64_encode(p.image)}}}});
  json messages = json::array();
  if (!p.system_text.empty()) {
    messages.push_back({{"role", "system"}, {"content", p.system_text}});
  }
  messages.push_back({{"role", "user"}, {"content", std::move(content)}});
  json body = {{"model", cfg.model},
               {"temperature", cfg.temperature},
               {"messages", std::move(messages)}};
  return body.dump();
}

RawResponse parse_chat_response(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception&) {
    fail(ErrorCode::kMalformedResponse, "malformed response: body is not JSON");
  }
  RawResponse r;
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_string()) {
      r.text = content.get<std::string>();
    } else if (content.is_array()) {
      for (const auto& part : content) {
        if (part.value("type", std::string()) == "text") {
          r.text += part.at("text").get<std::string>();
        }
      }
    }
  } catch (const json::exception&) {
    fail(ErrorCode::kMalformedResponse,
         "malformed response: choices[0].message.content is missing");
  }
  if (r.text.empty()) {
    fail(ErrorCode::kMalformedResponse, "malformed response: empty assistant message");
  }
  if (j.contains("id") && j["id"].is_string()) r.request_id = j["id"].get<std::string>();
  if (j.contains("usage") && j["usage"].is_object()) {
    const auto& u = j["usage"];
    r.usage = TokenUsage{u.value("prompt_tokens", 0L), u.value("completion_tokens", 0L),
                         u.value("total_tokens", 0L)};
  }
  return r;
}

void ConcurrencyGate::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return in_flight_ < limit_; });
  ++in_flight_;
  peak_ = std::max(peak_, in_flight_);
}

void ConcurrencyGate::release() {
  {
    std::lock_guard lock(mu_);
    --in_flight_;
  }
  cv_.notify_one();
}

int ConcurrencyGate::peak() const {
  std::lock_guard lock(mu_);
  return peak_;
}

namespace {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

ParsedUrl parse_base_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) {
    fail(ErrorCode::kValidation, "base_url must look like http(s)://host[:port][/path]: " + url);
  }
  std::string prefix = m[2].str();
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {m[1].str(), prefix};
}

class GateGuard {
 public:
  explicit GateGuard(ConcurrencyGate& g) : g_(g) { g_.acquire(); }
  ~GateGuard() { g_.release(); }
  GateGuard(const GateGuard&) = delete;
  GateGuard& operator=(const GateGuard&) = delete;

 private:
  ConcurrencyGate& g_;
};

}  // namespace

static EndpointConfig validated(EndpointConfig cfg) {
  cfg.validate();
  return cfg;
}

VlmClient::VlmClient(EndpointConfig cfg)
    : cfg_(validated(std::move(cfg))), gate_(cfg_.max_concurrency) {}

RawResponse VlmClient::query(const PromptBundle& p) {
  if (p.image.size() > cfg_.max_image_bytes) {
    fail(ErrorCode::kInvalidArgument, "oversized image: " + std::to_string(p.image.size()) +
                                          " bytes exceeds the " +
                                          std::to_string(cfg_.max_image_bytes) + " byte cap");
  }
  const ParsedUrl url = parse_base_url(cfg_.base_url);
  const std::string path = url.path_prefix + "/v1/chat/completions";
  const std::string body = chat_request_body(cfg_, p);

  httplib::Headers headers;
  if (!cfg_.token_env.empty()) {
    if (const char* token = std::getenv(cfg_.token_env.c_str()); token && *token) {
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }
  }
  const auto timeout = std::chrono::duration<double>(cfg_.timeout_seconds);
  const auto timeout_us = std::chrono::duration_cast<std::chrono::microseconds>(timeout);
  const auto secs = static_cast<time_t>(timeout_us.count() / 1000000);
  const auto usecs = static_cast<time_t>(timeout_us.count() % 1000000);

  const auto start = std::chrono::steady_clock::now();
  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) {
      const double delay = cfg_.backoff_base_seconds * std::pow(2.0, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
    httplib::Result res;
    {
      GateGuard guard(gate_);
      httplib::Client cli(url.scheme_host_port);
      cli.set_connection_timeout(secs, usecs);
      cli.set_read_timeout(secs, usecs);
      cli.set_write_timeout(secs, usecs);
      res = cli.Post(path, headers, body, "application/json");
    }
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    const int status = res->status;
    if (status >= 200 && status < 300) {
      RawResponse r = parse_chat_response(res->body);
      r.latency_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      r.retries = attempt;
      if (r.request_id.empty() && res->has_header("x-request-id")) {
        r.request_id = res->get_header_value("x-request-id");
      }
      return r;
    }
    if (status == 401 || status == 403) {
      fail(ErrorCode::kAuth, "authentication failed (HTTP " + std::to_string(status) + ")");
    }
    last_error = "HTTP " + std::to_string(status);
    if (status == 429 || status >= 500) continue;
    fail(ErrorCode::kHttp, last_error + ": " + res->body.substr(0, 200));
  }
  fail(ErrorCode::kHttp, "exhausted retries after " + std::to_string(cfg_.max_retries + 1) +
                             " attempts; last error: " + last_error);
}

RawResponse query_vlm(const EndpointConfig& cfg, const PromptBundle& p) {
  VlmClient client(cfg);
  return client.query(p);
}

}  // namespace marvis
