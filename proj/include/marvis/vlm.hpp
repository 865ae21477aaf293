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

#pragma once

#include <condition_variable>
#include <cstddef>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "marvis/knn.hpp"
#include "marvis/viz.hpp"

namespace marvis {

enum class PromptMode { kBasicTsne, kTsneKnn };

std::string to_string(PromptMode mode);
PromptMode parse_prompt_mode(const std::string& s);

struct PromptBundle {
  std::string system_text;
  std::string user_text;
  std::vector<unsigned char> image;  // PNG
  std::vector<std::pair<std::string, std::string>> classmap;  // (label, color)
  PromptMode mode = PromptMode::kTsneKnn;
  TaskKind task = TaskKind::kClassification;

  bool operator==(const PromptBundle&) const = default;
};

struct PromptOptions {
  int distance_decimals = 1;
  std::optional<std::string> system_text;
};

inline constexpr std::string_view kSentinel = "FINAL ANSWER:";

// Builds the text blocks around a rendered visualization. In tsne_knn mode
// `ns` is required and, for classification, `cmap` names the neighbor
// classes. `metadata` is inserted verbatim as its own paragraph.
PromptBundle build_prompt(const RenderResult& viz, const NeighborSet* ns, const ColorMap* cmap,
                          const std::optional<std::string>& metadata, PromptMode mode,
                          TaskKind task, const PromptOptions& opts = {});

struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string model = "Qwen/Qwen2.5-VL-3B-Instruct";
  std::string token_env = "MARVIS_API_KEY";
  double timeout_seconds = 60.0;
  int max_retries = 3;
  double backoff_base_seconds = 1.0;
  int max_concurrency = 4;
  double temperature = 0.0;
  std::size_t max_image_bytes = 8u << 20;

  void validate() const;
};

struct TokenUsage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
  long total_tokens = 0;
};

struct RawResponse {
  std::string text;
  double latency_seconds = 0.0;
  std::optional<TokenUsage> usage;
  std::string request_id;
  int retries = 0;
};

std::string base64_encode(const std::vector<unsigned char>& bytes);

// The JSON body of a chat-completions request for `p`.
std::string chat_request_body(const EndpointConfig& cfg, const PromptBundle& p);

// Extracts the assistant text from a chat-completions response body.
// Throws Error(kMalformedResponse) when choices[0].message.content is absent.
RawResponse parse_chat_response(const std::string& body);

// Counting gate bounding in-flight requests.
class ConcurrencyGate {
 public:
  explicit ConcurrencyGate(int limit) : limit_(limit) {}
  void acquire();
  void release();
  int peak() const;

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  int limit_;
  int in_flight_ = 0;
  int peak_ = 0;
};

// OpenAI-compatible chat-completions client. One instance may be shared by
// concurrent callers; at most max_concurrency requests are in flight.
class VlmClient {
 public:
  explicit VlmClient(EndpointConfig cfg);

  RawResponse query(const PromptBundle& p);
  const EndpointConfig& config() const { return cfg_; }
  int peak_in_flight() const { return gate_.peak(); }

 private:
  EndpointConfig cfg_;
  ConcurrencyGate gate_;
};

RawResponse query_vlm(const EndpointConfig& cfg, const PromptBundle& p);

// Deterministic stand-in that verbalizes the distance-weighted KNN decision.
RawResponse mock_vlm_respond(const PromptBundle& p, const NeighborSet& ns,
                             const ColorMap* cmap);

// Source of responses for the evaluation driver.
class VlmBackend {
 public:
  virtual ~VlmBackend() = default;
  virtual RawResponse respond(const PromptBundle& p, const NeighborSet& ns,
                              const ColorMap* cmap) = 0;
  virtual int max_concurrency() const = 0;
};

class MockBackend final : public VlmBackend {
 public:
  RawResponse respond(const PromptBundle& p, const NeighborSet& ns,
                      const ColorMap* cmap) override {
    return mock_vlm_respond(p, ns, cmap);
  }
  int max_concurrency() const override { return 1; }
};

class HttpBackend final : public VlmBackend {
 public:
  explicit HttpBackend(EndpointConfig cfg) : client_(std::move(cfg)) {}
  RawResponse respond(const PromptBundle& p, const NeighborSet&, const ColorMap*) override {
    return client_.query(p);
  }
  int max_concurrency() const override { return client_.config().max_concurrency; }
  const VlmClient& client() const { return client_; }

 private:
  VlmClient client_;
};

}  // namespace marvis
