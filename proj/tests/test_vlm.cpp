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

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "doctest.h"
#include "json.hpp"
#include "marvis/error.hpp"
#include "marvis/parser.hpp"
#include "marvis/vlm.hpp"
#include "support.hpp"

using namespace marvis;
using namespace marvis::testing;
using nlohmann::json;

namespace {

RenderResult fake_render(const std::vector<std::pair<std::string, std::string>>& legend) {
  RenderResult r;
  r.png = {0x89, 'P', 'N', 'G', 1, 2, 3};
  int i = 0;
  for (const auto& [label, color] : legend) r.legend.push_back({label, color, i++});
  return r;
}

NeighborSet neighbors(std::vector<std::pair<int, double>> label_dist) {
  NeighborSet ns;
  for (std::size_t i = 0; i < label_dist.size(); ++i) {
    ns.neighbors.push_back({i, label_dist[i].second, static_cast<double>(label_dist[i].first)});
  }
  assign_weights(ns, TaskKind::kClassification);
  return ns;
}

std::size_t count_lines_after(const std::string& text, const std::string& header) {
  const auto pos = text.find(header);
  if (pos == std::string::npos) return 0;
  std::istringstream in(text.substr(pos + header.size()));
  std::string line;
  std::getline(in, line);  // rest of the header line
  std::size_t n = 0;
  while (std::getline(in, line) && !line.empty()) ++n;
  return n;
}

std::size_t occurrences(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

std::string chat_body(const std::string& content) {
  return json{{"id", "req-1"},
              {"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}},
              {"usage", {{"prompt_tokens", 10}, {"completion_tokens", 3}, {"total_tokens", 13}}}}
      .dump();
}

// Local OpenAI-compatible stub on an ephemeral port.
class StubServer {
 public:
  explicit StubServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/v1/chat/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

EndpointConfig fast_config(const std::string& url) {
  EndpointConfig c;
  c.base_url = url;
  c.backoff_base_seconds = 0.01;
  c.timeout_seconds = 5.0;
  return c;
}

PromptBundle small_prompt() {
  PromptBundle p;
  p.user_text = "Which class?";
  p.system_text = "system";
  p.image = {1, 2, 3, 4, 5};
  return p;
}

}  // namespace

TEST_CASE("basic prompt lists every legend entry") {
  const ColorMap cm = assign_palette(std::vector<std::string>{"A", "B"});
  const RenderResult viz = fake_render({{"A", "blue"}, {"B", "green"}});
  const PromptBundle p = build_prompt(viz, nullptr, &cm, std::nullopt, PromptMode::kBasicTsne,
                                      TaskKind::kClassification);
  CHECK(p.user_text.find("A (blue)") != std::string::npos);
  CHECK(p.user_text.find("B (green)") != std::string::npos);
  CHECK(p.user_text.find("FINAL ANSWER: <class name>") != std::string::npos);
  CHECK(p.user_text.find("Nearest neighbors:") == std::string::npos);
  CHECK(p.image == viz.png);
  for (const auto& [name, color] : p.classmap) {
    CHECK(occurrences(p.user_text, "– " + name + " (" + color + ")\n") == 1);
  }
}

TEST_CASE("knn prompt has exactly k neighbor lines and a class summary") {
  const ColorMap cm = assign_palette(std::vector<std::string>{"A", "B", "C"});
  const RenderResult viz = fake_render({{"A", "blue"}, {"B", "green"}});
  for (std::size_t k = 1; k <= 12; ++k) {
    std::vector<std::pair<int, double>> ld;
    for (std::size_t i = 0; i < k; ++i) ld.push_back({static_cast<int>(i % 2), 0.5 + i});
    const NeighborSet ns = neighbors(ld);
    const PromptBundle p = build_prompt(viz, &ns, &cm, std::nullopt, PromptMode::kTsneKnn,
                                        TaskKind::kClassification);
    CHECK(count_lines_after(p.user_text, "Nearest neighbors:") == k);
    CHECK(p.user_text.find("1. A (blue), distance 0.5") != std::string::npos);
    CHECK(p.user_text.find("Neighbor summary by class:") != std::string::npos);
  }
  const NeighborSet ns = neighbors({{0, 1.0}, {1, 2.0}, {0, 3.0}, {1, 4.0}, {0, 5.0}});
  const PromptBundle p = build_prompt(viz, &ns, &cm, std::nullopt, PromptMode::kTsneKnn,
                                      TaskKind::kClassification);
  CHECK(count_lines_after(p.user_text, "Nearest neighbors:") == 5);
  CHECK(p.user_text.find("- A (blue): 3 neighbors, mean distance 3.0") != std::string::npos);
  CHECK(p.user_text.find("- B (green): 2 neighbors, mean distance 3.0") != std::string::npos);
}

TEST_CASE("metadata paragraph is inserted verbatim") {
  const ColorMap cm = assign_palette(std::vector<std::string>{"A"});
  const PromptBundle p =
      build_prompt(fake_render({{"A", "blue"}}), nullptr, &cm, std::string("credit risk dataset"),
                   PromptMode::kBasicTsne, TaskKind::kClassification);
  CHECK(p.user_text.find("\ncredit risk dataset\n") != std::string::npos);
}

TEST_CASE("prompt errors, purity and regression wording") {
  const ColorMap cm = assign_palette(std::vector<std::string>{"A"});
  const RenderResult viz = fake_render({{"A", "blue"}});
  CHECK_THROWS_AS(build_prompt(viz, nullptr, &cm, std::nullopt, PromptMode::kTsneKnn,
                               TaskKind::kClassification),
                  Error);
  const NeighborSet ns = neighbors({{0, 1.0}});
  const auto a =
      build_prompt(viz, &ns, &cm, std::nullopt, PromptMode::kTsneKnn, TaskKind::kClassification);
  const auto b =
      build_prompt(viz, &ns, &cm, std::nullopt, PromptMode::kTsneKnn, TaskKind::kClassification);
  CHECK(a == b);

  NeighborSet reg;
  reg.neighbors = {{0, 1.0, 2.5}, {1, 2.0, 4.0}};
  assign_weights(reg, TaskKind::kRegression);
  const auto r = build_prompt(fake_render({{"1–2", "purple"}}), &reg, nullptr, std::nullopt,
                              PromptMode::kTsneKnn, TaskKind::kRegression);
  CHECK(r.user_text.find("FINAL ANSWER: <number>") != std::string::npos);
  CHECK(r.user_text.find("1. value 2.5, distance 1.0") != std::string::npos);
  CHECK(count_lines_after(r.user_text, "Nearest neighbors:") == 2);

  PromptOptions opts;
  opts.system_text = "custom system";
  opts.distance_decimals = 3;
  const auto c = build_prompt(viz, &ns, &cm, std::nullopt, PromptMode::kTsneKnn,
                              TaskKind::kClassification, opts);
  CHECK(c.system_text == "custom system");
  CHECK(c.user_text.find("distance 1.000") != std::string::npos);
  CHECK(to_string(PromptMode::kTsneKnn) == "tsne_knn");
  CHECK(parse_prompt_mode("basic_tsne") == PromptMode::kBasicTsne);
}

TEST_CASE("mock responses verbalize the KNN decision") {
  const ColorMap cm = assign_palette(std::vector<std::string>{"Class_1", "Class_2"});
  const ClassMap parser_map = ClassMap::from_color_map(cm);
  PromptBundle p;
  const NeighborSet ns = neighbors({{1, 0.5}, {0, 2.0}, {1, 1.0}});
  const RawResponse r = mock_vlm_respond(p, ns, &cm);
  CHECK(r.text ==
        "The red star (query point) is closest to the green-colored training points, which are "
        "associated with Class_2. FINAL ANSWER: Class_2");

  const NeighborSet tie = neighbors({{1, 1.0}, {0, 1.0}});
  CHECK(mock_vlm_respond(p, tie, &cm).text.ends_with("FINAL ANSWER: Class_1"));

  p.task = TaskKind::kRegression;
  NeighborSet reg;
  reg.neighbors = {{0, 1.0, 2.0}, {1, 1.0, 4.0}};
  assign_weights(reg, TaskKind::kRegression);
  CHECK(mock_vlm_respond(p, reg, nullptr).text.ends_with("FINAL ANSWER: 3"));
}

TEST_CASE("mock round trip through the parser equals knn_predict") {
  Rng rng(41);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n_classes = 1 + rng.below(20);
    std::vector<std::string> names;
    for (std::size_t c = 0; c < n_classes; ++c) {
      names.push_back(rng.below(2) ? "Class_" + std::to_string(c)
                                   : "group " + std::to_string(c) + " x");
    }
    const ColorMap cm = assign_palette(names);
    std::vector<std::pair<int, double>> ld;
    for (std::size_t i = 0; i < 1 + rng.below(30); ++i) {
      ld.push_back({static_cast<int>(rng.below(n_classes)), rng.uniform() * 3.0});
    }
    const NeighborSet ns = neighbors(ld);
    PromptBundle p;
    const Prediction pred =
        parse_classification(mock_vlm_respond(p, ns, &cm).text, ClassMap::from_color_map(cm));
    CHECK(pred.class_index() == knn_predict(ns, TaskKind::kClassification).class_index());
    CHECK(pred.channel == Channel::kSentinel);
  }
  for (int trial = 0; trial < 100; ++trial) {
    NeighborSet reg;
    for (std::size_t i = 0; i < 1 + rng.below(10); ++i) {
      reg.neighbors.push_back({i, rng.uniform(), rng.normal() * std::pow(10.0, rng.below(8))});
    }
    assign_weights(reg, TaskKind::kRegression);
    PromptBundle p;
    p.task = TaskKind::kRegression;
    CHECK(parse_regression(mock_vlm_respond(p, reg, nullptr).text).value ==
          knn_predict(reg, TaskKind::kRegression).value);
  }
}

TEST_CASE("base64 against RFC 4648 vectors") {
  auto enc = [](const std::string& s) {
    return base64_encode(std::vector<unsigned char>(s.begin(), s.end()));
  };
  CHECK(enc("") == "");
  CHECK(enc("f") == "Zg==");
  CHECK(enc("fo") == "Zm8=");
  CHECK(enc("foo") == "Zm9v");
  CHECK(enc("foob") == "Zm9vYg==");
  CHECK(enc("fooba") == "Zm9vYmE=");
  CHECK(enc("foobar") == "Zm9vYmFy");
}

TEST_CASE("request body and response parsing") {
  EndpointConfig cfg;
  cfg.model = "m";
  const json body = json::parse(chat_request_body(cfg, small_prompt()));
  CHECK(body["model"] == "m");
  CHECK(body["temperature"] == 0.0);
  const auto& msgs = body["messages"];
  const json& user = msgs.back();
  CHECK(user["role"] == "user");
  CHECK(user["content"][0]["type"] == "text");
  CHECK(user["content"][0]["text"] == "Which class?");
  CHECK(user["content"][1]["type"] == "image_url");
  CHECK(user["content"][1]["image_url"]["url"] == "data:image/png;base64,AQIDBAU=");

  const RawResponse r = parse_chat_response(chat_body("FINAL ANSWER: A"));
  CHECK(r.text == "FINAL ANSWER: A");
  CHECK(r.request_id == "req-1");
  REQUIRE(r.usage);
  CHECK(r.usage->total_tokens == 13);

  for (const std::string bad : {"not json", "{}", R"({"choices": []})",
                                R"({"choices": [{"message": {}}]})",
                                R"({"choices": [{"message": {"content": ""}}]})"}) {
    try {
      parse_chat_response(bad);
      FAIL("expected an error for " << bad);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kMalformedResponse);
      CHECK(std::string(e.what()).find("malformed response") != std::string::npos);
    }
  }
}

TEST_CASE("endpoint config validation") {
  EndpointConfig c;
  CHECK_NOTHROW(c.validate());
  c.max_retries = -1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.max_concurrency = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("stub: successful completion with bearer token") {
  std::string auth, seen_body;
  StubServer s([&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    seen_body = req.body;
    res.set_content(chat_body("FINAL ANSWER: A"), "application/json");
  });
  ::setenv("MARVIS_TEST_TOKEN", "sekret", 1);
  EndpointConfig cfg = fast_config(s.url());
  cfg.token_env = "MARVIS_TEST_TOKEN";
  const RawResponse r = query_vlm(cfg, small_prompt());
  CHECK(r.text == "FINAL ANSWER: A");
  CHECK(r.retries == 0);
  CHECK(r.latency_seconds >= 0.0);
  CHECK(auth == "Bearer sekret");
  CHECK(json::parse(seen_body)["messages"].back()["content"][1]["image_url"]["url"] ==
        "data:image/png;base64,AQIDBAU=");
  ::unsetenv("MARVIS_TEST_TOKEN");
}

TEST_CASE("stub: 429 twice then success records two retries") {
  std::atomic<int> calls{0};
  StubServer s([&](const httplib::Request&, httplib::Response& res) {
    if (calls++ < 2) {
      res.status = 429;
      res.set_content("slow down", "text/plain");
      return;
    }
    res.set_content(chat_body("FINAL ANSWER: B"), "application/json");
  });
  const RawResponse r = query_vlm(fast_config(s.url()), small_prompt());
  CHECK(r.text == "FINAL ANSWER: B");
  CHECK(r.retries == 2);
  CHECK(calls == 3);
}

TEST_CASE("stub: malformed body") {
  StubServer s([&](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"choices": [{"finish_reason": "stop"}]})", "application/json");
  });
  try {
    query_vlm(fast_config(s.url()), small_prompt());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMalformedResponse);
    CHECK(std::string(e.what()).find("malformed response") != std::string::npos);
  }
}

TEST_CASE("stub: 5xx exhausts the retry budget") {
  std::atomic<int> calls{0};
  StubServer s([&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 500;
  });
  EndpointConfig cfg = fast_config(s.url());
  cfg.max_retries = 3;
  try {
    query_vlm(cfg, small_prompt());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kHttp);
  }
  CHECK(calls == 4);
}

TEST_CASE("stub: auth failures and other 4xx are not retried") {
  std::atomic<int> calls{0};
  std::atomic<int> status{401};
  StubServer s([&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = status;
  });
  try {
    query_vlm(fast_config(s.url()), small_prompt());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kAuth);
  }
  CHECK(calls == 1);
  status = 400;
  try {
    query_vlm(fast_config(s.url()), small_prompt());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kHttp);
  }
  CHECK(calls == 2);
}

TEST_CASE("stub: a slow server times out and is retried") {
  std::atomic<int> calls{0};
  StubServer s([&](const httplib::Request&, httplib::Response& res) {
    if (calls++ == 0) std::this_thread::sleep_for(std::chrono::milliseconds(800));
    res.set_content(chat_body("FINAL ANSWER: C"), "application/json");
  });
  EndpointConfig cfg = fast_config(s.url());
  cfg.timeout_seconds = 0.2;
  const RawResponse r = query_vlm(cfg, small_prompt());
  CHECK(r.text == "FINAL ANSWER: C");
  CHECK(r.retries == 1);
}

TEST_CASE("unreachable endpoint fails with an HTTP error") {
  // Grab a free port and release it again.
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  REQUIRE(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  const int port = ntohs(addr.sin_port);
  ::close(fd);
  EndpointConfig cfg = fast_config("http://127.0.0.1:" + std::to_string(port));
  cfg.max_retries = 1;
  try {
    query_vlm(cfg, small_prompt());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kHttp);
  }
}

TEST_CASE("oversized images are rejected before sending") {
  std::atomic<int> calls{0};
  StubServer s([&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.set_content(chat_body("x"), "application/json");
  });
  EndpointConfig cfg = fast_config(s.url());
  cfg.max_image_bytes = 4;
  try {
    query_vlm(cfg, small_prompt());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInvalidArgument);
    CHECK(std::string(e.what()).find("oversized image") != std::string::npos);
  }
  CHECK(calls == 0);
}

TEST_CASE("the client never exceeds its concurrency limit") {
  std::mutex mu;
  int in_flight = 0, peak = 0;
  StubServer s([&](const httplib::Request&, httplib::Response& res) {
    {
      std::lock_guard lock(mu);
      peak = std::max(peak, ++in_flight);
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(40));
    {
      std::lock_guard lock(mu);
      --in_flight;
    }
    res.set_content(chat_body("ok"), "application/json");
  });
  for (int limit : {1, 2, 3}) {
    {
      std::lock_guard lock(mu);
      peak = 0;
    }
    EndpointConfig cfg = fast_config(s.url());
    cfg.max_concurrency = limit;
    VlmClient client(cfg);
    std::vector<std::thread> callers;
    for (int t = 0; t < 7; ++t) {
      callers.emplace_back([&] { client.query(small_prompt()); });
    }
    for (auto& t : callers) t.join();
    CHECK(client.peak_in_flight() <= limit);
    std::lock_guard lock(mu);
    CHECK(peak <= limit);
    CHECK(peak >= 1);
  }
}
