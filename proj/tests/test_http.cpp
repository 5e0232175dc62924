#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <doctest.h>

#include <atomic>
#include <mutex>
#include <nlohmann/json.hpp>
#include <thread>

#include "citeimpact/error.hpp"
#include "citeimpact/graphrag.hpp"
#include "citeimpact/http.hpp"
#include "citeimpact/text_embeddings.hpp"

using namespace citeimpact;
using nlohmann::json;

namespace {

// Local server on an ephemeral port, stopped on destruction.
class LocalServer {
 public:
  LocalServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& server() { return server_; }
  std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

RetryPolicy fast_retry(int retries = 3) {
  RetryPolicy r;
  r.max_retries = retries;
  r.initial_backoff = std::chrono::milliseconds(1);
  return r;
}

}  // namespace

TEST_CASE("embedding provider speaks the embeddings protocol") {
  LocalServer local;
  std::mutex mutex;
  json last_body;
  std::string last_auth;
  local.server().Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mutex);
    last_body = json::parse(req.body);
    last_auth = req.get_header_value("Authorization");
    json data = json::array();
    const auto& input = last_body.at("input");
    // Reply out of order; the client must reorder by index.
    for (std::size_t i = input.size(); i-- > 0;) {
      data.push_back({{"index", i}, {"embedding", {static_cast<double>(i), input[i].get<std::string>().size()}}});
    }
    res.set_content(json{{"data", data}}.dump(), "application/json");
  });
  HttpEmbeddingProvider provider({local.url("/v1/embeddings"), "secret-token", std::chrono::milliseconds(5000)},
                                 fast_retry());
  const std::vector<std::string> texts{"a", "bb", "ccc"};
  const auto out = provider.embed(texts, "model-x");
  REQUIRE(out.size() == 3);
  CHECK(out[0] == std::vector<double>{0, 1});
  CHECK(out[2] == std::vector<double>{2, 3});
  CHECK(last_body.at("model") == "model-x");
  CHECK(last_auth == "Bearer secret-token");
  CHECK(provider.requests_sent() == 1);
}

TEST_CASE("server errors are retried and client errors are not") {
  LocalServer local;
  std::atomic<int> flaky_calls{0}, bad_calls{0};
  local.server().Post("/flaky", [&](const httplib::Request&, httplib::Response& res) {
    if (++flaky_calls < 3) {
      res.status = flaky_calls == 1 ? 503 : 429;
      return;
    }
    res.set_content("{\"ok\":true}", "application/json");
  });
  local.server().Post("/bad", [&](const httplib::Request&, httplib::Response& res) {
    ++bad_calls;
    res.status = 400;
  });
  const auto r = post_json_with_retry({local.url("/flaky"), "", std::chrono::milliseconds(5000)}, "{}", fast_retry());
  CHECK(r.status == 200);
  CHECK(flaky_calls == 3);
  CHECK_THROWS_AS(post_json_with_retry({local.url("/bad"), "", std::chrono::milliseconds(5000)}, "{}", fast_retry()),
                  Error);
  CHECK(bad_calls == 1);

  flaky_calls = -100;
  CHECK_THROWS_AS(post_json_with_retry({local.url("/flaky"), "", std::chrono::milliseconds(5000)}, "{}", fast_retry(2)),
                  Error);
}

TEST_CASE("unreachable endpoints surface as provider errors") {
  try {
    post_json_with_retry({"http://127.0.0.1:1/x", "", std::chrono::milliseconds(200)}, "{}", fast_retry(1));
    FAIL("expected a provider error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kProvider);
  }
}

TEST_CASE("chat client sends three message roles and returns the content") {
  LocalServer local;
  json seen;
  local.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    json reply{{"choices", {{{"message", {{"role", "assistant"}, {"content", "{\"response\":{\"y_acc_vector\":[0.4]}}"}}}}}}};
    res.set_content(reply.dump(), "application/json");
  });
  HttpLlmClient client({local.url("/v1/chat/completions"), "tok", std::chrono::milliseconds(5000)}, "gpt-test",
                       R"({"temperature": 0, "reasoning_effort": "low"})", fast_retry());
  PromptBundle prompt{"SYS", "DEV", "<REQUEST/>", 1, "t", {0}};
  const auto text = client.complete(prompt);
  CHECK(parse_response(text, 1).probabilities == std::vector<double>{0.4});
  CHECK(seen.at("model") == "gpt-test");
  CHECK(seen.at("temperature") == 0);
  CHECK(seen.at("reasoning_effort") == "low");
  REQUIRE(seen.at("messages").size() == 3);
  CHECK(seen["messages"][0]["role"] == "system");
  CHECK(seen["messages"][1]["role"] == "developer");
  CHECK(seen["messages"][2]["content"] == "<REQUEST/>");
}

TEST_CASE("rate limiter spaces requests") {
  RateLimiter limiter(50.0, 1.0);
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 6; ++i) limiter.acquire();
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(elapsed >= 0.09);
  CHECK_THROWS_AS(RateLimiter(0.0, 1.0), Error);
}
