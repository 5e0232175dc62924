#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "citeimpact/http.hpp"

#include <algorithm>
#include <thread>

#include "citeimpact/error.hpp"

namespace citeimpact {

RateLimiter::RateLimiter(double requests_per_second, double burst)
    : rate_(requests_per_second),
      capacity_(std::max(1.0, burst)),
      tokens_(std::max(1.0, burst)),
      last_(std::chrono::steady_clock::now()) {
  if (!(requests_per_second > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "rate limit must be positive");
  }
}

void RateLimiter::acquire() {
  std::unique_lock lock(mutex_);
  for (;;) {
    const auto now = std::chrono::steady_clock::now();
    const double elapsed = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    tokens_ = std::min(capacity_, tokens_ + elapsed * rate_);
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
    lock.unlock();
    std::this_thread::sleep_for(wait);
    lock.lock();
  }
}

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorKind::kInvalidArgument, "endpoint URL needs a scheme: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool retryable(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

HttpResponse post_json_with_retry(const HttpEndpoint& endpoint, const std::string& body,
                                  const RetryPolicy& retry, RateLimiter* limiter) {
  const auto url = split_url(endpoint.url);
  httplib::Client client(url.origin);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(endpoint.timeout - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());
  httplib::Headers headers;
  if (!endpoint.token.empty()) headers.emplace("Authorization", "Bearer " + endpoint.token);

  auto backoff = retry.initial_backoff;
  std::string last_problem;
  for (int attempt = 0; attempt <= retry.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(backoff.count()) * retry.multiplier));
    }
    if (limiter) limiter->acquire();
    auto result = client.Post(url.path, headers, body, "application/json");
    if (!result) {
      last_problem = "transport error: " + httplib::to_string(result.error());
      continue;
    }
    if (result->status >= 200 && result->status < 300) {
      return {result->status, result->body};
    }
    last_problem = "HTTP " + std::to_string(result->status) + ": " + result->body.substr(0, 200);
    if (!retryable(result->status)) break;
  }
  throw Error(ErrorKind::kProvider, "request to " + endpoint.url + " failed: " + last_problem);
}

}  // namespace citeimpact
