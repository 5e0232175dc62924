#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <mutex>
#include <string>

namespace citeimpact {

struct HttpEndpoint {
  std::string url;  // scheme://host[:port]/path
  std::string token;
  std::chrono::milliseconds timeout{60000};
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
};

// Token bucket shared between concurrent requests.
class RateLimiter {
 public:
  RateLimiter(double requests_per_second, double burst);
  void acquire();

 private:
  std::mutex mutex_;
  double rate_;
  double capacity_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

// POSTs a JSON body with bearer auth. 429 and 5xx responses and transport
// failures are retried with exponential backoff; other 4xx fail at once.
// Throws Error(kProvider) when retries are exhausted.
HttpResponse post_json_with_retry(const HttpEndpoint& endpoint, const std::string& body,
                                  const RetryPolicy& retry, RateLimiter* limiter = nullptr);

}  // namespace citeimpact
