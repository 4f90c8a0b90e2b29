#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <string>

namespace belx {

/// Exponential backoff: attempt k (k >= 1) waits
/// min(initial_backoff * multiplier^(k-1), max_backoff) before retrying.
struct RetryPolicy {
  int max_attempts = 4;  // first try plus three retries
  std::chrono::milliseconds initial_backoff{100};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{5000};

  std::chrono::milliseconds delay_before_retry(int failed_attempts) const;
};

struct HttpEndpoint {
  std::string host;
  int port = 80;
  std::string base_path;  // without trailing slash

  /// Parses "http://host[:port][/base]". Throws Error(kConfig) otherwise.
  static HttpEndpoint parse(const std::string& url);
};

/// POSTs JSON bodies with retries. Connection failures, 429 and 5xx are
/// retried; other non-2xx statuses fail immediately. Throws TransportError.
class JsonHttpClient {
 public:
  JsonHttpClient(HttpEndpoint endpoint, RetryPolicy retry,
                 std::chrono::milliseconds timeout);

  std::string post(const std::string& path, const std::string& body) const;

  const HttpEndpoint& endpoint() const noexcept { return endpoint_; }

 private:
  HttpEndpoint endpoint_;
  RetryPolicy retry_;
  std::chrono::milliseconds timeout_;
};

/// Runs fn(0..n-1) on at most `max_in_flight` worker threads. The first
/// exception (by index) is rethrown after all workers finish.
void run_bounded(std::size_t n, std::size_t max_in_flight,
                 const std::function<void(std::size_t)>& fn);

}  // namespace belx
