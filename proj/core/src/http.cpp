#include "belx/http.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "belx/error.hpp"

namespace belx {

std::chrono::milliseconds RetryPolicy::delay_before_retry(int failed_attempts) const {
  const double scaled = static_cast<double>(initial_backoff.count()) *
                        std::pow(multiplier, std::max(0, failed_attempts - 1));
  const auto capped = std::min(scaled, static_cast<double>(max_backoff.count()));
  return std::chrono::milliseconds(static_cast<long long>(capped));
}

HttpEndpoint HttpEndpoint::parse(const std::string& url) {
  constexpr std::string_view kScheme = "http://";
  if (!url.starts_with(kScheme)) {
    throw Error(ErrorKind::kConfig, "unsupported endpoint URL '" + url +
                                        "' (expected http://host[:port][/path])");
  }
  std::string rest = url.substr(kScheme.size());
  HttpEndpoint ep;
  const auto slash = rest.find('/');
  std::string authority = rest.substr(0, slash);
  if (slash != std::string::npos) ep.base_path = rest.substr(slash);
  while (!ep.base_path.empty() && ep.base_path.back() == '/') ep.base_path.pop_back();
  if (const auto colon = authority.rfind(':'); colon != std::string::npos) {
    try {
      ep.port = std::stoi(authority.substr(colon + 1));
    } catch (const std::exception&) {
      throw Error(ErrorKind::kConfig, "bad port in endpoint URL '" + url + "'");
    }
    authority.resize(colon);
  }
  if (authority.empty()) {
    throw Error(ErrorKind::kConfig, "missing host in endpoint URL '" + url + "'");
  }
  ep.host = std::move(authority);
  return ep;
}

JsonHttpClient::JsonHttpClient(HttpEndpoint endpoint, RetryPolicy retry,
                               std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), retry_(retry), timeout_(timeout) {
  if (retry_.max_attempts < 1) {
    throw Error(ErrorKind::kConfig, "retry policy needs at least one attempt");
  }
}

std::string JsonHttpClient::post(const std::string& path, const std::string& body) const {
  httplib::Client client(endpoint_.host, endpoint_.port);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs =
      std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  const std::string target = endpoint_.base_path + path;
  std::string last_error;
  for (int attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
    auto res = client.Post(target, body, "application/json");
    if (res) {
      if (res->status >= 200 && res->status < 300) return res->body;
      last_error = "HTTP " + std::to_string(res->status);
      const bool retryable = res->status == 429 || res->status >= 500;
      if (!retryable) {
        throw TransportError(target + " failed: " + last_error, attempt);
      }
    } else {
      last_error = httplib::to_string(res.error());
    }
    if (attempt < retry_.max_attempts) {
      std::this_thread::sleep_for(retry_.delay_before_retry(attempt));
    }
  }
  throw TransportError(target + " failed after " +
                           std::to_string(retry_.max_attempts) +
                           " attempts: " + last_error,
                       retry_.max_attempts);
}

void run_bounded(std::size_t n, std::size_t max_in_flight,
                 const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t workers = std::clamp<std::size_t>(max_in_flight, 1, n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_index = n;
  std::exception_ptr failure;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (i < failed_index) {
            failed_index = i;
            failure = std::current_exception();
          }
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace belx
