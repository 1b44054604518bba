#include <algorithm>
#include <chrono>
#include <thread>

#include "annot/provider.hpp"

namespace annot::provider {
namespace {

double steady_seconds() {
  auto now = std::chrono::steady_clock::now().time_since_epoch();
  return std::chrono::duration<double>(now).count();
}

void real_sleep(double seconds) {
  if (seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

}  // namespace

Throttle::Throttle(double rpm, double tpm)
    : rpm_(rpm),
      tpm_(tpm),
      request_level_(1.0),
      token_level_(tpm),
      last_(0.0),
      now_(steady_seconds),
      sleep_(real_sleep) {}

void Throttle::set_clock(std::function<double()> now, std::function<void(double)> sleep) {
  std::lock_guard<std::mutex> lock(mu_);
  now_ = std::move(now);
  sleep_ = std::move(sleep);
  started_ = false;
}

void Throttle::refill(double now) {
  if (!started_) {
    // Buckets start full; the first refill only anchors the clock.
    last_ = now;
    started_ = true;
    return;
  }
  double elapsed = std::max(0.0, now - last_);
  last_ = now;
  if (rpm_ > 0) request_level_ = std::min(1.0, request_level_ + elapsed * rpm_ / 60.0);
  if (tpm_ > 0) token_level_ = std::min(tpm_, token_level_ + elapsed * tpm_ / 60.0);
}

double Throttle::acquire(double request_tokens) {
  std::lock_guard<std::mutex> lock(mu_);
  double total_delay = 0.0;
  for (;;) {
    refill(now_());
    double need_requests = rpm_ > 0 ? 1.0 - request_level_ : 0.0;
    double cost = tpm_ > 0 ? std::min(request_tokens, tpm_) : 0.0;
    double need_tokens = tpm_ > 0 ? cost - token_level_ : 0.0;
    if (need_requests <= 0 && need_tokens <= 0) {
      if (rpm_ > 0) request_level_ -= 1.0;
      if (tpm_ > 0) token_level_ -= cost;
      return total_delay;
    }
    double wait = 0.0;
    if (need_requests > 0) wait = std::max(wait, need_requests / (rpm_ / 60.0));
    if (need_tokens > 0) wait = std::max(wait, need_tokens / (tpm_ / 60.0));
    sleep_(wait);
    total_delay += wait;
  }
}

}  // namespace annot::provider
