#ifndef ANNOT_PROVIDER_HPP
#define ANNOT_PROVIDER_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <ostream>
#include <string>
#include <vector>

#include "annot/config.hpp"

namespace annot::provider {

struct ProviderRequest {
  std::string prompt;
  std::string model;
  std::int64_t max_output_tokens = 1;
  bool data_sharing_disabled = true;
};

struct ProviderResponse {
  std::string raw_text;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  double latency_s = 0.0;
};

// Rough chars-per-token heuristic shared by the oracle backend, the throttle
// cost estimate, and dry-run budgeting.
std::int64_t estimate_tokens(const std::string& text);

class Provider {
 public:
  virtual ~Provider() = default;
  virtual ProviderResponse annotate(const ProviderRequest& request) = 0;
  virtual std::string identity() const = 0;
  // Diagnostics sink. Corpus text is never written here while the request has
  // data_sharing_disabled set.
  void set_log(std::ostream* log) { log_ = log; }

 protected:
  std::ostream* log_ = nullptr;
};

// Token-bucket admission for requests/min and tokens/min. Callers are delayed,
// never rejected. The request bucket holds one call (steady spacing); the
// token bucket holds a full minute's budget, and oversized requests are
// clamped to capacity so they admit alone after a full refill.
class Throttle {
 public:
  Throttle(double rpm, double tpm);  // 0 disables the corresponding limit
  // Blocks until admitted; returns the total delay applied in seconds.
  double acquire(double request_tokens);
  // Test seam: virtual clock + sleep.
  void set_clock(std::function<double()> now, std::function<void(double)> sleep);

 private:
  void refill(double now);
  double rpm_;
  double tpm_;
  double request_level_;
  double token_level_;
  double last_;
  bool started_ = false;
  std::function<double()> now_;
  std::function<void(double)> sleep_;
  std::mutex mu_;
};

enum class OracleTask { kAuto, kBinary, kVariant };

// Classifies one context window by the surface rules the synthetic templates
// are built from: a that/for complement or a carefully/options cue after the
// target verb marks the non-evaluative reading; among evaluative readings,
// "to be" then "as" after the target select the marked variants, else zero.
std::string oracle_classify(const std::string& sentence, OracleTask task);

// Deterministic offline backend. Pulls the numbered sentence list out of the
// rendered prompt (the <sentences> block when present, else the last numbered
// run starting at 1), classifies each line, and fabricates usage and latency
// from text lengths only.
class OracleProvider : public Provider {
 public:
  explicit OracleProvider(OracleTask task = OracleTask::kAuto) : task_(task) {}
  ProviderResponse annotate(const ProviderRequest& request) override;
  std::string identity() const override { return "oracle"; }

 private:
  OracleTask task_;
};

// Wraps another backend and rewrites each output label to a different one
// with the given probability. The noise is a pure function of (seed, prompt),
// so retries and resumed runs see identical corruption.
class CorruptingProvider : public Provider {
 public:
  CorruptingProvider(std::shared_ptr<Provider> inner, double rate, std::uint64_t seed);
  ProviderResponse annotate(const ProviderRequest& request) override;
  std::string identity() const override;

 private:
  std::shared_ptr<Provider> inner_;
  double rate_;
  std::uint64_t seed_;
};

struct HttpOptions {
  std::string endpoint;  // full URL, e.g. https://host/v1/chat/completions
  std::string model;
  std::string api_key_env = "ANNOT_API_KEY";
  bool data_sharing_disabled = true;
  double timeout_s = 600.0;
  double backoff_base_s = 2.0;
  int max_attempts = 5;
};

// Minimal chat-style HTTP backend: one user message, provider-default
// temperature, retention opt-out via "store": false when data sharing is
// disabled. Retries transport failures and retryable statuses with
// exponential backoff internally; authentication and malformed-request
// statuses surface as fatal.
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(HttpOptions options);
  ProviderResponse annotate(const ProviderRequest& request) override;
  std::string identity() const override;

 private:
  ProviderResponse attempt_once(const ProviderRequest& request);
  HttpOptions options_;
  std::string api_key_;
};

std::shared_ptr<Provider> make_provider(const config::ProviderConfig& cfg,
                                        std::uint64_t base_seed);

}  // namespace annot::provider

#endif  // ANNOT_PROVIDER_HPP
