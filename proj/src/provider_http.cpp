#include <chrono>
#include <cstdlib>
#include <thread>

#ifdef ANNOT_HAVE_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "annot/errors.hpp"
#include "annot/provider.hpp"

using nlohmann::json;

namespace annot::provider {
namespace {

struct SplitUrl {
  std::string base;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint needs a scheme: " + url);
  auto slash = url.find('/', scheme_end + 3);
  SplitUrl out;
  out.base = slash == std::string::npos ? url : url.substr(0, slash);
  out.path = slash == std::string::npos ? "/" : url.substr(slash);
  return out;
}

bool retryable_status(int status) {
  return status == 408 || status == 429 || status >= 500;
}

}  // namespace

HttpProvider::HttpProvider(HttpOptions options) : options_(std::move(options)) {
  if (options_.endpoint.empty()) throw ConfigError("http provider needs an endpoint");
  split_url(options_.endpoint);  // validate eagerly
  const char* key = std::getenv(options_.api_key_env.c_str());
  if (key == nullptr || *key == '\0')
    throw FatalProviderError("no credentials: set $" + options_.api_key_env);
  api_key_ = key;
}

std::string HttpProvider::identity() const {
  return "http(" + options_.endpoint + ",model=" + options_.model + ")";
}

ProviderResponse HttpProvider::attempt_once(const ProviderRequest& request) {
  SplitUrl url = split_url(options_.endpoint);
  httplib::Client client(url.base);
  client.set_connection_timeout(std::chrono::duration<double>(options_.timeout_s));
  client.set_read_timeout(std::chrono::duration<double>(options_.timeout_s));
  client.set_write_timeout(std::chrono::duration<double>(options_.timeout_s));

  json body;
  body["model"] = request.model;
  body["messages"] = json::array({{{"role", "user"}, {"content", request.prompt}}});
  body["max_tokens"] = request.max_output_tokens;
  if (request.data_sharing_disabled) body["store"] = false;

  httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};
  auto start = std::chrono::steady_clock::now();
  auto res = client.Post(url.path, headers, body.dump(), "application/json");
  double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (!res) throw RetryableProviderError("transport error: " + httplib::to_string(res.error()));
  if (res->status == 401 || res->status == 403)
    throw FatalProviderError("authentication rejected (status " + std::to_string(res->status) +
                             ")");
  if (retryable_status(res->status))
    throw RetryableProviderError("provider status " + std::to_string(res->status));
  if (res->status != 200)
    throw FatalProviderError("provider status " + std::to_string(res->status) + ": " + res->body);

  json doc;
  try {
    doc = json::parse(res->body);
  } catch (const json::exception& e) {
    throw RetryableProviderError(std::string("unparseable provider response: ") + e.what());
  }
  ProviderResponse out;
  try {
    const auto& choice = doc.at("choices").at(0);
    out.raw_text = choice.at("message").at("content").get<std::string>();
    if (choice.contains("finish_reason") && choice.at("finish_reason") == "length")
      throw RetryableProviderError("response truncated by the output token cap");
    if (doc.contains("usage")) {
      out.input_tokens = doc.at("usage").value("prompt_tokens", std::int64_t{0});
      out.output_tokens = doc.at("usage").value("completion_tokens", std::int64_t{0});
    } else {
      // Provider omitted usage; keep accounting non-degenerate.
      out.input_tokens = estimate_tokens(request.prompt);
      out.output_tokens = estimate_tokens(out.raw_text);
    }
  } catch (const json::exception& e) {
    throw RetryableProviderError(std::string("unexpected provider response shape: ") + e.what());
  }
  out.latency_s = elapsed;
  return out;
}

ProviderResponse HttpProvider::annotate(const ProviderRequest& request) {
  for (int attempt = 1;; ++attempt) {
    if (log_) {
      *log_ << "[http] POST " << options_.endpoint << " attempt " << attempt
            << " prompt_chars=" << request.prompt.size() << "\n";
      if (!request.data_sharing_disabled) *log_ << "[http] prompt: " << request.prompt << "\n";
    }
    try {
      ProviderResponse resp = attempt_once(request);
      if (log_) {
        *log_ << "[http] ok input_tokens=" << resp.input_tokens
              << " output_tokens=" << resp.output_tokens << " latency_s=" << resp.latency_s
              << "\n";
        if (!request.data_sharing_disabled) *log_ << "[http] response: " << resp.raw_text << "\n";
      }
      return resp;
    } catch (const RetryableProviderError& e) {
      if (log_) *log_ << "[http] retryable: " << e.what() << "\n";
      if (attempt >= options_.max_attempts) throw;
      double delay = options_.backoff_base_s * static_cast<double>(1LL << (attempt - 1));
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
  }
}

}  // namespace annot::provider
