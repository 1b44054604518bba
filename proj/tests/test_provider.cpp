#include <doctest.h>
#include <stdlib.h>

#include <atomic>
#include <sstream>
#include <thread>

#ifdef ANNOT_HAVE_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "annot/config.hpp"
#include "annot/errors.hpp"
#include "annot/provider.hpp"

using namespace annot;
using namespace annot::provider;
using nlohmann::json;

namespace {

std::string render(const std::string& header, const std::vector<std::string>& sentences) {
  return config::render_prompt(header + "\n<sentences>\n{{SENTENCES}}\n</sentences>\n",
                               sentences);
}

std::vector<std::string> parse_labels(const std::string& raw, std::size_t n) {
  std::vector<std::string> out;
  std::istringstream in(raw);
  std::string line;
  while (std::getline(in, line)) {
    auto dot = line.find(". ");
    REQUIRE(dot != std::string::npos);
    out.push_back(line.substr(dot + 2));
  }
  REQUIRE(out.size() == n);
  return out;
}

// Local chat-completions stand-in for HttpProvider tests.
class FakeServer {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  explicit FakeServer(Handler handler) : handler_(std::move(handler)) {
    server_.Post("/v1/chat/completions",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   ++hits_;
                   handler_(req, res);
                 });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
  }
  int hits() const { return hits_; }

 private:
  httplib::Server server_;
  Handler handler_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<int> hits_{0};
};

HttpOptions fast_options(const std::string& endpoint) {
  HttpOptions o;
  o.endpoint = endpoint;
  o.model = "test-model";
  o.api_key_env = "ANNOT_TEST_KEY";
  o.backoff_base_s = 0.01;
  o.max_attempts = 3;
  return o;
}

json ok_body(const std::string& content) {
  return json{{"choices", json::array({json{{"message", json{{"content", content}}},
                                            {"finish_reason", "stop"}}})},
              {"usage", json{{"prompt_tokens", 100}, {"completion_tokens", 20}}}};
}

}  // namespace

TEST_SUITE("provider") {

TEST_CASE("oracle classification worked examples") {
  CHECK(oracle_classify("They consider him intelligent.", OracleTask::kBinary) ==
        "evaluative");
  CHECK(oracle_classify("We considered that the offer had merit.", OracleTask::kBinary) ==
        "non_evaluative");
  CHECK(oracle_classify("He was considered for the role but not chosen.",
                        OracleTask::kBinary) == "non_evaluative");
  CHECK(oracle_classify("She will consider the proposal carefully.", OracleTask::kBinary) ==
        "non_evaluative");
  CHECK(oracle_classify("Please consider all options before deciding.",
                        OracleTask::kBinary) == "non_evaluative");

  CHECK(oracle_classify("They consider the plan reckless.", OracleTask::kVariant) == "zero");
  CHECK(oracle_classify("They consider the plan to be reckless.", OracleTask::kVariant) ==
        "to_be");
  CHECK(oracle_classify("He was considered as a pioneer at the time.",
                        OracleTask::kVariant) == "as");
}

TEST_CASE("oracle ignores material beyond the sentence end") {
  // The window continues past the sentence boundary; cues there must not leak.
  CHECK(oracle_classify("They consider him wise. The budget was set for the year,",
                        OracleTask::kBinary) == "evaluative");
  CHECK(oracle_classify("She is considered a pioneer. Options were discussed carefully",
                        OracleTask::kVariant) == "zero");
}

TEST_CASE("oracle provider answers a rendered binary prompt") {
  OracleProvider oracle;
  auto prompt = render("Decide if each use is evaluative or non_evaluative.",
                       {"They consider him intelligent.",
                        "We considered that the offer had merit.",
                        "The critics consider this method a failure."});
  ProviderRequest req{prompt, "test-model", 1000, true};
  auto resp = oracle.annotate(req);
  auto labels = parse_labels(resp.raw_text, 3);
  CHECK(labels[0] == "evaluative");
  CHECK(labels[1] == "non_evaluative");
  CHECK(labels[2] == "evaluative");
  CHECK(resp.input_tokens == estimate_tokens(prompt));
  CHECK(resp.output_tokens == estimate_tokens(resp.raw_text));
  CHECK(resp.latency_s == doctest::Approx(resp.output_tokens / 1000.0));

  // Deterministic.
  CHECK(oracle.annotate(req).raw_text == resp.raw_text);
}

TEST_CASE("oracle infers the task from the instructions") {
  OracleProvider oracle;
  // The word "zero" before the list selects the variant label set.
  auto vprompt = render("Pick zero, to_be or as for each sentence.",
                        {"They consider the plan to be sound.",
                         "He was considered as a rival in the contest.",
                         "She considers the essay brilliant."});
  auto vlabels = parse_labels(oracle.annotate({vprompt, "m", 1000, true}).raw_text, 3);
  CHECK(vlabels[0] == "to_be");
  CHECK(vlabels[1] == "as");
  CHECK(vlabels[2] == "zero");

  // Without it, binary labels come back even for variant-looking sentences.
  auto bprompt = render("Decide if each use is evaluative.",
                        {"They consider the plan to be sound."});
  auto blabels = parse_labels(oracle.annotate({bprompt, "m", 1000, true}).raw_text, 1);
  CHECK(blabels[0] == "evaluative");
}

TEST_CASE("oracle rejects prompts without a sentence list") {
  OracleProvider oracle;
  ProviderRequest req{"no sentences here at all", "m", 10, true};
  CHECK_THROWS_AS(oracle.annotate(req), FatalProviderError);
}

TEST_CASE("corrupting provider flips deterministically at the configured rate") {
  auto inner = std::make_shared<OracleProvider>();
  CorruptingProvider noisy(inner, 0.05, 1234);
  CHECK(noisy.identity().find("corrupting") == 0);

  std::vector<std::string> sentences;
  for (int i = 0; i < 2000; ++i) {
    sentences.push_back(i % 2 ? "They consider him intelligent."
                              : "We considered that the offer had merit.");
  }
  // Split into prompts of 100 so the per-prompt rng gets exercised.
  int flips = 0;
  std::vector<std::string> first_run;
  for (int b = 0; b < 20; ++b) {
    std::vector<std::string> chunk(sentences.begin() + b * 100,
                                   sentences.begin() + (b + 1) * 100);
    auto prompt = render("Decide if each use is evaluative.", chunk);
    auto noisy_labels = parse_labels(noisy.annotate({prompt, "m", 9000, true}).raw_text, 100);
    auto clean_labels =
        parse_labels(inner->annotate({prompt, "m", 9000, true}).raw_text, 100);
    for (std::size_t i = 0; i < 100; ++i) {
      if (noisy_labels[i] != clean_labels[i]) {
        ++flips;
        // A flip lands on a different label from the same task's set.
        CHECK((noisy_labels[i] == "evaluative" || noisy_labels[i] == "non_evaluative"));
      }
    }
    for (const auto& l : noisy_labels) first_run.push_back(l);
  }
  // 2000 draws at 5%: expect ~100; bound generously (sd ~9.7).
  CHECK(flips > 50);
  CHECK(flips < 150);

  // Same prompts, same seed -> identical noise.
  CorruptingProvider again(std::make_shared<OracleProvider>(), 0.05, 1234);
  std::vector<std::string> second_run;
  for (int b = 0; b < 20; ++b) {
    std::vector<std::string> chunk(sentences.begin() + b * 100,
                                   sentences.begin() + (b + 1) * 100);
    auto prompt = render("Decide if each use is evaluative.", chunk);
    auto labels = parse_labels(again.annotate({prompt, "m", 9000, true}).raw_text, 100);
    for (const auto& l : labels) second_run.push_back(l);
  }
  CHECK(first_run == second_run);

  // Rate 0 is a no-op wrapper.
  CorruptingProvider clean(std::make_shared<OracleProvider>(), 0.0, 1234);
  auto p = render("Decide.", {"They consider him intelligent."});
  CHECK(parse_labels(clean.annotate({p, "m", 100, true}).raw_text, 1)[0] == "evaluative");
}

TEST_CASE("make_provider builds the configured backend") {
  config::ProviderConfig cfg;
  cfg.kind = "oracle";
  CHECK(make_provider(cfg, 7)->identity() == "oracle");
  cfg.kind = "corrupting";
  cfg.corruption_rate = 0.1;
  CHECK(make_provider(cfg, 7)->identity().find("corrupting(oracle") == 0);
}

TEST_CASE("throttle: request bucket spaces calls at the configured rate") {
  Throttle t(60.0, 0.0);
  double now = 0.0;
  std::vector<double> sleeps;
  t.set_clock([&] { return now; },
              [&](double s) {
                sleeps.push_back(s);
                now += s;
              });
  CHECK(t.acquire(500) == doctest::Approx(0.0));  // bucket starts full
  CHECK(t.acquire(500) == doctest::Approx(1.0));  // refill at 1 req/s
  CHECK(t.acquire(500) == doctest::Approx(1.0));
  now += 10.0;  // idle time refills (to capacity 1, no burst beyond it)
  CHECK(t.acquire(500) == doctest::Approx(0.0));
  CHECK(t.acquire(500) == doctest::Approx(1.0));
  REQUIRE(sleeps.size() == 3);
  CHECK(sleeps[0] == doctest::Approx(1.0));
}

TEST_CASE("throttle: token bucket clamps oversized requests to capacity") {
  Throttle t(0.0, 10000.0);
  double now = 0.0;
  t.set_clock([&] { return now; }, [&](double s) { now += s; });
  // 12,000-token request against a 10,000/min budget: admitted alone.
  CHECK(t.acquire(12000) == doctest::Approx(0.0));  // full bucket at start
  // Next oversized request needs a full refill: 10,000 tokens at 10,000/60 per s.
  CHECK(t.acquire(12000) == doctest::Approx(60.0));
  // A small request right after needs its own share.
  CHECK(t.acquire(5000) == doctest::Approx(30.0));
}

TEST_CASE("throttle: both limits bind independently") {
  Throttle t(120.0, 6000.0);
  double now = 0.0;
  t.set_clock([&] { return now; }, [&](double s) { now += s; });
  CHECK(t.acquire(6000) == doctest::Approx(0.0));
  // Request spacing alone would be 0.5 s; the drained token bucket needs 60 s.
  CHECK(t.acquire(6000) == doctest::Approx(60.0));
  // Unlimited throttle never delays.
  Throttle open(0.0, 0.0);
  open.set_clock([&] { return now; }, [](double) { FAIL("must not sleep"); });
  CHECK(open.acquire(1e9) == doctest::Approx(0.0));
}

TEST_CASE("http provider: success path with usage passthrough") {
  setenv("ANNOT_TEST_KEY", "sk-test-123", 1);
  FakeServer server([](const httplib::Request& req, httplib::Response& res) {
    CHECK(req.get_header_value("Authorization") == "Bearer sk-test-123");
    auto body = json::parse(req.body);
    CHECK(body.at("model") == "test-model");
    CHECK(body.at("store") == false);  // retention opt-out rides along
    CHECK(body.at("messages").size() == 1);
    res.set_content(ok_body("1. evaluative\n2. non_evaluative").dump(), "application/json");
  });
  HttpProvider http(fast_options(server.endpoint()));
  auto resp = http.annotate({"prompt text", "test-model", 500, true});
  CHECK(resp.raw_text == "1. evaluative\n2. non_evaluative");
  CHECK(resp.input_tokens == 100);
  CHECK(resp.output_tokens == 20);
  CHECK(http.identity().find("http(") == 0);
  CHECK(server.hits() == 1);
}

TEST_CASE("http provider: missing credentials are fatal before any call") {
  unsetenv("ANNOT_MISSING_KEY");
  HttpOptions o = fast_options("http://127.0.0.1:1/v1/chat/completions");
  o.api_key_env = "ANNOT_MISSING_KEY";
  CHECK_THROWS_AS(HttpProvider{o}, FatalProviderError);
}

TEST_CASE("http provider: auth failures are fatal, not retried") {
  setenv("ANNOT_TEST_KEY", "bad-key", 1);
  FakeServer server([](const httplib::Request&, httplib::Response& res) {
    res.status = 401;
    res.set_content("{\"error\":\"bad key\"}", "application/json");
  });
  HttpProvider http(fast_options(server.endpoint()));
  CHECK_THROWS_AS(http.annotate({"p", "m", 10, true}), FatalProviderError);
  CHECK(server.hits() == 1);
}

TEST_CASE("http provider: rate limiting retries internally then succeeds") {
  setenv("ANNOT_TEST_KEY", "k", 1);
  std::atomic<int> n{0};
  FakeServer server([&](const httplib::Request&, httplib::Response& res) {
    if (++n <= 2) {
      res.status = 429;
      res.set_content("slow down", "text/plain");
    } else {
      res.set_content(ok_body("1. zero").dump(), "application/json");
    }
  });
  HttpProvider http(fast_options(server.endpoint()));
  auto resp = http.annotate({"p", "m", 10, true});
  CHECK(resp.raw_text == "1. zero");
  CHECK(server.hits() == 3);
}

TEST_CASE("http provider: persistent retryable failures exhaust attempts") {
  setenv("ANNOT_TEST_KEY", "k", 1);
  FakeServer server([](const httplib::Request&, httplib::Response& res) {
    res.status = 503;
    res.set_content("down", "text/plain");
  });
  HttpProvider http(fast_options(server.endpoint()));  // max_attempts = 3
  CHECK_THROWS_AS(http.annotate({"p", "m", 10, true}), RetryableProviderError);
  CHECK(server.hits() == 3);
}

TEST_CASE("http provider: truncated outputs are retried") {
  setenv("ANNOT_TEST_KEY", "k", 1);
  std::atomic<int> n{0};
  FakeServer server([&](const httplib::Request&, httplib::Response& res) {
    json body = ok_body("1. zer");
    if (++n == 1) body["choices"][0]["finish_reason"] = "length";
    else body["choices"][0]["message"]["content"] = "1. zero";
    res.set_content(body.dump(), "application/json");
  });
  HttpProvider http(fast_options(server.endpoint()));
  CHECK(http.annotate({"p", "m", 10, true}).raw_text == "1. zero");
  CHECK(server.hits() == 2);
}

TEST_CASE("provider logs never leak corpus text while sharing is disabled") {
  setenv("ANNOT_TEST_KEY", "k", 1);
  FakeServer server([](const httplib::Request&, httplib::Response& res) {
    res.set_content(ok_body("1. evaluative").dump(), "application/json");
  });
  const std::string secret = "XYZZY_SECRET_SENTENCE_TOKEN";
  auto prompt = render("Decide.", {"They consider " + secret + " fine."});

  std::ostringstream log;
  HttpProvider http(fast_options(server.endpoint()));
  http.set_log(&log);
  http.annotate({prompt, "m", 10, true});

  OracleProvider oracle;
  oracle.set_log(&log);
  oracle.annotate({prompt, "m", 1000, true});

  CHECK(!log.str().empty());
  CHECK(log.str().find(secret) == std::string::npos);
  CHECK(log.str().find("evaluative") == std::string::npos);  // outputs stay private too
}

}  // TEST_SUITE
