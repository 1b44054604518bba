#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

#include "annot/errors.hpp"
#include "annot/provider.hpp"
#include "annot/rng.hpp"
#include "annot/text.hpp"
#include "annot/util.hpp"

namespace annot::provider {
namespace {

struct NumberedLine {
  long long index;
  std::string text;
};

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string current;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(current);
      current.clear();
    } else {
      current += c;
    }
  }
  lines.push_back(current);
  return lines;
}

bool parse_numbered(const std::string& line, NumberedLine* out) {
  std::string t(trim(line));
  std::size_t i = 0;
  while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
  if (i == 0 || i >= t.size() || t[i] != '.' || i > 9) return false;
  out->index = std::stoll(t.substr(0, i));
  out->text = std::string(trim(std::string_view(t).substr(i + 1)));
  return true;
}

// The rendered batch is the <sentences> block when the template provides one,
// otherwise the last maximal numbered run starting at 1. `list_begin` gets the
// byte offset where the list starts, so callers can restrict any prompt
// inspection to the instruction text above it.
std::vector<std::string> extract_sentences(const std::string& prompt, std::size_t* list_begin) {
  auto open = prompt.find("<sentences>");
  auto close = prompt.find("</sentences>");
  std::string region = prompt;
  std::size_t base = 0;
  if (open != std::string::npos && close != std::string::npos && open < close) {
    base = open;
    region = prompt.substr(open, close - open);
  }
  std::vector<std::string> run;
  std::vector<std::string> best;
  for (const auto& line : split_lines(region)) {
    NumberedLine numbered;
    if (!parse_numbered(line, &numbered)) continue;
    if (numbered.index == 1) {
      run.clear();
      run.push_back(numbered.text);
    } else if (numbered.index == static_cast<long long>(run.size()) + 1 && !run.empty()) {
      run.push_back(numbered.text);
    } else {
      run.clear();
    }
    if (!run.empty()) best = run;
  }
  if (best.empty()) throw FatalProviderError("no numbered sentence list found in prompt");
  if (list_begin) *list_begin = base;
  return best;
}

bool contains_word(const std::string& haystack, const std::string& word) {
  auto is_word_char = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  };
  for (std::size_t pos = haystack.find(word); pos != std::string::npos;
       pos = haystack.find(word, pos + 1)) {
    bool left_ok = pos == 0 || !is_word_char(haystack[pos - 1]);
    std::size_t end = pos + word.size();
    bool right_ok = end >= haystack.size() || !is_word_char(haystack[end]);
    if (left_ok && right_ok) return true;
  }
  return false;
}

OracleTask infer_task(const std::string& prompt) {
  std::size_t begin = 0;
  extract_sentences(prompt, &begin);
  std::string instructions = to_lower_ascii(prompt.substr(0, begin));
  return contains_word(instructions, "zero") ? OracleTask::kVariant : OracleTask::kBinary;
}

bool ends_sentence(const std::string& raw) {
  if (raw.empty()) return false;
  char last = raw.back();
  if (last == '.' || last == '!' || last == '?') return true;
  if ((last == '"' || last == '\'' || last == ')') && raw.size() >= 2) {
    char prev = raw[raw.size() - 2];
    return prev == '.' || prev == '!' || prev == '?';
  }
  return false;
}

const std::vector<std::string>& labels_for(OracleTask task) {
  static const std::vector<std::string> kBinaryLabels = {"evaluative", "non_evaluative"};
  static const std::vector<std::string> kVariantLabels = {"zero", "to_be", "as"};
  return task == OracleTask::kVariant ? kVariantLabels : kBinaryLabels;
}

double unit_draw(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

std::int64_t estimate_tokens(const std::string& text) {
  return static_cast<std::int64_t>((text.size() + 3) / 4);
}

std::string oracle_classify(const std::string& sentence, OracleTask task) {
  static const std::set<std::string> kForms = {"consider", "considers", "considered",
                                               "considering"};
  auto tokens = tokenize(sentence);
  std::size_t target = tokens.size();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (kForms.count(tokens[i].norm)) {
      target = i;
      break;
    }
  }
  bool binary = task != OracleTask::kVariant;
  if (target == tokens.size()) return binary ? "non_evaluative" : "zero";

  std::vector<std::string> span;
  for (std::size_t i = target + 1; i < tokens.size(); ++i) {
    span.push_back(tokens[i].norm);
    if (ends_sentence(tokens[i].raw)) break;
  }
  if (binary) {
    if (!span.empty() && (span[0] == "that" || span[0] == "for")) return "non_evaluative";
    for (const auto& w : span) {
      if (w == "carefully" || w == "options") return "non_evaluative";
    }
    return "evaluative";
  }
  for (std::size_t i = 0; i + 1 < span.size(); ++i) {
    if (span[i] == "to" && span[i + 1] == "be") return "to_be";
  }
  for (const auto& w : span) {
    if (w == "as") return "as";
  }
  return "zero";
}

ProviderResponse OracleProvider::annotate(const ProviderRequest& request) {
  if (request.prompt.empty()) throw FatalProviderError("empty prompt");
  OracleTask task = task_ == OracleTask::kAuto ? infer_task(request.prompt) : task_;
  auto sentences = extract_sentences(request.prompt, nullptr);
  std::string out;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (i) out += '\n';
    out += std::to_string(i + 1);
    out += ". ";
    out += oracle_classify(sentences[i], task);
  }
  ProviderResponse resp;
  resp.raw_text = out;
  resp.input_tokens = estimate_tokens(request.prompt);
  resp.output_tokens = estimate_tokens(out);
  resp.latency_s = static_cast<double>(resp.output_tokens) / 1000.0;
  if (log_) {
    // Sizes only: corpus text stays out of logs regardless of the flag.
    *log_ << "[oracle] sentences=" << sentences.size() << " input_tokens=" << resp.input_tokens
          << " output_tokens=" << resp.output_tokens << "\n";
  }
  return resp;
}

CorruptingProvider::CorruptingProvider(std::shared_ptr<Provider> inner, double rate,
                                       std::uint64_t seed)
    : inner_(std::move(inner)), rate_(rate), seed_(seed) {
  if (!inner_) throw ConfigError("corrupting provider needs a backend");
  if (rate_ < 0 || rate_ > 1) throw ConfigError("corruption rate must lie in [0, 1]");
}

ProviderResponse CorruptingProvider::annotate(const ProviderRequest& request) {
  ProviderResponse resp = inner_->annotate(request);
  const auto& labels = labels_for(infer_task(request.prompt));
  Rng rng(hash_mix(seed_, fnv1a64(request.prompt)));

  std::string rewritten;
  auto lines = split_lines(resp.raw_text);
  for (std::size_t li = 0; li < lines.size(); ++li) {
    std::string line = lines[li];
    NumberedLine numbered;
    if (parse_numbered(line, &numbered)) {
      // One flip draw per line keeps the noise independent of other lines.
      bool flip = unit_draw(rng) < rate_;
      std::size_t current = labels.size();
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (label_key(labels[i]) == label_key(numbered.text)) current = i;
      }
      if (flip && current < labels.size()) {
        std::size_t pick = uniform_index(rng, labels.size() - 1);
        if (pick >= current) ++pick;
        line = std::to_string(numbered.index) + ". " + labels[pick];
      }
    }
    if (li) rewritten += '\n';
    rewritten += line;
  }
  resp.raw_text = rewritten;
  resp.output_tokens = estimate_tokens(rewritten);
  return resp;
}

std::string CorruptingProvider::identity() const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), ",rate=%g)", rate_);
  return "corrupting(" + inner_->identity() + buf;
}

std::shared_ptr<Provider> make_provider(const config::ProviderConfig& cfg,
                                        std::uint64_t base_seed) {
  if (cfg.kind == "oracle") return std::make_shared<OracleProvider>();
  if (cfg.kind == "corrupting") {
    return std::make_shared<CorruptingProvider>(std::make_shared<OracleProvider>(),
                                                cfg.corruption_rate,
                                                config::derive_seed(base_seed, "corruption"));
  }
  if (cfg.kind == "http") {
    HttpOptions opts;
    opts.endpoint = cfg.endpoint;
    opts.model = cfg.model;
    opts.api_key_env = cfg.api_key_env;
    opts.data_sharing_disabled = cfg.data_sharing_disabled;
    opts.timeout_s = cfg.timeout_s;
    opts.backoff_base_s = cfg.backoff_base_s;
    opts.max_attempts = cfg.max_attempts;
    return std::make_shared<HttpProvider>(std::move(opts));
  }
  throw ConfigError("unknown provider kind: " + cfg.kind);
}

}  // namespace annot::provider
