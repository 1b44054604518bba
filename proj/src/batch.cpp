#include "annot/batch.hpp"

#include <cctype>
#include <cmath>
#include <deque>
#include <future>

#include <nlohmann/json.hpp>

#include "annot/errors.hpp"
#include "annot/util.hpp"

using nlohmann::json;

namespace annot::engine {

std::vector<Batch> make_batches(const std::vector<BatchItem>& items, const std::string& task_id,
                                std::int64_t batch_size) {
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  std::vector<Batch> batches;
  for (std::size_t pos = 0; pos < items.size(); pos += static_cast<std::size_t>(batch_size)) {
    Batch b;
    b.batch_id = static_cast<std::int64_t>(batches.size()) + 1;
    b.task_id = task_id;
    std::size_t end = std::min(items.size(), pos + static_cast<std::size_t>(batch_size));
    b.items.assign(items.begin() + static_cast<std::ptrdiff_t>(pos),
                   items.begin() + static_cast<std::ptrdiff_t>(end));
    batches.push_back(std::move(b));
  }
  return batches;
}

std::vector<std::string> parse_response(const std::string& raw_text, std::size_t batch_size,
                                        const std::vector<std::string>& label_set) {
  std::vector<std::string> labels;
  std::string_view text(raw_text);
  std::size_t line_start = 0;
  std::size_t expected = 1;
  while (line_start <= text.size()) {
    std::size_t line_end = text.find('\n', line_start);
    if (line_end == std::string_view::npos) line_end = text.size();
    std::string line(trim(text.substr(line_start, line_end - line_start)));
    line_start = line_end + 1;
    if (line.empty()) continue;

    std::size_t digits = 0;
    while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits])))
      ++digits;
    if (digits == 0 || digits >= line.size() || line[digits] != '.')
      throw MalformedOutput("unexpected line: \"" + line + "\"");
    if (digits > 9) throw MalformedOutput("absurd index: \"" + line + "\"");
    long long k = std::stoll(line.substr(0, digits));
    if (k != static_cast<long long>(expected))
      throw MalformedOutput("expected index " + std::to_string(expected) + ", got " +
                                std::to_string(k),
                            k);
    if (expected > batch_size)
      throw MalformedOutput("more lines than batch size " + std::to_string(batch_size), k);
    std::string raw_label(trim(std::string_view(line).substr(digits + 1)));
    auto canon = config::canonical_label(label_set, raw_label);
    if (!canon)
      throw MalformedOutput("unknown label \"" + raw_label + "\" at index " + std::to_string(k),
                            k);
    labels.push_back(*canon);
    ++expected;
  }
  if (labels.size() != batch_size)
    throw MalformedOutput("got " + std::to_string(labels.size()) + " labels for batch of " +
                          std::to_string(batch_size));
  return labels;
}

Journal::Journal(std::string path) : path_(std::move(path)) {
  out_.open(path_, std::ios::binary | std::ios::app);
  if (!out_) throw IoError("cannot open journal for append: " + path_);
}

void Journal::append(const BatchOutcome& o) {
  json rec;
  rec["batch_id"] = o.batch_id;
  rec["task_id"] = o.task_id;
  rec["status"] = o.status;
  if (o.completed()) rec["labels"] = o.labels;
  rec["input_tokens"] = o.input_tokens;
  rec["output_tokens"] = o.output_tokens;
  rec["latency_s"] = o.latency_s;
  rec["attempts"] = o.attempts;
  if (!o.error.empty()) rec["error"] = o.error;
  out_ << rec.dump() << '\n';
  out_.flush();
  if (!out_) throw IoError("journal write failed: " + path_);
}

std::vector<BatchOutcome> Journal::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open journal: " + path);
  std::vector<BatchOutcome> out;
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) lines.push_back(line);
  }
  for (std::size_t i = 0; i < lines.size(); ++i) {
    json rec;
    try {
      rec = json::parse(lines[i]);
      BatchOutcome o;
      o.batch_id = rec.at("batch_id").get<std::int64_t>();
      o.task_id = rec.at("task_id").get<std::string>();
      o.status = rec.at("status").get<std::string>();
      if (rec.contains("labels")) o.labels = rec.at("labels").get<std::vector<std::string>>();
      o.input_tokens = rec.value("input_tokens", std::int64_t{0});
      o.output_tokens = rec.value("output_tokens", std::int64_t{0});
      o.latency_s = rec.value("latency_s", 0.0);
      o.attempts = rec.value("attempts", std::int64_t{0});
      o.error = rec.value("error", std::string());
      if (o.status != "completed" && o.status != "failed")
        throw IoError("journal " + path + ": bad status \"" + o.status + "\"");
      out.push_back(std::move(o));
    } catch (const json::exception& e) {
      // A torn final record is the expected crash artifact; anything earlier
      // means real corruption.
      if (i + 1 == lines.size()) break;
      throw IoError("journal " + path + " corrupt at record " + std::to_string(i + 1) + ": " +
                    e.what());
    }
  }
  return out;
}

namespace {

BatchOutcome process_batch(const config::TaskSpec& task, const Batch& batch,
                           provider::Provider& backend, const EngineOptions& options) {
  std::vector<std::string> texts;
  texts.reserve(batch.items.size());
  for (const auto& item : batch.items) texts.push_back(item.text);
  std::string prompt = config::render_prompt(task.prompt_template, texts);

  provider::ProviderRequest req;
  req.prompt = prompt;
  req.model = options.model;
  req.max_output_tokens = task.max_output_tokens;
  req.data_sharing_disabled = options.data_sharing_disabled;

  BatchOutcome o;
  o.batch_id = batch.batch_id;
  o.task_id = batch.task_id;
  o.status = "failed";
  for (int attempt = 1; attempt <= options.retry_cap; ++attempt) {
    o.attempts = attempt;
    if (options.throttle)
      options.throttle->acquire(static_cast<double>(provider::estimate_tokens(prompt)));
    provider::ProviderResponse resp;
    try {
      resp = backend.annotate(req);
    } catch (const RetryableProviderError& e) {
      o.error = e.what();
      continue;  // whole-batch retry; no usage to account for
    }
    o.input_tokens += resp.input_tokens;
    o.output_tokens += resp.output_tokens;
    o.latency_s += resp.latency_s;
    try {
      o.labels = parse_response(resp.raw_text, batch.items.size(), task.label_set);
      o.status = "completed";
      o.error.clear();
      return o;
    } catch (const MalformedOutput& e) {
      o.error = e.what();
    }
  }
  return o;  // failed after the retry cap
}

RunResult assemble(const std::vector<Batch>& batches,
                   const std::vector<BatchOutcome>& outcomes) {
  RunResult result;
  for (std::size_t i = 0; i < batches.size(); ++i) {
    const Batch& b = batches[i];
    const BatchOutcome& o = outcomes[i];
    result.totals.batches += 1;
    result.totals.instances += static_cast<std::int64_t>(b.items.size());
    result.totals.input_tokens += o.input_tokens;
    result.totals.output_tokens += o.output_tokens;
    result.totals.latency_s += o.latency_s;
    result.totals.attempts += o.attempts;
    if (o.completed()) {
      result.totals.completed_batches += 1;
      result.totals.labeled += static_cast<std::int64_t>(o.labels.size());
      for (std::size_t k = 0; k < b.items.size(); ++k)
        result.labels.emplace_back(b.items[k].instance_id, o.labels[k]);
    } else {
      result.totals.failed_batches += 1;
      result.failed_batch_ids.push_back(b.batch_id);
      for (const auto& item : b.items) result.failed_instance_ids.push_back(item.instance_id);
    }
  }
  return result;
}

std::map<std::int64_t, BatchOutcome> terminal_records(const std::string& journal_path,
                                                      const std::string& task_id) {
  std::map<std::int64_t, BatchOutcome> done;
  for (auto& o : Journal::load(journal_path)) {
    if (o.task_id != task_id) continue;
    done[o.batch_id] = std::move(o);  // last record wins
  }
  return done;
}

}  // namespace

RunResult run_task(const config::TaskSpec& task, const std::vector<BatchItem>& items,
                   provider::Provider& backend, Journal& journal, const EngineOptions& options) {
  if (options.retry_cap < 1) throw ParameterError("retry_cap must be >= 1");
  if (options.parallel < 1) throw ParameterError("parallel must be >= 1");

  auto batches = make_batches(items, task.task_id, task.batch_size);
  std::map<std::int64_t, BatchOutcome> done;
  if (options.resume && std::ifstream(journal.path()).good())
    done = terminal_records(journal.path(), task.task_id);

  std::vector<BatchOutcome> outcomes(batches.size());

  auto completed_hook = [&](const Batch& b, const BatchOutcome& o) {
    if (options.progress) {
      *options.progress << "batch " << b.batch_id << "/" << batches.size() << " " << o.status
                        << " attempts=" << o.attempts << "\n";
    }
  };

  if (options.parallel == 1) {
    for (std::size_t i = 0; i < batches.size(); ++i) {
      const Batch& b = batches[i];
      auto it = done.find(b.batch_id);
      if (it != done.end()) {
        if (it->second.completed() && it->second.labels.size() != b.items.size())
          throw IoError("journal record for batch " + std::to_string(b.batch_id) +
                        " does not match the batch size; wrong journal for these inputs?");
        outcomes[i] = it->second;
        continue;
      }
      outcomes[i] = process_batch(task, b, backend, options);
      journal.append(outcomes[i]);
      completed_hook(b, outcomes[i]);
    }
    return assemble(batches, outcomes);
  }

  // Bounded worker pool; journal commits stay in batch order so resume
  // semantics are identical to the sequential path.
  std::deque<std::pair<std::size_t, std::future<BatchOutcome>>> inflight;
  std::size_t next = 0;
  auto fill_window = [&] {
    while (next < batches.size() && inflight.size() < static_cast<std::size_t>(options.parallel)) {
      std::size_t idx = next++;
      if (done.count(batches[idx].batch_id)) continue;
      inflight.emplace_back(idx, std::async(std::launch::async, [&, idx] {
                              return process_batch(task, batches[idx], backend, options);
                            }));
    }
  };
  for (std::size_t i = 0; i < batches.size(); ++i) {
    fill_window();
    const Batch& b = batches[i];
    auto it = done.find(b.batch_id);
    if (it != done.end()) {
      outcomes[i] = it->second;
      continue;
    }
    if (inflight.empty() || inflight.front().first != i)
      throw Error("internal: parallel window out of order");
    try {
      outcomes[i] = inflight.front().second.get();
    } catch (...) {
      inflight.pop_front();
      for (auto& [idx, fut] : inflight) {
        try {
          fut.wait();
        } catch (...) {
        }
      }
      throw;  // fatal abort; journal holds only batches before this one
    }
    inflight.pop_front();
    journal.append(outcomes[i]);
    completed_hook(b, outcomes[i]);
  }
  return assemble(batches, outcomes);
}

RunResult collect_results(const config::TaskSpec& task, const std::vector<BatchItem>& items,
                          const std::string& journal_path) {
  auto batches = make_batches(items, task.task_id, task.batch_size);
  auto done = terminal_records(journal_path, task.task_id);
  std::vector<BatchOutcome> outcomes(batches.size());
  for (std::size_t i = 0; i < batches.size(); ++i) {
    auto it = done.find(batches[i].batch_id);
    if (it == done.end())
      throw IoError("journal " + journal_path + " lacks a terminal record for batch " +
                    std::to_string(batches[i].batch_id));
    outcomes[i] = it->second;
  }
  return assemble(batches, outcomes);
}

double compute_cost(std::int64_t input_tokens, std::int64_t output_tokens,
                    const PricingTable& pricing) {
  if (input_tokens < 0 || output_tokens < 0) throw ParameterError("token counts must be >= 0");
  double raw = static_cast<double>(input_tokens) / 1e6 * pricing.input_per_mtok +
               static_cast<double>(output_tokens) / 1e6 * pricing.output_per_mtok;
  return static_cast<double>(std::llround(raw * 100.0)) / 100.0;
}

void write_dataset(const std::string& path, const std::string& task_id,
                   const std::vector<std::pair<std::string, std::string>>& labels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write dataset: " + path);
  for (const auto& [id, label] : labels) {
    json rec;
    rec["instance_id"] = id;
    rec["task_id"] = task_id;
    rec["label"] = label;
    out << rec.dump() << '\n';
  }
  if (!out) throw IoError("dataset write failed: " + path);
}

std::vector<std::pair<std::string, std::string>> read_dataset(const std::string& path,
                                                              std::string* task_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset: " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      json rec = json::parse(line);
      if (task_id && task_id->empty()) *task_id = rec.value("task_id", std::string());
      out.emplace_back(rec.at("instance_id").get<std::string>(),
                       rec.at("label").get<std::string>());
    } catch (const json::exception& e) {
      throw IoError("dataset " + path + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace annot::engine
