#ifndef ANNOT_BATCH_HPP
#define ANNOT_BATCH_HPP

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "annot/config.hpp"
#include "annot/provider.hpp"

namespace annot::engine {

struct BatchItem {
  std::string instance_id;
  std::string text;
};

struct Batch {
  std::int64_t batch_id = 0;  // dense from 1
  std::string task_id;
  std::vector<BatchItem> items;
};

// ceil(N / batch_size) batches preserving input order; the last batch holds
// the remainder.
std::vector<Batch> make_batches(const std::vector<BatchItem>& items, const std::string& task_id,
                                std::int64_t batch_size);

// Strict output grammar: only lines "<k>. <label>", k ascending exactly
// 1..size, labels matched case-insensitively against the label set. Blank
// lines are tolerated, anything else is malformed. Returns canonical labels.
std::vector<std::string> parse_response(const std::string& raw_text, std::size_t batch_size,
                                        const std::vector<std::string>& label_set);

struct BatchOutcome {
  std::int64_t batch_id = 0;
  std::string task_id;
  std::string status;  // "completed" | "failed"
  std::vector<std::string> labels;
  std::int64_t input_tokens = 0;   // summed across attempts
  std::int64_t output_tokens = 0;
  double latency_s = 0.0;
  std::int64_t attempts = 0;
  std::string error;  // last failure reason, failed records only

  bool completed() const { return status == "completed"; }
};

// Append-only line-per-record journal; one record is one terminal batch
// outcome, flushed before the engine moves on. A truncated final line (crash
// mid-write) is ignored on load; corruption earlier in the file is an error.
class Journal {
 public:
  explicit Journal(std::string path);
  void append(const BatchOutcome& outcome);
  const std::string& path() const { return path_; }
  static std::vector<BatchOutcome> load(const std::string& path);

 private:
  std::string path_;
  std::ofstream out_;
};

struct EngineOptions {
  int retry_cap = 3;  // whole-batch submissions per batch
  bool resume = false;
  int parallel = 1;  // worker pool size; 1 = sequential submission
  std::string model;
  bool data_sharing_disabled = true;
  provider::Throttle* throttle = nullptr;
  std::ostream* progress = nullptr;
};

struct TaskTotals {
  std::int64_t batches = 0;
  std::int64_t completed_batches = 0;
  std::int64_t failed_batches = 0;
  std::int64_t instances = 0;
  std::int64_t labeled = 0;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  std::int64_t attempts = 0;
  double latency_s = 0.0;
};

struct RunResult {
  std::vector<std::pair<std::string, std::string>> labels;  // (instance_id, label), batch order
  std::vector<std::int64_t> failed_batch_ids;
  std::vector<std::string> failed_instance_ids;
  TaskTotals totals;
};

// Drives one task over the given items: renders, submits, parses, journals.
// Every batch reaches a terminal journal record before the next one starts
// (parallel mode commits in batch order). With resume set, batches that
// already have a terminal record are taken from the journal untouched.
// FatalProviderError aborts with the journal intact.
RunResult run_task(const config::TaskSpec& task, const std::vector<BatchItem>& items,
                   provider::Provider& backend, Journal& journal, const EngineOptions& options);

// Rebuilds a RunResult from journal records alone (no provider). Fails if a
// batch lacks a terminal record.
RunResult collect_results(const config::TaskSpec& task, const std::vector<BatchItem>& items,
                          const std::string& journal_path);

struct PricingTable {
  double input_per_mtok = 0.0;
  double output_per_mtok = 0.0;
};

// input/1e6 * input_price + output/1e6 * output_price, rounded half-up to the
// cent. Raw token counts stay exact; only the reported amount rounds.
double compute_cost(std::int64_t input_tokens, std::int64_t output_tokens,
                    const PricingTable& pricing);

// Annotated dataset records {instance_id, task_id, label}, one per line.
void write_dataset(const std::string& path, const std::string& task_id,
                   const std::vector<std::pair<std::string, std::string>>& labels);
std::vector<std::pair<std::string, std::string>> read_dataset(const std::string& path,
                                                              std::string* task_id = nullptr);

}  // namespace annot::engine

#endif  // ANNOT_BATCH_HPP
