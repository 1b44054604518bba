#ifndef ANNOT_CONFIG_HPP
#define ANNOT_CONFIG_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "annot/metrics.hpp"

namespace annot::config {

inline constexpr const char* kSentencePlaceholder = "{{SENTENCES}}";

struct InputFilter {
  std::string task;   // upstream task_id
  std::string label;  // canonical label in the upstream label set
};

struct TaskSpec {
  std::string task_id;
  std::vector<std::string> label_set;  // canonical spellings, order significant
  std::string prompt_path;
  std::string prompt_template;  // loaded eagerly
  std::optional<InputFilter> input_filter;
  std::int64_t batch_size = 100;
  std::int64_t max_output_tokens = 20000;
};

struct ProviderConfig {
  std::string kind = "oracle";  // oracle | corrupting | http
  std::string model = "gpt-5";
  std::string endpoint;
  std::string api_key_env = "ANNOT_API_KEY";
  bool data_sharing_disabled = true;
  double timeout_s = 600.0;
  double rpm = 0.0;  // 0 = unlimited
  double tpm = 0.0;
  double corruption_rate = 0.0;  // corrupting backend only
  double backoff_base_s = 2.0;
  int max_attempts = 5;
};

struct PricingConfig {
  double input_per_mtok = 1.25;
  double output_per_mtok = 10.0;
  std::string version = "default";
};

struct GateConfig {
  double threshold = 0.95;
  int min_samples = 3;
  metrics::GateMode mode = metrics::GateMode::pooled;
  double confidence = 0.95;
};

struct SamplingConfig {
  double expected_accuracy = 0.96;
  double margin_error = 0.01;
  double z = 1.959963984540054;  // 95% two-sided
  bool min_one_per_stratum = false;
};

struct PipelineConfig {
  std::string run_dir = "run";
  std::string instances_path;  // extracted instance records
  std::uint64_t seed = 1;
  ProviderConfig provider;
  PricingConfig pricing;
  GateConfig gate;
  SamplingConfig sampling;
  std::vector<TaskSpec> tasks;  // topologically ordered
  std::string config_hash;     // hex FNV-1a of the canonical form
};

// Parses and validates a pipeline config. Tasks are returned topologically
// ordered by their input_filter dependencies; label sets, prompt assets and
// placeholder counts are checked eagerly. `base_dir` resolves relative prompt
// paths (defaults to the config file's directory in load_pipeline_file).
PipelineConfig load_pipeline(const nlohmann::json& doc, const std::string& base_dir);
PipelineConfig load_pipeline_file(const std::string& path);

// Canonical-form hash so semantically identical configs agree regardless of
// formatting. Hex digits, stable across platforms.
std::string config_hash(const nlohmann::json& doc);

// Replaces the single {{SENTENCES}} placeholder with "k. <text>" lines,
// k = 1..n in batch order. Zero or multiple placeholders is a config error.
std::string render_prompt(const std::string& tmpl, const std::vector<std::string>& texts);

// Canonical label lookup: case-insensitive, space/hyphen tolerant. Returns
// empty optional when the label is not in the set.
std::optional<std::string> canonical_label(const std::vector<std::string>& label_set,
                                           const std::string& raw);

// Named sub-seeds derived from the run seed; recorded in the manifest so every
// random draw in a run is printable and reproducible.
std::uint64_t derive_seed(std::uint64_t base, const std::string& purpose);

// Reproducibility record for a run directory. Written before any provider
// call; gate decisions and journal references accumulate as phases run.
struct ManifestGate {
  bool passed = false;
  std::int64_t pooled_successes = 0;
  std::int64_t pooled_n = 0;
  double lower = 0.0;
  double upper = 1.0;
  double threshold = 0.95;
  std::string mode = "pooled";
  std::vector<std::pair<std::int64_t, std::int64_t>> samples;  // (successes, n)
};

struct RunManifest {
  std::string config_hash;
  std::string provider_identity;
  std::string model;
  std::string pricing_version;
  std::string created_at;  // ISO 8601 UTC
  std::uint64_t seed = 0;
  std::map<std::string, std::uint64_t> seeds;      // purpose → derived seed
  std::map<std::string, ManifestGate> gates;       // task_id → decision
  std::map<std::string, std::string> journals;     // task_id → journal path (relative to run_dir)
};

std::string manifest_path(const std::string& run_dir);

// Loads the manifest if present, else initializes one from the config. An
// existing manifest whose config hash differs is an error: a run directory
// binds to one config.
RunManifest load_or_init_manifest(const PipelineConfig& cfg);
void save_manifest(const std::string& run_dir, const RunManifest& manifest);

const TaskSpec& find_task(const PipelineConfig& cfg, const std::string& task_id);

}  // namespace annot::config

#endif  // ANNOT_CONFIG_HPP
