#include "annot/config.hpp"

#include <algorithm>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "annot/errors.hpp"
#include "annot/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace annot::config {
namespace {

json parse_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("invalid JSON in " + path + ": " + e.what());
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for \"") + key + "\": " + e.what());
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open prompt asset: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::size_t count_placeholders(const std::string& text) {
  std::size_t n = 0;
  for (std::size_t pos = text.find(kSentencePlaceholder); pos != std::string::npos;
       pos = text.find(kSentencePlaceholder, pos + 1)) {
    ++n;
  }
  return n;
}

ProviderConfig parse_provider(const json& j) {
  ProviderConfig p;
  p.kind = get_or<std::string>(j, "kind", p.kind);
  if (p.kind != "oracle" && p.kind != "corrupting" && p.kind != "http")
    throw ConfigError("provider.kind must be oracle, corrupting, or http");
  p.model = get_or<std::string>(j, "model", p.model);
  p.endpoint = get_or<std::string>(j, "endpoint", p.endpoint);
  p.api_key_env = get_or<std::string>(j, "api_key_env", p.api_key_env);
  p.data_sharing_disabled = get_or<bool>(j, "data_sharing_disabled", p.data_sharing_disabled);
  p.timeout_s = get_or<double>(j, "timeout_s", p.timeout_s);
  p.rpm = get_or<double>(j, "rpm", p.rpm);
  p.tpm = get_or<double>(j, "tpm", p.tpm);
  p.corruption_rate = get_or<double>(j, "corruption_rate", p.corruption_rate);
  p.backoff_base_s = get_or<double>(j, "backoff_base_s", p.backoff_base_s);
  p.max_attempts = get_or<int>(j, "max_attempts", p.max_attempts);
  if (p.timeout_s <= 0) throw ConfigError("provider.timeout_s must be positive");
  if (p.rpm < 0 || p.tpm < 0) throw ConfigError("provider rate limits must be >= 0");
  if (p.corruption_rate < 0 || p.corruption_rate > 1)
    throw ConfigError("provider.corruption_rate must lie in [0, 1]");
  if (p.kind == "http" && p.endpoint.empty())
    throw ConfigError("http provider requires an endpoint");
  if (p.max_attempts < 1) throw ConfigError("provider.max_attempts must be >= 1");
  return p;
}

TaskSpec parse_task(const json& j, const std::string& base_dir) {
  TaskSpec t;
  t.task_id = get_or<std::string>(j, "task_id", "");
  if (t.task_id.empty()) throw ConfigError("task missing task_id");
  t.label_set = get_or<std::vector<std::string>>(j, "labels", {});
  if (t.label_set.size() < 2)
    throw ConfigError("task " + t.task_id + " needs at least 2 labels");
  std::set<std::string> keys;
  for (const auto& label : t.label_set) {
    if (label.empty()) throw ConfigError("task " + t.task_id + " has an empty label");
    if (!keys.insert(label_key(label)).second)
      throw ConfigError("task " + t.task_id + " labels collide case-insensitively: " + label);
  }
  t.prompt_path = get_or<std::string>(j, "prompt", "");
  if (t.prompt_path.empty()) throw ConfigError("task " + t.task_id + " missing prompt");
  fs::path prompt(t.prompt_path);
  if (prompt.is_relative()) prompt = fs::path(base_dir) / prompt;
  t.prompt_path = prompt.string();
  t.prompt_template = read_text_file(t.prompt_path);
  std::size_t placeholders = count_placeholders(t.prompt_template);
  if (placeholders != 1)
    throw ConfigError("prompt " + t.prompt_path + " must contain exactly one " +
                      kSentencePlaceholder + " placeholder, found " +
                      std::to_string(placeholders));
  t.batch_size = get_or<std::int64_t>(j, "batch_size", t.batch_size);
  if (t.batch_size < 1) throw ConfigError("task " + t.task_id + " batch_size must be >= 1");
  t.max_output_tokens = get_or<std::int64_t>(j, "max_output_tokens", t.max_output_tokens);
  if (t.max_output_tokens < 1)
    throw ConfigError("task " + t.task_id + " max_output_tokens must be >= 1");
  if (j.contains("input_filter")) {
    const auto& f = j.at("input_filter");
    InputFilter filter;
    filter.task = get_or<std::string>(f, "task", "");
    filter.label = get_or<std::string>(f, "label", "");
    if (filter.task.empty() || filter.label.empty())
      throw ConfigError("task " + t.task_id + " input_filter needs task and label");
    t.input_filter = filter;
  }
  return t;
}

// Kahn's algorithm, ties broken by declaration order so loading is stable.
std::vector<TaskSpec> topo_order(std::vector<TaskSpec> tasks) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!index.emplace(tasks[i].task_id, i).second)
      throw ConfigError("duplicate task_id: " + tasks[i].task_id);
  }
  std::vector<std::size_t> indegree(tasks.size(), 0);
  for (const auto& t : tasks) {
    if (!t.input_filter) continue;
    auto it = index.find(t.input_filter->task);
    if (it == index.end())
      throw ConfigError("task " + t.task_id + " filters on unknown task " +
                        t.input_filter->task);
    if (it->second == index.at(t.task_id))
      throw ConfigError("task " + t.task_id + " filters on itself");
    ++indegree[index.at(t.task_id)];
  }
  std::vector<TaskSpec> ordered;
  std::vector<bool> emitted(tasks.size(), false);
  while (ordered.size() < tasks.size()) {
    bool progressed = false;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (emitted[i] || indegree[i] != 0) continue;
      emitted[i] = true;
      progressed = true;
      ordered.push_back(tasks[i]);
      for (std::size_t k = 0; k < tasks.size(); ++k) {
        if (!emitted[k] && tasks[k].input_filter &&
            tasks[k].input_filter->task == tasks[i].task_id) {
          --indegree[k];
        }
      }
    }
    if (!progressed) throw ConfigError("cycle in task chaining");
  }
  return ordered;
}

std::string iso_now() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string config_hash(const json& doc) {
  // json::dump orders object keys, so formatting differences wash out.
  std::uint64_t h = fnv1a64(doc.dump());
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

PipelineConfig load_pipeline(const json& doc, const std::string& base_dir) {
  if (!doc.is_object()) throw ConfigError("config root must be an object");
  PipelineConfig cfg;
  cfg.run_dir = get_or<std::string>(doc, "run_dir", cfg.run_dir);
  cfg.instances_path = get_or<std::string>(doc, "instances", "");
  cfg.seed = get_or<std::uint64_t>(doc, "seed", cfg.seed);
  if (doc.contains("provider")) cfg.provider = parse_provider(doc.at("provider"));
  if (doc.contains("pricing")) {
    const auto& p = doc.at("pricing");
    cfg.pricing.input_per_mtok = get_or<double>(p, "input_per_mtok", cfg.pricing.input_per_mtok);
    cfg.pricing.output_per_mtok =
        get_or<double>(p, "output_per_mtok", cfg.pricing.output_per_mtok);
    cfg.pricing.version = get_or<std::string>(p, "version", cfg.pricing.version);
    if (cfg.pricing.input_per_mtok < 0 || cfg.pricing.output_per_mtok < 0)
      throw ConfigError("pricing must be >= 0");
  }
  if (doc.contains("gate")) {
    const auto& g = doc.at("gate");
    cfg.gate.threshold = get_or<double>(g, "threshold", cfg.gate.threshold);
    cfg.gate.min_samples = get_or<int>(g, "min_samples", cfg.gate.min_samples);
    cfg.gate.confidence = get_or<double>(g, "confidence", cfg.gate.confidence);
    std::string mode = get_or<std::string>(g, "mode", "pooled");
    if (mode == "pooled") {
      cfg.gate.mode = metrics::GateMode::pooled;
    } else if (mode == "per_sample") {
      cfg.gate.mode = metrics::GateMode::per_sample;
    } else {
      throw ConfigError("gate.mode must be pooled or per_sample");
    }
    if (cfg.gate.threshold <= 0 || cfg.gate.threshold >= 1)
      throw ConfigError("gate.threshold must lie in (0, 1)");
    if (cfg.gate.min_samples < 1) throw ConfigError("gate.min_samples must be >= 1");
    if (cfg.gate.confidence <= 0 || cfg.gate.confidence >= 1)
      throw ConfigError("gate.confidence must lie in (0, 1)");
  }
  if (doc.contains("sampling")) {
    const auto& s = doc.at("sampling");
    cfg.sampling.expected_accuracy =
        get_or<double>(s, "expected_accuracy", cfg.sampling.expected_accuracy);
    cfg.sampling.margin_error = get_or<double>(s, "margin_error", cfg.sampling.margin_error);
    cfg.sampling.z = get_or<double>(s, "z", cfg.sampling.z);
    cfg.sampling.min_one_per_stratum =
        get_or<bool>(s, "min_one_per_stratum", cfg.sampling.min_one_per_stratum);
    if (cfg.sampling.expected_accuracy <= 0 || cfg.sampling.expected_accuracy >= 1)
      throw ConfigError("sampling.expected_accuracy must lie in (0, 1)");
    if (cfg.sampling.margin_error <= 0 || cfg.sampling.margin_error >= 1)
      throw ConfigError("sampling.margin_error must lie in (0, 1)");
    if (cfg.sampling.z <= 0) throw ConfigError("sampling.z must be positive");
  }
  if (!doc.contains("tasks") || !doc.at("tasks").is_array() || doc.at("tasks").empty())
    throw ConfigError("config needs a non-empty tasks array");
  std::vector<TaskSpec> tasks;
  for (const auto& tj : doc.at("tasks")) tasks.push_back(parse_task(tj, base_dir));
  cfg.tasks = topo_order(std::move(tasks));

  // Filter labels canonicalize against the upstream label set.
  for (auto& t : cfg.tasks) {
    if (!t.input_filter) continue;
    const TaskSpec& upstream = find_task(cfg, t.input_filter->task);
    auto canon = canonical_label(upstream.label_set, t.input_filter->label);
    if (!canon)
      throw ConfigError("task " + t.task_id + " filter label \"" + t.input_filter->label +
                        "\" not in task " + upstream.task_id + "'s label set");
    t.input_filter->label = *canon;
  }
  cfg.config_hash = config_hash(doc);
  return cfg;
}

PipelineConfig load_pipeline_file(const std::string& path) {
  json doc = parse_json_file(path);
  std::string base = fs::path(path).has_parent_path()
                         ? fs::path(path).parent_path().string()
                         : std::string(".");
  return load_pipeline(doc, base);
}

std::string render_prompt(const std::string& tmpl, const std::vector<std::string>& texts) {
  std::size_t placeholders = count_placeholders(tmpl);
  if (placeholders != 1)
    throw ConfigError("prompt template must contain exactly one " +
                      std::string(kSentencePlaceholder) + " placeholder, found " +
                      std::to_string(placeholders));
  std::string body;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (i) body += '\n';
    body += std::to_string(i + 1);
    body += ". ";
    body += texts[i];
  }
  std::string out = tmpl;
  out.replace(out.find(kSentencePlaceholder), std::string(kSentencePlaceholder).size(), body);
  return out;
}

std::optional<std::string> canonical_label(const std::vector<std::string>& label_set,
                                           const std::string& raw) {
  std::string key = label_key(raw);
  for (const auto& label : label_set) {
    if (label_key(label) == key) return label;
  }
  return std::nullopt;
}

std::uint64_t derive_seed(std::uint64_t base, const std::string& purpose) {
  return hash_mix(base, fnv1a64(purpose));
}

std::string manifest_path(const std::string& run_dir) {
  return (fs::path(run_dir) / "manifest.json").string();
}

RunManifest load_or_init_manifest(const PipelineConfig& cfg) {
  fs::create_directories(cfg.run_dir);
  std::string path = manifest_path(cfg.run_dir);
  RunManifest m;
  if (fs::exists(path)) {
    json doc = parse_json_file(path);
    m.config_hash = get_or<std::string>(doc, "config_hash", "");
    if (m.config_hash != cfg.config_hash)
      throw ConfigError("run dir " + cfg.run_dir + " was created with a different config (hash " +
                        m.config_hash + " vs " + cfg.config_hash + ")");
    m.provider_identity = get_or<std::string>(doc, "provider", "");
    m.model = get_or<std::string>(doc, "model", "");
    m.pricing_version = get_or<std::string>(doc, "pricing_version", "");
    m.created_at = get_or<std::string>(doc, "created_at", "");
    m.seed = get_or<std::uint64_t>(doc, "seed", 0);
    if (doc.contains("seeds")) {
      for (const auto& [k, v] : doc.at("seeds").items()) m.seeds[k] = v.get<std::uint64_t>();
    }
    if (doc.contains("gates")) {
      for (const auto& [task, gj] : doc.at("gates").items()) {
        ManifestGate g;
        g.passed = get_or<bool>(gj, "passed", false);
        g.pooled_successes = get_or<std::int64_t>(gj, "pooled_successes", 0);
        g.pooled_n = get_or<std::int64_t>(gj, "pooled_n", 0);
        g.lower = get_or<double>(gj, "lower", 0.0);
        g.upper = get_or<double>(gj, "upper", 1.0);
        g.threshold = get_or<double>(gj, "threshold", 0.95);
        g.mode = get_or<std::string>(gj, "mode", "pooled");
        if (gj.contains("samples")) {
          for (const auto& s : gj.at("samples"))
            g.samples.emplace_back(s.at(0).get<std::int64_t>(), s.at(1).get<std::int64_t>());
        }
        m.gates[task] = std::move(g);
      }
    }
    if (doc.contains("journals")) {
      for (const auto& [task, p] : doc.at("journals").items())
        m.journals[task] = p.get<std::string>();
    }
    return m;
  }
  m.config_hash = cfg.config_hash;
  m.provider_identity = cfg.provider.kind;
  m.model = cfg.provider.model;
  m.pricing_version = cfg.pricing.version;
  m.created_at = iso_now();
  m.seed = cfg.seed;
  for (const char* purpose : {"prehoc", "posthoc", "shuffle", "corruption"})
    m.seeds[purpose] = derive_seed(cfg.seed, purpose);
  save_manifest(cfg.run_dir, m);
  return m;
}

void save_manifest(const std::string& run_dir, const RunManifest& m) {
  json doc;
  doc["config_hash"] = m.config_hash;
  doc["provider"] = m.provider_identity;
  doc["model"] = m.model;
  doc["pricing_version"] = m.pricing_version;
  doc["created_at"] = m.created_at;
  doc["seed"] = m.seed;
  doc["seeds"] = json::object();
  for (const auto& [k, v] : m.seeds) doc["seeds"][k] = v;
  doc["gates"] = json::object();
  for (const auto& [task, g] : m.gates) {
    json gj;
    gj["passed"] = g.passed;
    gj["pooled_successes"] = g.pooled_successes;
    gj["pooled_n"] = g.pooled_n;
    gj["lower"] = g.lower;
    gj["upper"] = g.upper;
    gj["threshold"] = g.threshold;
    gj["mode"] = g.mode;
    gj["samples"] = json::array();
    for (const auto& [s, n] : g.samples) gj["samples"].push_back({s, n});
    doc["gates"][task] = std::move(gj);
  }
  doc["journals"] = json::object();
  for (const auto& [task, p] : m.journals) doc["journals"][task] = p;

  fs::create_directories(run_dir);
  std::string path = manifest_path(run_dir);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest: " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("manifest write failed: " + path);
}

const TaskSpec& find_task(const PipelineConfig& cfg, const std::string& task_id) {
  for (const auto& t : cfg.tasks) {
    if (t.task_id == task_id) return t;
  }
  throw ConfigError("unknown task: " + task_id);
}

}  // namespace annot::config
