#include "annot/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "annot/batch.hpp"
#include "annot/config.hpp"
#include "annot/csv.hpp"
#include "annot/errors.hpp"
#include "annot/extract.hpp"
#include "annot/metrics.hpp"
#include "annot/provider.hpp"
#include "annot/report.hpp"
#include "annot/synth.hpp"
#include "annot/util.hpp"
#include "annot/validation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace annot::cli {
namespace {

// Raised when the pre-hoc gate blocks a run; maps to kExitGateRefusal.
class GateRefusal : public Error {
 public:
  using Error::Error;
};

json parse_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("invalid JSON in " + path + ": " + e.what());
  }
}

std::string run_path(const config::PipelineConfig& cfg, const std::string& name) {
  return (fs::path(cfg.run_dir) / name).string();
}

void write_json_file(const std::string& path, const json& doc) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path);
}

struct Corpus {
  std::vector<Instance> instances;
  std::map<std::string, std::size_t> by_id;
};

Corpus load_corpus(const std::string& instances_path) {
  if (instances_path.empty())
    throw ConfigError("config has no \"instances\" path; run extract first and point to it");
  Corpus c;
  c.instances = read_instances_jsonl(instances_path);
  for (std::size_t i = 0; i < c.instances.size(); ++i) c.by_id[c.instances[i].id] = i;
  return c;
}

const Instance& instance_by_id(const Corpus& corpus, const std::string& id,
                               const std::string& where) {
  auto it = corpus.by_id.find(id);
  if (it == corpus.by_id.end())
    throw ValidationError("id " + id + " from " + where + " is not in the instance file");
  return corpus.instances[it->second];
}

// Items a task runs over: the full instance set, or the upstream dataset
// filtered to the configured label, in upstream order.
std::vector<engine::BatchItem> task_items(const config::PipelineConfig& cfg,
                                          const config::TaskSpec& task, const Corpus& corpus) {
  std::vector<engine::BatchItem> items;
  if (!task.input_filter) {
    items.reserve(corpus.instances.size());
    for (const auto& inst : corpus.instances) items.push_back({inst.id, inst.text});
    return items;
  }
  std::string upstream = run_path(cfg, "dataset_" + task.input_filter->task + ".jsonl");
  if (!fs::exists(upstream))
    throw IoError("task " + task.task_id + " filters on " + task.input_filter->task +
                  ", but " + upstream + " does not exist; run that task first");
  for (const auto& [id, label] : engine::read_dataset(upstream)) {
    if (label != task.input_filter->label) continue;
    items.push_back({id, instance_by_id(corpus, id, upstream).text});
  }
  return items;
}

// Gold exchange files are CSV with at least instance_id and label columns
// (the exported form also carries text, which re-import ignores).
std::vector<std::pair<std::string, std::string>> read_gold_pairs(const std::string& path) {
  auto rows = csv_read_file(path);
  if (rows.empty()) throw ValidationError("empty gold file: " + path);
  std::size_t id_col = rows[0].size(), label_col = rows[0].size();
  for (std::size_t i = 0; i < rows[0].size(); ++i) {
    std::string name = to_lower_ascii(std::string(trim(rows[0][i])));
    if (name == "instance_id") id_col = i;
    if (name == "label") label_col = i;
  }
  if (id_col >= rows[0].size() || label_col >= rows[0].size())
    throw ValidationError(path + " needs instance_id and label columns");
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() <= std::max(id_col, label_col))
      throw ValidationError(path + " row " + std::to_string(r + 1) + " is too short");
    out.emplace_back(rows[r][id_col], std::string(trim(rows[r][label_col])));
  }
  return out;
}

void require_filled_labels(const std::vector<std::pair<std::string, std::string>>& pairs,
                           const std::string& path) {
  std::string missing;
  int shown = 0;
  for (const auto& [id, label] : pairs) {
    if (!label.empty()) continue;
    if (shown < 20) missing += " " + id;
    ++shown;
  }
  if (shown > 0)
    throw ValidationError(path + " has " + std::to_string(shown) + " unlabeled rows:" + missing);
}

void write_sample_csv(const std::string& path, const std::vector<std::string>& ids,
                      const Corpus& corpus) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << "instance_id,text,label\n";
  for (const auto& id : ids)
    out << csv_row({id, instance_by_id(corpus, id, "sample").text, ""}) << '\n';
  if (!out) throw IoError("write failed for " + path);
}

std::shared_ptr<provider::Provider> build_provider(const config::PipelineConfig& cfg) {
  return provider::make_provider(cfg.provider, cfg.seed);
}

std::unique_ptr<provider::Throttle> build_throttle(const config::PipelineConfig& cfg) {
  if (cfg.provider.rpm <= 0 && cfg.provider.tpm <= 0) return nullptr;
  return std::make_unique<provider::Throttle>(cfg.provider.rpm, cfg.provider.tpm);
}

// Journal-free annotation used by pre-hoc evaluation; same retry posture as
// the engine, but a persistently failing sample batch aborts the evaluation.
std::vector<std::pair<std::string, std::string>> annotate_items(
    const config::PipelineConfig& cfg, const config::TaskSpec& task,
    const std::vector<engine::BatchItem>& items, provider::Provider& backend,
    provider::Throttle* throttle) {
  auto batches = engine::make_batches(items, task.task_id, task.batch_size);
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& b : batches) {
    std::vector<std::string> texts;
    for (const auto& item : b.items) texts.push_back(item.text);
    std::string prompt = config::render_prompt(task.prompt_template, texts);
    provider::ProviderRequest req;
    req.prompt = prompt;
    req.model = cfg.provider.model;
    req.max_output_tokens = task.max_output_tokens;
    req.data_sharing_disabled = cfg.provider.data_sharing_disabled;

    std::string last_error;
    bool done = false;
    for (int attempt = 1; attempt <= 3 && !done; ++attempt) {
      if (throttle)
        throttle->acquire(static_cast<double>(provider::estimate_tokens(prompt)));
      try {
        auto resp = backend.annotate(req);
        auto labels = engine::parse_response(resp.raw_text, b.items.size(), task.label_set);
        for (std::size_t k = 0; k < b.items.size(); ++k)
          out.emplace_back(b.items[k].instance_id, labels[k]);
        done = true;
      } catch (const RetryableProviderError& e) {
        last_error = e.what();
      } catch (const MalformedOutput& e) {
        last_error = e.what();
      }
    }
    if (!done)
      throw EvaluationError("evaluation batch " + std::to_string(b.batch_id) +
                            " failed after retries: " + last_error);
  }
  return out;
}

std::vector<std::string> parse_csv_list(const std::string& arg) {
  std::vector<std::string> out;
  for (auto& part : split(arg, ',')) {
    std::string p(trim(part));
    if (!p.empty()) out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// extract

struct ExtractArgs {
  std::string corpus;
  std::string out;
  bool serial = false;
  bool strip_markup = false;
  int window = 0;       // 0 = config/default
  std::string pattern;  // empty = config/default
};

ExtractionConfig extraction_from_config(const json* doc) {
  ExtractionConfig ec;
  ec.lemma = default_consider_lemma();
  ec.metadata = default_metadata_rule();
  if (doc == nullptr || !doc->contains("extraction")) return ec;
  const json& e = doc->at("extraction");
  try {
    if (e.contains("include_forms"))
      ec.lemma.include_forms = e.at("include_forms").get<std::vector<std::string>>();
    if (e.contains("exclude_forms"))
      ec.lemma.exclude_forms = e.at("exclude_forms").get<std::vector<std::string>>();
    if (e.contains("window_width")) ec.window_width = e.at("window_width").get<int>();
    if (e.contains("filename_pattern"))
      ec.metadata.filename_pattern = e.at("filename_pattern").get<std::string>();
    if (e.contains("genre_table")) {
      ec.metadata.genre_table.clear();
      for (const auto& [code, label] : e.at("genre_table").items())
        ec.metadata.genre_table[code] = label.get<std::string>();
    }
    if (e.contains("strip_markup")) ec.strip_markup = e.at("strip_markup").get<bool>();
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("bad extraction config: ") + ex.what());
  }
  return ec;
}

int cmd_extract(const std::string& config_path, const ExtractArgs& args) {
  json doc;
  bool have_config = !config_path.empty();
  if (have_config) doc = parse_json_file(config_path);
  ExtractionConfig ec = extraction_from_config(have_config ? &doc : nullptr);
  if (args.window > 0) ec.window_width = args.window;
  if (!args.pattern.empty()) ec.metadata.filename_pattern = args.pattern;
  if (args.strip_markup) ec.strip_markup = true;
  ec.lemma.validate();

  ScanResult result =
      args.serial ? scan_corpus_serial(args.corpus, ec) : scan_corpus(args.corpus, ec);
  write_instances_jsonl(args.out, result.instances);

  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  if (result.instances.empty()) std::cerr << "warning: no instances extracted\n";
  std::cout << "instances: " << result.instances.size() << " -> " << args.out << "\n";
  std::cout << "decade/genre counts:\n";
  for (const auto& [key, n] : result.summary) std::cout << "  " << key << "  " << n << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string out;
  std::int64_t total = 500;
  std::uint64_t seed = 7;
  int targets_per_doc = 8;
  std::string decades;
  std::string genres;
};

int cmd_synth(const SynthArgs& args) {
  std::vector<std::string> decades = args.decades.empty()
                                         ? std::vector<std::string>{}
                                         : parse_csv_list(args.decades);
  if (decades.empty()) {
    for (int y = 1820; y <= 2010; y += 10) decades.push_back(std::to_string(y) + "s");
  }
  std::vector<std::string> genres =
      args.genres.empty()
          ? std::vector<std::string>{"academic", "fiction", "magazines", "newspapers", "tv_film"}
          : parse_csv_list(args.genres);

  auto spec = synth::default_spec(args.total, decades, genres);
  spec.targets_per_doc = args.targets_per_doc;
  auto result = synth::generate_synthetic_corpus(spec, args.seed, args.out);
  std::cout << "corpus: " << result.corpus_dir << "\n"
            << "instances: " << result.rows.size() << "\n"
            << "manifest: " << result.manifest_path << "\n"
            << "gold (binary task): " << result.gold_task1_path << "\n"
            << "gold (variant task): " << result.gold_task2_path << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// prehoc-export

int cmd_prehoc_export(const config::PipelineConfig& cfg, const std::string& task_id,
                      const std::string& sizes_arg, std::string out_dir) {
  const auto& task = config::find_task(cfg, task_id);
  auto manifest = config::load_or_init_manifest(cfg);
  Corpus corpus = load_corpus(cfg.instances_path);
  auto items = task_items(cfg, task, corpus);
  if (items.empty()) throw ValidationError("no instances available for task " + task_id);

  std::vector<std::int64_t> sizes;
  for (const auto& s : parse_csv_list(sizes_arg)) sizes.push_back(std::stoll(s));
  if (sizes.empty()) throw ConfigError("--sizes must list at least one sample size");
  if (out_dir.empty()) out_dir = run_path(cfg, "prehoc");

  std::vector<std::string> ids;
  ids.reserve(items.size());
  for (const auto& item : items) ids.push_back(item.instance_id);

  json plan;
  plan["task"] = task_id;
  plan["samples"] = json::array();
  std::uint64_t base = config::derive_seed(manifest.seeds.at("prehoc"), task_id);
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] < 1) throw ConfigError("sample sizes must be >= 1");
    if (sizes[i] > static_cast<std::int64_t>(ids.size()))
      throw ParameterError("sample size " + std::to_string(sizes[i]) + " exceeds population " +
                           std::to_string(ids.size()));
    std::uint64_t seed = hash_mix(base, i + 1);
    auto sample = validation::draw_plain(ids, sizes[i], seed);
    char name[128];
    std::snprintf(name, sizeof(name), "sample_%s_%zu_n%lld.csv", task_id.c_str(), i + 1,
                  static_cast<long long>(sizes[i]));
    std::string file = (fs::path(out_dir) / name).string();
    write_sample_csv(file, sample, corpus);
    json sj;
    sj["file"] = file;
    sj["seed"] = seed;
    sj["size"] = sizes[i];
    sj["ids"] = sample;
    plan["samples"].push_back(std::move(sj));
    std::cout << "exported " << sizes[i] << " rows -> " << file << "\n";
  }
  write_json_file(run_path(cfg, "prehoc_" + task_id + ".json"), plan);
  std::cout << "fill the label column, then run prehoc-eval --task " << task_id
            << " --gold <file>...\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// prehoc-eval

int cmd_prehoc_eval(const config::PipelineConfig& cfg, const std::string& task_id,
                    const std::vector<std::string>& gold_files) {
  const auto& task = config::find_task(cfg, task_id);
  auto manifest = config::load_or_init_manifest(cfg);
  Corpus corpus = load_corpus(cfg.instances_path);
  auto backend = build_provider(cfg);
  auto throttle = build_throttle(cfg);

  std::vector<std::pair<std::int64_t, std::int64_t>> samples;  // (successes, n)
  json sample_reports = json::array();
  std::vector<std::int64_t> pos_n(static_cast<std::size_t>(task.batch_size), 0);
  std::vector<std::int64_t> pos_err(static_cast<std::size_t>(task.batch_size), 0);

  for (const auto& path : gold_files) {
    auto pairs = read_gold_pairs(path);
    require_filled_labels(pairs, path);

    std::vector<engine::BatchItem> items;
    std::map<std::string, std::string> gold_map;
    for (const auto& [id, raw_label] : pairs) {
      auto canon = config::canonical_label(task.label_set, raw_label);
      if (!canon)
        throw ValidationError(path + ": label \"" + raw_label + "\" for " + id +
                              " is not in task " + task_id + "'s label set");
      items.push_back({id, instance_by_id(corpus, id, path).text});
      if (!gold_map.emplace(id, *canon).second)
        throw ValidationError(path + ": duplicate instance_id " + id);
    }
    auto predictions = annotate_items(cfg, task, items, *backend, throttle.get());

    std::map<std::string, std::string> pred_map;
    std::int64_t successes = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      const auto& [id, label] = predictions[i];
      pred_map[id] = label;
      std::size_t position = i % static_cast<std::size_t>(task.batch_size);
      bool correct = label == gold_map.at(id);
      successes += correct ? 1 : 0;
      pos_n[position] += 1;
      pos_err[position] += correct ? 0 : 1;
    }
    auto cm = metrics::confusion_matrix(gold_map, pred_map, task.label_set);
    double acc = metrics::accuracy(cm);
    metrics::Prf prf = task.label_set.size() == 2
                           ? metrics::precision_recall_f1_binary(cm, task.label_set[0])
                           : metrics::precision_recall_f1_macro(cm);
    double mcc_v = metrics::mcc(cm);
    samples.emplace_back(successes, static_cast<std::int64_t>(predictions.size()));

    json sj;
    sj["file"] = path;
    sj["n"] = predictions.size();
    sj["successes"] = successes;
    sj["accuracy"] = acc;
    sj["precision"] = prf.precision;
    sj["recall"] = prf.recall;
    sj["f1"] = prf.f1;
    sj["mcc"] = mcc_v;
    sample_reports.push_back(sj);
    std::cout << path << ": n=" << predictions.size() << " accuracy=" << acc
              << " precision=" << prf.precision << " recall=" << prf.recall
              << " f1=" << prf.f1 << " mcc=" << mcc_v << "\n";
  }

  auto gate = metrics::gate_prehoc(samples, cfg.gate.threshold,
                                   static_cast<std::size_t>(cfg.gate.min_samples),
                                   cfg.gate.mode, cfg.gate.confidence);

  // Informational per-size pools for batch-size sweeps.
  std::map<std::int64_t, std::pair<std::int64_t, std::int64_t>> by_size;
  for (const auto& [successes, n] : samples) {
    by_size[n].first += successes;
    by_size[n].second += n;
  }
  json size_reports = json::array();
  for (const auto& [size, pooled] : by_size) {
    auto iv = metrics::wilson_interval(pooled.first, pooled.second, cfg.gate.confidence);
    json rj;
    rj["size"] = size;
    rj["successes"] = pooled.first;
    rj["n"] = pooled.second;
    rj["wilson_lower"] = iv.first;
    rj["wilson_upper"] = iv.second;
    size_reports.push_back(rj);
    std::cout << "size " << size << ": pooled " << pooled.first << "/" << pooled.second
              << " wilson=[" << iv.first << ", " << iv.second << "]\n";
  }

  // Error-by-position summary; clustering toward the tail signals attention
  // degradation over long batches.
  json positions = json::array();
  std::int64_t front_err = 0, front_n = 0, back_err = 0, back_n = 0;
  for (std::size_t p = 0; p < pos_n.size(); ++p) {
    if (pos_n[p] == 0) continue;
    json pj;
    pj["position"] = p + 1;
    pj["n"] = pos_n[p];
    pj["errors"] = pos_err[p];
    positions.push_back(pj);
    if (p < pos_n.size() / 2) {
      front_n += pos_n[p];
      front_err += pos_err[p];
    } else {
      back_n += pos_n[p];
      back_err += pos_err[p];
    }
  }
  auto rate = [](std::int64_t err, std::int64_t n) {
    return n == 0 ? 0.0 : static_cast<double>(err) / static_cast<double>(n);
  };
  std::cout << "errors by batch position: front half " << rate(front_err, front_n)
            << ", back half " << rate(back_err, back_n) << "\n";

  config::ManifestGate mg;
  mg.passed = gate.passed;
  mg.pooled_successes = gate.pooled_successes;
  mg.pooled_n = gate.pooled_n;
  mg.lower = gate.interval.first;
  mg.upper = gate.interval.second;
  mg.threshold = gate.threshold;
  mg.mode = gate.mode == metrics::GateMode::pooled ? "pooled" : "per_sample";
  mg.samples = samples;
  manifest.gates[task_id] = mg;
  config::save_manifest(cfg.run_dir, manifest);

  json out;
  out["task"] = task_id;
  out["samples"] = sample_reports;
  out["by_size"] = size_reports;
  out["positions"] = positions;
  out["gate"] = {{"passed", gate.passed},
                 {"pooled_successes", gate.pooled_successes},
                 {"pooled_n", gate.pooled_n},
                 {"wilson_lower", gate.interval.first},
                 {"wilson_upper", gate.interval.second},
                 {"threshold", gate.threshold},
                 {"mode", mg.mode}};
  write_json_file(run_path(cfg, "prehoc_eval_" + task_id + ".json"), out);

  std::cout << "GATE " << (gate.passed ? "PASS" : "FAIL") << ": pooled "
            << gate.pooled_successes << "/" << gate.pooled_n << ", wilson lower "
            << gate.interval.first << (gate.passed ? " > " : " <= ") << gate.threshold << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// run

struct RunArgs {
  std::string task;
  bool resume = false;
  bool skip_gate = false;
  bool dry_run = false;
  int parallel = 1;
  int retry_cap = 3;
  bool quiet = false;
};

int cmd_run(const config::PipelineConfig& cfg, const RunArgs& args) {
  const auto& task = config::find_task(cfg, args.task);
  auto manifest = config::load_or_init_manifest(cfg);

  if (!args.dry_run && !args.skip_gate) {
    auto it = manifest.gates.find(args.task);
    if (it == manifest.gates.end())
      throw GateRefusal("no pre-hoc gate recorded for task " + args.task +
                        "; run prehoc-eval first or pass --skip-gate");
    if (!it->second.passed)
      throw GateRefusal("pre-hoc gate failed for task " + args.task + " (wilson lower " +
                        std::to_string(it->second.lower) + " <= " +
                        std::to_string(it->second.threshold) +
                        "); refine the prompt or pass --skip-gate");
  }

  Corpus corpus = load_corpus(cfg.instances_path);
  auto items = task_items(cfg, task, corpus);
  auto batches_preview = engine::make_batches(items, task.task_id, task.batch_size);

  if (args.dry_run) {
    std::int64_t input_est = 0, output_est = 0;
    for (const auto& b : batches_preview) {
      std::vector<std::string> texts;
      for (const auto& item : b.items) texts.push_back(item.text);
      input_est += provider::estimate_tokens(config::render_prompt(task.prompt_template, texts));
      // ~6 tokens per numbered label line.
      output_est += static_cast<std::int64_t>(b.items.size()) * 6;
    }
    engine::PricingTable pricing{cfg.pricing.input_per_mtok, cfg.pricing.output_per_mtok};
    char cost[32];
    std::snprintf(cost, sizeof(cost), "%.2f",
                  engine::compute_cost(input_est, output_est, pricing));
    std::cout << "dry run for task " << args.task << ":\n"
              << "  instances: " << items.size() << "\n"
              << "  batches: " << batches_preview.size() << " (size " << task.batch_size
              << ")\n"
              << "  estimated input tokens: " << input_est << "\n"
              << "  estimated output tokens: " << output_est << "\n"
              << "  estimated cost: $" << cost << " (" << cfg.pricing.version << " pricing)\n";
    return kExitOk;
  }

  auto backend = build_provider(cfg);
  auto throttle = build_throttle(cfg);

  std::string journal_name = "journal_" + args.task + ".jsonl";
  manifest.journals[args.task] = journal_name;
  manifest.provider_identity = backend->identity();
  config::save_manifest(cfg.run_dir, manifest);  // on disk before any provider call

  engine::Journal journal(run_path(cfg, journal_name));
  engine::EngineOptions options;
  options.retry_cap = args.retry_cap;
  options.resume = args.resume;
  options.parallel = args.parallel;
  options.model = cfg.provider.model;
  options.data_sharing_disabled = cfg.provider.data_sharing_disabled;
  options.throttle = throttle.get();
  options.progress = args.quiet ? nullptr : &std::cerr;

  auto result = engine::run_task(task, items, *backend, journal, options);

  std::string dataset_path = run_path(cfg, "dataset_" + args.task + ".jsonl");
  engine::write_dataset(dataset_path, args.task, result.labels);

  engine::PricingTable pricing{cfg.pricing.input_per_mtok, cfg.pricing.output_per_mtok};
  double cost = engine::compute_cost(result.totals.input_tokens, result.totals.output_tokens,
                                     pricing);
  json summary;
  summary["task_id"] = args.task;
  summary["provider"] = backend->identity();
  summary["model"] = cfg.provider.model;
  summary["pricing_version"] = cfg.pricing.version;
  summary["batches"] = result.totals.batches;
  summary["completed_batches"] = result.totals.completed_batches;
  summary["failed_batches"] = result.failed_batch_ids;
  summary["failed_instances"] = result.failed_instance_ids;
  summary["instances"] = result.totals.instances;
  summary["labeled"] = result.totals.labeled;
  summary["input_tokens"] = result.totals.input_tokens;
  summary["output_tokens"] = result.totals.output_tokens;
  summary["latency_s"] = result.totals.latency_s;
  summary["attempts"] = result.totals.attempts;
  summary["cost_usd"] = cost;
  write_json_file(run_path(cfg, "summary_" + args.task + ".json"), summary);

  char cost_text[32];
  std::snprintf(cost_text, sizeof(cost_text), "%.2f", cost);
  std::cout << "task " << args.task << ": " << result.totals.completed_batches << "/"
            << result.totals.batches << " batches completed, " << result.totals.labeled
            << " instances labeled\n"
            << "tokens: " << result.totals.input_tokens << " in / "
            << result.totals.output_tokens << " out, cost $" << cost_text << "\n"
            << "dataset: " << dataset_path << "\n";
  if (!result.failed_batch_ids.empty()) {
    std::cout << "failed batches:";
    for (auto id : result.failed_batch_ids) std::cout << " " << id;
    std::cout << " (" << result.failed_instance_ids.size() << " instances unlabeled)\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// posthoc-export

struct PosthocArgs {
  std::string task;
  std::string out;
  std::string stratify = "decade_genre";  // decade_genre | batch | none
  std::string weights_file;
  std::int64_t size_override = 0;
  double expected_accuracy = 0.0;  // 0 = config
  double margin_error = 0.0;
  bool min_one = false;
};

// Optional post-allocation floor: every non-empty stratum keeps at least one
// draw, surplus removed from the largest allocations.
void apply_min_one(std::vector<validation::StratumAllocation>& allocation, std::int64_t n) {
  if (static_cast<std::int64_t>(allocation.size()) > n)
    throw ParameterError("cannot allocate one item per stratum: " +
                         std::to_string(allocation.size()) + " strata, sample size " +
                         std::to_string(n));
  std::int64_t total = 0;
  for (auto& a : allocation) {
    if (a.allocated == 0) a.allocated = 1;
    total += a.allocated;
  }
  while (total > n) {
    auto best = allocation.end();
    for (auto it = allocation.begin(); it != allocation.end(); ++it) {
      if (it->allocated <= 1) continue;
      if (best == allocation.end() || it->allocated > best->allocated) best = it;
    }
    if (best == allocation.end()) break;
    best->allocated -= 1;
    total -= 1;
  }
}

int cmd_posthoc_export(const config::PipelineConfig& cfg, const PosthocArgs& args) {
  const auto& task = config::find_task(cfg, args.task);
  auto manifest = config::load_or_init_manifest(cfg);
  Corpus corpus = load_corpus(cfg.instances_path);

  std::string dataset_path = run_path(cfg, "dataset_" + args.task + ".jsonl");
  auto dataset = engine::read_dataset(dataset_path);
  if (dataset.empty()) throw ValidationError("dataset " + dataset_path + " is empty");

  validation::SampleSizeParams params;
  params.population = static_cast<std::int64_t>(dataset.size());
  params.expected_accuracy =
      args.expected_accuracy > 0 ? args.expected_accuracy : cfg.sampling.expected_accuracy;
  params.margin_error = args.margin_error > 0 ? args.margin_error : cfg.sampling.margin_error;
  params.z = cfg.sampling.z;
  std::int64_t n =
      args.size_override > 0 ? args.size_override : validation::required_sample_size(params);
  if (n > params.population)
    throw ParameterError("sample size " + std::to_string(n) + " exceeds population " +
                         std::to_string(params.population));

  std::vector<validation::StratumItem> items;
  items.reserve(dataset.size());
  if (args.stratify == "decade_genre") {
    for (const auto& [id, label] : dataset) {
      (void)label;
      const auto& inst = instance_by_id(corpus, id, dataset_path);
      items.push_back({id, inst.decade + "/" + inst.genre});
    }
  } else if (args.stratify == "batch") {
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      char key[32];
      std::snprintf(key, sizeof(key), "batch:%06lld",
                    static_cast<long long>(i / static_cast<std::size_t>(task.batch_size) + 1));
      items.push_back({dataset[i].first, key});
    }
  } else if (args.stratify == "none") {
    for (const auto& [id, label] : dataset) {
      (void)label;
      items.push_back({id, "(all)"});
    }
  } else {
    throw ConfigError("--stratify must be decade_genre, batch, or none");
  }

  std::map<std::string, double> external;
  bool have_external = !args.weights_file.empty();
  if (have_external) {
    auto rows = csv_read_file(args.weights_file);
    if (rows.empty() || rows[0].size() < 2 || rows[0][0] != "stratum" ||
        rows[0][1] != "weight")
      throw ConfigError(args.weights_file + " needs a stratum,weight header");
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (rows[r].size() < 2)
        throw ConfigError(args.weights_file + " row " + std::to_string(r + 1) + " too short");
      external[rows[r][0]] = std::stod(rows[r][1]);
    }
  }
  auto weights = validation::stratum_weights(items, have_external ? &external : nullptr);
  std::map<std::string, std::int64_t> populations;
  for (const auto& item : items) populations[item.stratum] += 1;
  auto allocation = validation::allocate_strata(weights, n, populations);
  if (args.min_one || cfg.sampling.min_one_per_stratum) apply_min_one(allocation, n);

  std::uint64_t seed = config::derive_seed(manifest.seeds.at("posthoc"), args.task);
  auto ids = validation::draw_stratified(items, allocation, seed);

  std::string out = args.out.empty() ? run_path(cfg, "posthoc_sample_" + args.task + ".csv")
                                     : args.out;
  write_sample_csv(out, ids, corpus);

  std::map<std::string, std::string> strata_by_id;
  for (const auto& item : items) strata_by_id[item.id] = item.stratum;
  json plan;
  plan["task"] = args.task;
  plan["seed"] = seed;
  plan["population"] = params.population;
  plan["sample_size"] = static_cast<std::int64_t>(ids.size());
  plan["stratify"] = args.stratify;
  plan["params"] = {{"expected_accuracy", params.expected_accuracy},
                    {"margin_error", params.margin_error},
                    {"z", params.z}};
  plan["allocation"] = json::array();
  for (const auto& a : allocation) {
    plan["allocation"].push_back(
        {{"stratum", a.stratum}, {"weight", a.weight}, {"allocated", a.allocated}});
  }
  plan["ids"] = ids;
  json strata = json::object();
  for (const auto& id : ids) strata[id] = strata_by_id.at(id);
  plan["strata"] = strata;
  write_json_file(run_path(cfg, "posthoc_" + args.task + ".json"), plan);

  std::cout << "population " << params.population << ", sample size " << ids.size() << " over "
            << allocation.size() << " strata (seed " << seed << ")\n"
            << "exported -> " << out << "\n"
            << "fill the label column, then run validate --task " << args.task
            << " --gold " << out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// validate

int cmd_validate(const config::PipelineConfig& cfg, const std::string& task_id,
                 const std::string& gold_file) {
  std::string plan_path = run_path(cfg, "posthoc_" + task_id + ".json");
  if (!fs::exists(plan_path))
    throw IoError("no post-hoc plan at " + plan_path + "; run posthoc-export first");
  json plan = parse_json_file(plan_path);

  std::vector<std::string> ids = plan.at("ids").get<std::vector<std::string>>();
  std::map<std::string, std::string> strata;
  for (const auto& [id, stratum] : plan.at("strata").items())
    strata[id] = stratum.get<std::string>();

  auto gold_pairs = read_gold_pairs(gold_file);
  require_filled_labels(gold_pairs, gold_file);
  std::map<std::string, std::string> gold(gold_pairs.begin(), gold_pairs.end());

  std::string dataset_path = run_path(cfg, "dataset_" + task_id + ".jsonl");
  auto dataset = engine::read_dataset(dataset_path);
  std::map<std::string, std::string> predictions(dataset.begin(), dataset.end());

  auto report = validation::compare_gold(ids, gold, predictions, strata, cfg.gate.confidence);

  std::cout << "sampled " << report.total_sampled << ", correct " << report.total_correct
            << ", accuracy " << report.accuracy << "\n"
            << "wilson interval [" << report.wilson.first << ", " << report.wilson.second
            << "]\n";
  std::size_t shown = 0;
  for (const auto& s : report.per_stratum) {
    if (shown++ == 30) {
      std::cout << "  ... (" << report.per_stratum.size() << " strata total)\n";
      break;
    }
    std::cout << "  " << s.stratum << ": " << s.correct << "/" << s.sampled << " = "
              << s.accuracy << "\n";
  }
  if (!report.disagreements.empty()) {
    std::cout << "disagreements (" << report.disagreements.size() << "):\n";
    shown = 0;
    for (const auto& d : report.disagreements) {
      if (shown++ == 50) {
        std::cout << "  ...\n";
        break;
      }
      std::cout << "  " << d.id << ": gold " << d.gold << ", predicted " << d.predicted << "\n";
    }
  }

  json out;
  out["task"] = task_id;
  out["total_sampled"] = report.total_sampled;
  out["total_correct"] = report.total_correct;
  out["accuracy"] = report.accuracy;
  out["wilson_lower"] = report.wilson.first;
  out["wilson_upper"] = report.wilson.second;
  out["per_stratum"] = json::array();
  for (const auto& s : report.per_stratum) {
    out["per_stratum"].push_back({{"stratum", s.stratum},
                                  {"sampled", s.sampled},
                                  {"correct", s.correct},
                                  {"accuracy", s.accuracy}});
  }
  out["disagreements"] = json::array();
  for (const auto& d : report.disagreements) {
    out["disagreements"].push_back(
        {{"instance_id", d.id}, {"gold", d.gold}, {"predicted", d.predicted}});
  }
  write_json_file(run_path(cfg, "validation_" + task_id + ".json"), out);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// report

int cmd_report(const config::PipelineConfig& cfg, const std::string& task_id,
               const std::string& by, std::string out_dir) {
  const auto& task = config::find_task(cfg, task_id);
  Corpus corpus = load_corpus(cfg.instances_path);
  std::string dataset_path = run_path(cfg, "dataset_" + task_id + ".jsonl");
  auto dataset = engine::read_dataset(dataset_path);
  if (out_dir.empty()) out_dir = run_path(cfg, "report");
  fs::create_directories(out_dir);

  std::map<std::string, report::InstanceMeta> meta;
  for (const auto& [id, label] : dataset) {
    (void)label;
    const auto& inst = instance_by_id(corpus, id, dataset_path);
    meta[id] = {inst.decade, inst.genre};
  }

  auto write_svg = [&](const std::string& path, const std::string& svg) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << svg;
    if (!out) throw IoError("write failed for " + path);
  };

  bool want_decade = by == "decade" || by == "both";
  bool want_genre = by == "decade_genre" || by == "both";
  if (!want_decade && !want_genre)
    throw ConfigError("--by must be decade, decade_genre, or both");

  if (want_decade) {
    auto table =
        report::variant_proportions(dataset, meta, report::GroupBy::kDecade, task.label_set);
    std::string csv_path = (fs::path(out_dir) / ("proportions_by_decade_" + task_id + ".csv"))
                               .string();
    report::write_proportions_csv(table, csv_path);
    std::string svg_path =
        (fs::path(out_dir) / ("variants_by_decade_" + task_id + ".svg")).string();
    write_svg(svg_path, report::render_chart_svg(table, "Label share by decade (" + task_id +
                                                            ")"));
    std::cout << report::format_table_text(table) << "written: " << csv_path << "\n"
              << "written: " << svg_path << "\n";
  }
  if (want_genre) {
    auto table = report::variant_proportions(dataset, meta, report::GroupBy::kDecadeGenre,
                                             task.label_set);
    std::string csv_path =
        (fs::path(out_dir) / ("proportions_by_decade_genre_" + task_id + ".csv")).string();
    report::write_proportions_csv(table, csv_path);
    std::cout << "written: " << csv_path << "\n";

    std::set<std::string> genres;
    for (const auto& [id, m] : meta) {
      (void)id;
      genres.insert(m.genre);
    }
    for (const auto& genre : genres) {
      std::vector<std::pair<std::string, std::string>> subset;
      for (const auto& [id, label] : dataset) {
        if (meta.at(id).genre == genre) subset.emplace_back(id, label);
      }
      if (subset.empty()) continue;
      auto sub_table =
          report::variant_proportions(subset, meta, report::GroupBy::kDecade, task.label_set);
      std::string svg_path =
          (fs::path(out_dir) / ("variants_" + task_id + "_" + genre + ".svg")).string();
      write_svg(svg_path, report::render_chart_svg(sub_table, "Label share by decade, " +
                                                                  genre + " (" + task_id +
                                                                  ")"));
      std::cout << "written: " << svg_path << "\n";
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// cost

int cmd_cost(const config::PipelineConfig& cfg, const std::string& task_filter) {
  engine::PricingTable pricing{cfg.pricing.input_per_mtok, cfg.pricing.output_per_mtok};
  std::vector<std::string> task_ids;
  if (!task_filter.empty()) {
    task_ids.push_back(task_filter);
  } else {
    for (const auto& t : cfg.tasks) {
      if (fs::exists(run_path(cfg, "journal_" + t.task_id + ".jsonl")))
        task_ids.push_back(t.task_id);
    }
    if (task_ids.empty()) throw IoError("no journals found under " + cfg.run_dir);
  }

  std::int64_t grand_in = 0, grand_out = 0;
  double grand_latency = 0.0;
  for (const auto& task_id : task_ids) {
    std::string path = run_path(cfg, "journal_" + task_id + ".jsonl");
    std::map<std::int64_t, engine::BatchOutcome> last;
    for (auto& o : engine::Journal::load(path)) last[o.batch_id] = std::move(o);
    std::int64_t in = 0, out = 0, attempts = 0;
    double latency = 0.0;
    for (const auto& [id, o] : last) {
      (void)id;
      in += o.input_tokens;
      out += o.output_tokens;
      latency += o.latency_s;
      attempts += o.attempts;
    }
    grand_in += in;
    grand_out += out;
    grand_latency += latency;
    char cost[32];
    std::snprintf(cost, sizeof(cost), "%.2f", engine::compute_cost(in, out, pricing));
    std::cout << task_id << ": batches=" << last.size() << " input_tokens=" << in
              << " output_tokens=" << out << " attempts=" << attempts
              << " latency_s=" << latency << " cost=$" << cost << "\n";
  }
  char total[32];
  std::snprintf(total, sizeof(total), "%.2f",
                engine::compute_cost(grand_in, grand_out, pricing));
  std::cout << "total: input_tokens=" << grand_in << " output_tokens=" << grand_out
            << " latency_s=" << grand_latency << " cost=$" << total << " ("
            << cfg.pricing.version << " pricing: $" << cfg.pricing.input_per_mtok << "/M in, $"
            << cfg.pricing.output_per_mtok << "/M out)\n";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"prompt-driven corpus annotation pipeline"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("-c,--config", config_path, "pipeline config JSON")
      ->envname("ANNOT_CONFIG");

  auto* sc_extract = app.add_subcommand("extract", "scan a corpus directory into instances");
  ExtractArgs xargs;
  sc_extract->add_option("--corpus", xargs.corpus, "corpus root directory")->required();
  sc_extract->add_option("--out", xargs.out, "instance JSONL output")->required();
  sc_extract->add_flag("--serial", xargs.serial, "use the serial reference scanner");
  sc_extract->add_flag("--strip-markup", xargs.strip_markup, "drop <...> tokens");
  sc_extract->add_option("--window", xargs.window, "tokens per side");
  sc_extract->add_option("--pattern", xargs.pattern, "filename metadata pattern");

  auto* sc_synth = app.add_subcommand("synth", "generate a synthetic labeled corpus");
  SynthArgs sargs;
  sc_synth->add_option("--out", sargs.out, "output directory")->required();
  sc_synth->add_option("--total", sargs.total, "instance count");
  sc_synth->add_option("--seed", sargs.seed, "generator seed");
  sc_synth->add_option("--targets-per-doc", sargs.targets_per_doc, "targets per document");
  sc_synth->add_option("--decades", sargs.decades, "comma-separated decade labels");
  sc_synth->add_option("--genres", sargs.genres, "comma-separated genre labels");

  auto* sc_pre_export = app.add_subcommand("prehoc-export", "export seeded gold samples");
  std::string pre_task, pre_sizes = "100,100,100", pre_out_dir;
  sc_pre_export->add_option("--task", pre_task, "task id")->required();
  sc_pre_export->add_option("--sizes", pre_sizes, "comma-separated sample sizes");
  sc_pre_export->add_option("--out-dir", pre_out_dir, "sample file directory");

  auto* sc_pre_eval =
      app.add_subcommand("prehoc-eval", "evaluate gold samples and record the gate");
  std::string eval_task;
  std::vector<std::string> eval_gold;
  sc_pre_eval->add_option("--task", eval_task, "task id")->required();
  sc_pre_eval->add_option("--gold", eval_gold, "filled sample CSV (repeatable)")
      ->required()
      ->take_all();

  auto* sc_run = app.add_subcommand("run", "annotate the full instance set");
  RunArgs rargs;
  sc_run->add_option("--task", rargs.task, "task id")->required();
  sc_run->add_flag("--resume", rargs.resume, "skip batches already in the journal");
  sc_run->add_flag("--skip-gate", rargs.skip_gate, "run without a passed pre-hoc gate");
  sc_run->add_flag("--dry-run", rargs.dry_run, "estimate tokens and cost, no provider calls");
  sc_run->add_option("--parallel", rargs.parallel, "worker pool size");
  sc_run->add_option("--retry-cap", rargs.retry_cap, "whole-batch submissions per batch");
  sc_run->add_flag("--quiet", rargs.quiet, "suppress per-batch progress");

  auto* sc_post = app.add_subcommand("posthoc-export", "export a stratified validation sample");
  PosthocArgs pargs;
  sc_post->add_option("--task", pargs.task, "task id")->required();
  sc_post->add_option("--out", pargs.out, "sample CSV path");
  sc_post->add_option("--stratify", pargs.stratify, "decade_genre | batch | none");
  sc_post->add_option("--weights", pargs.weights_file, "external stratum,weight CSV");
  sc_post->add_option("--size", pargs.size_override, "override computed sample size");
  sc_post->add_option("--expected-accuracy", pargs.expected_accuracy, "p for the size formula");
  sc_post->add_option("--margin-error", pargs.margin_error, "ME for the size formula");
  sc_post->add_flag("--min-one", pargs.min_one, "floor of one draw per stratum");

  auto* sc_validate = app.add_subcommand("validate", "compare gold labels against the dataset");
  std::string val_task, val_gold;
  sc_validate->add_option("--task", val_task, "task id")->required();
  sc_validate->add_option("--gold", val_gold, "filled sample CSV")->required();

  auto* sc_report = app.add_subcommand("report", "variant proportion tables and charts");
  std::string rep_task, rep_by = "both", rep_out_dir;
  sc_report->add_option("--task", rep_task, "task id")->required();
  sc_report->add_option("--by", rep_by, "decade | decade_genre | both");
  sc_report->add_option("--out-dir", rep_out_dir, "report output directory");

  auto* sc_cost = app.add_subcommand("cost", "token and cost totals from journals");
  std::string cost_task;
  sc_cost->add_option("--task", cost_task, "restrict to one task");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    auto require_cfg = [&]() {
      if (config_path.empty())
        throw ConfigError("this command needs --config (or $ANNOT_CONFIG)");
      return config::load_pipeline_file(config_path);
    };
    if (app.got_subcommand(sc_extract)) return cmd_extract(config_path, xargs);
    if (app.got_subcommand(sc_synth)) return cmd_synth(sargs);
    if (app.got_subcommand(sc_pre_export))
      return cmd_prehoc_export(require_cfg(), pre_task, pre_sizes, pre_out_dir);
    if (app.got_subcommand(sc_pre_eval))
      return cmd_prehoc_eval(require_cfg(), eval_task, eval_gold);
    if (app.got_subcommand(sc_run)) return cmd_run(require_cfg(), rargs);
    if (app.got_subcommand(sc_post)) return cmd_posthoc_export(require_cfg(), pargs);
    if (app.got_subcommand(sc_validate))
      return cmd_validate(require_cfg(), val_task, val_gold);
    if (app.got_subcommand(sc_report))
      return cmd_report(require_cfg(), rep_task, rep_by, rep_out_dir);
    if (app.got_subcommand(sc_cost)) return cmd_cost(require_cfg(), cost_task);
    throw ConfigError("no subcommand");
  } catch (const GateRefusal& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitGateRefusal;
  } catch (const FatalProviderError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitProviderFatal;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
}

}  // namespace annot::cli
