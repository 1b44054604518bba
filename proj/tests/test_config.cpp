#include <doctest.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "annot/config.hpp"
#include "annot/errors.hpp"

using namespace annot;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("annot_config_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& p, const std::string& content) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << content;
}

// Minimal valid config document rooted at `dir`.
json base_config(const TempDir& dir) {
  write_file(dir.path / "p1.txt", "Classify.\n<sentences>\n{{SENTENCES}}\n</sentences>\n");
  write_file(dir.path / "p2.txt", "Pick zero, to_be or as.\n{{SENTENCES}}\n");
  json doc;
  doc["run_dir"] = (dir.path / "run").string();
  doc["instances"] = (dir.path / "inst.jsonl").string();
  doc["seed"] = 7;
  doc["provider"] = {{"kind", "oracle"}};
  doc["tasks"] = json::array();
  doc["tasks"].push_back({{"task_id", "t1"},
                          {"labels", {"evaluative", "non_evaluative"}},
                          {"prompt", "p1.txt"}});
  doc["tasks"].push_back({{"task_id", "t2"},
                          {"labels", {"zero", "to_be", "as"}},
                          {"prompt", "p2.txt"},
                          {"input_filter", {{"task", "t1"}, {"label", "evaluative"}}}});
  return doc;
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("loads a two-task chain and orders it topologically") {
  TempDir dir;
  auto cfg = config::load_pipeline(base_config(dir), dir.path.string());
  REQUIRE(cfg.tasks.size() == 2);
  CHECK(cfg.tasks[0].task_id == "t1");
  CHECK(cfg.tasks[1].task_id == "t2");
  CHECK(cfg.tasks[1].input_filter->label == "evaluative");
  CHECK(cfg.provider.kind == "oracle");
  CHECK(cfg.provider.model == "gpt-5");       // default
  CHECK(cfg.gate.threshold == doctest::Approx(0.95));
  CHECK(cfg.sampling.expected_accuracy == doctest::Approx(0.96));
  CHECK(!cfg.config_hash.empty());
}

TEST_CASE("declaration order does not matter for chained tasks") {
  TempDir dir;
  auto doc = base_config(dir);
  std::swap(doc["tasks"][0], doc["tasks"][1]);  // t2 declared before t1
  auto cfg = config::load_pipeline(doc, dir.path.string());
  CHECK(cfg.tasks[0].task_id == "t1");
  CHECK(cfg.tasks[1].task_id == "t2");
}

TEST_CASE("cycles unknown upstreams and self refs are rejected") {
  TempDir dir;
  auto doc = base_config(dir);
  doc["tasks"][0]["input_filter"] = {{"task", "t2"}, {"label", "zero"}};
  CHECK_THROWS_AS(config::load_pipeline(doc, dir.path.string()), ConfigError);

  doc = base_config(dir);
  doc["tasks"][1]["input_filter"]["task"] = "ghost";
  CHECK_THROWS_AS(config::load_pipeline(doc, dir.path.string()), ConfigError);

  doc = base_config(dir);
  doc["tasks"][1]["input_filter"]["task"] = "t2";
  CHECK_THROWS_AS(config::load_pipeline(doc, dir.path.string()), ConfigError);
}

TEST_CASE("filter label must exist upstream") {
  TempDir dir;
  auto doc = base_config(dir);
  doc["tasks"][1]["input_filter"]["label"] = "mystery";
  CHECK_THROWS_AS(config::load_pipeline(doc, dir.path.string()), ConfigError);
  // Case variants canonicalize to the declared spelling.
  doc["tasks"][1]["input_filter"]["label"] = "Evaluative";
  auto cfg = config::load_pipeline(doc, dir.path.string());
  CHECK(cfg.tasks[1].input_filter->label == "evaluative");
}

TEST_CASE("prompt placeholder count is enforced") {
  TempDir dir;
  auto doc = base_config(dir);
  write_file(dir.path / "p1.txt", "no placeholder at all\n");
  CHECK_THROWS_AS(config::load_pipeline(doc, dir.path.string()), ConfigError);
  write_file(dir.path / "p1.txt", "{{SENTENCES}} and {{SENTENCES}}\n");
  CHECK_THROWS_AS(config::load_pipeline(doc, dir.path.string()), ConfigError);
}

TEST_CASE("label sets are validated") {
  TempDir dir;
  auto doc = base_config(dir);
  doc["tasks"][0]["labels"] = {"only_one"};
  CHECK_THROWS_AS(config::load_pipeline(doc, dir.path.string()), ConfigError);
  doc = base_config(dir);
  doc["tasks"][0]["labels"] = {"Zero", "zero"};  // case-insensitive collision
  CHECK_THROWS_AS(config::load_pipeline(doc, dir.path.string()), ConfigError);
}

TEST_CASE("provider validation") {
  TempDir dir;
  auto doc = base_config(dir);
  doc["provider"]["kind"] = "carrier_pigeon";
  CHECK_THROWS_AS(config::load_pipeline(doc, dir.path.string()), ConfigError);
  doc = base_config(dir);
  doc["provider"] = {{"kind", "http"}};  // endpoint missing
  CHECK_THROWS_AS(config::load_pipeline(doc, dir.path.string()), ConfigError);
  doc = base_config(dir);
  doc["provider"] = {{"kind", "corrupting"}, {"corruption_rate", 1.5}};
  CHECK_THROWS_AS(config::load_pipeline(doc, dir.path.string()), ConfigError);
}

TEST_CASE("render_prompt numbers sentences from 1") {
  std::string tmpl = "Header\n<sentences>\n{{SENTENCES}}\n</sentences>\nFooter";
  auto got = config::render_prompt(tmpl, {"First one.", "Second one."});
  CHECK(got ==
        "Header\n<sentences>\n1. First one.\n2. Second one.\n</sentences>\nFooter");
  CHECK(config::render_prompt("{{SENTENCES}}", {}) == "");
  CHECK(config::render_prompt("{{SENTENCES}}", {"only"}) == "1. only");
}

TEST_CASE("config hash ignores formatting but not content") {
  TempDir dir;
  auto doc = base_config(dir);
  auto cfg1 = config::load_pipeline(doc, dir.path.string());
  // Same document parsed from differently formatted text.
  auto reparsed = json::parse(doc.dump(4));
  auto cfg2 = config::load_pipeline(reparsed, dir.path.string());
  CHECK(cfg1.config_hash == cfg2.config_hash);

  doc["seed"] = 8;
  auto cfg3 = config::load_pipeline(doc, dir.path.string());
  CHECK(cfg1.config_hash != cfg3.config_hash);
}

TEST_CASE("manifest binds a run dir to one config hash") {
  TempDir dir;
  auto doc = base_config(dir);
  auto cfg = config::load_pipeline(doc, dir.path.string());
  auto m1 = config::load_or_init_manifest(cfg);
  CHECK(m1.config_hash == cfg.config_hash);
  CHECK(m1.seeds.count("prehoc") == 1);
  CHECK(m1.seeds.count("posthoc") == 1);

  // Reloading with the same config succeeds and keeps recorded state.
  config::ManifestGate g;
  g.passed = true;
  g.pooled_successes = 300;
  g.pooled_n = 300;
  m1.gates["t1"] = g;
  config::save_manifest(cfg.run_dir, m1);
  auto m2 = config::load_or_init_manifest(cfg);
  CHECK(m2.gates.at("t1").passed);
  CHECK(m2.seeds == m1.seeds);

  // A different config refuses to reuse the run dir.
  doc["seed"] = 1234;
  auto other = config::load_pipeline(doc, dir.path.string());
  CHECK_THROWS_AS(config::load_or_init_manifest(other), ConfigError);
}

TEST_CASE("derive_seed is stable and purpose-sensitive") {
  auto a = config::derive_seed(42, "prehoc");
  CHECK(a == config::derive_seed(42, "prehoc"));
  CHECK(a != config::derive_seed(42, "posthoc"));
  CHECK(a != config::derive_seed(43, "prehoc"));
}

TEST_CASE("canonical_label maps variants onto the declared set") {
  std::vector<std::string> labels{"to_be", "zero"};
  CHECK(config::canonical_label(labels, "To Be").value() == "to_be");
  CHECK(config::canonical_label(labels, " ZERO ").value() == "zero");
  CHECK(!config::canonical_label(labels, "as").has_value());
}

TEST_CASE("find_task") {
  TempDir dir;
  auto cfg = config::load_pipeline(base_config(dir), dir.path.string());
  CHECK(config::find_task(cfg, "t2").label_set.size() == 3);
  CHECK_THROWS_AS(config::find_task(cfg, "nope"), ConfigError);
}

}  // TEST_SUITE
