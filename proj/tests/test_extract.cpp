#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <unistd.h>

#include "annot/errors.hpp"
#include "annot/extract.hpp"
#include "annot/synth.hpp"

using namespace annot;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("annot_extract_" + std::to_string(::getpid()) + "_" +
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

ExtractionConfig default_config() {
  ExtractionConfig c;
  c.lemma = default_consider_lemma();
  c.metadata = default_metadata_rule();
  return c;
}

}  // namespace

TEST_SUITE("extract") {

TEST_CASE("lemma matching is include-list membership on normalized tokens") {
  auto lemma = default_consider_lemma();
  lemma.validate();
  CHECK(match_token("consider", lemma));
  CHECK(match_token("considers", lemma));
  CHECK(match_token("considered", lemma));
  CHECK(match_token("considering", lemma));
  CHECK(!match_token("considerable", lemma));
  CHECK(!match_token("considerably", lemma));
  CHECK(!match_token("consideration", lemma));
  CHECK(!match_token("considerate", lemma));
  CHECK(!match_token("reconsider", lemma));
}

TEST_CASE("lemma config validation") {
  LemmaConfig bad;
  CHECK_THROWS_AS(bad.validate(), ConfigError);  // empty include list
  bad.include_forms = {"Consider"};
  CHECK_THROWS_AS(bad.validate(), ConfigError);  // not lowercase
  bad.include_forms = {"consider"};
  bad.exclude_forms = {"consider"};
  CHECK_THROWS_AS(bad.validate(), ConfigError);  // overlap
}

TEST_CASE("window extraction at boundaries") {
  auto tokens = tokenize("a b c d e f g");
  auto mid = extract_window(tokens, 3, 2);
  CHECK(mid.text == "b c d e f");
  CHECK(mid.target_index == 2);
  CHECK(mid.length == 5);

  auto left = extract_window(tokens, 0, 3);
  CHECK(left.text == "a b c d");
  CHECK(left.target_index == 0);

  auto right = extract_window(tokens, 6, 3);
  CHECK(right.text == "d e f g");
  CHECK(right.target_index == 3);
}

TEST_CASE("window preserves raw spans") {
  auto tokens = tokenize("He considered, then decided.");
  auto w = extract_window(tokens, 1, 15);
  CHECK(w.text == "He considered, then decided.");
}

TEST_CASE("metadata parsing") {
  auto rule = default_metadata_rule();
  auto [decade, genre] = parse_metadata("corpus/fic_1923_00187.txt", rule);
  CHECK(decade == "1920s");
  CHECK(genre == "fiction");
  auto [d2, g2] = parse_metadata("acad_2001_x.txt", rule);
  CHECK(d2 == "2000s");
  CHECK(g2 == "academic");
  CHECK_THROWS_AS(parse_metadata("nonsense.txt", rule), MetadataError);
  CHECK_THROWS_AS(parse_metadata("zzz_1923_1.txt", rule), MetadataError);  // unknown code
}

TEST_CASE("decade labels") {
  CHECK(decade_label(1923) == "1920s");
  CHECK(decade_label(1920) == "1920s");
  CHECK(decade_label(2009) == "2000s");
  CHECK(decade_label(1800) == "1800s");
}

TEST_CASE("scan of a handmade corpus") {
  TempDir dir;
  write_file(dir.path / "fic_1923_001.txt",
             "The critics consider him brilliant. Nobody considered the consequences "
             "carefully. A considerable sum was lost.");
  write_file(dir.path / "news_1950_002.txt",
             "We considered that the plan had merit.");
  write_file(dir.path / "skipme_note.md", "consider consider consider");

  auto result = scan_corpus_serial(dir.path.string(), default_config());
  REQUIRE(result.instances.size() == 3);

  // (path, offset) order: fic file first, then news.
  CHECK(result.instances[0].id == "fic_1923_001.txt#2");
  CHECK(result.instances[0].target_form == "consider");
  CHECK(result.instances[0].decade == "1920s");
  CHECK(result.instances[0].genre == "fiction");
  CHECK(result.instances[1].id == "fic_1923_001.txt#6");
  CHECK(result.instances[2].id == "news_1950_002.txt#1");
  CHECK(result.instances[2].genre == "newspapers");

  CHECK(result.summary.at("1920s/fiction") == 2);
  CHECK(result.summary.at("1950s/newspapers") == 1);

  // the target token sits where target_index claims
  for (const auto& inst : result.instances) {
    auto toks = tokenize(inst.text);
    REQUIRE(inst.target_index < static_cast<int>(toks.size()));
    CHECK(match_token(toks[static_cast<std::size_t>(inst.target_index)].norm,
                      default_consider_lemma()));
  }
}

TEST_CASE("files that do not match the metadata rule produce warnings") {
  TempDir dir;
  write_file(dir.path / "badname.txt", "They consider it fine.");
  write_file(dir.path / "fic_1900_1.txt", "They consider it fine.");
  auto result = scan_corpus_serial(dir.path.string(), default_config());
  CHECK(result.instances.size() == 1);
  REQUIRE(result.warnings.size() == 1);
  CHECK(result.warnings[0].find("badname.txt") != std::string::npos);
}

TEST_CASE("markup stripping is opt-in") {
  TempDir dir;
  write_file(dir.path / "mag_1980_1.txt", "<p> They consider it <b> fine </b> today. </p>");
  auto keep = scan_corpus_serial(dir.path.string(), default_config());
  REQUIRE(keep.instances.size() == 1);
  CHECK(keep.instances[0].text.find("<p>") != std::string::npos);

  auto config = default_config();
  config.strip_markup = true;
  auto stripped = scan_corpus_serial(dir.path.string(), config);
  REQUIRE(stripped.instances.size() == 1);
  CHECK(stripped.instances[0].text == "They consider it fine today.");
  CHECK(stripped.instances[0].target_index == 1);
}

TEST_CASE("empty corpus yields empty result not an error") {
  TempDir dir;
  auto result = scan_corpus_serial(dir.path.string(), default_config());
  CHECK(result.instances.empty());
  CHECK(scan_corpus(dir.path.string(), default_config()).instances.empty());
  CHECK_THROWS_AS(scan_corpus_serial((dir.path / "missing").string(), default_config()),
                  IoError);
}

TEST_CASE("parallel scan equals the serial reference") {
  TempDir dir;
  auto spec = synth::default_spec(400, {"1850s", "1900s", "1950s", "2000s"},
                                  {"fiction", "newspapers", "academic"});
  synth::generate_synthetic_corpus(spec, 3, (dir.path / "g").string());

  auto serial = scan_corpus_serial((dir.path / "g" / "corpus").string(), default_config());
  for (int threads : {0, 1, 2, 4}) {
    auto parallel =
        scan_corpus((dir.path / "g" / "corpus").string(), default_config(), threads);
    REQUIRE(parallel.instances.size() == serial.instances.size());
    for (std::size_t i = 0; i < serial.instances.size(); ++i) {
      CHECK(parallel.instances[i].id == serial.instances[i].id);
      CHECK(parallel.instances[i].text == serial.instances[i].text);
      CHECK(parallel.instances[i].decade == serial.instances[i].decade);
      CHECK(parallel.instances[i].genre == serial.instances[i].genre);
    }
    CHECK(parallel.summary == serial.summary);
  }
}

TEST_CASE("round trip against the generator manifest") {
  TempDir dir;
  auto spec = synth::default_spec(300, {"1820s", "1920s", "2010s"},
                                  {"fiction", "magazines"});
  auto gen = synth::generate_synthetic_corpus(spec, 11, (dir.path / "g").string());
  REQUIRE(gen.rows.size() == 300);

  auto result = scan_corpus_serial(gen.corpus_dir, default_config());
  REQUIRE(result.instances.size() == gen.rows.size());
  for (std::size_t i = 0; i < gen.rows.size(); ++i) {
    CHECK(result.instances[i].id == gen.rows[i].id);
    CHECK(result.instances[i].decade == gen.rows[i].decade);
    CHECK(result.instances[i].genre == gen.rows[i].genre);
  }
}

TEST_CASE("instance JSONL round trip") {
  TempDir dir;
  std::vector<Instance> instances(2);
  instances[0] = {"a.txt#5", "text with \"quotes\" and, commas", "consider", 1,
                  "1920s", "fiction", "a.txt"};
  instances[1] = {"b.txt#9", "line\nbreak", "considered", 0, "1950s", "academic", "b.txt"};
  auto path = (dir.path / "inst.jsonl").string();
  write_instances_jsonl(path, instances);
  auto back = read_instances_jsonl(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == instances[0].id);
  CHECK(back[0].text == instances[0].text);
  CHECK(back[1].text == "line\nbreak");
  CHECK(back[1].target_index == 0);
  CHECK(back[1].genre == "academic");
  CHECK_THROWS_AS(read_instances_jsonl((dir.path / "missing.jsonl").string()), IoError);
}

}  // TEST_SUITE
