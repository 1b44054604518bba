#ifndef ANNOT_EXTRACT_HPP
#define ANNOT_EXTRACT_HPP

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "annot/text.hpp"

namespace annot {

// The target lemma's surface forms. Matching is whole-token membership on
// the normalized view: a token matches iff it is one of include_forms, so
// exclude_forms never match by construction. The exclusion list is still
// validated and recorded because downstream reports name it.
struct LemmaConfig {
  std::vector<std::string> include_forms;
  std::vector<std::string> exclude_forms;

  // Enforces: include non-empty, all entries lowercase without whitespace,
  // include/exclude disjoint. Throws ConfigError.
  void validate() const;
};

bool match_token(const std::string& normalized_token, const LemmaConfig& lemma);

// Filename -> (year, genre code) rule. The pattern is a literal filename
// with "{genre}" matching letters, "{year}" matching 4 digits, and "*"
// matching anything, applied to the basename.
struct MetadataRule {
  std::string filename_pattern = "{genre}_{year}_*";
  std::map<std::string, std::string> genre_table;  // code -> label
};

struct ExtractionConfig {
  LemmaConfig lemma;
  int window_width = 15;  // tokens per side
  MetadataRule metadata;
  bool strip_markup = false;
};

// One extracted occurrence. `id` is "<relative path>#<token offset>" and is
// unique within a scan; `target_index` points at the matched token inside
// `text`'s whitespace tokenization.
struct Instance {
  std::string id;
  std::string text;
  std::string target_form;
  int target_index = 0;
  std::string decade;
  std::string genre;
  std::string source_path;
};

struct ContextWindow {
  std::string text;
  int target_index = 0;
  int length = 0;  // tokens in the window
};

// tokens[max(0,index-width) .. min(end,index+width)], original spans joined
// with single spaces. Throws MetadataError-free range error on bad index.
ContextWindow extract_window(const std::vector<Token>& tokens, std::size_t index,
                             int width);

// ("1920s", "fiction") from a COHA-style filename. Throws MetadataError when
// the path does not match the rule or the genre code is untabled.
std::pair<std::string, std::string> parse_metadata(const std::string& path,
                                                   const MetadataRule& rule);

std::string decade_label(int year);

struct ScanResult {
  std::vector<Instance> instances;              // (source_path, offset) order
  std::vector<std::string> warnings;            // skipped files etc.
  std::map<std::string, std::int64_t> summary;  // "decade/genre" -> count
};

// Scans every .txt file under root. The OpenMP variant distributes files
// across threads and restores (path, offset) order on merge; results are
// identical to scan_corpus_serial, which is kept as the reference
// implementation for tests and benchmarks.
ScanResult scan_corpus(const std::string& root, const ExtractionConfig& config,
                       int threads = 0);
ScanResult scan_corpus_serial(const std::string& root, const ExtractionConfig& config);

// Instance (de)serialization: one JSON object per line, fields id, text,
// target_form, target_index, decade, genre, source_path.
void write_instances_jsonl(const std::string& path, const std::vector<Instance>& instances);
std::vector<Instance> read_instances_jsonl(const std::string& path);

// Default COHA-style lemma and metadata configuration.
LemmaConfig default_consider_lemma();
MetadataRule default_metadata_rule();

}  // namespace annot

#endif  // ANNOT_EXTRACT_HPP
