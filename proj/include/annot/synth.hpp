#ifndef ANNOT_SYNTH_HPP
#define ANNOT_SYNTH_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace annot::synth {

// Canonical label strings used by the shipped two-task pipeline.
inline constexpr const char* kEvaluative = "evaluative";
inline constexpr const char* kNonEvaluative = "non_evaluative";
inline constexpr const char* kZero = "zero";
inline constexpr const char* kToBe = "to_be";
inline constexpr const char* kAs = "as";

// Requested instance counts for one decade x genre x label cell. Labels are
// the fine-grained ones: zero, to_be, as, non_evaluative.
struct SynthCell {
  std::string decade;
  std::string genre;
  std::string label;
  std::int64_t count = 0;
};

struct SynthSpec {
  std::vector<SynthCell> cells;
  int targets_per_doc = 8;
};

struct ManifestRow {
  std::string id;
  std::string label;   // fine-grained
  std::string decade;
  std::string genre;
  std::string path;    // relative to the corpus dir
  std::int64_t offset = 0;
};

struct SynthResult {
  std::vector<ManifestRow> rows;  // (path, offset) order, matching a scan
  std::string corpus_dir;
  std::string manifest_path;
  std::string gold_task1_path;
  std::string gold_task2_path;
};

// Balanced default spec: `total` instances spread over the given decades and
// genres with a fixed label mix (zero 40%, as 20%, non_evaluative 30%,
// to_be 10%), apportioned by largest remainder.
SynthSpec default_spec(std::int64_t total, const std::vector<std::string>& decades,
                       const std::vector<std::string>& genres);

// Writes out_dir/corpus/*.txt plus manifest.csv (instance_id,label over the
// fine-grained labels), gold_task1.csv and gold_task2.csv (same format, per
// task), and spec.json. Sentences instantiate evaluative zero / to_be / as
// patterns and non-evaluative cognition-verb patterns, with filler sentences
// long enough that context windows never span two targets. Same seed + spec
// produce byte-identical output.
SynthResult generate_synthetic_corpus(const SynthSpec& spec, std::uint64_t seed,
                                      const std::string& out_dir);

// Reads an `instance_id,label` CSV into a map. Shared by gold import paths.
std::map<std::string, std::string> read_label_csv(const std::string& path);

}  // namespace annot::synth

#endif  // ANNOT_SYNTH_HPP
