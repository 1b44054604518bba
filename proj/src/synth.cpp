#include "annot/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "annot/csv.hpp"
#include "annot/errors.hpp"
#include "annot/extract.hpp"
#include "annot/rng.hpp"
#include "annot/util.hpp"
#include "annot/validation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace annot::synth {
namespace {

// Placeholder vocab. None of these words collide with the target lemma forms
// or with the surface cues the reference classifier keys on (that/for after
// the verb, carefully/options in the clause, "to be", "as").
const std::vector<std::string>& vocab(const std::string& name) {
  static const std::map<std::string, std::vector<std::string>> kVocab = {
      {"Sp", {"They", "We", "The critics", "Most reviewers"}},
      {"Ss", {"She", "He", "The editor", "The board"}},
      {"Op", {"He", "She", "The method", "This approach"}},
      {"O", {"him", "her", "them", "the plan", "this method"}},
      {"A", {"intelligent", "reliable", "honest", "effective", "important", "reasonable"}},
      {"N", {"proposal", "budget", "offer", "request", "application"}},
      {"N2", {"mentor", "leader", "pioneer", "friend"}},
  };
  auto it = kVocab.find(name);
  if (it == kVocab.end()) throw ConfigError("unknown synth placeholder: " + name);
  return it->second;
}

const std::vector<std::string>& templates(const std::string& label) {
  static const std::map<std::string, std::vector<std::string>> kTemplates = {
      {kZero,
       {"{Sp} consider {O} {A}.",
        "{Ss} considers {O} {A}.",
        "{Sp} considered {O} {A}.",
        "{Op} is considered {A}.",
        "{Sp} consider {O} a {N2}."}},
      {kToBe,
       {"{Sp} consider {O} to be {A}.",
        "{Ss} considers {O} to be {A}.",
        "{Op} is considered to be {A}.",
        "{Sp} considered {O} to be {A}."}},
      {kAs,
       {"{Sp} consider {O} as {A}.",
        "{Ss} considers {O} as {A}.",
        "{Op} was considered as {A} at the time.",
        "{Sp} are considering {O} as {A}."}},
      {kNonEvaluative,
       {"{Sp} considered that the {N} had merit.",
        "{Op} was considered for the {N} but not chosen.",
        "{Sp} will consider the {N} carefully.",
        "Please consider all options before deciding.",
        "{Ss} is considering the {N} carefully."}},
  };
  auto it = kTemplates.find(label);
  if (it == kTemplates.end()) throw ConfigError("unknown synth label: " + label);
  return it->second;
}

// Padding sentences between targets. Each is at least 16 tokens long so a
// 15-token context window never reaches from one target into the next, and
// none contains a target form or a classifier cue. Two deliberately carry
// excluded derivations (considerable, consideration) to exercise lemma
// filtering.
const std::vector<std::string>& fillers() {
  static const std::vector<std::string> kFillers = {
      "The morning train arrived late again and the platform slowly filled with "
      "quiet impatient travelers waiting together.",
      "After considerable debate the council approved a new budget for the "
      "library wing despite several loud objections raised.",
      "Her thoughtful consideration of every detail earned praise from "
      "colleagues who admired the care she brought daily.",
      "Rain fell steadily through the night while distant thunder rolled across "
      "the dark hills beyond the sleeping town.",
      "The old lighthouse keeper climbed the narrow spiral staircase carrying "
      "his lantern toward the lamp room above.",
  };
  return kFillers;
}

std::string expand(const std::string& pattern, Rng& rng) {
  std::string out;
  std::size_t i = 0;
  while (i < pattern.size()) {
    if (pattern[i] == '{') {
      auto close = pattern.find('}', i);
      if (close == std::string::npos) throw ConfigError("unterminated placeholder in: " + pattern);
      const auto& options = vocab(pattern.substr(i + 1, close - i - 1));
      out += options[uniform_index(rng, options.size())];
      i = close + 1;
    } else {
      out += pattern[i++];
    }
  }
  return out;
}

std::vector<std::string> split_tokens(const std::string& sentence) {
  std::vector<std::string> out;
  std::istringstream in(sentence);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

bool is_target_form(const std::string& raw) {
  static const std::set<std::string> kForms = {"consider", "considers", "considered",
                                               "considering"};
  std::string norm = to_lower_ascii(raw);
  while (!norm.empty() && (norm.back() == '.' || norm.back() == ',' || norm.back() == '!' ||
                           norm.back() == '?')) {
    norm.pop_back();
  }
  return kForms.count(norm) > 0;
}

int decade_start(const std::string& decade) {
  if (decade.size() != 5 || decade.back() != 's')
    throw ConfigError("bad decade label: " + decade);
  int year = 0;
  for (int i = 0; i < 4; ++i) {
    char c = decade[static_cast<std::size_t>(i)];
    if (c < '0' || c > '9') throw ConfigError("bad decade label: " + decade);
    year = year * 10 + (c - '0');
  }
  if (year % 10 != 0) throw ConfigError("decade label must start a decade: " + decade);
  return year;
}

std::string genre_code(const std::string& genre) {
  static const std::map<std::string, std::string> kReverse = [] {
    std::map<std::string, std::string> rev;
    for (const auto& [code, label] : default_metadata_rule().genre_table)
      rev[label] = code;
    return rev;
  }();
  auto it = kReverse.find(genre);
  if (it == kReverse.end()) throw ConfigError("no genre code for: " + genre);
  return it->second;
}

void write_doc(const fs::path& path, const std::vector<std::string>& tokens) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  constexpr std::size_t kTokensPerLine = 13;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out << tokens[i];
    out << ((i + 1 == tokens.size() || (i + 1) % kTokensPerLine == 0) ? '\n' : ' ');
  }
  if (!out) throw IoError("write failed for " + path.string());
}

void write_label_csv(const std::string& path, const std::vector<ManifestRow>& rows,
                     const std::map<std::string, std::string>* relabel) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "instance_id,label\n";
  for (const auto& row : rows) {
    std::string label = row.label;
    if (relabel) {
      auto it = relabel->find(label);
      if (it == relabel->end()) continue;  // relabel acts as a filter too
      label = it->second;
    }
    out << csv_row({row.id, label}) << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace

SynthSpec default_spec(std::int64_t total, const std::vector<std::string>& decades,
                       const std::vector<std::string>& genres) {
  if (total <= 0) throw ParameterError("synth total must be positive");
  if (decades.empty() || genres.empty())
    throw ParameterError("synth spec needs at least one decade and genre");
  const std::vector<std::pair<std::string, double>> mix = {
      {kZero, 0.40}, {kToBe, 0.10}, {kAs, 0.20}, {kNonEvaluative, 0.30}};

  std::map<std::string, double> weight_map;
  std::map<std::string, std::int64_t> populations;
  double cell_share = 1.0 / static_cast<double>(decades.size() * genres.size());
  for (const auto& decade : decades) {
    for (const auto& genre : genres) {
      for (const auto& [label, share] : mix) {
        std::string key = decade + "|" + genre + "|" + label;
        weight_map[key] = cell_share * share;
        populations[key] = total;  // no cap
      }
    }
  }
  std::vector<std::pair<std::string, double>> weights(weight_map.begin(), weight_map.end());
  auto allocation = validation::allocate_strata(weights, total, populations);

  SynthSpec spec;
  for (const auto& cell : allocation) {
    if (cell.allocated == 0) continue;
    auto parts = split(cell.stratum, '|');
    spec.cells.push_back({parts[0], parts[1], parts[2], cell.allocated});
  }
  return spec;
}

SynthResult generate_synthetic_corpus(const SynthSpec& spec, std::uint64_t seed,
                                      const std::string& out_dir) {
  if (spec.targets_per_doc <= 0) throw ParameterError("targets_per_doc must be positive");
  for (const auto& cell : spec.cells) {
    if (cell.count < 0) throw ParameterError("negative cell count");
    templates(cell.label);  // validates the label
    decade_start(cell.decade);
    genre_code(cell.genre);
  }

  fs::path root(out_dir);
  fs::path corpus = root / "corpus";
  fs::create_directories(corpus);

  // Group requested labels by (decade, genre); cells for the same group merge.
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> groups;
  for (const auto& cell : spec.cells) {
    auto& labels = groups[{cell.decade, cell.genre}];
    labels.insert(labels.end(), static_cast<std::size_t>(cell.count), cell.label);
  }

  Rng rng(seed);
  SynthResult result;
  result.corpus_dir = corpus.string();

  for (auto& [group, labels] : groups) {
    const auto& [decade, genre] = group;
    deterministic_shuffle(rng, labels);
    int base_year = decade_start(decade);
    std::string code = genre_code(genre);

    std::size_t doc_index = 0;
    for (std::size_t pos = 0; pos < labels.size(); pos += static_cast<std::size_t>(spec.targets_per_doc)) {
      std::size_t end = std::min(labels.size(), pos + static_cast<std::size_t>(spec.targets_per_doc));
      int year = base_year + static_cast<int>(uniform_index(rng, 10));
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%d_%04zu.txt", code.c_str(), year, ++doc_index);

      std::vector<std::string> tokens;
      for (std::size_t s = pos; s < end; ++s) {
        const auto& bank = templates(labels[s]);
        auto sentence = split_tokens(expand(bank[uniform_index(rng, bank.size())], rng));
        std::int64_t target_offset = -1;
        for (std::size_t t = 0; t < sentence.size(); ++t) {
          if (is_target_form(sentence[t])) {
            target_offset = static_cast<std::int64_t>(tokens.size() + t);
            break;
          }
        }
        if (target_offset < 0) throw ConfigError("template lost its target: " + labels[s]);
        tokens.insert(tokens.end(), sentence.begin(), sentence.end());

        ManifestRow row;
        row.path = name;
        row.offset = target_offset;
        row.id = row.path + "#" + std::to_string(target_offset);
        row.label = labels[s];
        row.decade = decade;
        row.genre = genre;
        result.rows.push_back(std::move(row));

        if (s + 1 < end) {
          const auto& pads = fillers();
          auto pad = split_tokens(pads[uniform_index(rng, pads.size())]);
          tokens.insert(tokens.end(), pad.begin(), pad.end());
        }
      }
      write_doc(corpus / name, tokens);
    }
  }

  std::sort(result.rows.begin(), result.rows.end(), [](const ManifestRow& a, const ManifestRow& b) {
    if (a.path != b.path) return a.path < b.path;
    return a.offset < b.offset;
  });

  result.manifest_path = (root / "manifest.csv").string();
  result.gold_task1_path = (root / "gold_task1.csv").string();
  result.gold_task2_path = (root / "gold_task2.csv").string();

  write_label_csv(result.manifest_path, result.rows, nullptr);
  const std::map<std::string, std::string> task1 = {{kZero, kEvaluative},
                                                    {kToBe, kEvaluative},
                                                    {kAs, kEvaluative},
                                                    {kNonEvaluative, kNonEvaluative}};
  const std::map<std::string, std::string> task2 = {
      {kZero, kZero}, {kToBe, kToBe}, {kAs, kAs}};
  write_label_csv(result.gold_task1_path, result.rows, &task1);
  write_label_csv(result.gold_task2_path, result.rows, &task2);

  json echo;
  echo["seed"] = seed;
  echo["targets_per_doc"] = spec.targets_per_doc;
  echo["cells"] = json::array();
  for (const auto& cell : spec.cells) {
    echo["cells"].push_back({{"decade", cell.decade},
                             {"genre", cell.genre},
                             {"label", cell.label},
                             {"count", cell.count}});
  }
  std::ofstream spec_out(root / "spec.json", std::ios::binary);
  spec_out << echo.dump(2) << '\n';
  if (!spec_out) throw IoError("write failed for " + (root / "spec.json").string());

  return result;
}

std::map<std::string, std::string> read_label_csv(const std::string& path) {
  auto rows = csv_read_file(path);
  if (rows.empty() || rows[0].size() < 2 || rows[0][0] != "instance_id" || rows[0][1] != "label")
    throw ValidationError("expected instance_id,label header in " + path);
  std::map<std::string, std::string> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() < 2) throw ValidationError("short row in " + path);
    auto [it, inserted] = out.emplace(rows[i][0], rows[i][1]);
    if (!inserted) throw ValidationError("duplicate instance_id in " + path + ": " + rows[i][0]);
  }
  return out;
}

}  // namespace annot::synth
