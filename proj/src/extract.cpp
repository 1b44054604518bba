#include "annot/extract.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "annot/errors.hpp"
#include "annot/util.hpp"
#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace annot {

void LemmaConfig::validate() const {
  if (include_forms.empty())
    throw ConfigError("lemma include_forms must be non-empty");
  auto check_entry = [](const std::string& form, const char* which) {
    if (form.empty()) throw ConfigError(std::string(which) + " contains an empty form");
    for (unsigned char c : form) {
      if (std::isspace(c))
        throw ConfigError(std::string(which) + " form contains whitespace: '" + form + "'");
      if (std::isupper(c))
        throw ConfigError(std::string(which) + " form must be lowercase: '" + form + "'");
    }
  };
  for (const auto& f : include_forms) check_entry(f, "include_forms");
  for (const auto& f : exclude_forms) check_entry(f, "exclude_forms");
  for (const auto& f : include_forms)
    if (std::find(exclude_forms.begin(), exclude_forms.end(), f) != exclude_forms.end())
      throw ConfigError("form appears in both include and exclude lists: '" + f + "'");
}

bool match_token(const std::string& normalized_token, const LemmaConfig& lemma) {
  return std::find(lemma.include_forms.begin(), lemma.include_forms.end(),
                   normalized_token) != lemma.include_forms.end();
}

ContextWindow extract_window(const std::vector<Token>& tokens, std::size_t index,
                             int width) {
  if (index >= tokens.size())
    throw ParameterError("window index " + std::to_string(index) +
                         " out of range for " + std::to_string(tokens.size()) +
                         " tokens");
  if (width < 1) throw ParameterError("window width must be >= 1");
  const std::size_t begin = index >= static_cast<std::size_t>(width)
                                ? index - static_cast<std::size_t>(width)
                                : 0;
  const std::size_t end =
      std::min(tokens.size(), index + static_cast<std::size_t>(width) + 1);
  ContextWindow w;
  w.target_index = static_cast<int>(index - begin);
  w.length = static_cast<int>(end - begin);
  std::string text;
  for (std::size_t i = begin; i < end; ++i) {
    if (i > begin) text.push_back(' ');
    text += tokens[i].raw;
  }
  w.text = std::move(text);
  return w;
}

std::string decade_label(int year) {
  const int decade = year / 10 * 10;
  return std::to_string(decade) + "s";
}

namespace {

std::regex compile_pattern(const std::string& pattern, int& genre_group,
                           int& year_group) {
  std::string re;
  genre_group = year_group = 0;
  int group = 0;
  for (std::size_t i = 0; i < pattern.size();) {
    if (pattern.compare(i, 7, "{genre}") == 0) {
      re += "([A-Za-z]+)";
      genre_group = ++group;
      i += 7;
    } else if (pattern.compare(i, 6, "{year}") == 0) {
      re += "([0-9]{4})";
      year_group = ++group;
      i += 6;
    } else if (pattern[i] == '*') {
      re += ".*";
      ++i;
    } else {
      static const std::string special = R"(\^$.|?+()[]{})";
      if (special.find(pattern[i]) != std::string::npos) re.push_back('\\');
      re.push_back(pattern[i]);
      ++i;
    }
  }
  if (!genre_group || !year_group)
    throw ConfigError("filename pattern must contain {genre} and {year}: " + pattern);
  return std::regex(re);
}

}  // namespace

std::pair<std::string, std::string> parse_metadata(const std::string& path,
                                                   const MetadataRule& rule) {
  int genre_group = 0, year_group = 0;
  const std::regex re = compile_pattern(rule.filename_pattern, genre_group, year_group);
  const std::string name = fs::path(path).filename().string();
  std::smatch m;
  if (!std::regex_match(name, m, re))
    throw MetadataError("path does not match metadata rule '" +
                        rule.filename_pattern + "': " + path);
  const std::string code = to_lower_ascii(m[genre_group].str());
  const int year = std::stoi(m[year_group].str());
  auto it = rule.genre_table.find(code);
  if (it == rule.genre_table.end())
    throw MetadataError("genre code '" + code + "' not in genre table: " + path);
  return {decade_label(year), it->second};
}

namespace {

// Per-file extraction; pure given the file bytes.
std::vector<Instance> extract_file(const std::string& rel_path,
                                   const std::string& content,
                                   const ExtractionConfig& config,
                                   const std::string& decade,
                                   const std::string& genre) {
  std::vector<Token> tokens = tokenize(content);
  if (config.strip_markup) {
    tokens.erase(std::remove_if(tokens.begin(), tokens.end(),
                                [](const Token& t) { return is_markup_token(t.raw); }),
                 tokens.end());
  }
  std::vector<Instance> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!match_token(tokens[i].norm, config.lemma)) continue;
    ContextWindow w = extract_window(tokens, i, config.window_width);
    Instance inst;
    inst.id = rel_path + "#" + std::to_string(i);
    inst.text = std::move(w.text);
    inst.target_form = tokens[i].raw;
    inst.target_index = w.target_index;
    inst.decade = decade;
    inst.genre = genre;
    inst.source_path = rel_path;
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<std::string> list_corpus_files(const std::string& root) {
  if (!fs::is_directory(root))
    throw IoError("corpus root is not a directory: " + root);
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().extension() != ".txt") continue;
    files.push_back(fs::relative(entry.path(), root).generic_string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

struct FileOutcome {
  std::vector<Instance> instances;
  std::string warning;  // empty when the file was processed
};

FileOutcome process_file(const std::string& root, const std::string& rel,
                         const ExtractionConfig& config) {
  FileOutcome out;
  // Per-file problems (unmatched name, unreadable file) skip the file and
  // record a warning; the scan itself keeps going.
  std::string decade, genre;
  try {
    std::tie(decade, genre) = parse_metadata(rel, config.metadata);
  } catch (const MetadataError& e) {
    out.warning = std::string("skipped: ") + e.what();
    return out;
  }
  std::ifstream in(fs::path(root) / rel, std::ios::binary);
  if (!in) {
    out.warning = "skipped unreadable file: " + rel;
    return out;
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) {
    out.warning = "skipped file with read error: " + rel;
    return out;
  }
  out.instances = extract_file(rel, ss.str(), config, decade, genre);
  return out;
}

ScanResult assemble(std::vector<FileOutcome>&& outcomes) {
  ScanResult result;
  for (auto& o : outcomes) {
    if (!o.warning.empty()) result.warnings.push_back(std::move(o.warning));
    for (auto& inst : o.instances) {
      ++result.summary[inst.decade + "/" + inst.genre];
      result.instances.push_back(std::move(inst));
    }
  }
  return result;
}

}  // namespace

ScanResult scan_corpus_serial(const std::string& root, const ExtractionConfig& config) {
  config.lemma.validate();
  const auto files = list_corpus_files(root);
  std::vector<FileOutcome> outcomes;
  outcomes.reserve(files.size());
  for (const auto& rel : files) outcomes.push_back(process_file(root, rel, config));
  return assemble(std::move(outcomes));
}

ScanResult scan_corpus(const std::string& root, const ExtractionConfig& config,
                       int threads) {
  config.lemma.validate();
  const auto files = list_corpus_files(root);
  std::vector<FileOutcome> outcomes(files.size());

#ifdef _OPENMP
  std::exception_ptr failure;
  const int n = static_cast<int>(files.size());
#pragma omp parallel for schedule(dynamic) num_threads(threads > 0 ? threads : omp_get_max_threads())
  for (int i = 0; i < n; ++i) {
    try {
      outcomes[static_cast<std::size_t>(i)] =
          process_file(root, files[static_cast<std::size_t>(i)], config);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
#else
  (void)threads;
  for (std::size_t i = 0; i < files.size(); ++i)
    outcomes[i] = process_file(root, files[i], config);
#endif

  // Outcomes are indexed by the sorted file list, so the merge restores the
  // deterministic (path, offset) order regardless of completion order.
  return assemble(std::move(outcomes));
}

void write_instances_jsonl(const std::string& path,
                           const std::vector<Instance>& instances) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write instances file: " + path);
  for (const auto& inst : instances) {
    nlohmann::json j{{"id", inst.id},
                     {"text", inst.text},
                     {"target_form", inst.target_form},
                     {"target_index", inst.target_index},
                     {"decade", inst.decade},
                     {"genre", inst.genre},
                     {"source_path", inst.source_path}};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<Instance> read_instances_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open instances file: " + path);
  std::vector<Instance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path + ":" + std::to_string(lineno) +
                    ": bad instance record: " + e.what());
    }
    Instance inst;
    inst.id = j.at("id").get<std::string>();
    inst.text = j.at("text").get<std::string>();
    inst.target_form = j.at("target_form").get<std::string>();
    inst.target_index = j.at("target_index").get<int>();
    inst.decade = j.at("decade").get<std::string>();
    inst.genre = j.at("genre").get<std::string>();
    inst.source_path = j.at("source_path").get<std::string>();
    out.push_back(std::move(inst));
  }
  return out;
}

LemmaConfig default_consider_lemma() {
  LemmaConfig lemma;
  lemma.include_forms = {"consider", "considers", "considering", "considered"};
  lemma.exclude_forms = {"reconsider",   "reconsiders",   "reconsidering",
                         "reconsidered", "inconsiderate", "considerable",
                         "considerably", "considerate",   "considerately",
                         "consideration", "considerations", "reconsideration"};
  return lemma;
}

MetadataRule default_metadata_rule() {
  MetadataRule rule;
  rule.filename_pattern = "{genre}_{year}_*";
  rule.genre_table = {{"acad", "academic"},
                      {"fic", "fiction"},
                      {"mag", "magazines"},
                      {"news", "newspapers"},
                      {"tvm", "tv_film"}};
  return rule;
}

}  // namespace annot
