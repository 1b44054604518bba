#ifndef ANNOT_VALIDATION_HPP
#define ANNOT_VALIDATION_HPP

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace annot::validation {

// Inputs to the finite-population sample-size formula
//   n0 = z^2 p (1-p) / ME^2,   n = n0 / (1 + (n0 - 1) / N)
struct SampleSizeParams {
  std::int64_t population = 0;      // N
  double expected_accuracy = 0.96;  // p
  double margin_error = 0.01;       // ME
  double z = 1.96;
};

// ceil(n), capped at N. Values within 1e-9 of an integer are treated as that
// integer before rounding. Throws ParameterError on invalid inputs.
std::int64_t required_sample_size(const SampleSizeParams& params);

struct StratumAllocation {
  std::string stratum;  // composite key, e.g. "1920s/fiction" or "batch:17"
  double weight = 0.0;
  std::int64_t allocated = 0;
};

// A dataset item as seen by the sampler: an id plus its stratum key.
struct StratumItem {
  std::string id;
  std::string stratum;
};

// Builds normalized stratum weights. With an external table (e.g. corpus
// word counts) the table must cover exactly the non-empty strata; without
// one, weights are proportional to item counts. Returned in stratum key
// order; empty strata never appear.
std::vector<std::pair<std::string, double>> stratum_weights(
    const std::vector<StratumItem>& items,
    const std::map<std::string, double>* external_weights = nullptr);

// Largest-remainder apportionment of n_total over the weights, capped at
// each stratum's population with the shortfall redistributed by remainder
// order. Ties break on stratum key order.
std::vector<StratumAllocation> allocate_strata(
    const std::vector<std::pair<std::string, double>>& weights,
    std::int64_t n_total, const std::map<std::string, std::int64_t>& populations);

// Uniform sampling without replacement inside each stratum, fully determined
// by the seed. Returned ids preserve stratum key order, then draw order.
std::vector<std::string> draw_stratified(const std::vector<StratumItem>& items,
                                         const std::vector<StratumAllocation>& allocation,
                                         std::uint64_t seed);

// Plain global draw used for pre-hoc samples.
std::vector<std::string> draw_plain(const std::vector<std::string>& ids,
                                    std::int64_t count, std::uint64_t seed);

struct StratumOutcome {
  std::string stratum;
  std::int64_t sampled = 0;
  std::int64_t correct = 0;
  double accuracy = 0.0;
};

struct Disagreement {
  std::string id;
  std::string gold;
  std::string predicted;
};

struct ValidationReport {
  std::int64_t total_sampled = 0;
  std::int64_t total_correct = 0;
  double accuracy = 0.0;
  std::pair<double, double> wilson{0.0, 0.0};
  std::vector<StratumOutcome> per_stratum;
  std::vector<Disagreement> disagreements;
};

// Phase-4 comparison of gold labels against the machine annotations over the
// sampled ids. `strata` maps id -> stratum key; ids without an entry land in
// the "(unstratified)" row. Missing gold or predictions -> ValidationError
// listing the offending ids.
ValidationReport compare_gold(const std::vector<std::string>& sampled_ids,
                              const std::map<std::string, std::string>& gold,
                              const std::map<std::string, std::string>& predictions,
                              const std::map<std::string, std::string>& strata = {},
                              double confidence = 0.95);

}  // namespace annot::validation

#endif  // ANNOT_VALIDATION_HPP
