#include "annot/validation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "annot/errors.hpp"
#include "annot/metrics.hpp"
#include "annot/rng.hpp"
#include "annot/util.hpp"

namespace annot::validation {

std::int64_t required_sample_size(const SampleSizeParams& params) {
  if (params.population < 1)
    throw ParameterError("population N must be >= 1");
  if (!(params.expected_accuracy > 0.0 && params.expected_accuracy < 1.0))
    throw ParameterError("expected accuracy p must be in (0,1)");
  if (!(params.margin_error > 0.0 && params.margin_error < 1.0))
    throw ParameterError("margin of error must be in (0,1)");
  if (!(params.z > 0.0)) throw ParameterError("z must be positive");

  const double p = params.expected_accuracy;
  const double n0 = params.z * params.z * p * (1.0 - p) /
                    (params.margin_error * params.margin_error);
  const double N = static_cast<double>(params.population);
  const double n = n0 / (1.0 + (n0 - 1.0) / N);
  auto rounded = static_cast<std::int64_t>(std::ceil(n - 1e-9));
  return std::min(std::max<std::int64_t>(rounded, 1), params.population);
}

std::vector<std::pair<std::string, double>> stratum_weights(
    const std::vector<StratumItem>& items,
    const std::map<std::string, double>* external_weights) {
  if (items.empty()) throw ParameterError("cannot derive strata from an empty dataset");
  std::map<std::string, std::int64_t> counts;
  for (const auto& it : items) ++counts[it.stratum];

  std::vector<std::pair<std::string, double>> weights;
  double total = 0.0;
  if (external_weights) {
    std::vector<std::string> missing, extraneous;
    for (const auto& [key, _] : counts)
      if (!external_weights->count(key)) missing.push_back(key);
    for (const auto& [key, _] : *external_weights)
      if (!counts.count(key)) extraneous.push_back(key);
    if (!missing.empty() || !extraneous.empty()) {
      std::ostringstream msg;
      msg << "external weight table must cover exactly the non-empty strata;";
      for (const auto& k : missing) msg << " missing: " << k;
      for (const auto& k : extraneous) msg << " extraneous: " << k;
      throw ParameterError(msg.str());
    }
    for (const auto& [key, w] : *external_weights) {
      if (!(w > 0.0)) throw ParameterError("non-positive external weight for " + key);
      weights.emplace_back(key, w);
      total += w;
    }
  } else {
    for (const auto& [key, c] : counts) {
      weights.emplace_back(key, static_cast<double>(c));
      total += static_cast<double>(c);
    }
  }
  for (auto& [_, w] : weights) w /= total;
  return weights;
}

std::vector<StratumAllocation> allocate_strata(
    const std::vector<std::pair<std::string, double>>& weights,
    std::int64_t n_total, const std::map<std::string, std::int64_t>& populations) {
  if (n_total < 1) throw ParameterError("allocation total must be >= 1");
  std::int64_t pop_total = 0;
  for (const auto& [key, _] : weights) {
    auto it = populations.find(key);
    if (it == populations.end())
      throw ParameterError("no population recorded for stratum " + key);
    pop_total += it->second;
  }
  if (n_total > pop_total)
    throw ParameterError("sample size " + std::to_string(n_total) +
                         " exceeds total population " + std::to_string(pop_total));

  struct Cell {
    std::string key;
    double weight;
    std::int64_t cap;
    std::int64_t allocated = 0;
    double remainder = 0.0;
  };
  std::vector<Cell> cells;
  cells.reserve(weights.size());
  std::int64_t assigned = 0;
  for (const auto& [key, w] : weights) {
    Cell c{key, w, populations.at(key)};
    const double quota = w * static_cast<double>(n_total);
    c.allocated = static_cast<std::int64_t>(std::floor(quota));
    c.remainder = quota - std::floor(quota);
    cells.push_back(c);
    assigned += c.allocated;
  }

  // Hand out units by descending remainder (key order on ties), skipping
  // full strata; repeat to absorb any shortfall created by population caps.
  auto remainder_order = [&] {
    std::vector<std::size_t> idx(cells.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (cells[a].remainder != cells[b].remainder)
        return cells[a].remainder > cells[b].remainder;
      return cells[a].key < cells[b].key;
    });
    return idx;
  }();

  for (auto& c : cells)
    if (c.allocated > c.cap) {
      assigned -= c.allocated - c.cap;
      c.allocated = c.cap;
    }
  while (assigned < n_total) {
    bool progressed = false;
    for (std::size_t i : remainder_order) {
      if (assigned == n_total) break;
      if (cells[i].allocated < cells[i].cap) {
        ++cells[i].allocated;
        ++assigned;
        progressed = true;
      }
    }
    if (!progressed)
      throw ParameterError("allocation infeasible despite sufficient population");
  }

  std::vector<StratumAllocation> out;
  out.reserve(cells.size());
  for (const auto& c : cells)
    out.push_back(StratumAllocation{c.key, c.weight, c.allocated});
  return out;
}

std::vector<std::string> draw_stratified(const std::vector<StratumItem>& items,
                                         const std::vector<StratumAllocation>& allocation,
                                         std::uint64_t seed) {
  std::map<std::string, std::vector<std::string>> members;
  for (const auto& it : items) members[it.stratum].push_back(it.id);

  std::vector<std::string> sampled;
  Rng rng(seed);
  // Strata are visited in key order so the draw sequence is independent of
  // the allocation vector's ordering.
  std::vector<StratumAllocation> plan = allocation;
  std::stable_sort(plan.begin(), plan.end(),
                   [](const auto& a, const auto& b) { return a.stratum < b.stratum; });
  for (const auto& a : plan) {
    if (a.allocated == 0) continue;
    auto it = members.find(a.stratum);
    if (it == members.end())
      throw ParameterError("allocation names unknown stratum " + a.stratum);
    auto& ids = it->second;
    if (static_cast<std::size_t>(a.allocated) > ids.size())
      throw ParameterError("allocation for " + a.stratum + " exceeds its population");
    std::sort(ids.begin(), ids.end());
    auto picks = sample_indices(rng, ids.size(), static_cast<std::size_t>(a.allocated));
    for (auto i : picks) sampled.push_back(ids[i]);
  }
  return sampled;
}

std::vector<std::string> draw_plain(const std::vector<std::string>& ids,
                                    std::int64_t count, std::uint64_t seed) {
  if (count < 0 || static_cast<std::size_t>(count) > ids.size())
    throw ParameterError("sample count " + std::to_string(count) +
                         " infeasible for population " + std::to_string(ids.size()));
  std::vector<std::string> sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  Rng rng(seed);
  auto picks = sample_indices(rng, sorted.size(), static_cast<std::size_t>(count));
  std::vector<std::string> out;
  out.reserve(picks.size());
  for (auto i : picks) out.push_back(sorted[i]);
  return out;
}

ValidationReport compare_gold(const std::vector<std::string>& sampled_ids,
                              const std::map<std::string, std::string>& gold,
                              const std::map<std::string, std::string>& predictions,
                              const std::map<std::string, std::string>& strata,
                              double confidence) {
  std::vector<std::string> missing_gold, missing_pred;
  for (const auto& id : sampled_ids) {
    if (!gold.count(id)) missing_gold.push_back(id);
    if (!predictions.count(id)) missing_pred.push_back(id);
  }
  if (!missing_gold.empty() || !missing_pred.empty()) {
    std::ostringstream msg;
    msg << "validation inputs incomplete;";
    if (!missing_gold.empty()) {
      msg << " no gold label for:";
      for (size_t i = 0; i < missing_gold.size() && i < 20; ++i) msg << ' ' << missing_gold[i];
      if (missing_gold.size() > 20) msg << " (+" << missing_gold.size() - 20 << " more)";
    }
    if (!missing_pred.empty()) {
      msg << " no prediction for:";
      for (size_t i = 0; i < missing_pred.size() && i < 20; ++i) msg << ' ' << missing_pred[i];
      if (missing_pred.size() > 20) msg << " (+" << missing_pred.size() - 20 << " more)";
    }
    throw ValidationError(msg.str());
  }

  ValidationReport report;
  std::map<std::string, StratumOutcome> rows;
  for (const auto& id : sampled_ids) {
    const std::string& g = gold.at(id);
    const std::string& p = predictions.at(id);
    auto s_it = strata.find(id);
    const std::string key = s_it == strata.end() ? "(unstratified)" : s_it->second;
    auto& row = rows[key];
    row.stratum = key;
    ++row.sampled;
    ++report.total_sampled;
    if (label_key(g) == label_key(p)) {
      ++row.correct;
      ++report.total_correct;
    } else {
      report.disagreements.push_back(Disagreement{id, g, p});
    }
  }
  if (report.total_sampled == 0)
    throw ValidationError("no sampled ids to compare");

  for (auto& [_, row] : rows) {
    row.accuracy = static_cast<double>(row.correct) / static_cast<double>(row.sampled);
    report.per_stratum.push_back(row);
  }
  report.accuracy = static_cast<double>(report.total_correct) /
                    static_cast<double>(report.total_sampled);
  report.wilson =
      metrics::wilson_interval(report.total_correct, report.total_sampled, confidence);
  return report;
}

}  // namespace annot::validation
