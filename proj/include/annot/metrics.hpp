#ifndef ANNOT_METRICS_HPP
#define ANNOT_METRICS_HPP

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace annot::metrics {

// Gold-vs-predicted counts over an ordered label set. counts[g][p] is the
// number of items with gold label g and predicted label p.
struct ConfusionMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<std::int64_t>> counts;
  std::int64_t n = 0;

  explicit ConfusionMatrix(std::vector<std::string> label_set);
  void add(std::size_t gold, std::size_t predicted, std::int64_t k = 1);
  std::size_t label_index(const std::string& label) const;  // throws EvaluationError

  std::int64_t gold_total(std::size_t k) const;
  std::int64_t predicted_total(std::size_t k) const;
};

// Builds a matrix from two id-keyed label maps. The id sets must be
// identical; offenders are listed in the error message.
ConfusionMatrix confusion_matrix(const std::map<std::string, std::string>& gold,
                                 const std::map<std::string, std::string>& predicted,
                                 const std::vector<std::string>& label_set);

// trace / n. Throws EvaluationError when n == 0.
double accuracy(const ConfusionMatrix& m);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Per-class precision/recall/F1 for one class index; 0/0 ratios are 0.
Prf per_class_prf(const ConfusionMatrix& m, std::size_t k);

// Binary mode scores the given positive label and requires exactly two
// labels. Macro mode is the unweighted mean over classes present in gold.
Prf precision_recall_f1_binary(const ConfusionMatrix& m,
                               const std::string& positive_label);
Prf precision_recall_f1_macro(const ConfusionMatrix& m);

// Matthews correlation. Uses the multiclass generalization, which reduces to
// the familiar 2x2 formula for binary matrices. Degenerate denominator -> 0.
double mcc(const ConfusionMatrix& m);

// Standard normal quantile (Acklam's rational approximation, |rel err| < 1.2e-9).
double normal_quantile(double p);

// Wilson score interval for a binomial proportion.
std::pair<double, double> wilson_interval(std::int64_t successes, std::int64_t n,
                                          double confidence = 0.95);

enum class GateMode { pooled, per_sample };

struct GateDecision {
  std::int64_t pooled_successes = 0;
  std::int64_t pooled_n = 0;
  std::pair<double, double> interval{0.0, 0.0};  // Wilson on the pool
  double threshold = 0.95;
  bool passed = false;
  GateMode mode = GateMode::pooled;
  std::vector<double> per_sample_accuracy;
  std::vector<double> per_sample_lower;  // Wilson lower bound per sample
};

// Phase-2 gate: pools (successes, n) samples and passes iff the pooled
// Wilson lower bound strictly exceeds the threshold. Per-sample mode instead
// requires every individual sample's lower bound to exceed it. Fewer than
// min_samples samples -> GateError.
GateDecision gate_prehoc(const std::vector<std::pair<std::int64_t, std::int64_t>>& samples,
                         double threshold = 0.95, std::size_t min_samples = 3,
                         GateMode mode = GateMode::pooled,
                         double confidence = 0.95);

}  // namespace annot::metrics

#endif  // ANNOT_METRICS_HPP
