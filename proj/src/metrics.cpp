#include "annot/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "annot/errors.hpp"

namespace annot::metrics {

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> label_set)
    : labels(std::move(label_set)),
      counts(labels.size(), std::vector<std::int64_t>(labels.size(), 0)) {
  if (labels.size() < 2)
    throw EvaluationError("confusion matrix needs at least 2 labels");
}

void ConfusionMatrix::add(std::size_t gold, std::size_t predicted, std::int64_t k) {
  counts.at(gold).at(predicted) += k;
  n += k;
}

std::size_t ConfusionMatrix::label_index(const std::string& label) const {
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end())
    throw EvaluationError("label not in label set: " + label);
  return static_cast<std::size_t>(it - labels.begin());
}

std::int64_t ConfusionMatrix::gold_total(std::size_t k) const {
  std::int64_t t = 0;
  for (auto c : counts[k]) t += c;
  return t;
}

std::int64_t ConfusionMatrix::predicted_total(std::size_t k) const {
  std::int64_t t = 0;
  for (const auto& row : counts) t += row[k];
  return t;
}

ConfusionMatrix confusion_matrix(const std::map<std::string, std::string>& gold,
                                 const std::map<std::string, std::string>& predicted,
                                 const std::vector<std::string>& label_set) {
  std::vector<std::string> only_gold, only_pred;
  for (const auto& [id, _] : gold)
    if (!predicted.count(id)) only_gold.push_back(id);
  for (const auto& [id, _] : predicted)
    if (!gold.count(id)) only_pred.push_back(id);
  if (!only_gold.empty() || !only_pred.empty()) {
    std::ostringstream msg;
    msg << "id sets differ;";
    if (!only_gold.empty()) {
      msg << " gold-only:";
      for (size_t i = 0; i < only_gold.size() && i < 10; ++i) msg << ' ' << only_gold[i];
      if (only_gold.size() > 10) msg << " (+" << only_gold.size() - 10 << " more)";
    }
    if (!only_pred.empty()) {
      msg << " predicted-only:";
      for (size_t i = 0; i < only_pred.size() && i < 10; ++i) msg << ' ' << only_pred[i];
      if (only_pred.size() > 10) msg << " (+" << only_pred.size() - 10 << " more)";
    }
    throw EvaluationError(msg.str());
  }

  ConfusionMatrix m(label_set);
  for (const auto& [id, g] : gold) {
    const auto& p = predicted.at(id);
    m.add(m.label_index(g), m.label_index(p));
  }
  return m;
}

double accuracy(const ConfusionMatrix& m) {
  if (m.n == 0) throw EvaluationError("accuracy undefined on empty matrix");
  std::int64_t correct = 0;
  for (std::size_t k = 0; k < m.labels.size(); ++k) correct += m.counts[k][k];
  return static_cast<double>(correct) / static_cast<double>(m.n);
}

namespace {
inline double safe_ratio(double num, double den) {
  return den == 0.0 ? 0.0 : num / den;
}
}  // namespace

Prf per_class_prf(const ConfusionMatrix& m, std::size_t k) {
  const double tp = static_cast<double>(m.counts[k][k]);
  const double fp = static_cast<double>(m.predicted_total(k)) - tp;
  const double fn = static_cast<double>(m.gold_total(k)) - tp;
  Prf out;
  out.precision = safe_ratio(tp, tp + fp);
  out.recall = safe_ratio(tp, tp + fn);
  out.f1 = safe_ratio(2.0 * out.precision * out.recall, out.precision + out.recall);
  return out;
}

Prf precision_recall_f1_binary(const ConfusionMatrix& m,
                               const std::string& positive_label) {
  if (m.labels.size() != 2)
    throw EvaluationError("binary averaging requires exactly 2 labels, got " +
                          std::to_string(m.labels.size()));
  if (m.n == 0) throw EvaluationError("metrics undefined on empty matrix");
  return per_class_prf(m, m.label_index(positive_label));
}

Prf precision_recall_f1_macro(const ConfusionMatrix& m) {
  if (m.n == 0) throw EvaluationError("metrics undefined on empty matrix");
  Prf sum;
  int present = 0;
  for (std::size_t k = 0; k < m.labels.size(); ++k) {
    if (m.gold_total(k) == 0) continue;  // classes absent from gold are ignored
    Prf c = per_class_prf(m, k);
    sum.precision += c.precision;
    sum.recall += c.recall;
    sum.f1 += c.f1;
    ++present;
  }
  if (present == 0) throw EvaluationError("no class present in gold");
  return Prf{sum.precision / present, sum.recall / present, sum.f1 / present};
}

double mcc(const ConfusionMatrix& m) {
  if (m.n == 0) throw EvaluationError("MCC undefined on empty matrix");
  // R_K = (N*trace - sum_k t_k p_k) / sqrt((N^2 - sum p_k^2)(N^2 - sum t_k^2))
  const double N = static_cast<double>(m.n);
  double trace = 0.0, tp_dot = 0.0, p_sq = 0.0, t_sq = 0.0;
  for (std::size_t k = 0; k < m.labels.size(); ++k) {
    const double t = static_cast<double>(m.gold_total(k));
    const double p = static_cast<double>(m.predicted_total(k));
    trace += static_cast<double>(m.counts[k][k]);
    tp_dot += t * p;
    p_sq += p * p;
    t_sq += t * t;
  }
  const double num = N * trace - tp_dot;
  const double den = std::sqrt(N * N - p_sq) * std::sqrt(N * N - t_sq);
  if (den == 0.0) return 0.0;
  return num / den;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw ParameterError("normal quantile requires p in (0,1)");
  // Acklam's inverse normal CDF approximation.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425, p_high = 1.0 - p_low;
  double x;
  if (p < p_low) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= p_high) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley refinement step against erfc brings the result to near
  // machine precision.
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return x;
}

std::pair<double, double> wilson_interval(std::int64_t successes, std::int64_t n,
                                          double confidence) {
  if (n < 1) throw ParameterError("Wilson interval requires n >= 1");
  if (successes < 0 || successes > n)
    throw ParameterError("Wilson interval requires 0 <= successes <= n");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw EvaluationError("confidence must be in (0,1)");
  const double z = normal_quantile(0.5 + confidence / 2.0);
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = p + z2 / (2.0 * nn);
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  double lo = (center - half) / denom;
  double hi = (center + half) / denom;
  lo = std::max(0.0, std::min(1.0, lo));
  hi = std::max(0.0, std::min(1.0, hi));
  return {lo, hi};
}

GateDecision gate_prehoc(const std::vector<std::pair<std::int64_t, std::int64_t>>& samples,
                         double threshold, std::size_t min_samples, GateMode mode,
                         double confidence) {
  if (samples.size() < min_samples)
    throw GateError("gate requires at least " + std::to_string(min_samples) +
                    " samples, got " + std::to_string(samples.size()));
  GateDecision d;
  d.threshold = threshold;
  d.mode = mode;
  for (const auto& [s, n] : samples) {
    if (n < 1) throw GateError("gate sample with n < 1");
    if (s < 0 || s > n) throw GateError("gate sample with successes outside [0, n]");
    d.pooled_successes += s;
    d.pooled_n += n;
    d.per_sample_accuracy.push_back(static_cast<double>(s) / static_cast<double>(n));
    d.per_sample_lower.push_back(wilson_interval(s, n, confidence).first);
  }
  d.interval = wilson_interval(d.pooled_successes, d.pooled_n, confidence);
  if (mode == GateMode::pooled) {
    d.passed = d.interval.first > threshold;
  } else {
    d.passed = true;
    for (double lo : d.per_sample_lower)
      if (!(lo > threshold)) d.passed = false;
  }
  return d;
}

}  // namespace annot::metrics
