#include "metaopt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace metaopt {

namespace {

double accuracy(std::span<const double> pred, std::span<const double> label) {
  int64_t hits = 0;
  for (size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == label[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double f1_binary(std::span<const double> pred, std::span<const double> label,
                 int64_t positive_class) {
  const auto pos = static_cast<double>(positive_class);
  int64_t tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == pos;
    const bool t = label[i] == pos;
    tp += p && t;
    fp += p && !t;
    fn += !p && t;
  }
  const int64_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

double matthews(std::span<const double> pred, std::span<const double> label,
                int64_t positive_class) {
  const auto pos = static_cast<double>(positive_class);
  double tp = 0, tn = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == pos;
    const bool t = label[i] == pos;
    tp += p && t;
    tn += !p && !t;
    fp += p && !t;
    fn += !p && t;
  }
  const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (denom == 0.0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(denom);
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;  // constant input
  return sxy / std::sqrt(sxx * syy);
}

// Average ranks on ties.
std::vector<double> ranks(std::span<const double> x) {
  std::vector<size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  return pearson(rx, ry);
}

}  // namespace

MetricValues compute_metric(MetricKind kind, std::span<const double> predictions,
                            std::span<const double> labels, int64_t positive_class) {
  require(predictions.size() == labels.size(),
          "metric: " + std::to_string(predictions.size()) + " predictions vs " +
              std::to_string(labels.size()) + " labels");
  require(predictions.size() >= 2, "metric: need at least 2 examples");
  MetricValues out;
  switch (kind) {
    case MetricKind::kAccuracy:
      out["accuracy"] = accuracy(predictions, labels);
      break;
    case MetricKind::kF1Accuracy:
      out["f1"] = f1_binary(predictions, labels, positive_class);
      out["accuracy"] = accuracy(predictions, labels);
      break;
    case MetricKind::kMatthews:
      out["matthews"] = matthews(predictions, labels, positive_class);
      break;
    case MetricKind::kPearsonSpearman:
      out["pearson"] = pearson(predictions, labels);
      out["spearman"] = spearman(predictions, labels);
      break;
  }
  return out;
}

double primary_metric(MetricKind kind, const MetricValues& values) {
  static const std::map<MetricKind, std::vector<std::string>> kOrder = {
      {MetricKind::kAccuracy, {"accuracy"}},
      {MetricKind::kF1Accuracy, {"f1", "accuracy"}},
      {MetricKind::kMatthews, {"matthews"}},
      {MetricKind::kPearsonSpearman, {"pearson", "spearman"}},
  };
  for (const auto& name : kOrder.at(kind)) {
    auto it = values.find(name);
    if (it != values.end() && it->second) return *it->second;
  }
  // Every metric undefined (e.g. constant predictions): rank it lowest.
  return -std::numeric_limits<double>::infinity();
}

}  // namespace metaopt
