#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>

#include "metaopt/tasks.hpp"

namespace metaopt {

// Named metric values. A missing value marks a metric that is undefined on
// the given inputs (constant input to a correlation), never NaN.
using MetricValues = std::map<std::string, std::optional<double>>;

// accuracy / binary F1 (declared positive class) / Matthews correlation
// (0 on a zero denominator) / Pearson and Spearman (average ranks on ties).
// Classification inputs are label values, regression inputs are reals.
MetricValues compute_metric(MetricKind kind, std::span<const double> predictions,
                            std::span<const double> labels, int64_t positive_class = 1);

// Scalar used for model selection: the first defined value in a fixed
// per-kind order (f1 before accuracy, pearson before spearman).
double primary_metric(MetricKind kind, const MetricValues& values);

}  // namespace metaopt
