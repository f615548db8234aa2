#pragma once

#include <cstdint>
#include <vector>

namespace saliq {

/// Confusion-matrix-derived clinical metrics. Rows of the confusion matrix
/// are true classes, columns predictions. Sensitivity and specificity are
/// per-class one-vs-rest values macro-averaged over classes; a class with no
/// positives (or no negatives) is excluded from the respective average.
struct Metrics {
  int num_classes = 0;
  std::vector<int64_t> confusion;  // row-major C x C
  double accuracy = 0.0;
  double macro_sensitivity = 0.0;
  double macro_specificity = 0.0;

  int64_t total() const;
  int64_t at(int true_class, int predicted) const { return confusion[static_cast<size_t>(true_class) * num_classes + predicted]; }
};

Metrics compute_metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred, int num_classes);

}  // namespace saliq
