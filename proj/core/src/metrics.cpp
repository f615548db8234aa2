#include "saliq/metrics.hpp"

#include <stdexcept>
#include <string>

namespace saliq {

int64_t Metrics::total() const {
  int64_t t = 0;
  for (int64_t v : confusion) t += v;
  return t;
}

Metrics compute_metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred, int num_classes) {
  if (y_true.size() != y_pred.size()) throw std::invalid_argument("compute_metrics: label/prediction size mismatch");
  if (y_true.empty()) throw std::invalid_argument("compute_metrics: empty evaluation set");
  if (num_classes <= 0) throw std::invalid_argument("compute_metrics: need at least one class");

  Metrics m;
  m.num_classes = num_classes;
  m.confusion.assign(static_cast<size_t>(num_classes) * num_classes, 0);
  for (size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes) {
      throw std::invalid_argument("compute_metrics: class index out of range at sample " + std::to_string(i));
    }
    ++m.confusion[static_cast<size_t>(t) * num_classes + p];
  }

  const int64_t n = static_cast<int64_t>(y_true.size());
  int64_t trace = 0;
  for (int c = 0; c < num_classes; ++c) trace += m.at(c, c);
  m.accuracy = static_cast<double>(trace) / static_cast<double>(n);

  double sens_sum = 0.0, spec_sum = 0.0;
  int sens_classes = 0, spec_classes = 0;
  for (int c = 0; c < num_classes; ++c) {
    int64_t tp = m.at(c, c);
    int64_t row = 0, col = 0;
    for (int j = 0; j < num_classes; ++j) {
      row += m.at(c, j);
      col += m.at(j, c);
    }
    const int64_t fn = row - tp;
    const int64_t fp = col - tp;
    const int64_t tn = n - tp - fn - fp;
    if (tp + fn > 0) {
      sens_sum += static_cast<double>(tp) / static_cast<double>(tp + fn);
      ++sens_classes;
    }
    if (tn + fp > 0) {
      spec_sum += static_cast<double>(tn) / static_cast<double>(tn + fp);
      ++spec_classes;
    }
  }
  m.macro_sensitivity = sens_classes ? sens_sum / sens_classes : 0.0;
  m.macro_specificity = spec_classes ? spec_sum / spec_classes : 0.0;
  return m;
}

}  // namespace saliq
