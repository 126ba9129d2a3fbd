#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "banknet/tensor.hpp"

namespace bnk {

/// K x K integer counts; rows are the true class, columns the predicted one.
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<std::int64_t> counts;  // row-major K x K
  std::vector<std::string> class_names;

  std::int64_t& at(int truth, int pred) {
    return counts[static_cast<std::size_t>(truth) * num_classes + pred];
  }
  std::int64_t at(int truth, int pred) const {
    return counts[static_cast<std::size_t>(truth) * num_classes + pred];
  }
  std::int64_t total() const;
  std::int64_t diagonal() const;
};

/// Lowest-index argmax, the tie-break used to turn probabilities into a
/// predicted class.
int argmax_class(const Tensor& probs);

ConfusionMatrix confusion(const std::vector<int>& truth, const std::vector<int>& predicted,
                          int num_classes);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Zero-denominator cases yield 0 and clear the matching flag.
  bool precision_defined = true;
  bool recall_defined = true;
  std::int64_t support = 0;
};

struct EvalReport {
  std::string dataset_name;
  std::string model_name;
  std::vector<std::string> class_names;
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;  // trace / total, computed in integer arithmetic first
};

/// precision = TP/(TP+FP), recall = TP/(TP+FN), F1 their harmonic mean,
/// macro values the unweighted class means. Zero-denominator classes
/// contribute 0 with their flag cleared instead of being skipped.
EvalReport derive_metrics(const ConfusionMatrix& cm, std::string dataset_name = "",
                          std::string model_name = "");

enum class ReportFormat { text_table, structured };

/// text_table: Dataset / Model / Precision / Recall / Test Accuracy /
/// F1 Score at two decimals. structured: JSON with full-precision values.
std::string render_report(const std::vector<EvalReport>& reports, ReportFormat format);

}  // namespace bnk
