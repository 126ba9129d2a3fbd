#include "banknet/metrics.hpp"

#include <cstdio>

#include <json.hpp>

namespace bnk {

std::int64_t ConfusionMatrix::total() const {
  std::int64_t n = 0;
  for (std::int64_t c : counts) n += c;
  return n;
}

std::int64_t ConfusionMatrix::diagonal() const {
  std::int64_t n = 0;
  for (int i = 0; i < num_classes; ++i) n += at(i, i);
  return n;
}

int argmax_class(const Tensor& probs) {
  if (probs.rank() != 1 || probs.dim(0) < 1) {
    throw ShapeError("argmax needs a non-empty vector, got " + probs.shape_str());
  }
  int best = 0;
  for (int i = 1; i < probs.dim(0); ++i) {
    if (probs[static_cast<std::size_t>(i)] > probs[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

ConfusionMatrix confusion(const std::vector<int>& truth, const std::vector<int>& predicted,
                          int num_classes) {
  if (truth.size() != predicted.size()) {
    throw Error("label vectors differ in length: " + std::to_string(truth.size()) + " vs " +
                std::to_string(predicted.size()));
  }
  if (num_classes < 1) throw Error("confusion matrix needs at least one class");
  ConfusionMatrix cm;
  cm.num_classes = num_classes;
  cm.counts.assign(static_cast<std::size_t>(num_classes) * num_classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || predicted[i] < 0 ||
        predicted[i] >= num_classes) {
      throw Error("label out of range at index " + std::to_string(i));
    }
    cm.at(truth[i], predicted[i]) += 1;
  }
  return cm;
}

EvalReport derive_metrics(const ConfusionMatrix& cm, std::string dataset_name,
                          std::string model_name) {
  EvalReport r;
  r.dataset_name = std::move(dataset_name);
  r.model_name = std::move(model_name);
  r.class_names = cm.class_names;
  const int k = cm.num_classes;
  for (int i = 0; i < k; ++i) {
    std::int64_t tp = cm.at(i, i);
    std::int64_t fp = 0, fn = 0;
    for (int j = 0; j < k; ++j) {
      if (j == i) continue;
      fp += cm.at(j, i);
      fn += cm.at(i, j);
    }
    ClassMetrics m;
    m.support = tp + fn;
    if (tp + fp > 0) {
      m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    } else {
      m.precision_defined = false;
    }
    if (tp + fn > 0) {
      m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    } else {
      m.recall_defined = false;
    }
    if (m.precision + m.recall > 0.0) {
      m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    }
    r.per_class.push_back(m);
    r.macro_precision += m.precision;
    r.macro_recall += m.recall;
    r.macro_f1 += m.f1;
  }
  r.macro_precision /= k;
  r.macro_recall /= k;
  r.macro_f1 /= k;
  const std::int64_t total = cm.total();
  r.accuracy = total > 0 ? static_cast<double>(cm.diagonal()) / static_cast<double>(total) : 0.0;
  return r;
}

namespace {

std::string two_decimals(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string render_report(const std::vector<EvalReport>& reports, ReportFormat format) {
  if (format == ReportFormat::text_table) {
    std::string out =
        "Dataset             | Model            | Precision | Recall | Test Accuracy | F1 Score\n"
        "--------------------+------------------+-----------+--------+---------------+---------\n";
    char line[256];
    for (const EvalReport& r : reports) {
      std::snprintf(line, sizeof(line), "%-19s | %-16s | %9s | %6s | %13s | %8s\n",
                    r.dataset_name.c_str(), r.model_name.c_str(),
                    two_decimals(r.macro_precision).c_str(), two_decimals(r.macro_recall).c_str(),
                    two_decimals(r.accuracy).c_str(), two_decimals(r.macro_f1).c_str());
      out += line;
    }
    return out;
  }

  nlohmann::json doc = nlohmann::json::array();
  for (const EvalReport& r : reports) {
    nlohmann::json per_class = nlohmann::json::array();
    for (std::size_t i = 0; i < r.per_class.size(); ++i) {
      const ClassMetrics& m = r.per_class[i];
      per_class.push_back({
          {"class", i < r.class_names.size() ? r.class_names[i] : std::to_string(i)},
          {"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"support", m.support},
          {"precision_defined", m.precision_defined},
          {"recall_defined", m.recall_defined},
      });
    }
    doc.push_back({
        {"dataset", r.dataset_name},
        {"model", r.model_name},
        {"accuracy", r.accuracy},
        {"macro_precision", r.macro_precision},
        {"macro_recall", r.macro_recall},
        {"macro_f1", r.macro_f1},
        {"per_class", per_class},
    });
  }
  return doc.dump(2) + "\n";
}

}  // namespace bnk
