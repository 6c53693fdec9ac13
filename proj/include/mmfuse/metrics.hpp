#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mmfuse/data.hpp"
#include "mmfuse/matrix.hpp"
#include "mmfuse/model.hpp"

namespace mmfuse {

struct PerClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // true instance count
};

struct EvalReport {
  std::size_t num_samples = 0;
  std::vector<std::string> class_names;
  double accuracy = 0.0;
  double precision_macro = 0.0;
  double recall_macro = 0.0;
  double f1_macro = 0.0;
  double auc_macro = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
  std::vector<PerClassMetrics> per_class;
  std::vector<std::vector<std::size_t>> confusion;  // [true][pred]
};

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;

// Entry (i, j) counts samples of true class i predicted as class j.
ConfusionMatrix confusion_matrix(const std::vector<int>& y_true,
                                 const std::vector<int>& y_pred,
                                 std::size_t num_classes);

struct PrfResult {
  std::vector<PerClassMetrics> per_class;
  double precision_macro = 0.0;
  double recall_macro = 0.0;
  double f1_macro = 0.0;
};

// Per-class precision/recall/F1 plus unweighted macro means. A zero
// denominator yields 0 and the class still counts toward the macro mean.
PrfResult precision_recall_f1(const ConfusionMatrix& confusion);

// One-vs-rest AUC per class via the rank-based Mann-Whitney statistic (ties
// contribute 1/2), macro-averaged over classes with at least one positive and
// one negative. Throws UndefinedMetricError when no class qualifies.
double auc_macro_ovr(const std::vector<int>& y_true, const Matrix& y_scores);

// Entrywise error between predicted probability rows and one-hot targets.
std::pair<double, double> mae_rmse(const std::vector<int>& y_true,
                                   const Matrix& y_scores);

// Runs eval-mode forwards over the dataset and assembles the full report.
// Argmax ties break toward the lowest class index. When no class has both
// positives and negatives, auc_macro falls back to the chance value 0.5.
EvalReport evaluate(const ModelParams& params, const Dataset& dataset,
                    const ModelConfig& model_cfg, const EmbedderConfig& embed_cfg,
                    const ModalityMask& mask = {});

// Stable-key-order JSON rendering for report files and golden tests.
std::string to_json_string(const EvalReport& report);

}  // namespace mmfuse
