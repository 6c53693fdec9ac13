#include "mmfuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "mmfuse/errors.hpp"

namespace mmfuse {

namespace {

std::size_t argmax_row(const Matrix& m, std::size_t r) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < m.cols(); ++j) {
    if (m(r, j) > m(r, best)) best = j;  // ties resolve to the lowest index
  }
  return best;
}

// One-vs-rest AUC for a single class from (score, is_positive) pairs, using
// average ranks so tied scores contribute 1/2 per pair.
double auc_single(std::vector<std::pair<double, bool>>& scored) {
  std::sort(scored.begin(), scored.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  const std::size_t n = scored.size();
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scored[j].first == scored[i].first) ++j;
    // 1-based average rank of the tie group [i, j)
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k) {
      if (scored[k].second) {
        rank_sum_pos += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  const double u = rank_sum_pos -
                   static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace

ConfusionMatrix confusion_matrix(const std::vector<int>& y_true,
                                 const std::vector<int>& y_pred,
                                 std::size_t num_classes) {
  if (y_true.size() != y_pred.size()) {
    throw ShapeError("confusion_matrix: " + std::to_string(y_true.size()) +
                     " labels vs " + std::to_string(y_pred.size()) +
                     " predictions");
  }
  if (y_true.empty()) {
    throw ConfigError("confusion_matrix: empty inputs");
  }
  ConfusionMatrix m(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i];
    const int p = y_pred[i];
    if (t < 0 || t >= static_cast<int>(num_classes) || p < 0 ||
        p >= static_cast<int>(num_classes)) {
      throw ConfigError("confusion_matrix: label outside [0, " +
                        std::to_string(num_classes) + ") at index " +
                        std::to_string(i));
    }
    ++m[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  return m;
}

PrfResult precision_recall_f1(const ConfusionMatrix& confusion) {
  const std::size_t num_classes = confusion.size();
  PrfResult result;
  result.per_class.resize(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double diag = static_cast<double>(confusion[c][c]);
    std::size_t row_sum = 0;
    std::size_t col_sum = 0;
    for (std::size_t k = 0; k < num_classes; ++k) {
      row_sum += confusion[c][k];
      col_sum += confusion[k][c];
    }
    PerClassMetrics& pc = result.per_class[c];
    pc.support = row_sum;
    pc.precision = col_sum == 0 ? 0.0 : diag / static_cast<double>(col_sum);
    pc.recall = row_sum == 0 ? 0.0 : diag / static_cast<double>(row_sum);
    pc.f1 = (pc.precision + pc.recall) == 0.0
                ? 0.0
                : 2.0 * pc.precision * pc.recall / (pc.precision + pc.recall);
    result.precision_macro += pc.precision;
    result.recall_macro += pc.recall;
    result.f1_macro += pc.f1;
  }
  const double inv = 1.0 / static_cast<double>(num_classes);
  result.precision_macro *= inv;
  result.recall_macro *= inv;
  result.f1_macro *= inv;
  return result;
}

double auc_macro_ovr(const std::vector<int>& y_true, const Matrix& y_scores) {
  if (y_true.size() != y_scores.rows()) {
    throw ShapeError("auc_macro_ovr: " + std::to_string(y_true.size()) +
                     " labels vs " + std::to_string(y_scores.rows()) +
                     " score rows");
  }
  double auc_sum = 0.0;
  std::size_t contributing = 0;
  for (std::size_t c = 0; c < y_scores.cols(); ++c) {
    std::vector<std::pair<double, bool>> scored;
    scored.reserve(y_true.size());
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      const bool positive = y_true[i] == static_cast<int>(c);
      n_pos += positive ? 1 : 0;
      scored.emplace_back(y_scores(i, c), positive);
    }
    if (n_pos == 0 || n_pos == y_true.size()) {
      continue;  // class lacks positives or negatives; skipped
    }
    auc_sum += auc_single(scored);
    ++contributing;
  }
  if (contributing == 0) {
    throw UndefinedMetricError(
        "auc_macro_ovr: no class has both positive and negative examples");
  }
  return auc_sum / static_cast<double>(contributing);
}

std::pair<double, double> mae_rmse(const std::vector<int>& y_true,
                                   const Matrix& y_scores) {
  if (y_true.size() != y_scores.rows()) {
    throw ShapeError("mae_rmse: " + std::to_string(y_true.size()) +
                     " labels vs " + std::to_string(y_scores.rows()) +
                     " score rows");
  }
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  for (std::size_t i = 0; i < y_scores.rows(); ++i) {
    for (std::size_t c = 0; c < y_scores.cols(); ++c) {
      const double target = y_true[i] == static_cast<int>(c) ? 1.0 : 0.0;
      const double err = y_scores(i, c) - target;
      abs_sum += std::abs(err);
      sq_sum += err * err;
    }
  }
  const double count = static_cast<double>(y_scores.rows() * y_scores.cols());
  return {abs_sum / count, std::sqrt(sq_sum / count)};
}

EvalReport evaluate(const ModelParams& params, const Dataset& dataset,
                    const ModelConfig& model_cfg, const EmbedderConfig& embed_cfg,
                    const ModalityMask& mask) {
  validate(dataset);
  if (dataset.samples.empty()) {
    throw ConfigError("evaluate: dataset is empty");
  }
  if (dataset.num_classes() != model_cfg.num_classes) {
    throw ConfigError("evaluate: dataset has " +
                      std::to_string(dataset.num_classes()) +
                      " classes, model expects " +
                      std::to_string(model_cfg.num_classes));
  }

  const std::size_t n = dataset.samples.size();
  const std::size_t num_classes = model_cfg.num_classes;
  Matrix y_scores(n, num_classes);
  std::vector<int> y_true(n), y_pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    const EmbeddedSample embedded =
        embed_sample(dataset.samples[i], embed_cfg, mask);
    const ForwardTrace trace = forward(embedded, params, model_cfg, Mode::eval);
    for (std::size_t c = 0; c < num_classes; ++c) {
      y_scores(i, c) = trace.y_hat(0, c);
    }
    y_true[i] = dataset.samples[i].label;
    y_pred[i] = static_cast<int>(argmax_row(trace.y_hat, 0));
  }

  EvalReport report;
  report.num_samples = n;
  report.class_names = dataset.class_names;
  report.confusion = confusion_matrix(y_true, y_pred, num_classes);

  std::size_t diag = 0;
  for (std::size_t c = 0; c < num_classes; ++c) diag += report.confusion[c][c];
  report.accuracy = static_cast<double>(diag) / static_cast<double>(n);

  PrfResult prf = precision_recall_f1(report.confusion);
  report.per_class = std::move(prf.per_class);
  report.precision_macro = prf.precision_macro;
  report.recall_macro = prf.recall_macro;
  report.f1_macro = prf.f1_macro;

  try {
    report.auc_macro = auc_macro_ovr(y_true, y_scores);
  } catch (const UndefinedMetricError&) {
    report.auc_macro = 0.5;  // single-class evaluation set: chance by convention
  }

  const auto [mae, rmse] = mae_rmse(y_true, y_scores);
  report.mae = mae;
  report.rmse = rmse;
  return report;
}

std::string to_json_string(const EvalReport& report) {
  nlohmann::json doc;
  doc["num_samples"] = report.num_samples;
  doc["class_names"] = report.class_names;
  doc["accuracy"] = report.accuracy;
  doc["precision_macro"] = report.precision_macro;
  doc["recall_macro"] = report.recall_macro;
  doc["f1_macro"] = report.f1_macro;
  doc["auc_macro"] = report.auc_macro;
  doc["mae"] = report.mae;
  doc["rmse"] = report.rmse;
  nlohmann::json per_class = nlohmann::json::array();
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const PerClassMetrics& pc = report.per_class[c];
    per_class.push_back({
        {"class", report.class_names[c]},
        {"precision", pc.precision},
        {"recall", pc.recall},
        {"f1", pc.f1},
        {"support", pc.support},
    });
  }
  doc["per_class"] = std::move(per_class);
  doc["confusion"] = report.confusion;
  return doc.dump(2) + "\n";
}

}  // namespace mmfuse
