#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mmfuse/data.hpp"
#include "mmfuse/metrics.hpp"
#include "mmfuse/model.hpp"
#include "mmfuse/trainer.hpp"

namespace mmfuse {

// Merged view of the model, embedder, optimizer and split settings surfaced
// by the CLI. The image dimension and class count always come from the
// dataset header, so they are absent here.
struct RunConfig {
  std::size_t d = 64;
  std::size_t d_t = 32;
  std::size_t d_g = 16;
  double dropout_rate = 0.2;
  std::uint64_t hash_seed = 0;
  double freq_base = 10000.0;
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  double weight_decay = 0.01;
  SplitFractions fractions;
  std::uint64_t seed = 0;
};

struct SynthOutputs {
  std::filesystem::path dataset_path;
  std::size_t num_samples = 0;
  std::vector<std::string> class_names;
};

// Generates a dataset file plus a sibling <out>.config.json provenance echo.
SynthOutputs run_synth(const SynthConfig& cfg, const std::filesystem::path& out);

struct TrainOutputs {
  std::filesystem::path checkpoint_path;
  std::filesystem::path history_path;
  std::filesystem::path report_path;
  TrainResult result;
  EvalReport val_report;
};

// Splits the dataset, trains on the train part, evaluates on the validation
// part, and writes checkpoint.json, history.tsv, report.json, the three split
// part files, and a config.json echo into out_dir.
TrainOutputs run_train(const RunConfig& cfg,
                       const std::filesystem::path& dataset_path,
                       const std::filesystem::path& out_dir);

struct EvalOutputs {
  std::filesystem::path report_path;
  EvalReport report;
};

// Evaluates a checkpoint against a dataset file; writes report.json and a
// config.json echo into out_dir.
EvalOutputs run_eval(const std::filesystem::path& checkpoint_path,
                     const std::filesystem::path& dataset_path,
                     const std::filesystem::path& out_dir);

// Fixed-size verification model: d=8, d_t=d_i=6, d_g=4, C=3.
struct GradCheckOptions {
  double eps = 1e-5;
  double tolerance = 1e-4;
  std::size_t num_samples = 5;
  std::uint64_t seed = 7;
};

struct GradCheckReport {
  struct Entry {
    std::string name;
    double max_rel_err = 0.0;
  };
  std::vector<Entry> entries;  // one per parameter, field-table order
  double max_rel_err = 0.0;
  bool passed = false;
  std::vector<std::string> failed_params;
};

// Test hook: corrupts the analytic gradients before comparison, simulating a
// broken backward pass.
using GradMutator = std::function<void(Gradients&)>;

// Compares analytic gradients against central differences for every
// parameter over randomly drawn samples and parameters.
GradCheckReport run_gradcheck(const GradCheckOptions& options,
                              const GradMutator& mutate = nullptr);

// Fixed-width metric table (the report columns) for terminal output.
std::string format_metrics_table(const EvalReport& report);

// History serialization: one "epoch<TAB>mean_loss<TAB>train_accuracy" line
// per epoch, full 17-digit float precision.
std::string format_history(const std::vector<EpochRecord>& history);

}  // namespace mmfuse
