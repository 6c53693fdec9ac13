#include "mmfuse/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mmfuse/errors.hpp"

namespace mmfuse {

namespace {

using nlohmann::json;

// Sub-stream ids hung off the master seed; frozen, or old runs stop being
// reproducible.
constexpr std::uint64_t kSplitStream = 101;
constexpr std::uint64_t kTrainStream = 102;

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write file: " + path.string());
  }
  out << text;
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  }
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json run_config_to_json(const RunConfig& cfg) {
  return json{
      {"d", cfg.d},
      {"d_t", cfg.d_t},
      {"d_g", cfg.d_g},
      {"dropout_rate", cfg.dropout_rate},
      {"hash_seed", cfg.hash_seed},
      {"freq_base", cfg.freq_base},
      {"learning_rate", cfg.learning_rate},
      {"batch_size", cfg.batch_size},
      {"epochs", cfg.epochs},
      {"weight_decay", cfg.weight_decay},
      {"train_frac", cfg.fractions.train},
      {"val_frac", cfg.fractions.val},
      {"test_frac", cfg.fractions.test},
      {"seed", cfg.seed},
  };
}

ModelConfig model_config_for(const RunConfig& cfg, const Dataset& dataset) {
  ModelConfig model_cfg;
  model_cfg.d = cfg.d;
  model_cfg.d_t = cfg.d_t;
  model_cfg.d_i = dataset.image_dim;
  model_cfg.d_g = cfg.d_g;
  model_cfg.num_classes = dataset.num_classes();
  model_cfg.dropout_rate = cfg.dropout_rate;
  return model_cfg;
}

EmbedderConfig embedder_config_for(const ModelConfig& model_cfg,
                                   std::uint64_t hash_seed, double freq_base) {
  EmbedderConfig embed_cfg;
  embed_cfg.text.dim_t = model_cfg.d_t;
  embed_cfg.text.hash_seed = hash_seed;
  embed_cfg.image.dim_i = model_cfg.d_i;
  embed_cfg.geo.dim_g = model_cfg.d_g;
  embed_cfg.geo.freq_base = freq_base;
  return embed_cfg;
}

}  // namespace

SynthOutputs run_synth(const SynthConfig& cfg, const std::filesystem::path& out) {
  const Dataset dataset = synth_generate(cfg);
  save_dataset(dataset, out);

  const json echo{
      {"command", "synth"},
      {"num_classes", cfg.num_classes},
      {"samples_per_class", cfg.samples_per_class},
      {"vocab_per_class", cfg.vocab_per_class},
      {"shared_vocab", cfg.shared_vocab},
      {"geo_spread", cfg.geo_spread},
      {"image_dim", cfg.image_dim},
      {"image_center_distance", cfg.image_center_distance},
      {"noise_level", cfg.noise_level},
      {"seed", cfg.seed},
      {"out", out.string()},
  };
  write_text_file(out.string() + ".config.json", echo.dump(2) + "\n");

  return SynthOutputs{out, dataset.samples.size(), dataset.class_names};
}

std::string format_history(const std::vector<EpochRecord>& history) {
  std::string text;
  for (const EpochRecord& rec : history) {
    text += std::to_string(rec.epoch);
    text += '\t';
    text += format_double(rec.mean_loss);
    text += '\t';
    text += format_double(rec.train_accuracy);
    text += '\n';
  }
  return text;
}

TrainOutputs run_train(const RunConfig& cfg,
                       const std::filesystem::path& dataset_path,
                       const std::filesystem::path& out_dir) {
  const Dataset dataset = load_dataset(dataset_path);
  ensure_dir(out_dir);

  const SplitResult parts =
      split(dataset, cfg.fractions, derive_seed(cfg.seed, kSplitStream));
  if (parts.val.samples.empty()) {
    throw ConfigError(
        "train: the validation part is empty; the dataset is too small for "
        "the requested split fractions");
  }
  save_dataset(parts.train, out_dir / "train.jsonl");
  save_dataset(parts.val, out_dir / "val.jsonl");
  save_dataset(parts.test, out_dir / "test.jsonl");

  const ModelConfig model_cfg = model_config_for(cfg, dataset);
  const EmbedderConfig embed_cfg =
      embedder_config_for(model_cfg, cfg.hash_seed, cfg.freq_base);

  TrainConfig train_cfg;
  train_cfg.learning_rate = cfg.learning_rate;
  train_cfg.batch_size = cfg.batch_size;
  train_cfg.epochs = cfg.epochs;
  train_cfg.weight_decay = cfg.weight_decay;
  train_cfg.seed = derive_seed(cfg.seed, kTrainStream);

  TrainOutputs outputs;
  outputs.result = train(parts.train, model_cfg, embed_cfg, train_cfg);

  outputs.checkpoint_path = out_dir / "checkpoint.json";
  save_checkpoint(Checkpoint{model_cfg, embed_cfg, outputs.result.params},
                  outputs.checkpoint_path);

  outputs.history_path = out_dir / "history.tsv";
  write_text_file(outputs.history_path, format_history(outputs.result.history));

  outputs.val_report =
      evaluate(outputs.result.params, parts.val, model_cfg, embed_cfg);
  outputs.report_path = out_dir / "report.json";
  write_text_file(outputs.report_path, to_json_string(outputs.val_report));

  json echo = run_config_to_json(cfg);
  echo["command"] = "train";
  echo["dataset"] = dataset_path.string();
  echo["num_classes"] = dataset.num_classes();
  echo["d_i"] = dataset.image_dim;
  write_text_file(out_dir / "config.json", echo.dump(2) + "\n");

  return outputs;
}

EvalOutputs run_eval(const std::filesystem::path& checkpoint_path,
                     const std::filesystem::path& dataset_path,
                     const std::filesystem::path& out_dir) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const Dataset dataset = load_dataset(dataset_path);
  if (dataset.num_classes() != ckpt.model.num_classes) {
    throw ConfigError("eval: checkpoint expects " +
                      std::to_string(ckpt.model.num_classes) +
                      " classes, dataset has " +
                      std::to_string(dataset.num_classes()));
  }
  if (dataset.image_dim != ckpt.model.d_i) {
    throw ConfigError("eval: checkpoint expects image_dim " +
                      std::to_string(ckpt.model.d_i) + ", dataset declares " +
                      std::to_string(dataset.image_dim));
  }
  ensure_dir(out_dir);

  EvalOutputs outputs;
  outputs.report = evaluate(ckpt.params, dataset, ckpt.model, ckpt.embed);
  outputs.report_path = out_dir / "report.json";
  write_text_file(outputs.report_path, to_json_string(outputs.report));

  const json echo{
      {"command", "eval"},
      {"checkpoint", checkpoint_path.string()},
      {"dataset", dataset_path.string()},
  };
  write_text_file(out_dir / "config.json", echo.dump(2) + "\n");

  return outputs;
}

GradCheckReport run_gradcheck(const GradCheckOptions& options,
                              const GradMutator& mutate) {
  if (options.eps <= 0.0) {
    throw ConfigError("gradcheck: eps must be positive");
  }
  if (options.tolerance <= 0.0) {
    throw ConfigError("gradcheck: tolerance must be positive");
  }
  if (options.num_samples < 1) {
    throw ConfigError("gradcheck: num_samples must be >= 1");
  }

  ModelConfig cfg;
  cfg.d = 8;
  cfg.d_t = 6;
  cfg.d_i = 6;
  cfg.d_g = 4;
  cfg.num_classes = 3;
  cfg.dropout_rate = 0.0;  // gradients are checked on the deterministic path

  Rng rng(derive_seed(options.seed, 0));
  const ModelParams params = random_params(cfg, rng);

  GradCheckReport report;
  for (const ParamField& field : kParamFields) {
    report.entries.push_back({std::string(field.name), 0.0});
  }

  for (std::size_t s = 0; s < options.num_samples; ++s) {
    EmbeddedSample sample;
    sample.text = Matrix(1, cfg.d_t);
    sample.image = Matrix(1, cfg.d_i);
    sample.geo = Matrix(1, cfg.d_g);
    for (double& v : sample.text.data()) v = rng.uniform(-1.0, 1.0);
    for (double& v : sample.image.data()) v = rng.uniform(-1.0, 1.0);
    for (double& v : sample.geo.data()) v = rng.uniform(-1.0, 1.0);
    const auto label = static_cast<std::size_t>(rng.next_below(cfg.num_classes));
    sample.label = static_cast<int>(label);

    const ForwardTrace trace = forward(sample, params, cfg, Mode::eval);
    Gradients analytic = backward(trace, sample, params, label);
    if (mutate) {
      mutate(analytic);
    }

    for (std::size_t f = 0; f < kParamFields.size(); ++f) {
      const ParamField& field = kParamFields[f];
      const LossFn loss_fn = [&](const Matrix& candidate) {
        ModelParams probe = params;
        probe.*field.member = candidate;
        const ForwardTrace t = forward(sample, probe, cfg, Mode::eval);
        return cross_entropy(t.y_hat, label);
      };
      const Matrix numeric =
          finite_diff_grad(loss_fn, params.*field.member, options.eps);
      const Matrix& exact = analytic.*field.member;
      for (std::size_t i = 0; i < numeric.size(); ++i) {
        const double a = exact.data()[i];
        const double b = numeric.data()[i];
        const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
        report.entries[f].max_rel_err =
            std::max(report.entries[f].max_rel_err, std::abs(a - b) / denom);
      }
    }
  }

  report.max_rel_err = 0.0;
  for (const GradCheckReport::Entry& entry : report.entries) {
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    if (entry.max_rel_err >= options.tolerance) {
      report.failed_params.push_back(entry.name);
    }
  }
  report.passed = report.failed_params.empty();
  return report;
}

std::string format_metrics_table(const EvalReport& report) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-10s %-10s %-10s %-10s %-10s %-10s %-10s\n",
                "accuracy", "f1", "auc", "precision", "recall", "mae", "rmse");
  out << line;
  std::snprintf(line, sizeof(line),
                "%-10.4f %-10.4f %-10.4f %-10.4f %-10.4f %-10.4f %-10.4f\n",
                report.accuracy, report.f1_macro, report.auc_macro,
                report.precision_macro, report.recall_macro, report.mae,
                report.rmse);
  out << line;
  return out.str();
}

}  // namespace mmfuse
