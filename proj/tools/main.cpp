#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mmfuse/errors.hpp"
#include "mmfuse/pipeline.hpp"

namespace {

// Exit codes: 0 success, 2 configuration/usage error, 3 I/O or parse error,
// 4 verification failure.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitCheckFailed = 4;

void add_synth_command(CLI::App& app, int& exit_code) {
  auto* sub = app.add_subcommand("synth", "Generate a synthetic multimodal dataset");
  auto cfg = std::make_shared<mmfuse::SynthConfig>();
  auto out = std::make_shared<std::string>();
  sub->add_option("--classes", cfg->num_classes, "Number of classes (>= 2)");
  sub->add_option("--per-class", cfg->samples_per_class, "Samples per class");
  sub->add_option("--vocab-per-class", cfg->vocab_per_class,
                  "Class-exclusive token count");
  sub->add_option("--shared-vocab", cfg->shared_vocab, "Shared token count");
  sub->add_option("--geo-spread", cfg->geo_spread,
                  "Coordinate spread around class centers (degrees std)");
  sub->add_option("--image-dim", cfg->image_dim, "Image feature dimension");
  sub->add_option("--image-center-distance", cfg->image_center_distance,
                  "Pairwise distance between class feature means");
  sub->add_option("--noise-level", cfg->noise_level,
                  "Fraction of shared tokens / image noise scale, in [0, 1]");
  sub->add_option("--seed", cfg->seed, "Generator seed");
  sub->add_option("--out", *out, "Output dataset file (.jsonl)")->required();
  sub->callback([cfg, out, &exit_code] {
    const mmfuse::SynthOutputs outputs = mmfuse::run_synth(*cfg, *out);
    std::cout << "wrote " << outputs.num_samples << " samples ("
              << outputs.class_names.size() << " classes) to "
              << outputs.dataset_path.string() << "\n";
    exit_code = kExitOk;
  });
}

void add_train_command(CLI::App& app, int& exit_code) {
  auto* sub = app.add_subcommand("train", "Train a model on a dataset file");
  auto cfg = std::make_shared<mmfuse::RunConfig>();
  auto data = std::make_shared<std::string>();
  auto out_dir = std::make_shared<std::string>();
  sub->add_option("--data", *data, "Dataset file")->required();
  sub->add_option("--out-dir", *out_dir, "Output directory")->required();
  sub->add_option("--d", cfg->d, "Unified embedding dimension");
  sub->add_option("--dim-t", cfg->d_t, "Text embedding dimension");
  sub->add_option("--dim-g", cfg->d_g, "Geo embedding dimension (even)");
  sub->add_option("--dropout", cfg->dropout_rate, "Dropout rate in [0, 1)");
  sub->add_option("--hash-seed", cfg->hash_seed, "Text feature-hashing seed");
  sub->add_option("--freq-base", cfg->freq_base, "Geo encoding frequency base");
  sub->add_option("--learning-rate", cfg->learning_rate, "Adam learning rate");
  sub->add_option("--batch-size", cfg->batch_size, "Mini-batch size");
  sub->add_option("--epochs", cfg->epochs, "Training epochs");
  sub->add_option("--weight-decay", cfg->weight_decay,
                  "Decoupled weight decay coefficient");
  sub->add_option("--train-frac", cfg->fractions.train, "Train split fraction");
  sub->add_option("--val-frac", cfg->fractions.val, "Validation split fraction");
  sub->add_option("--test-frac", cfg->fractions.test, "Test split fraction");
  sub->add_option("--seed", cfg->seed, "Master seed (split, init, dropout)");
  sub->callback([cfg, data, out_dir, &exit_code] {
    const mmfuse::TrainOutputs outputs = mmfuse::run_train(*cfg, *data, *out_dir);
    for (const mmfuse::EpochRecord& rec : outputs.result.history) {
      std::printf("epoch %zu  loss %.6f  train_acc %.4f\n", rec.epoch,
                  rec.mean_loss, rec.train_accuracy);
    }
    std::cout << "checkpoint: " << outputs.checkpoint_path.string() << "\n";
    std::cout << "validation metrics:\n"
              << mmfuse::format_metrics_table(outputs.val_report);
    exit_code = kExitOk;
  });
}

void add_eval_command(CLI::App& app, int& exit_code) {
  auto* sub = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset file");
  auto checkpoint = std::make_shared<std::string>();
  auto data = std::make_shared<std::string>();
  auto out_dir = std::make_shared<std::string>();
  sub->add_option("--checkpoint", *checkpoint, "Checkpoint file")->required();
  sub->add_option("--data", *data, "Dataset file")->required();
  sub->add_option("--out-dir", *out_dir, "Output directory")->required();
  sub->callback([checkpoint, data, out_dir, &exit_code] {
    const mmfuse::EvalOutputs outputs =
        mmfuse::run_eval(*checkpoint, *data, *out_dir);
    std::cout << mmfuse::format_metrics_table(outputs.report);
    std::cout << "report: " << outputs.report_path.string() << "\n";
    exit_code = kExitOk;
  });
}

void add_gradcheck_command(CLI::App& app, int& exit_code) {
  auto* sub = app.add_subcommand(
      "gradcheck", "Verify analytic gradients against central differences");
  auto options = std::make_shared<mmfuse::GradCheckOptions>();
  sub->add_option("--eps", options->eps, "Finite-difference step");
  sub->add_option("--tol", options->tolerance, "Max allowed relative error");
  sub->add_option("--samples", options->num_samples, "Random samples to check");
  sub->add_option("--seed", options->seed, "Sample/parameter draw seed");
  sub->callback([options, &exit_code] {
    const mmfuse::GradCheckReport report = mmfuse::run_gradcheck(*options);
    for (const auto& entry : report.entries) {
      std::printf("%-8s max_rel_err %.3e\n", entry.name.c_str(),
                  entry.max_rel_err);
    }
    if (report.passed) {
      std::printf("gradcheck PASS (max rel err %.3e, tolerance %.1e)\n",
                  report.max_rel_err, options->tolerance);
      exit_code = kExitOk;
    } else {
      std::string names;
      for (const std::string& name : report.failed_params) {
        if (!names.empty()) names += ", ";
        names += name;
      }
      std::printf("gradcheck FAIL (max rel err %.3e, tolerance %.1e): %s\n",
                  report.max_rel_err, options->tolerance, names.c_str());
      exit_code = kExitCheckFailed;
    }
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal fusion classifier: attention over text, image and "
               "geo embeddings with an adaptive sigmoid gate"};
  app.option_defaults()->always_capture_default();
  // Global config file; values live under a [synth]/[train]/[eval]/[gradcheck]
  // section and are overridden by command-line flags.
  app.set_config("--config", "",
                 "Read defaults from a TOML/INI file with per-command sections");
  app.require_subcommand(1);

  int exit_code = kExitOk;
  add_synth_command(app, exit_code);
  add_train_command(app, exit_code);
  add_eval_command(app, exit_code);
  add_gradcheck_command(app, exit_code);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  } catch (const mmfuse::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const mmfuse::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitIo;
  } catch (const mmfuse::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return exit_code;
}
