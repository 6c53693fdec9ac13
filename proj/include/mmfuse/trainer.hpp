#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mmfuse/data.hpp"
#include "mmfuse/model.hpp"

namespace mmfuse {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

// Shape-mirror of the parameters; reuses the field table for iteration.
using Gradients = ModelParams;

Gradients zero_like(const ModelParams& params);

// Exact analytic gradient of the per-sample loss with respect to every
// parameter: chain rule through classify -> adaptive gate (product rule over
// gate (*) h) -> attention (softmax Jacobian) -> projections, honoring any
// dropout masks recorded in the trace.
Gradients backward(const ForwardTrace& trace, const EmbeddedSample& sample,
                   const ModelParams& params, std::size_t label);

struct AdamState {
  ModelParams m;  // first moments
  ModelParams v;  // second moments
  std::uint64_t t = 0;
};

AdamState make_adam_state(const ModelParams& params);

// Bias-corrected Adam with decoupled weight decay: parameters shrink by
// lr * wd before the Adam delta is applied.
void adam_step(ModelParams& params, const Gradients& grads, AdamState& state,
               const TrainConfig& cfg);

struct BatchResult {
  Gradients grads;  // mean over the batch
  double mean_loss = 0.0;
};

BatchResult batch_gradients(std::span<const EmbeddedSample> batch,
                            const ModelParams& params, const ModelConfig& cfg,
                            Mode mode, Rng* rng = nullptr);

// Shuffled sample order for one epoch; a permutation of [0, n).
std::vector<std::size_t> epoch_order(std::size_t n, Rng& rng);

struct EpochRecord {
  std::size_t epoch = 0;       // 1-based
  double mean_loss = 0.0;      // mean per-sample training loss
  double train_accuracy = 0.0; // eval-mode accuracy on the training set
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochRecord> history;
};

TrainResult train(const Dataset& dataset, const ModelConfig& model_cfg,
                  const EmbedderConfig& embed_cfg, const TrainConfig& train_cfg);

}  // namespace mmfuse
