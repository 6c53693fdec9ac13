#include "mmfuse/trainer.hpp"

#include <cmath>

#include "mmfuse/errors.hpp"

namespace mmfuse {

namespace {

Matrix row_of(const Matrix& m, std::size_t r) {
  Matrix out(1, m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j) out(0, j) = m(r, j);
  return out;
}

void add_into_row(Matrix& m, std::size_t r, const Matrix& row) {
  for (std::size_t j = 0; j < m.cols(); ++j) m(r, j) += row(0, j);
}

// Backward through a row-wise softmax: dz_j = p_j (dp_j - sum_k dp_k p_k).
Matrix softmax_backward_row(const Matrix& p, const Matrix& dp) {
  Matrix dz(p.rows(), p.cols());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < p.cols(); ++j) dot += dp(i, j) * p(i, j);
    for (std::size_t j = 0; j < p.cols(); ++j) {
      dz(i, j) = p(i, j) * (dp(i, j) - dot);
    }
  }
  return dz;
}

std::size_t argmax_row(const Matrix& m, std::size_t r) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < m.cols(); ++j) {
    if (m(r, j) > m(r, best)) best = j;  // ties resolve to the lowest index
  }
  return best;
}

}  // namespace

void validate(const TrainConfig& cfg) {
  if (cfg.learning_rate <= 0.0) {
    throw ConfigError("train: learning_rate must be positive");
  }
  if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (cfg.weight_decay < 0.0 || cfg.weight_decay >= 1.0) {
    throw ConfigError("train: weight_decay must lie in [0, 1)");
  }
  if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0) {
    throw ConfigError("train: beta1/beta2 must lie in [0, 1)");
  }
  if (cfg.adam_eps <= 0.0) throw ConfigError("train: adam_eps must be positive");
}

Gradients zero_like(const ModelParams& params) {
  Gradients g;
  for (const ParamField& field : kParamFields) {
    const Matrix& src = params.*field.member;
    g.*field.member = Matrix(src.rows(), src.cols());
  }
  return g;
}

Gradients backward(const ForwardTrace& trace, const EmbeddedSample& sample,
                   const ModelParams& params, std::size_t label) {
  if (label >= trace.y_hat.cols()) {
    throw ConfigError("backward: label " + std::to_string(label) +
                      " outside [0, " + std::to_string(trace.y_hat.cols()) + ")");
  }
  Gradients g = zero_like(params);

  const bool dropped_x = !trace.mask_x.empty();
  const bool dropped_h = !trace.mask_h.empty();
  const Matrix x_active = dropped_x ? hadamard(trace.x, trace.mask_x) : trace.x;
  const Matrix h_active = dropped_h ? hadamard(trace.h, trace.mask_h) : trace.h;

  // Loss -> logits. The epsilon floor in the loss makes the exact gradient
  // (y_hat - onehot) scaled by y_l / (y_l + eps); keeping that factor means
  // the analytic gradient matches finite differences of the implemented loss.
  const double y_label = trace.y_hat(0, label);
  const double floor_scale = y_label / (y_label + kCrossEntropyFloor);
  Matrix dlogits = trace.y_hat;
  dlogits(0, label) -= 1.0;
  dlogits = scale(dlogits, floor_scale);

  // Classifier head.
  g.w_c = matmul(transpose(trace.y_adapt), dlogits);
  g.b_c = dlogits;
  const Matrix dy_adapt = matmul(dlogits, transpose(params.w_c));

  // Adaptive gate: y_adapt = gate (*) h_active, gate = sigmoid(a).
  const Matrix dgate = hadamard(dy_adapt, h_active);
  Matrix dh_active = hadamard(dy_adapt, trace.gate);
  Matrix ones_like_gate(trace.gate.rows(), trace.gate.cols(), 1.0);
  const Matrix da =
      hadamard(dgate, hadamard(trace.gate, subtract(ones_like_gate, trace.gate)));
  g.w_a = matmul(transpose(h_active), da);
  g.b_a = da;
  dh_active = add(dh_active, matmul(da, transpose(params.w_a)));

  // Dropout after attention.
  const Matrix dh = dropped_h ? hadamard(dh_active, trace.mask_h) : dh_active;

  // Attention: h = p v, p = softmax(scores), scores = q k^T / sqrt(d).
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(trace.q.cols()));
  const Matrix dp = matmul(dh, transpose(trace.v));
  Matrix dv = matmul(transpose(trace.p), dh);
  const Matrix dscores = softmax_backward_row(trace.p, dp);
  const Matrix dq = scale(matmul(dscores, trace.k), inv_sqrt_d);
  const Matrix dk = scale(matmul(transpose(dscores), trace.q), inv_sqrt_d);

  // Q/K/V generators; queries read only the text row of x.
  const Matrix x_text = row_of(x_active, 0);
  g.w_q = matmul(transpose(x_text), dq);
  g.w_k = matmul(transpose(x_active), dk);
  g.w_v = matmul(transpose(x_active), dv);

  Matrix dx_active = add(matmul(dk, transpose(params.w_k)),
                         matmul(dv, transpose(params.w_v)));
  add_into_row(dx_active, 0, matmul(dq, transpose(params.w_q)));

  // Dropout after fusion.
  const Matrix dx = dropped_x ? hadamard(dx_active, trace.mask_x) : dx_active;

  // Per-modality projections.
  const Matrix dx_t = row_of(dx, 0);
  const Matrix dx_i = row_of(dx, 1);
  const Matrix dx_g = row_of(dx, 2);
  g.proj_t = matmul(transpose(sample.text), dx_t);
  g.bias_t = dx_t;
  g.proj_i = matmul(transpose(sample.image), dx_i);
  g.bias_i = dx_i;
  g.proj_g = matmul(transpose(sample.geo), dx_g);
  g.bias_g = dx_g;

  return g;
}

AdamState make_adam_state(const ModelParams& params) {
  AdamState state;
  state.m = zero_like(params);
  state.v = zero_like(params);
  return state;
}

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state,
               const TrainConfig& cfg) {
  state.t += 1;
  const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  const double decay_factor = 1.0 - cfg.learning_rate * cfg.weight_decay;

  for (const ParamField& field : kParamFields) {
    Matrix& param = params.*field.member;
    const Matrix& grad = grads.*field.member;
    Matrix& m = state.m.*field.member;
    Matrix& v = state.v.*field.member;
    if (!param.same_shape(grad)) {
      throw ShapeError("adam_step: gradient shape " + shape_string(grad) +
                       " != parameter " + std::string(field.name) + " shape " +
                       shape_string(param));
    }
    for (std::size_t i = 0; i < param.size(); ++i) {
      double& p = param.data()[i];
      const double gi = grad.data()[i];
      p *= decay_factor;
      m.data()[i] = cfg.beta1 * m.data()[i] + (1.0 - cfg.beta1) * gi;
      v.data()[i] = cfg.beta2 * v.data()[i] + (1.0 - cfg.beta2) * gi * gi;
      const double m_hat = m.data()[i] / bias1;
      const double v_hat = v.data()[i] / bias2;
      p -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
  }
}

BatchResult batch_gradients(std::span<const EmbeddedSample> batch,
                            const ModelParams& params, const ModelConfig& cfg,
                            Mode mode, Rng* rng) {
  if (batch.empty()) {
    throw ConfigError("batch_gradients: empty batch");
  }
  BatchResult result;
  result.grads = zero_like(params);
  for (const EmbeddedSample& sample : batch) {
    const ForwardTrace trace = forward(sample, params, cfg, mode, rng);
    const auto label = static_cast<std::size_t>(sample.label);
    result.mean_loss += cross_entropy(trace.y_hat, label);
    const Gradients g = backward(trace, sample, params, label);
    for (const ParamField& field : kParamFields) {
      result.grads.*field.member =
          add(result.grads.*field.member, g.*field.member);
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const ParamField& field : kParamFields) {
    result.grads.*field.member = scale(result.grads.*field.member, inv);
  }
  result.mean_loss *= inv;
  return result;
}

std::vector<std::size_t> epoch_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  return order;
}

TrainResult train(const Dataset& dataset, const ModelConfig& model_cfg,
                  const EmbedderConfig& embed_cfg, const TrainConfig& train_cfg) {
  validate(model_cfg);
  validate(embed_cfg);
  validate(train_cfg);
  validate(dataset);
  if (dataset.samples.empty()) {
    throw ConfigError("train: dataset is empty");
  }
  if (dataset.num_classes() != model_cfg.num_classes) {
    throw ConfigError("train: dataset has " +
                      std::to_string(dataset.num_classes()) +
                      " classes, model expects " +
                      std::to_string(model_cfg.num_classes));
  }
  if (embed_cfg.text.dim_t != model_cfg.d_t ||
      embed_cfg.image.dim_i != model_cfg.d_i ||
      embed_cfg.geo.dim_g != model_cfg.d_g) {
    throw ConfigError("train: embedder dims do not match model dims");
  }
  if (dataset.image_dim != embed_cfg.image.dim_i) {
    throw ConfigError("train: dataset image_dim " +
                      std::to_string(dataset.image_dim) + " != embedder dim_i " +
                      std::to_string(embed_cfg.image.dim_i));
  }

  const std::vector<EmbeddedSample> embedded = embed_dataset(dataset, embed_cfg);

  Rng init_rng(derive_seed(train_cfg.seed, 0));
  TrainResult result;
  result.params = init_params(model_cfg, init_rng);
  AdamState state = make_adam_state(result.params);

  const std::size_t n = embedded.size();
  for (std::size_t epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
    Rng epoch_rng(derive_seed(train_cfg.seed, epoch));
    const std::vector<std::size_t> order = epoch_order(n, epoch_rng);

    double loss_sum = 0.0;
    std::size_t offset = 0;
    std::vector<EmbeddedSample> batch;
    while (offset < n) {
      const std::size_t take = std::min(train_cfg.batch_size, n - offset);
      batch.clear();
      for (std::size_t i = 0; i < take; ++i) {
        batch.push_back(embedded[order[offset + i]]);
      }
      const BatchResult br = batch_gradients(batch, result.params, model_cfg,
                                             Mode::train, &epoch_rng);
      adam_step(result.params, br.grads, state, train_cfg);
      loss_sum += br.mean_loss * static_cast<double>(take);
      offset += take;
    }

    // Post-update accuracy over the training set; the same computation path
    // evaluation uses, so downstream reports agree with the history.
    std::size_t correct = 0;
    for (const EmbeddedSample& sample : embedded) {
      const ForwardTrace trace =
          forward(sample, result.params, model_cfg, Mode::eval);
      if (argmax_row(trace.y_hat, 0) == static_cast<std::size_t>(sample.label)) {
        ++correct;
      }
    }

    result.history.push_back(EpochRecord{
        epoch,
        loss_sum / static_cast<double>(n),
        static_cast<double>(correct) / static_cast<double>(n),
    });
  }
  return result;
}

}  // namespace mmfuse
