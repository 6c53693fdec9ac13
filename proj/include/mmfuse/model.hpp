#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string_view>

#include "mmfuse/embedders.hpp"
#include "mmfuse/matrix.hpp"
#include "mmfuse/rng.hpp"

namespace mmfuse {

struct ModelConfig {
  std::size_t d = 64;    // unified embedding dimension
  std::size_t d_t = 32;  // modality dims; must match the embedder configs
  std::size_t d_i = 32;
  std::size_t d_g = 16;
  std::size_t num_classes = 0;
  double dropout_rate = 0.2;
};

void validate(const ModelConfig& cfg);

// Every learned tensor. Weight matrices are stored so that activations stay
// row vectors: classifier weights are d x C (the transpose of the usual
// C x d statement), a layout choice with no semantic content.
struct ModelParams {
  Matrix proj_t, bias_t;  // d_t x d, 1 x d
  Matrix proj_i, bias_i;  // d_i x d, 1 x d
  Matrix proj_g, bias_g;  // d_g x d, 1 x d
  Matrix w_q, w_k, w_v;   // d x d each
  Matrix w_a, b_a;        // d x d, 1 x d
  Matrix w_c, b_c;        // d x C, 1 x C
};

struct ParamField {
  std::string_view name;
  Matrix ModelParams::* member;
};

// Fixed iteration order used by the optimizer, checkpointing and gradient
// checking alike.
inline constexpr std::array<ParamField, 13> kParamFields{{
    {"proj_t", &ModelParams::proj_t},
    {"bias_t", &ModelParams::bias_t},
    {"proj_i", &ModelParams::proj_i},
    {"bias_i", &ModelParams::bias_i},
    {"proj_g", &ModelParams::proj_g},
    {"bias_g", &ModelParams::bias_g},
    {"w_q", &ModelParams::w_q},
    {"w_k", &ModelParams::w_k},
    {"w_v", &ModelParams::w_v},
    {"w_a", &ModelParams::w_a},
    {"b_a", &ModelParams::b_a},
    {"w_c", &ModelParams::w_c},
    {"b_c", &ModelParams::b_c},
}};

// All-zero tensors with the shapes the config dictates.
ModelParams zero_params(const ModelConfig& cfg);

// Xavier weights, zero biases.
ModelParams init_params(const ModelConfig& cfg, Rng& rng);

// Every tensor (biases included) drawn Xavier-uniform; used by gradient
// checking to avoid testing at the special zero-bias point.
ModelParams random_params(const ModelConfig& cfg, Rng& rng);

// All intermediate activations of one forward pass, retained so the backward
// pass is exact. x and h are stored pre-dropout together with the masks; the
// dropped values are recomputed in backward (a pure product, no drift).
struct ForwardTrace {
  Matrix x;       // 3 x d fused tokens (rows: text, image, geo)
  Matrix mask_x;  // dropout mask on x (empty in eval mode)
  Matrix q;       // 1 x d query from the text row
  Matrix k;       // 3 x d
  Matrix v;       // 3 x d
  Matrix scores;  // 1 x 3 pre-softmax
  Matrix p;       // 1 x 3 attention weights
  Matrix h;       // 1 x d attended output
  Matrix mask_h;  // dropout mask on h (empty in eval mode)
  Matrix gate;    // 1 x d
  Matrix y_adapt; // 1 x d
  Matrix logits;  // 1 x C
  Matrix y_hat;   // 1 x C probabilities
};

// Projects the three modality embeddings into the unified dimension and
// stacks them as one token per modality.
Matrix fuse(const Matrix& t_vec, const Matrix& i_vec, const Matrix& g_vec,
            const ModelParams& params, const ModelConfig& cfg);

struct AttentionOut {
  Matrix p;  // attention weights, one row per query
  Matrix h;  // attended output
};

// p = softmax_rows(q k^T / sqrt(d)); h = p v. Returns both the score matrix
// and the attended output.
AttentionOut scaled_dot_attention(const Matrix& q, const Matrix& k,
                                  const Matrix& v, std::size_t d);

// Queries from the text row only; keys and values from all modality rows.
AttentionOut cross_modal_attention(const Matrix& x, const ModelParams& params);

struct GateOut {
  Matrix gate;     // sigmoid gate in (0, 1)
  Matrix y_adapt;  // gate (*) h
};

GateOut adaptive_gate(const Matrix& h, const ModelParams& params);

struct ClassifyOut {
  Matrix logits;
  Matrix y_hat;
};

ClassifyOut classify(const Matrix& y_adapt, const ModelParams& params);

// -log(y_hat[label] + 1e-12); the floor keeps a saturated softmax finite.
double cross_entropy(const Matrix& y_hat, std::size_t label);

inline constexpr double kCrossEntropyFloor = 1e-12;

enum class Mode { train, eval };

// Full chain: fuse -> dropout -> cross-modal attention -> dropout ->
// adaptive gate -> classify. rng is required only in train mode with a
// nonzero dropout rate.
ForwardTrace forward(const EmbeddedSample& sample, const ModelParams& params,
                     const ModelConfig& cfg, Mode mode, Rng* rng = nullptr);

// Checkpoint document: model + embedder settings and all parameters.
// Write-then-read is bit-exact on parameter values.
struct Checkpoint {
  ModelConfig model;
  EmbedderConfig embed;
  ModelParams params;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mmfuse
