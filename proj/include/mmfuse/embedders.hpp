#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmfuse/data.hpp"
#include "mmfuse/matrix.hpp"

namespace mmfuse {

// Deterministic, training-free embedders. Each one stands in for a pretrained
// encoder behind the same interface, so a future adapter backed by a real
// encoder can replace any of them without touching the model.

struct TextEmbedConfig {
  std::size_t dim_t = 32;
  std::uint64_t hash_seed = 0;
};

struct ImageEmbedConfig {
  std::size_t dim_i = 32;
};

struct GeoEmbedConfig {
  std::size_t dim_g = 16;       // must be even
  double freq_base = 10000.0;   // must be > 1
};

struct EmbedderConfig {
  TextEmbedConfig text;
  ImageEmbedConfig image;
  GeoEmbedConfig geo;
};

void validate(const EmbedderConfig& cfg);

// Signed feature hashing over lowercase whitespace tokens, L2-normalized.
// Empty text maps to the zero vector (missing-modality convention).
Matrix embed_text(const std::string& text, const TextEmbedConfig& cfg);

// Passthrough of precomputed features, L2-normalized; absent features map to
// the zero vector.
Matrix embed_image(const std::optional<std::vector<double>>& features,
                   const ImageEmbedConfig& cfg);

// Sinusoidal coordinate encoding: the first dim_g/2 entries encode latitude,
// the rest longitude, as (sin, cos) pairs of the radian-scaled coordinate at
// frequencies freq_base^(-2k/dim_g). Absent coordinates map to the zero vector.
Matrix embed_geo(std::optional<double> lat, std::optional<double> lon,
                 const GeoEmbedConfig& cfg);

// Eval-time ablation switch: a disabled modality embeds to the zero vector.
struct ModalityMask {
  bool use_text = true;
  bool use_image = true;
  bool use_geo = true;
};

struct EmbeddedSample {
  Matrix text;   // 1 x dim_t
  Matrix image;  // 1 x dim_i
  Matrix geo;    // 1 x dim_g
  int label = 0;
};

EmbeddedSample embed_sample(const Sample& sample, const EmbedderConfig& cfg,
                            const ModalityMask& mask = {});

std::vector<EmbeddedSample> embed_dataset(const Dataset& dataset,
                                          const EmbedderConfig& cfg,
                                          const ModalityMask& mask = {});

}  // namespace mmfuse
