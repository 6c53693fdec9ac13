#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mmfuse {

// One multimodal record. Any modality may be missing: empty text, absent
// image features, absent coordinates. Coordinates are degrees and travel as a
// pair (both present or both absent).
struct Sample {
  std::string id;
  std::string text;
  std::optional<std::vector<double>> image_features;
  std::optional<double> lat;
  std::optional<double> lon;
  int label = 0;
};

struct Dataset {
  std::vector<std::string> class_names;
  std::size_t image_dim = 0;
  std::vector<Sample> samples;

  std::size_t num_classes() const { return class_names.size(); }
};

void validate(const Dataset& dataset);

// Line-delimited format: a header object carrying format_version, class_names
// and image_dim, then one object per sample. See docs/example_dataset.jsonl.
Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

struct SplitFractions {
  double train = 0.7;
  double val = 0.2;
  double test = 0.1;
};

void validate(const SplitFractions& fractions);

struct SplitResult {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Stratified split: within each class a seeded shuffle, then a proportional
// cut with the rounding residue going to the train part.
SplitResult split(const Dataset& dataset, const SplitFractions& fractions,
                  std::uint64_t seed);

// Class-separable synthetic generator. Class signal is planted in all three
// modalities: class-exclusive token vocabulary, class-centered Gaussian image
// features, class-centered coordinates.
struct SynthConfig {
  std::size_t num_classes = 3;
  std::size_t samples_per_class = 20;
  std::size_t vocab_per_class = 8;
  std::size_t shared_vocab = 16;
  std::vector<std::pair<double, double>> geo_centers;  // empty -> auto placement
  double geo_spread = 2.0;                             // degrees std
  std::size_t image_dim = 32;
  double image_center_distance = 4.0;
  double noise_level = 0.0;  // in [0, 1]
  std::uint64_t seed = 0;
};

void validate(const SynthConfig& cfg);

Dataset synth_generate(const SynthConfig& cfg);

}  // namespace mmfuse
