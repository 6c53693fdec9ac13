#include "mmfuse/embedders.hpp"

#include <cctype>
#include <cmath>

#include "mmfuse/errors.hpp"

namespace mmfuse {

namespace {

constexpr double kDegToRad = 3.141592653589793238462643383279 / 180.0;

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Writes the (sin, cos) ladder for one radian-scaled coordinate into
// out[offset, offset + half).
void encode_coordinate(Matrix& out, std::size_t offset, std::size_t half,
                       double radians, double freq_base, std::size_t dim_g) {
  for (std::size_t j = 0; j < half; ++j) {
    const std::size_t pair = j / 2;
    const double freq = std::pow(
        freq_base, -2.0 * static_cast<double>(pair) / static_cast<double>(dim_g));
    const double angle = radians * freq;
    out(0, offset + j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
  }
}

}  // namespace

void validate(const EmbedderConfig& cfg) {
  if (cfg.text.dim_t < 1) throw ConfigError("text embedder: dim_t must be >= 1");
  if (cfg.image.dim_i < 1) throw ConfigError("image embedder: dim_i must be >= 1");
  if (cfg.geo.dim_g < 1 || cfg.geo.dim_g % 2 != 0) {
    throw ConfigError("geo embedder: dim_g must be a positive even count");
  }
  if (!(cfg.geo.freq_base > 1.0)) {
    throw ConfigError("geo embedder: freq_base must be > 1");
  }
}

Matrix embed_text(const std::string& text, const TextEmbedConfig& cfg) {
  Matrix out(1, cfg.dim_t);
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    const std::uint64_t bucket_hash = mix64(fnv1a64(token) ^ cfg.hash_seed);
    const std::uint64_t sign_hash = mix64(bucket_hash);
    const std::size_t bucket =
        static_cast<std::size_t>(bucket_hash % static_cast<std::uint64_t>(cfg.dim_t));
    out(0, bucket) += (sign_hash & 1) ? 1.0 : -1.0;
    token.clear();
  };
  for (unsigned char ch : text) {
    if (std::isspace(ch)) {
      flush();
    } else {
      token.push_back(static_cast<char>(std::tolower(ch)));
    }
  }
  flush();
  return l2_normalize_row(out);
}

Matrix embed_image(const std::optional<std::vector<double>>& features,
                   const ImageEmbedConfig& cfg) {
  if (!features) {
    return Matrix(1, cfg.dim_i);
  }
  if (features->size() != cfg.dim_i) {
    throw ShapeError("embed_image: feature length " +
                     std::to_string(features->size()) + " != dim_i " +
                     std::to_string(cfg.dim_i));
  }
  return l2_normalize_row(Matrix::row_vector(*features));
}

Matrix embed_geo(std::optional<double> lat, std::optional<double> lon,
                 const GeoEmbedConfig& cfg) {
  if (lat.has_value() != lon.has_value()) {
    throw ConfigError("embed_geo: lat and lon must both be present or absent");
  }
  Matrix out(1, cfg.dim_g);
  if (!lat) {
    return out;
  }
  if (*lat < -90.0 || *lat > 90.0) {
    throw ConfigError("embed_geo: latitude out of range [-90, 90]");
  }
  if (*lon < -180.0 || *lon > 180.0) {
    throw ConfigError("embed_geo: longitude out of range [-180, 180]");
  }
  const std::size_t half = cfg.dim_g / 2;
  encode_coordinate(out, 0, half, *lat * kDegToRad, cfg.freq_base, cfg.dim_g);
  encode_coordinate(out, half, half, *lon * kDegToRad, cfg.freq_base, cfg.dim_g);
  return out;
}

EmbeddedSample embed_sample(const Sample& sample, const EmbedderConfig& cfg,
                            const ModalityMask& mask) {
  EmbeddedSample out;
  out.label = sample.label;
  out.text = mask.use_text ? embed_text(sample.text, cfg.text)
                           : Matrix(1, cfg.text.dim_t);
  out.image = mask.use_image ? embed_image(sample.image_features, cfg.image)
                             : Matrix(1, cfg.image.dim_i);
  out.geo = mask.use_geo ? embed_geo(sample.lat, sample.lon, cfg.geo)
                         : Matrix(1, cfg.geo.dim_g);
  return out;
}

std::vector<EmbeddedSample> embed_dataset(const Dataset& dataset,
                                          const EmbedderConfig& cfg,
                                          const ModalityMask& mask) {
  std::vector<EmbeddedSample> out;
  out.reserve(dataset.samples.size());
  for (const Sample& s : dataset.samples) {
    out.push_back(embed_sample(s, cfg, mask));
  }
  return out;
}

}  // namespace mmfuse
