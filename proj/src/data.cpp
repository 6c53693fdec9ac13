#include "mmfuse/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "mmfuse/errors.hpp"
#include "mmfuse/rng.hpp"

namespace mmfuse {

namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

// Disaster-style category names for the synthetic generator; datasets with
// more classes than this fall back to numbered names.
const std::vector<std::string> kDefaultClassNames = {
    "flood",     "fire",      "earthquake", "hurricane", "landslide",
    "collapse",  "gas_leak",  "water_leak", "storm",     "drought",
    "tsunami",   "heatwave",
};

std::string line_error(std::size_t line_no, const std::string& what) {
  return "line " + std::to_string(line_no) + ": " + what;
}

void check_coordinates(double lat, double lon, std::size_t line_no) {
  if (lat < -90.0 || lat > 90.0) {
    throw ParseError(line_error(line_no, "latitude out of range [-90, 90]"));
  }
  if (lon < -180.0 || lon > 180.0) {
    throw ParseError(line_error(line_no, "longitude out of range [-180, 180]"));
  }
}

}  // namespace

void validate(const Dataset& dataset) {
  if (dataset.class_names.empty()) {
    throw ConfigError("dataset has no class names");
  }
  std::vector<std::string> names = dataset.class_names;
  std::sort(names.begin(), names.end());
  if (std::adjacent_find(names.begin(), names.end()) != names.end()) {
    throw ConfigError("dataset class names are not unique");
  }
  const int num_classes = static_cast<int>(dataset.num_classes());
  for (const Sample& s : dataset.samples) {
    if (s.label < 0 || s.label >= num_classes) {
      throw ConfigError("sample " + s.id + ": label " + std::to_string(s.label) +
                        " outside [0, " + std::to_string(num_classes) + ")");
    }
    if (s.image_features && s.image_features->size() != dataset.image_dim) {
      throw ConfigError("sample " + s.id + ": image feature length " +
                        std::to_string(s.image_features->size()) +
                        " != declared image_dim " +
                        std::to_string(dataset.image_dim));
    }
    if (s.lat.has_value() != s.lon.has_value()) {
      throw ConfigError("sample " + s.id + ": lat/lon must both be present or absent");
    }
  }
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open dataset file: " + path.string());
  }

  std::string line;
  std::size_t line_no = 0;

  // Header line.
  if (!std::getline(in, line)) {
    throw ParseError("line 1: empty file, expected header object");
  }
  ++line_no;
  Dataset dataset;
  try {
    const json header = json::parse(line);
    if (header.at("format_version").get<int>() != kFormatVersion) {
      throw ParseError(line_error(line_no, "unsupported format_version"));
    }
    dataset.class_names = header.at("class_names").get<std::vector<std::string>>();
    dataset.image_dim = header.at("image_dim").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ParseError(line_error(line_no, std::string("bad header: ") + e.what()));
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(line_error(line_no, std::string("bad record: ") + e.what()));
    }
    Sample s;
    try {
      s.id = record.at("id").get<std::string>();
      s.text = record.value("text", std::string{});
      const std::string label_name = record.at("label").get<std::string>();
      const auto it = std::find(dataset.class_names.begin(),
                                dataset.class_names.end(), label_name);
      if (it == dataset.class_names.end()) {
        throw ParseError(line_error(line_no, "unknown label \"" + label_name + "\""));
      }
      s.label = static_cast<int>(it - dataset.class_names.begin());
      if (record.contains("image_features")) {
        s.image_features = record.at("image_features").get<std::vector<double>>();
        if (s.image_features->size() != dataset.image_dim) {
          throw ParseError(line_error(
              line_no, "image_features length " +
                           std::to_string(s.image_features->size()) +
                           " != header image_dim " +
                           std::to_string(dataset.image_dim)));
        }
      }
      const bool has_lat = record.contains("lat");
      const bool has_lon = record.contains("lon");
      if (has_lat != has_lon) {
        throw ParseError(line_error(line_no, "lat and lon must appear together"));
      }
      if (has_lat) {
        s.lat = record.at("lat").get<double>();
        s.lon = record.at("lon").get<double>();
        check_coordinates(*s.lat, *s.lon, line_no);
      }
    } catch (const json::exception& e) {
      throw ParseError(line_error(line_no, std::string("bad record: ") + e.what()));
    }
    dataset.samples.push_back(std::move(s));
  }

  validate(dataset);
  return dataset;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  validate(dataset);
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write dataset file: " + path.string());
  }
  json header;
  header["format_version"] = kFormatVersion;
  header["class_names"] = dataset.class_names;
  header["image_dim"] = dataset.image_dim;
  out << header.dump() << "\n";
  for (const Sample& s : dataset.samples) {
    json record;
    record["id"] = s.id;
    record["text"] = s.text;
    record["label"] = dataset.class_names[static_cast<std::size_t>(s.label)];
    if (s.image_features) record["image_features"] = *s.image_features;
    if (s.lat) {
      record["lat"] = *s.lat;
      record["lon"] = *s.lon;
    }
    out << record.dump() << "\n";
  }
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

void validate(const SplitFractions& fractions) {
  if (fractions.train <= 0.0 || fractions.val <= 0.0 || fractions.test <= 0.0) {
    throw ConfigError("split fractions must be positive");
  }
  const double sum = fractions.train + fractions.val + fractions.test;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1, got " + std::to_string(sum));
  }
}

SplitResult split(const Dataset& dataset, const SplitFractions& fractions,
                  std::uint64_t seed) {
  validate(fractions);
  validate(dataset);

  SplitResult result;
  for (Dataset* part : {&result.train, &result.val, &result.test}) {
    part->class_names = dataset.class_names;
    part->image_dim = dataset.image_dim;
  }

  for (std::size_t c = 0; c < dataset.num_classes(); ++c) {
    std::vector<std::size_t> indices;
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
      if (dataset.samples[i].label == static_cast<int>(c)) indices.push_back(i);
    }
    Rng rng(derive_seed(seed, c));
    rng.shuffle(indices);

    const std::size_t n = indices.size();
    const auto n_val = static_cast<std::size_t>(
        std::floor(fractions.val * static_cast<double>(n)));
    const auto n_test = static_cast<std::size_t>(
        std::floor(fractions.test * static_cast<double>(n)));
    const std::size_t n_train = n - n_val - n_test;  // residue goes to train

    for (std::size_t k = 0; k < n; ++k) {
      const Sample& s = dataset.samples[indices[k]];
      if (k < n_train) {
        result.train.samples.push_back(s);
      } else if (k < n_train + n_val) {
        result.val.samples.push_back(s);
      } else {
        result.test.samples.push_back(s);
      }
    }
  }
  return result;
}

void validate(const SynthConfig& cfg) {
  if (cfg.num_classes < 2) {
    throw ConfigError("synth: num_classes must be >= 2");
  }
  if (cfg.samples_per_class < 1) {
    throw ConfigError("synth: samples_per_class must be >= 1");
  }
  if (cfg.vocab_per_class < 1) {
    throw ConfigError("synth: vocab_per_class must be >= 1");
  }
  if (cfg.noise_level < 0.0 || cfg.noise_level > 1.0) {
    throw ConfigError("synth: noise_level must lie in [0, 1]");
  }
  if (cfg.noise_level > 0.0 && cfg.shared_vocab == 0) {
    throw ConfigError("synth: shared_vocab must be positive when noise_level > 0");
  }
  if (cfg.image_dim < cfg.num_classes) {
    throw ConfigError("synth: image_dim must be >= num_classes to place class means");
  }
  if (!cfg.geo_centers.empty() && cfg.geo_centers.size() != cfg.num_classes) {
    throw ConfigError("synth: geo_centers must list one (lat, lon) per class");
  }
  if (cfg.geo_spread < 0.0) {
    throw ConfigError("synth: geo_spread must be nonnegative");
  }
}

Dataset synth_generate(const SynthConfig& cfg) {
  validate(cfg);

  Dataset dataset;
  dataset.image_dim = cfg.image_dim;
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    dataset.class_names.push_back(c < kDefaultClassNames.size()
                                      ? kDefaultClassNames[c]
                                      : "class_" + std::to_string(c));
  }

  // Class geo centers: caller-provided or placed on a ring well inside the
  // valid coordinate ranges.
  std::vector<std::pair<double, double>> centers = cfg.geo_centers;
  if (centers.empty()) {
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
      const double angle = 2.0 * 3.141592653589793 * static_cast<double>(c) /
                           static_cast<double>(cfg.num_classes);
      centers.emplace_back(35.0 * std::sin(angle), 140.0 * std::cos(angle));
    }
  }

  // One axis per class: means (d/sqrt(2)) * e_c are pairwise exactly
  // image_center_distance apart.
  const double mean_coord = cfg.image_center_distance / std::sqrt(2.0);

  constexpr std::size_t kTokensPerSample = 8;
  Rng rng(cfg.seed);
  std::size_t serial = 0;
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    for (std::size_t k = 0; k < cfg.samples_per_class; ++k) {
      Sample s;
      s.id = "s" + std::to_string(serial++);
      s.label = static_cast<int>(c);

      std::ostringstream text;
      for (std::size_t t = 0; t < kTokensPerSample; ++t) {
        if (t > 0) text << ' ';
        if (rng.next_double() < cfg.noise_level) {
          text << "shared_tok" << rng.next_below(cfg.shared_vocab);
        } else {
          text << dataset.class_names[c] << "_tok"
               << rng.next_below(cfg.vocab_per_class);
        }
      }
      s.text = text.str();

      std::vector<double> features(cfg.image_dim, 0.0);
      features[c] = mean_coord;
      for (double& f : features) f += cfg.noise_level * rng.normal();
      s.image_features = std::move(features);

      const double lat = centers[c].first + cfg.geo_spread * rng.normal();
      const double lon = centers[c].second + cfg.geo_spread * rng.normal();
      s.lat = std::clamp(lat, -90.0, 90.0);
      s.lon = std::clamp(lon, -180.0, 180.0);

      dataset.samples.push_back(std::move(s));
    }
  }
  return dataset;
}

}  // namespace mmfuse
