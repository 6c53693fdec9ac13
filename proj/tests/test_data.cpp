#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>

#include "mmfuse/data.hpp"
#include "mmfuse/errors.hpp"
#include "mmfuse/rng.hpp"

using namespace mmfuse;

namespace {

bool bits_equal(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

bool samples_bit_equal(const Sample& a, const Sample& b) {
  if (a.id != b.id || a.text != b.text || a.label != b.label) return false;
  if (a.image_features.has_value() != b.image_features.has_value()) return false;
  if (a.image_features) {
    if (a.image_features->size() != b.image_features->size()) return false;
    for (std::size_t i = 0; i < a.image_features->size(); ++i) {
      if (!bits_equal((*a.image_features)[i], (*b.image_features)[i])) return false;
    }
  }
  if (a.lat.has_value() != b.lat.has_value()) return false;
  if (a.lat && (!bits_equal(*a.lat, *b.lat) || !bits_equal(*a.lon, *b.lon))) {
    return false;
  }
  return true;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

void write_lines(const std::filesystem::path& path,
                 const std::vector<std::string>& lines) {
  std::ofstream out(path);
  for (const std::string& line : lines) out << line << "\n";
}

}  // namespace

TEST_CASE("dataset round-trip is lossless down to the float bits") {
  SynthConfig cfg;
  cfg.num_classes = 4;
  cfg.samples_per_class = 6;
  cfg.noise_level = 0.35;
  cfg.seed = 99;
  const Dataset original = synth_generate(cfg);

  const auto path = temp_file("mmfuse_roundtrip.jsonl");
  save_dataset(original, path);
  const Dataset loaded = load_dataset(path);

  CHECK(loaded.class_names == original.class_names);
  CHECK(loaded.image_dim == original.image_dim);
  REQUIRE(loaded.samples.size() == original.samples.size());
  for (std::size_t i = 0; i < loaded.samples.size(); ++i) {
    CHECK(samples_bit_equal(loaded.samples[i], original.samples[i]));
  }

  SUBCASE("saving twice yields byte-identical files") {
    const auto path2 = temp_file("mmfuse_roundtrip2.jsonl");
    save_dataset(original, path2);
    std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(a)), {});
    const std::string sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
    std::filesystem::remove(path2);
  }
  std::filesystem::remove(path);
}

TEST_CASE("the documented example dataset parses") {
  const Dataset d = load_dataset(std::filesystem::path(MMFUSE_DOCS_DIR) /
                                 "example_dataset.jsonl");
  CHECK(d.class_names == std::vector<std::string>{"flood", "fire", "earthquake"});
  CHECK(d.image_dim == 4);
  CHECK(d.samples.size() == 4);
  CHECK_FALSE(d.samples[2].image_features.has_value());
  CHECK_FALSE(d.samples[2].lat.has_value());
  CHECK(d.samples[3].label == 0);
}

TEST_CASE("loader errors carry line numbers") {
  const auto path = temp_file("mmfuse_bad.jsonl");

  SUBCASE("unknown label") {
    write_lines(path, {
        R"({"class_names":["a","b"],"format_version":1,"image_dim":2})",
        R"({"id":"s0","text":"x","label":"a"})",
        R"({"id":"s1","text":"y","label":"zzz"})",
    });
    CHECK_THROWS_WITH_AS(load_dataset(path),
                         doctest::Contains("line 3"), ParseError);
  }

  SUBCASE("malformed json") {
    write_lines(path, {
        R"({"class_names":["a","b"],"format_version":1,"image_dim":2})",
        R"(not json at all)",
    });
    CHECK_THROWS_WITH_AS(load_dataset(path),
                         doctest::Contains("line 2"), ParseError);
  }

  SUBCASE("inconsistent image dimension") {
    write_lines(path, {
        R"({"class_names":["a","b"],"format_version":1,"image_dim":2})",
        R"({"id":"s0","text":"x","label":"a","image_features":[1.0,2.0,3.0]})",
    });
    CHECK_THROWS_WITH_AS(load_dataset(path),
                         doctest::Contains("line 2"), ParseError);
  }

  SUBCASE("coordinate out of range") {
    write_lines(path, {
        R"({"class_names":["a","b"],"format_version":1,"image_dim":2})",
        R"({"id":"s0","text":"x","label":"a","lat":95.0,"lon":0.0})",
    });
    CHECK_THROWS_AS(load_dataset(path), ParseError);
  }

  SUBCASE("lat without lon") {
    write_lines(path, {
        R"({"class_names":["a","b"],"format_version":1,"image_dim":2})",
        R"({"id":"s0","text":"x","label":"a","lat":10.0})",
    });
    CHECK_THROWS_AS(load_dataset(path), ParseError);
  }

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_dataset("/nonexistent/none.jsonl"), IoError);
  }

  std::filesystem::remove(path);
}

TEST_CASE("a header-only file is a valid empty dataset") {
  const auto path = temp_file("mmfuse_empty.jsonl");
  write_lines(path, {R"({"class_names":["a","b"],"format_version":1,"image_dim":2})"});
  const Dataset d = load_dataset(path);
  CHECK(d.samples.empty());
  CHECK(d.num_classes() == 2);

  save_dataset(d, path);
  CHECK(load_dataset(path).samples.empty());
  std::filesystem::remove(path);
}

TEST_CASE("stratified split") {
  SUBCASE("single class of 100 gives the 70/20/10 cut") {
    Dataset d;
    d.class_names = {"only", "ghost"};
    d.image_dim = 2;
    for (int i = 0; i < 100; ++i) {
      Sample s;
      s.id = "s" + std::to_string(i);
      s.text = "t";
      s.label = 0;
      d.samples.push_back(s);
    }
    const SplitResult parts = split(d, SplitFractions{}, 5);
    CHECK(parts.train.samples.size() == 70);
    CHECK(parts.val.samples.size() == 20);
    CHECK(parts.test.samples.size() == 10);
  }

  SUBCASE("same seed, same split; different seed, different split") {
    SynthConfig cfg;
    cfg.samples_per_class = 30;
    cfg.seed = 1;
    const Dataset d = synth_generate(cfg);
    const SplitResult a = split(d, SplitFractions{}, 7);
    const SplitResult b = split(d, SplitFractions{}, 7);
    const SplitResult c = split(d, SplitFractions{}, 8);
    auto ids = [](const Dataset& part) {
      std::vector<std::string> out;
      for (const Sample& s : part.samples) out.push_back(s.id);
      return out;
    };
    CHECK(ids(a.train) == ids(b.train));
    CHECK(ids(a.val) == ids(b.val));
    CHECK(ids(a.test) == ids(b.test));
    CHECK(ids(a.train) != ids(c.train));
  }

  SUBCASE("parts partition the input and preserve class balance") {
    SynthConfig cfg;
    cfg.num_classes = 2;
    cfg.samples_per_class = 50;
    cfg.seed = 3;
    const Dataset d = synth_generate(cfg);
    const SplitResult parts = split(d, SplitFractions{}, 11);

    std::multiset<std::string> all_ids;
    for (const Dataset* part : {&parts.train, &parts.val, &parts.test}) {
      for (const Sample& s : part->samples) all_ids.insert(s.id);
    }
    CHECK(all_ids.size() == d.samples.size());
    std::multiset<std::string> original_ids;
    for (const Sample& s : d.samples) original_ids.insert(s.id);
    CHECK(all_ids == original_ids);

    for (const Dataset* part : {&parts.train, &parts.val, &parts.test}) {
      long class0 = 0, class1 = 0;
      for (const Sample& s : part->samples) {
        (s.label == 0 ? class0 : class1) += 1;
      }
      CHECK(std::abs(class0 - class1) <= 1);
    }
  }

  SUBCASE("tiny classes land in train without error") {
    Dataset d;
    d.class_names = {"a", "b"};
    d.image_dim = 2;
    for (int i = 0; i < 2; ++i) {
      Sample s;
      s.id = "s" + std::to_string(i);
      s.label = i % 2;
      d.samples.push_back(s);
    }
    const SplitResult parts = split(d, SplitFractions{}, 1);
    CHECK(parts.train.samples.size() == 2);
    CHECK(parts.val.samples.empty());
    CHECK(parts.test.samples.empty());
  }

  SUBCASE("bad fractions are rejected") {
    const Dataset d = synth_generate(SynthConfig{});
    CHECK_THROWS_AS(split(d, SplitFractions{0.5, 0.2, 0.2}, 1), ConfigError);
    CHECK_THROWS_AS(split(d, SplitFractions{1.0, 0.0, 0.0}, 1), ConfigError);
  }
}

TEST_CASE("synthetic generator") {
  SUBCASE("determinism in, determinism out") {
    SynthConfig cfg;
    cfg.seed = 1;
    const Dataset a = synth_generate(cfg);
    const Dataset b = synth_generate(cfg);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
      CHECK(samples_bit_equal(a.samples[i], b.samples[i]));
    }
    cfg.seed = 2;
    const Dataset c = synth_generate(cfg);
    bool any_difference = false;
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
      if (!samples_bit_equal(a.samples[i], c.samples[i])) any_difference = true;
    }
    CHECK(any_difference);
  }

  SUBCASE("noise level zero keeps text class-pure") {
    SynthConfig cfg;
    cfg.noise_level = 0.0;
    cfg.seed = 4;
    const Dataset d = synth_generate(cfg);
    for (const Sample& s : d.samples) {
      const std::string& cls = d.class_names[static_cast<std::size_t>(s.label)];
      std::istringstream words(s.text);
      std::string tok;
      while (words >> tok) {
        CHECK(tok.rfind(cls + "_tok", 0) == 0);
      }
    }
  }

  SUBCASE("label distribution is exactly balanced") {
    SynthConfig cfg;
    cfg.num_classes = 5;
    cfg.samples_per_class = 7;
    cfg.seed = 5;
    const Dataset d = synth_generate(cfg);
    REQUIRE(d.samples.size() == 35);
    std::vector<int> counts(5, 0);
    for (const Sample& s : d.samples) ++counts[static_cast<std::size_t>(s.label)];
    for (int c : counts) CHECK(c == 7);
  }

  SUBCASE("coordinates stay in range even with huge spread") {
    SynthConfig cfg;
    cfg.geo_spread = 500.0;
    cfg.seed = 6;
    const Dataset d = synth_generate(cfg);
    for (const Sample& s : d.samples) {
      CHECK(*s.lat >= -90.0);
      CHECK(*s.lat <= 90.0);
      CHECK(*s.lon >= -180.0);
      CHECK(*s.lon <= 180.0);
    }
  }

  SUBCASE("noise-free image features admit a perfect centroid rule") {
    SynthConfig cfg;
    cfg.num_classes = 3;
    cfg.samples_per_class = 20;
    cfg.noise_level = 0.0;
    cfg.seed = 7;
    const Dataset d = synth_generate(cfg);

    // Oracle: nearest class centroid on image features alone.
    std::vector<std::vector<double>> centroids(3,
        std::vector<double>(d.image_dim, 0.0));
    std::vector<double> counts(3, 0.0);
    for (const Sample& s : d.samples) {
      const auto c = static_cast<std::size_t>(s.label);
      counts[c] += 1.0;
      for (std::size_t j = 0; j < d.image_dim; ++j) {
        centroids[c][j] += (*s.image_features)[j];
      }
    }
    for (std::size_t c = 0; c < 3; ++c) {
      for (double& v : centroids[c]) v /= counts[c];
    }
    for (const Sample& s : d.samples) {
      std::size_t best = 0;
      double best_dist = 1e300;
      for (std::size_t c = 0; c < 3; ++c) {
        double dist = 0.0;
        for (std::size_t j = 0; j < d.image_dim; ++j) {
          const double diff = (*s.image_features)[j] - centroids[c][j];
          dist += diff * diff;
        }
        if (dist < best_dist) {
          best_dist = dist;
          best = c;
        }
      }
      CHECK(static_cast<int>(best) == s.label);
    }
  }

  SUBCASE("invalid configurations are rejected") {
    SynthConfig cfg;
    cfg.num_classes = 1;
    CHECK_THROWS_AS(synth_generate(cfg), ConfigError);
    cfg.num_classes = 3;
    cfg.noise_level = 1.5;
    CHECK_THROWS_AS(synth_generate(cfg), ConfigError);
    cfg.noise_level = 0.0;
    cfg.image_dim = 2;  // fewer dims than classes
    CHECK_THROWS_AS(synth_generate(cfg), ConfigError);
  }
}
