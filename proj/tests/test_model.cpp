#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "mmfuse/errors.hpp"
#include "mmfuse/model.hpp"
#include "test_support.hpp"

using namespace mmfuse;
using test::max_abs_diff;
using test::random_matrix;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.d = 4;
  cfg.d_t = 3;
  cfg.d_i = 2;
  cfg.d_g = 2;
  cfg.num_classes = 3;
  cfg.dropout_rate = 0.0;
  return cfg;
}

EmbeddedSample random_sample(const ModelConfig& cfg, Rng& rng) {
  EmbeddedSample s;
  s.text = random_matrix(1, cfg.d_t, rng);
  s.image = random_matrix(1, cfg.d_i, rng);
  s.geo = random_matrix(1, cfg.d_g, rng);
  s.label = static_cast<int>(rng.next_below(cfg.num_classes));
  return s;
}

}  // namespace

TEST_CASE("fuse stacks one projected token per modality") {
  const ModelConfig cfg = tiny_config();

  SUBCASE("zero inputs and zero biases give the zero matrix") {
    const ModelParams p = zero_params(cfg);
    const Matrix x = fuse(Matrix(1, 3), Matrix(1, 2), Matrix(1, 2), p, cfg);
    CHECK(x == Matrix(3, 4));
  }

  SUBCASE("identity projection passes the text embedding through") {
    ModelConfig square = cfg;
    square.d_t = square.d;
    ModelParams p = zero_params(square);
    p.proj_t = Matrix::identity(square.d);
    const Matrix e1 = Matrix::from_rows({{1, 0, 0, 0}});
    const Matrix x = fuse(e1, Matrix(1, 2), Matrix(1, 2), p, square);
    for (std::size_t j = 0; j < square.d; ++j) {
      CHECK(x(0, j) == e1(0, j));
    }
  }

  SUBCASE("each output row depends only on its own modality") {
    Rng rng(7);
    const ModelParams p = random_params(cfg, rng);
    const EmbeddedSample s = random_sample(cfg, rng);
    const Matrix base = fuse(s.text, s.image, s.geo, p, cfg);

    Matrix bumped_image = s.image;
    bumped_image(0, 0) += 0.5;
    const Matrix x = fuse(s.text, bumped_image, s.geo, p, cfg);
    for (std::size_t j = 0; j < cfg.d; ++j) {
      CHECK(x(0, j) == base(0, j));
      CHECK(x(2, j) == base(2, j));
    }
    CHECK(x != base);
  }

  SUBCASE("wrong vector lengths are rejected") {
    const ModelParams p = zero_params(cfg);
    CHECK_THROWS_AS(fuse(Matrix(1, 5), Matrix(1, 2), Matrix(1, 2), p, cfg),
                    ShapeError);
  }
}

TEST_CASE("scaled dot attention") {
  SUBCASE("identical key rows give uniform weights and the value mean") {
    Rng rng(13);
    const Matrix q = random_matrix(1, 4, rng);
    Matrix k(3, 4);
    for (std::size_t j = 0; j < 4; ++j) {
      const double v = rng.uniform(-1.0, 1.0);
      k(0, j) = k(1, j) = k(2, j) = v;
    }
    const Matrix v = random_matrix(3, 4, rng);
    const AttentionOut out = scaled_dot_attention(q, k, v, 4);
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(out.p(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
    CHECK(max_abs_diff(out.h, mean_rows(v)) < 1e-12);
  }

  SUBCASE("query orthogonal to every key gives uniform weights") {
    const Matrix q = Matrix::from_rows({{1.0, 0.0}});
    const Matrix k = Matrix::from_rows({{0.0, 1.0}, {0.0, -2.0}, {0.0, 5.0}});
    const Matrix v = Matrix::from_rows({{1.0, 2.0}, {3.0, 4.0}, {5.0, 6.0}});
    const AttentionOut out = scaled_dot_attention(q, k, v, 2);
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(out.p(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
  }

  SUBCASE("identity q=k=v at d=2, diagonal weight is sigma(1/sqrt 2)") {
    const Matrix eye = Matrix::identity(2);
    const AttentionOut out = scaled_dot_attention(eye, eye, eye, 2);
    const double star = std::exp(1.0 / std::sqrt(2.0)) /
                        (std::exp(1.0 / std::sqrt(2.0)) + 1.0);
    CHECK(star == doctest::Approx(0.6698).epsilon(1e-4));
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(out.p(i, i) == doctest::Approx(star).epsilon(1e-12));
      CHECK(out.p(i, 1 - i) == doctest::Approx(1.0 - star).epsilon(1e-12));
    }
  }

  SUBCASE("shape violations are rejected") {
    CHECK_THROWS_AS(scaled_dot_attention(Matrix(1, 3), Matrix(3, 4),
                                         Matrix(3, 4), 4),
                    ShapeError);
    CHECK_THROWS_AS(scaled_dot_attention(Matrix(1, 4), Matrix(3, 4),
                                         Matrix(2, 4), 4),
                    ShapeError);
  }
}

TEST_CASE("cross modal attention") {
  const ModelConfig cfg = tiny_config();

  SUBCASE("zero score weights give uniform attention") {
    Rng rng(19);
    ModelParams p = random_params(cfg, rng);
    p.w_q = Matrix(cfg.d, cfg.d);
    p.w_k = Matrix(cfg.d, cfg.d);
    const Matrix x = random_matrix(3, cfg.d, rng);
    const AttentionOut out = cross_modal_attention(x, p);
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(out.p(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
  }

  SUBCASE("zero value weights give a zero output regardless of p") {
    Rng rng(23);
    ModelParams p = random_params(cfg, rng);
    p.w_v = Matrix(cfg.d, cfg.d);
    const Matrix x = random_matrix(3, cfg.d, rng);
    const AttentionOut out = cross_modal_attention(x, p);
    CHECK(out.h == Matrix(1, cfg.d));
  }

  SUBCASE("weights are strictly positive and sum to one") {
    Rng rng(29);
    for (int trial = 0; trial < 100; ++trial) {
      const ModelParams p = random_params(cfg, rng);
      const Matrix x = random_matrix(3, cfg.d, rng);
      const AttentionOut out = cross_modal_attention(x, p);
      double sum = 0.0;
      for (std::size_t j = 0; j < 3; ++j) {
        CHECK(out.p(0, j) > 0.0);
        sum += out.p(0, j);
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }

  SUBCASE("attention is permutation-equivariant over the key/value rows") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
      const ModelParams p = random_params(cfg, rng);
      const Matrix x = random_matrix(3, cfg.d, rng);
      Matrix swapped = x;  // image and geo tokens exchanged
      for (std::size_t j = 0; j < cfg.d; ++j) {
        std::swap(swapped(1, j), swapped(2, j));
      }
      const AttentionOut a = cross_modal_attention(x, p);
      const AttentionOut b = cross_modal_attention(swapped, p);
      CHECK(max_abs_diff(a.h, b.h) < 1e-12);
      CHECK(std::abs(a.p(0, 1) - b.p(0, 2)) < 1e-12);
      CHECK(std::abs(a.p(0, 2) - b.p(0, 1)) < 1e-12);
    }
  }
}

TEST_CASE("adaptive gate") {
  const ModelConfig cfg = tiny_config();

  SUBCASE("zero input and bias: gate is one half, output zero") {
    Rng rng(37);
    ModelParams p = random_params(cfg, rng);
    p.b_a = Matrix(1, cfg.d);
    const GateOut out = adaptive_gate(Matrix(1, cfg.d), p);
    CHECK(out.gate == Matrix(1, cfg.d, 0.5));
    CHECK(out.y_adapt == Matrix(1, cfg.d));
  }

  SUBCASE("a saturated gate is the identity") {
    Rng rng(41);
    ModelParams p = random_params(cfg, rng);
    p.b_a = Matrix(1, cfg.d, 50.0);
    p.w_a = Matrix(cfg.d, cfg.d);
    const Matrix h = random_matrix(1, cfg.d, rng);
    const GateOut out = adaptive_gate(h, p);
    CHECK(max_abs_diff(out.y_adapt, h) < 1e-12);
  }

  SUBCASE("zero weights halve the input exactly") {
    const ModelParams p = zero_params(cfg);
    const Matrix h = Matrix::from_rows({{1.0, -2.0, 3.0, -4.0}});
    const GateOut out = adaptive_gate(h, p);
    CHECK(out.y_adapt == scale(h, 0.5));
  }

  SUBCASE("gate entries always lie strictly inside (0, 1)") {
    Rng rng(43);
    for (int trial = 0; trial < 100; ++trial) {
      const ModelParams p = random_params(cfg, rng);
      const GateOut out = adaptive_gate(random_matrix(1, cfg.d, rng), p);
      for (double g : out.gate.data()) {
        CHECK(g > 0.0);
        CHECK(g < 1.0);
      }
    }
  }
}

TEST_CASE("classification head") {
  const ModelConfig cfg = tiny_config();

  SUBCASE("zero head gives the uniform distribution") {
    ModelConfig four = cfg;
    four.num_classes = 4;
    const ModelParams p = zero_params(four);
    const ClassifyOut out = classify(Matrix::from_rows({{1, 2, 3, 4}}), p);
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(out.y_hat(0, c) == doctest::Approx(0.25).epsilon(1e-12));
    }
  }

  SUBCASE("bias alone steers the argmax") {
    ModelParams p = zero_params(cfg);
    p.b_c(0, 0) = 10.0;
    const ClassifyOut out = classify(Matrix(1, cfg.d), p);
    CHECK(out.y_hat(0, 0) > out.y_hat(0, 1));
    CHECK(out.y_hat(0, 0) > out.y_hat(0, 2));
  }

  SUBCASE("probabilities sum to one for random inputs") {
    Rng rng(47);
    for (int trial = 0; trial < 100; ++trial) {
      const ModelParams p = random_params(cfg, rng);
      const ClassifyOut out = classify(random_matrix(1, cfg.d, rng), p);
      double sum = 0.0;
      for (std::size_t c = 0; c < cfg.num_classes; ++c) sum += out.y_hat(0, c);
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }

  SUBCASE("positive rescaling of logits never moves the argmax") {
    Rng rng(53);
    for (int trial = 0; trial < 100; ++trial) {
      const Matrix logits = random_matrix(1, 5, rng, -3.0, 3.0);
      const Matrix p1 = softmax_rows(logits);
      const Matrix p2 = softmax_rows(scale(logits, rng.uniform(0.01, 100.0)));
      std::size_t arg1 = 0, arg2 = 0;
      for (std::size_t j = 1; j < 5; ++j) {
        if (p1(0, j) > p1(0, arg1)) arg1 = j;
        if (p2(0, j) > p2(0, arg2)) arg2 = j;
      }
      CHECK(arg1 == arg2);
    }
  }
}

TEST_CASE("cross entropy") {
  SUBCASE("perfect prediction costs nothing") {
    const Matrix one_hot = Matrix::from_rows({{0.0, 1.0, 0.0}});
    CHECK(std::abs(cross_entropy(one_hot, 1)) < 1e-9);
  }

  SUBCASE("uniform prediction costs ln C") {
    const Matrix uniform = Matrix(1, 3, 1.0 / 3.0);
    CHECK(cross_entropy(uniform, 0) == doctest::Approx(std::log(3.0)).epsilon(1e-9));
  }

  SUBCASE("hand value") {
    const Matrix y = Matrix::from_rows({{0.7, 0.3}});
    CHECK(cross_entropy(y, 1) == doctest::Approx(-std::log(0.3)).epsilon(1e-9));
    CHECK(cross_entropy(y, 1) == doctest::Approx(1.20397).epsilon(1e-5));
  }

  SUBCASE("label out of range is rejected") {
    CHECK_THROWS_AS(cross_entropy(Matrix(1, 3, 1.0 / 3.0), 3), ConfigError);
  }

  SUBCASE("a fully saturated wrong prediction stays finite") {
    const Matrix y = Matrix::from_rows({{1.0, 0.0}});
    CHECK(std::isfinite(cross_entropy(y, 1)));
  }
}

TEST_CASE("forward pass") {
  const ModelConfig cfg = tiny_config();
  Rng rng(59);
  const ModelParams p = random_params(cfg, rng);
  const EmbeddedSample s = random_sample(cfg, rng);

  SUBCASE("eval mode is pure") {
    const ForwardTrace a = forward(s, p, cfg, Mode::eval);
    const ForwardTrace b = forward(s, p, cfg, Mode::eval);
    CHECK(a.x == b.x);
    CHECK(a.p == b.p);
    CHECK(a.h == b.h);
    CHECK(a.gate == b.gate);
    CHECK(a.y_hat == b.y_hat);
    CHECK(a.mask_x.empty());
    CHECK(a.mask_h.empty());
  }

  SUBCASE("train mode with zero dropout equals eval mode") {
    Rng dropout_rng(1);
    const ForwardTrace train_trace = forward(s, p, cfg, Mode::train, &dropout_rng);
    const ForwardTrace eval_trace = forward(s, p, cfg, Mode::eval);
    CHECK(train_trace.x == eval_trace.x);
    CHECK(train_trace.y_hat == eval_trace.y_hat);
  }

  SUBCASE("train mode with dropout is reproducible under a fixed seed") {
    ModelConfig dropped = cfg;
    dropped.dropout_rate = 0.2;
    Rng rng_a(77), rng_b(77);
    const ForwardTrace a = forward(s, p, dropped, Mode::train, &rng_a);
    const ForwardTrace b = forward(s, p, dropped, Mode::train, &rng_b);
    CHECK(a.mask_x == b.mask_x);
    CHECK(a.mask_h == b.mask_h);
    CHECK(a.y_hat == b.y_hat);
    CHECK_FALSE(a.mask_x.empty());
  }

  SUBCASE("train mode with dropout but no rng is rejected") {
    ModelConfig dropped = cfg;
    dropped.dropout_rate = 0.2;
    CHECK_THROWS_AS(forward(s, p, dropped, Mode::train, nullptr), ConfigError);
  }

  SUBCASE("normalization invariants hold across random draws") {
    Rng draw(61);
    for (int trial = 0; trial < 200; ++trial) {
      const ModelParams params = random_params(cfg, draw);
      const EmbeddedSample sample = random_sample(cfg, draw);
      const ForwardTrace t = forward(sample, params, cfg, Mode::eval);
      double p_sum = 0.0, y_sum = 0.0;
      for (std::size_t j = 0; j < 3; ++j) p_sum += t.p(0, j);
      for (std::size_t c = 0; c < cfg.num_classes; ++c) y_sum += t.y_hat(0, c);
      CHECK(std::abs(p_sum - 1.0) < 1e-12);
      CHECK(std::abs(y_sum - 1.0) < 1e-12);
      for (double g : t.gate.data()) {
        CHECK(g > 0.0);
        CHECK(g < 1.0);
      }
    }
  }
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  ModelConfig cfg;
  cfg.d = 16;
  cfg.d_t = 8;
  cfg.d_i = 8;
  cfg.d_g = 4;
  cfg.num_classes = 5;
  cfg.dropout_rate = 0.2;

  EmbedderConfig embed;
  embed.text.dim_t = cfg.d_t;
  embed.text.hash_seed = 0xDEADBEEFCAFEBABEULL;
  embed.image.dim_i = cfg.d_i;
  embed.geo.dim_g = cfg.d_g;
  embed.geo.freq_base = 123.5;

  Rng rng(67);
  const Checkpoint original{cfg, embed, random_params(cfg, rng)};

  const auto path = std::filesystem::temp_directory_path() / "mmfuse_ckpt_test.json";
  save_checkpoint(original, path);
  const Checkpoint loaded = load_checkpoint(path);

  CHECK(loaded.model.d == cfg.d);
  CHECK(loaded.model.num_classes == cfg.num_classes);
  CHECK(loaded.model.dropout_rate == cfg.dropout_rate);
  CHECK(loaded.embed.text.hash_seed == embed.text.hash_seed);
  CHECK(loaded.embed.geo.freq_base == embed.geo.freq_base);
  for (const ParamField& field : kParamFields) {
    CHECK(loaded.params.*field.member == original.params.*field.member);
  }

  SUBCASE("missing file raises IoError") {
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/nowhere.json"), IoError);
  }

  SUBCASE("a checkpoint whose tensor shapes disagree with its config is rejected") {
    Checkpoint tampered = original;
    tampered.params.w_q = Matrix(3, 3, 1.0);
    const auto bad_path =
        std::filesystem::temp_directory_path() / "mmfuse_ckpt_bad.json";
    save_checkpoint(tampered, bad_path);
    CHECK_THROWS_WITH_AS(load_checkpoint(bad_path), doctest::Contains("w_q"),
                         ParseError);
    std::filesystem::remove(bad_path);
  }

  std::filesystem::remove(path);
}
