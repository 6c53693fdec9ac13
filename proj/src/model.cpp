#include "mmfuse/model.hpp"

#include <cmath>
#include <fstream>
#include <utility>

#include "json.hpp"
#include "mmfuse/errors.hpp"

namespace mmfuse {

namespace {

using nlohmann::json;

constexpr int kCheckpointVersion = 1;

void check_vector_shape(const Matrix& v, std::size_t dim, const char* name) {
  if (v.rows() != 1 || v.cols() != dim) {
    throw ShapeError(std::string(name) + ": expected 1x" + std::to_string(dim) +
                     ", got " + shape_string(v));
  }
}

Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
  Matrix mask(rows, cols);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask.data()) {
    m = (rng.next_double() < rate) ? 0.0 : keep_scale;
  }
  return mask;
}

}  // namespace

void validate(const ModelConfig& cfg) {
  if (cfg.d < 1) throw ConfigError("model: unified dimension d must be >= 1");
  if (cfg.d_t < 1 || cfg.d_i < 1 || cfg.d_g < 1) {
    throw ConfigError("model: modality dimensions must be >= 1");
  }
  if (cfg.num_classes < 2) {
    throw ConfigError("model: num_classes must be >= 2, got " +
                      std::to_string(cfg.num_classes));
  }
  if (cfg.dropout_rate < 0.0 || cfg.dropout_rate >= 1.0) {
    throw ConfigError("model: dropout_rate must lie in [0, 1)");
  }
}

ModelParams zero_params(const ModelConfig& cfg) {
  validate(cfg);
  ModelParams p;
  p.proj_t = Matrix(cfg.d_t, cfg.d);
  p.bias_t = Matrix(1, cfg.d);
  p.proj_i = Matrix(cfg.d_i, cfg.d);
  p.bias_i = Matrix(1, cfg.d);
  p.proj_g = Matrix(cfg.d_g, cfg.d);
  p.bias_g = Matrix(1, cfg.d);
  p.w_q = Matrix(cfg.d, cfg.d);
  p.w_k = Matrix(cfg.d, cfg.d);
  p.w_v = Matrix(cfg.d, cfg.d);
  p.w_a = Matrix(cfg.d, cfg.d);
  p.b_a = Matrix(1, cfg.d);
  p.w_c = Matrix(cfg.d, cfg.num_classes);
  p.b_c = Matrix(1, cfg.num_classes);
  return p;
}

ModelParams init_params(const ModelConfig& cfg, Rng& rng) {
  validate(cfg);
  ModelParams p;
  p.proj_t = xavier_init(cfg.d_t, cfg.d, rng);
  p.bias_t = Matrix(1, cfg.d);
  p.proj_i = xavier_init(cfg.d_i, cfg.d, rng);
  p.bias_i = Matrix(1, cfg.d);
  p.proj_g = xavier_init(cfg.d_g, cfg.d, rng);
  p.bias_g = Matrix(1, cfg.d);
  p.w_q = xavier_init(cfg.d, cfg.d, rng);
  p.w_k = xavier_init(cfg.d, cfg.d, rng);
  p.w_v = xavier_init(cfg.d, cfg.d, rng);
  p.w_a = xavier_init(cfg.d, cfg.d, rng);
  p.b_a = Matrix(1, cfg.d);
  p.w_c = xavier_init(cfg.d, cfg.num_classes, rng);
  p.b_c = Matrix(1, cfg.num_classes);
  return p;
}

ModelParams random_params(const ModelConfig& cfg, Rng& rng) {
  ModelParams p = init_params(cfg, rng);
  p.bias_t = xavier_init(1, cfg.d, rng);
  p.bias_i = xavier_init(1, cfg.d, rng);
  p.bias_g = xavier_init(1, cfg.d, rng);
  p.b_a = xavier_init(1, cfg.d, rng);
  p.b_c = xavier_init(1, cfg.num_classes, rng);
  return p;
}

Matrix fuse(const Matrix& t_vec, const Matrix& i_vec, const Matrix& g_vec,
            const ModelParams& params, const ModelConfig& cfg) {
  check_vector_shape(t_vec, cfg.d_t, "fuse: text embedding");
  check_vector_shape(i_vec, cfg.d_i, "fuse: image embedding");
  check_vector_shape(g_vec, cfg.d_g, "fuse: geo embedding");

  const Matrix row_t = add(matmul(t_vec, params.proj_t), params.bias_t);
  const Matrix row_i = add(matmul(i_vec, params.proj_i), params.bias_i);
  const Matrix row_g = add(matmul(g_vec, params.proj_g), params.bias_g);

  Matrix x(3, cfg.d);
  for (std::size_t j = 0; j < cfg.d; ++j) {
    x(0, j) = row_t(0, j);
    x(1, j) = row_i(0, j);
    x(2, j) = row_g(0, j);
  }
  return x;
}

AttentionOut scaled_dot_attention(const Matrix& q, const Matrix& k,
                                  const Matrix& v, std::size_t d) {
  if (q.cols() != d || k.cols() != d || v.cols() != d) {
    throw ShapeError("attention: operands must have " + std::to_string(d) +
                     " columns, got q=" + shape_string(q) + " k=" +
                     shape_string(k) + " v=" + shape_string(v));
  }
  if (k.rows() != v.rows()) {
    throw ShapeError("attention: key rows " + shape_string(k) +
                     " != value rows " + shape_string(v));
  }
  const Matrix scores =
      scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
  AttentionOut out;
  out.p = softmax_rows(scores);
  out.h = matmul(out.p, v);
  return out;
}

namespace {

struct AttentionTrace {
  Matrix q, k, v, scores, p, h;
};

AttentionTrace cross_modal_attention_trace(const Matrix& x,
                                           const ModelParams& params) {
  if (x.cols() != params.w_q.rows()) {
    throw ShapeError("cross_modal_attention: x " + shape_string(x) +
                     " does not match w_q " + shape_string(params.w_q));
  }
  Matrix text_row(1, x.cols());
  for (std::size_t j = 0; j < x.cols(); ++j) text_row(0, j) = x(0, j);

  AttentionTrace t;
  t.q = matmul(text_row, params.w_q);
  t.k = matmul(x, params.w_k);
  t.v = matmul(x, params.w_v);
  t.scores = scale(matmul(t.q, transpose(t.k)),
                   1.0 / std::sqrt(static_cast<double>(x.cols())));
  t.p = softmax_rows(t.scores);
  t.h = matmul(t.p, t.v);
  return t;
}

}  // namespace

AttentionOut cross_modal_attention(const Matrix& x, const ModelParams& params) {
  AttentionTrace t = cross_modal_attention_trace(x, params);
  return AttentionOut{std::move(t.p), std::move(t.h)};
}

GateOut adaptive_gate(const Matrix& h, const ModelParams& params) {
  check_vector_shape(h, params.w_a.rows(), "adaptive_gate: input");
  GateOut out;
  out.gate = sigmoid_elem(add(matmul(h, params.w_a), params.b_a));
  out.y_adapt = hadamard(out.gate, h);
  return out;
}

ClassifyOut classify(const Matrix& y_adapt, const ModelParams& params) {
  check_vector_shape(y_adapt, params.w_c.rows(), "classify: input");
  ClassifyOut out;
  out.logits = add(matmul(y_adapt, params.w_c), params.b_c);
  out.y_hat = softmax_rows(out.logits);
  return out;
}

double cross_entropy(const Matrix& y_hat, std::size_t label) {
  if (y_hat.rows() != 1) {
    throw ShapeError("cross_entropy: expected a 1xC probability row, got " +
                     shape_string(y_hat));
  }
  if (label >= y_hat.cols()) {
    throw ConfigError("cross_entropy: label " + std::to_string(label) +
                      " outside [0, " + std::to_string(y_hat.cols()) + ")");
  }
  return -std::log(y_hat(0, label) + kCrossEntropyFloor);
}

ForwardTrace forward(const EmbeddedSample& sample, const ModelParams& params,
                     const ModelConfig& cfg, Mode mode, Rng* rng) {
  const bool use_dropout = mode == Mode::train && cfg.dropout_rate > 0.0;
  if (use_dropout && rng == nullptr) {
    throw ConfigError("forward: train mode with dropout requires an rng");
  }

  ForwardTrace trace;
  trace.x = fuse(sample.text, sample.image, sample.geo, params, cfg);

  Matrix x_active = trace.x;
  if (use_dropout) {
    trace.mask_x = dropout_mask(trace.x.rows(), trace.x.cols(),
                                cfg.dropout_rate, *rng);
    x_active = hadamard(trace.x, trace.mask_x);
  }

  AttentionTrace attn = cross_modal_attention_trace(x_active, params);
  trace.q = std::move(attn.q);
  trace.k = std::move(attn.k);
  trace.v = std::move(attn.v);
  trace.scores = std::move(attn.scores);
  trace.p = std::move(attn.p);
  trace.h = std::move(attn.h);

  Matrix h_active = trace.h;
  if (use_dropout) {
    trace.mask_h = dropout_mask(trace.h.rows(), trace.h.cols(),
                                cfg.dropout_rate, *rng);
    h_active = hadamard(trace.h, trace.mask_h);
  }

  const GateOut gated = adaptive_gate(h_active, params);
  trace.gate = gated.gate;
  trace.y_adapt = gated.y_adapt;

  const ClassifyOut head = classify(trace.y_adapt, params);
  trace.logits = head.logits;
  trace.y_hat = head.y_hat;
  return trace;
}

namespace {

json matrix_to_json(const Matrix& m) {
  json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = m.data();
  return j;
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != rows * cols) {
    throw ParseError("checkpoint matrix: data length " +
                     std::to_string(data.size()) + " != " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
  Matrix m(rows, cols);
  m.data() = std::move(data);
  return m;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json doc;
  doc["format_version"] = kCheckpointVersion;
  doc["config"] = {
      {"d", ckpt.model.d},
      {"d_t", ckpt.model.d_t},
      {"d_i", ckpt.model.d_i},
      {"d_g", ckpt.model.d_g},
      {"num_classes", ckpt.model.num_classes},
      {"dropout_rate", ckpt.model.dropout_rate},
  };
  doc["embed"] = {
      {"hash_seed", ckpt.embed.text.hash_seed},
      {"freq_base", ckpt.embed.geo.freq_base},
  };
  json params;
  for (const ParamField& field : kParamFields) {
    params[std::string(field.name)] = matrix_to_json(ckpt.params.*field.member);
  }
  doc["params"] = std::move(params);

  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write checkpoint: " + path.string());
  }
  out << doc.dump(2) << "\n";
  if (!out) {
    throw IoError("checkpoint write failed: " + path.string());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open checkpoint: " + path.string());
  }
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError("checkpoint parse error: " + std::string(e.what()));
  }

  Checkpoint ckpt;
  try {
    if (doc.at("format_version").get<int>() != kCheckpointVersion) {
      throw ParseError("unsupported checkpoint format_version");
    }
    const json& cfg = doc.at("config");
    ckpt.model.d = cfg.at("d").get<std::size_t>();
    ckpt.model.d_t = cfg.at("d_t").get<std::size_t>();
    ckpt.model.d_i = cfg.at("d_i").get<std::size_t>();
    ckpt.model.d_g = cfg.at("d_g").get<std::size_t>();
    ckpt.model.num_classes = cfg.at("num_classes").get<std::size_t>();
    ckpt.model.dropout_rate = cfg.at("dropout_rate").get<double>();
    const json& embed = doc.at("embed");
    ckpt.embed.text.hash_seed = embed.at("hash_seed").get<std::uint64_t>();
    ckpt.embed.geo.freq_base = embed.at("freq_base").get<double>();
    ckpt.embed.text.dim_t = ckpt.model.d_t;
    ckpt.embed.image.dim_i = ckpt.model.d_i;
    ckpt.embed.geo.dim_g = ckpt.model.d_g;
    for (const ParamField& field : kParamFields) {
      ckpt.params.*field.member =
          matrix_from_json(doc.at("params").at(std::string(field.name)));
    }
  } catch (const json::exception& e) {
    throw ParseError("checkpoint missing field: " + std::string(e.what()));
  }
  validate(ckpt.model);

  const ModelParams expected = zero_params(ckpt.model);
  for (const ParamField& field : kParamFields) {
    const Matrix& loaded = ckpt.params.*field.member;
    const Matrix& want = expected.*field.member;
    if (!loaded.same_shape(want)) {
      throw ParseError("checkpoint: " + std::string(field.name) + " has shape " +
                       shape_string(loaded) + ", config requires " +
                       shape_string(want));
    }
    if (!loaded.all_finite()) {
      throw ParseError("checkpoint: " + std::string(field.name) +
                       " contains non-finite values");
    }
  }
  return ckpt;
}

}  // namespace mmfuse
