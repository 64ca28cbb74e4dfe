#pragma once

// Small decoder-only transformer used as the language-model stand-in.
//
// Pre-norm blocks: x += Wo * MHA(LN(x)); x += W2 * gelu(W1 * LN(x)).
// LayerNorm has no learned affine. No biases. Weights ~ U(-0.02, 0.02).
// Sinusoidal absolute positions are added to the input embeddings; visual
// tokens pass through a C_v -> C projection (identity when C_v == C),
// question tokens through the embedding table.
//
// Every per-row computation runs in a fixed order that does not depend on how
// many rows are processed together, so prefill, incremental decode and the
// reduced-sequence continuation produce bit-identical values for equal inputs.

#include "prunevid/core.hpp"
#include "prunevid/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace prunevid {

struct ModelSpec {
  std::size_t layers = 12;
  std::size_t heads = 4;
  std::size_t channels = 64;
  std::size_t ffn_multiplier = 4;
  std::size_t vocab = 256;
  std::size_t max_seq = 4096;
  std::size_t visual_channels = 0;  // 0: same as `channels`
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t head_dim() const noexcept { return channels / heads; }
  [[nodiscard]] std::size_t input_channels() const noexcept {
    return visual_channels == 0 ? channels : visual_channels;
  }

  void validate() const {
    if (layers < 2) throw InvalidArgument("model needs at least 2 layers");
    if (heads == 0 || channels == 0) throw InvalidArgument("heads and channels must be positive");
    if (channels % heads != 0) throw InvalidArgument("channels must be divisible by heads");
    if (ffn_multiplier == 0 || vocab == 0 || max_seq == 0) throw InvalidArgument("invalid model dimensions");
  }
};

inline constexpr float kInitScale = 0.02f;

struct LayerWeights {
  Matrix wq, wk, wv, wo;  // C x C
  Matrix w1;              // C x F
  Matrix w2;              // F x C
};

class Model {
 public:
  explicit Model(const ModelSpec& spec) : spec_(spec) {
    spec_.validate();
    Rng rng(spec_.seed);
    auto uniform = [&rng](std::size_t rows, std::size_t cols) {
      Matrix m(rows, cols);
      for (auto& v : m.data()) v = static_cast<float>(rng.uniform(-kInitScale, kInitScale));
      return m;
    };
    const auto c = spec_.channels;
    const auto f = c * spec_.ffn_multiplier;
    embedding_ = uniform(spec_.vocab, c);
    if (spec_.input_channels() != c) visual_proj_ = uniform(spec_.input_channels(), c);
    layers_.reserve(spec_.layers);
    for (std::size_t l = 0; l < spec_.layers; ++l) {
      LayerWeights w;
      w.wq = uniform(c, c);
      w.wk = uniform(c, c);
      w.wv = uniform(c, c);
      w.wo = uniform(c, c);
      w.w1 = uniform(c, f);
      w.w2 = uniform(f, c);
      layers_.push_back(std::move(w));
    }
    unembedding_ = uniform(c, spec_.vocab);
  }

  [[nodiscard]] const ModelSpec& spec() const noexcept { return spec_; }
  [[nodiscard]] const Matrix& embedding() const noexcept { return embedding_; }
  [[nodiscard]] const Matrix& visual_projection() const noexcept { return visual_proj_; }
  [[nodiscard]] const LayerWeights& layer(std::size_t l) const { return layers_.at(l); }
  [[nodiscard]] const Matrix& unembedding() const noexcept { return unembedding_; }

  friend bool operator==(const Model& a, const Model& b) {
    if (a.embedding_ != b.embedding_ || a.visual_proj_ != b.visual_proj_ || a.unembedding_ != b.unembedding_) {
      return false;
    }
    for (std::size_t l = 0; l < a.layers_.size(); ++l) {
      const auto &x = a.layers_[l], &y = b.layers_[l];
      if (x.wq != y.wq || x.wk != y.wk || x.wv != y.wv || x.wo != y.wo || x.w1 != y.w1 || x.w2 != y.w2) {
        return false;
      }
    }
    return a.layers_.size() == b.layers_.size();
  }

 private:
  ModelSpec spec_;
  Matrix embedding_;
  Matrix visual_proj_;
  std::vector<LayerWeights> layers_;
  Matrix unembedding_;
};

inline Model init_model(const ModelSpec& spec) { return Model(spec); }

struct LayerCache {
  Matrix keys;    // n x C
  Matrix values;  // n x C

  [[nodiscard]] std::size_t size() const noexcept { return keys.rows(); }
};

struct Caches {
  std::vector<LayerCache> layers;
  std::size_t next_position = 0;  // absolute position of the next decoded token

  [[nodiscard]] std::size_t length() const {
    if (layers.empty()) return 0;
    const auto n = layers.front().size();
    for (const auto& l : layers) {
      if (l.size() != n || l.values.rows() != n) throw InvalidArgument("cache length mismatch across layers");
    }
    return n;
  }
};

struct PrefillResult {
  std::vector<Matrix> hidden;  // hidden[l] = input of layer l (0-based); hidden[L] = final output
  Caches caches;
  Matrix attention_at_m;       // head-averaged softmax of layer M, n x n
  std::size_t n_visual = 0;
  std::size_t n_question = 0;
  std::size_t m_layer = 0;     // 1-based

  [[nodiscard]] std::size_t sequence_length() const noexcept { return n_visual + n_question; }
};

namespace detail {

inline void add_positional(std::span<float> row, std::size_t position) {
  const auto c = row.size();
  for (std::size_t i = 0; i < c; i += 2) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(c));
    const double angle = static_cast<double>(position) * freq;
    row[i] += static_cast<float>(std::sin(angle));
    if (i + 1 < c) row[i + 1] += static_cast<float>(std::cos(angle));
  }
}

/// out = x * w, row by row, float accumulation in k order.
inline void matvec(std::span<const float> x, const Matrix& w, std::span<float> out) {
  std::fill(out.begin(), out.end(), 0.0f);
  for (std::size_t k = 0; k < w.rows(); ++k) {
    const float xk = x[k];
    const auto wk = w.row(k);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += xk * wk[j];
  }
}

inline Matrix matmul(const Matrix& x, const Matrix& w) {
  Matrix out(x.rows(), w.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) matvec(x.row(r), w, out.row(r));
  return out;
}

inline void layer_norm(std::span<const float> x, std::span<float> out) {
  double mean = 0.0;
  for (float v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (float v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(var + 1e-5);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<float>((x[i] - mean) * inv);
}

inline float gelu(float x) {
  const double v = x;
  return static_cast<float>(0.5 * v * (1.0 + std::tanh(std::sqrt(2.0 / std::numbers::pi) * (v + 0.044715 * v * v * v))));
}

}  // namespace detail

/// Multi-head attention of one query over the first `visible` rows of a cache.
/// Writes the concatenated head outputs (before Wo) to `out`; if `probs` is
/// non-empty, accumulates the head-averaged softmax weights into it.
inline void attend(std::span<const float> query, const Matrix& keys, const Matrix& values, std::size_t heads,
                   std::size_t visible, std::span<float> out, std::span<float> probs = {}) {
  const auto c = query.size();
  const auto dh = c / heads;
  const float scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(dh)));
  std::vector<float> scores(visible);
  std::vector<double> weights(visible);
  std::fill(out.begin(), out.end(), 0.0f);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto off = h * dh;
    float max_score = -INFINITY;
    for (std::size_t j = 0; j < visible; ++j) {
      const auto kj = keys.row(j);
      float s = 0.0f;
      for (std::size_t d = 0; d < dh; ++d) s += query[off + d] * kj[off + d];
      scores[j] = s * scale;
      max_score = std::max(max_score, scores[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < visible; ++j) {
      weights[j] = std::exp(static_cast<double>(scores[j]) - max_score);
      sum += weights[j];
    }
    for (std::size_t j = 0; j < visible; ++j) {
      const float p = static_cast<float>(weights[j] / sum);
      const auto vj = values.row(j);
      for (std::size_t d = 0; d < dh; ++d) out[off + d] += p * vj[off + d];
      if (!probs.empty()) probs[j] += static_cast<float>(weights[j] / sum / static_cast<double>(heads));
    }
  }
}

/// Per-layer internals of one decode step, for inspection in tests.
struct DecodeTrace {
  std::vector<std::vector<float>> queries;        // per layer, length C
  std::vector<std::vector<float>> attention_out;  // per layer, before Wo
};

/// Runs layer `l` on rows `x` that follow the rows already in `cache`.
/// Appends their keys/values; row r sees cache rows [0, base + r].
inline void forward_layer(const Model& model, std::size_t l, Matrix& x, LayerCache& cache,
                          Matrix* attention_capture = nullptr, DecodeTrace* trace = nullptr) {
  const auto& w = model.layer(l);
  const auto c = model.spec().channels;
  const auto f = w.w1.cols();
  const auto base = cache.size();
  const auto n = x.rows();
  if (cache.keys.cols() == 0) {
    cache.keys = Matrix(0, c);
    cache.values = Matrix(0, c);
  }

  Matrix normed(n, c);
  for (std::size_t r = 0; r < n; ++r) detail::layer_norm(x.row(r), normed.row(r));
  const auto q = detail::matmul(normed, w.wq);
  const auto k = detail::matmul(normed, w.wk);
  const auto v = detail::matmul(normed, w.wv);
  for (std::size_t r = 0; r < n; ++r) {
    cache.keys.append_row(k.row(r));
    cache.values.append_row(v.row(r));
  }

  if (attention_capture) *attention_capture = Matrix(n, base + n);
  std::vector<float> head_out(c), proj(c), hidden(f), ffn_out(c), ln(c);
  for (std::size_t r = 0; r < n; ++r) {
    std::span<float> probs;
    if (attention_capture) probs = attention_capture->row(r).subspan(0, base + r + 1);
    attend(q.row(r), cache.keys, cache.values, model.spec().heads, base + r + 1, head_out, probs);
    if (trace) {
      trace->queries.emplace_back(q.row(r).begin(), q.row(r).end());
      trace->attention_out.emplace_back(head_out.begin(), head_out.end());
    }
    detail::matvec(head_out, w.wo, proj);
    auto xr = x.row(r);
    for (std::size_t i = 0; i < c; ++i) xr[i] += proj[i];

    detail::layer_norm(xr, ln);
    detail::matvec(ln, w.w1, hidden);
    for (auto& h : hidden) h = detail::gelu(h);
    detail::matvec(hidden, w.w2, ffn_out);
    for (std::size_t i = 0; i < c; ++i) xr[i] += ffn_out[i];
  }
}

/// Input embeddings: projected visual tokens then question-token embeddings,
/// each plus the sinusoidal encoding of its position.
inline Matrix embed_inputs(const Model& model, const Matrix& visual, std::span<const std::uint32_t> question) {
  const auto& spec = model.spec();
  const auto c = spec.channels;
  if (visual.rows() > 0 && visual.cols() != spec.input_channels()) {
    throw InvalidArgument("visual token width does not match the model's input channels");
  }
  Matrix x(visual.rows() + question.size(), c);
  for (std::size_t r = 0; r < visual.rows(); ++r) {
    auto row = x.row(r);
    if (model.visual_projection().empty()) {
      std::copy(visual.row(r).begin(), visual.row(r).end(), row.begin());
    } else {
      detail::matvec(visual.row(r), model.visual_projection(), row);
    }
    detail::add_positional(row, r);
  }
  for (std::size_t q = 0; q < question.size(); ++q) {
    if (question[q] >= spec.vocab) throw InvalidArgument("question token id out of vocabulary");
    const auto r = visual.rows() + q;
    auto row = x.row(r);
    const auto emb = model.embedding().row(question[q]);
    std::copy(emb.begin(), emb.end(), row.begin());
    detail::add_positional(row, r);
  }
  return x;
}

/// Prefill over [visual; question]. Captures the head-averaged attention of
/// layer `m_layer` (1-based). With `full_depth` false, stops after layer M.
inline PrefillResult prefill(const Model& model, const Matrix& visual, std::span<const std::uint32_t> question,
                             std::size_t m_layer, bool full_depth = true) {
  const auto& spec = model.spec();
  if (m_layer < 1 || m_layer > spec.layers) throw InvalidArgument("m_layer out of range");
  const auto n = visual.rows() + question.size();
  if (n == 0) throw InvalidArgument("prefill needs at least one token");
  if (n > spec.max_seq) throw InvalidArgument("sequence exceeds max_seq");

  PrefillResult res;
  res.n_visual = visual.rows();
  res.n_question = question.size();
  res.m_layer = m_layer;
  res.caches.layers.resize(spec.layers);
  res.caches.next_position = n;

  Matrix x = embed_inputs(model, visual, question);
  const auto depth = full_depth ? spec.layers : m_layer;
  res.hidden.reserve(depth + 1);
  res.hidden.push_back(x);
  for (std::size_t l = 0; l < depth; ++l) {
    forward_layer(model, l, x, res.caches.layers[l], l + 1 == m_layer ? &res.attention_at_m : nullptr);
    res.hidden.push_back(x);
  }
  if (!full_depth) res.caches.layers.resize(depth);
  return res;
}

/// Final LayerNorm and unembedding of one hidden row.
inline std::vector<float> logits_from_hidden(const Model& model, std::span<const float> hidden) {
  std::vector<float> ln(hidden.size()), out(model.spec().vocab);
  detail::layer_norm(hidden, ln);
  detail::matvec(ln, model.unembedding(), out);
  return out;
}

/// Feeds one token through all layers using (and extending) the caches.
inline std::vector<float> decode_step(const Model& model, Caches& caches, std::uint32_t last_token,
                                      DecodeTrace* trace = nullptr) {
  const auto& spec = model.spec();
  if (caches.layers.size() != spec.layers) throw InvalidArgument("cache set does not match model depth");
  static_cast<void>(caches.length());
  if (last_token >= spec.vocab) throw InvalidArgument("token id out of vocabulary");
  if (caches.next_position >= spec.max_seq) throw InvalidArgument("sequence exceeds max_seq");

  Matrix x(1, spec.channels);
  const auto emb = model.embedding().row(last_token);
  std::copy(emb.begin(), emb.end(), x.row(0).begin());
  detail::add_positional(x.row(0), caches.next_position);
  for (std::size_t l = 0; l < spec.layers; ++l) forward_layer(model, l, x, caches.layers[l], nullptr, trace);
  ++caches.next_position;
  return logits_from_hidden(model, x.row(0));
}

inline std::uint32_t argmax_token(std::span<const float> logits) {
  return static_cast<std::uint32_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

/// Greedy continuation from a cache state; the first input is `first_token`.
inline std::vector<std::uint32_t> greedy_decode(const Model& model, Caches caches, std::uint32_t first_token,
                                                std::size_t steps) {
  std::vector<std::uint32_t> out;
  auto token = first_token;
  for (std::size_t s = 0; s < steps; ++s) {
    token = argmax_token(decode_step(model, caches, token));
    out.push_back(token);
  }
  return out;
}

}  // namespace prunevid
