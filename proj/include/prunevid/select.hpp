#pragma once

// Question-guided selection of merged visual tokens at layer M and the
// matching KV-cache compression.
//
// The sequence is [visual (N_v'); question (N_q)]. Each visual token is scored
// by its largest attention weight from any question row of layer M. The top
// ceil(alpha * N_v') tokens are kept. Layers 1..M keep the cache rows of kept
// tokens untouched; layers M+1..L are recomputed on the reduced sequence,
// whose tokens keep their original positions.

#include "prunevid/core.hpp"
#include "prunevid/tinyllm.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

namespace prunevid {

struct SelectionSet {
  std::vector<std::size_t> indices;  // ascending, into the merged visual tokens
  std::vector<float> scores;         // a_v for every visual token
  double alpha = 1.0;
  std::size_t keep_count = 0;
};

/// ceil(alpha * n), clamped to [0, n]. The slack absorbs products such as
/// 0.7 * 10 landing one ulp above an integer.
inline std::size_t keep_count_for(double alpha, std::size_t n) {
  const double raw = alpha * static_cast<double>(n);
  const auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
  return std::min(k, n);
}

/// Rows N_v'.. and columns ..N_v' of the layer-M attention matrix.
inline Matrix extract_qv_attention(const Matrix& attention, std::size_t n_visual) {
  if (attention.rows() != attention.cols()) throw InvalidArgument("attention matrix must be square");
  if (n_visual > attention.rows()) throw InvalidArgument("n_visual exceeds the sequence length");
  const auto n_q = attention.rows() - n_visual;
  Matrix out(n_q, n_visual);
  for (std::size_t i = 0; i < n_q; ++i) {
    const auto src = attention.row(n_visual + i);
    std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(n_visual), out.row(i).begin());
  }
  return out;
}

/// Column-wise max over question rows.
inline std::vector<float> score_visual_tokens(const Matrix& a_qv) {
  if (a_qv.rows() == 0) throw InvalidArgument("no question rows to score with");
  std::vector<float> scores(a_qv.row(0).begin(), a_qv.row(0).end());
  for (std::size_t i = 1; i < a_qv.rows(); ++i) {
    const auto r = a_qv.row(i);
    for (std::size_t j = 0; j < scores.size(); ++j) scores[j] = std::max(scores[j], r[j]);
  }
  return scores;
}

inline SelectionSet select_top_alpha(std::span<const float> scores, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must be in (0, 1]");
  SelectionSet sel;
  sel.alpha = alpha;
  sel.scores.assign(scores.begin(), scores.end());
  sel.keep_count = keep_count_for(alpha, scores.size());
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Descending score, lower index first on ties.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  sel.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(sel.keep_count));
  std::sort(sel.indices.begin(), sel.indices.end());
  return sel;
}

struct CompressedState {
  Caches caches;                      // every layer holds |S| + N_q rows
  Matrix final_hidden;                // output of layer L for the kept rows
  std::vector<std::size_t> positions; // original sequence positions of the kept rows
};

/// Original positions kept after selection: S followed by all question rows.
inline std::vector<std::size_t> kept_positions(const SelectionSet& selection, std::size_t n_visual,
                                               std::size_t n_question) {
  std::vector<std::size_t> pos;
  pos.reserve(selection.indices.size() + n_question);
  for (auto i : selection.indices) {
    if (i >= n_visual) throw InvalidArgument("selection index out of range");
    pos.push_back(i);
  }
  for (std::size_t q = 0; q < n_question; ++q) pos.push_back(n_visual + q);
  return pos;
}

inline CompressedState compress_and_continue(const Model& model, const PrefillResult& prefill,
                                             const SelectionSet& selection, std::size_t m_layer) {
  const auto layers = model.spec().layers;
  if (m_layer < 1 || m_layer >= layers) throw InvalidArgument("m_layer must be in [1, L)");
  if (prefill.m_layer != m_layer) throw InvalidArgument("prefill captured a different layer");
  if (prefill.hidden.size() < m_layer + 1 || prefill.caches.layers.size() < m_layer) {
    throw InvalidArgument("prefill did not reach layer M");
  }
  if (!std::is_sorted(selection.indices.begin(), selection.indices.end()) ||
      std::adjacent_find(selection.indices.begin(), selection.indices.end()) != selection.indices.end()) {
    throw InvalidArgument("selection indices must be strictly ascending");
  }

  CompressedState out;
  out.positions = kept_positions(selection, prefill.n_visual, prefill.n_question);
  out.caches.layers.resize(layers);
  out.caches.next_position = prefill.caches.next_position;
  for (std::size_t l = 0; l < m_layer; ++l) {
    const auto& full = prefill.caches.layers[l];
    out.caches.layers[l].keys = full.keys.select_rows(out.positions);
    out.caches.layers[l].values = full.values.select_rows(out.positions);
  }
  Matrix x = prefill.hidden[m_layer].select_rows(out.positions);
  for (std::size_t l = m_layer; l < layers; ++l) forward_layer(model, l, x, out.caches.layers[l]);
  out.final_hidden = std::move(x);
  return out;
}

}  // namespace prunevid
