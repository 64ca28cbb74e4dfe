#include "prunevid/rng.hpp"
#include "prunevid/select.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace prunevid;

namespace {

ModelSpec small_spec() {
  ModelSpec s;
  s.layers = 5;
  s.heads = 2;
  s.channels = 16;
  s.vocab = 32;
  s.max_seq = 128;
  s.seed = 11;
  return s;
}

Matrix random_visual(Rng& rng, std::size_t n, std::size_t c) {
  Matrix m(n, c);
  for (auto& v : m.data()) v = static_cast<float>(rng.normal());
  return m;
}

std::vector<float> random_scores(Rng& rng, std::size_t n, bool with_ties) {
  std::vector<float> s(n);
  for (auto& v : s) v = with_ties ? static_cast<float>(rng.below(4)) * 0.25f : static_cast<float>(rng.uniform());
  return s;
}

}  // namespace

TEST(Extract, SlicesQuestionRowsVisualColumns) {
  Matrix a(3, 3, std::vector<float>{1, 0, 0, 0.5f, 0.5f, 0, 0.2f, 0.3f, 0.5f});
  const auto qv = extract_qv_attention(a, 2);
  ASSERT_EQ(qv.rows(), 1u);
  ASSERT_EQ(qv.cols(), 2u);
  EXPECT_EQ(qv(0, 0), 0.2f);
  EXPECT_EQ(qv(0, 1), 0.3f);
  EXPECT_THROW(extract_qv_attention(Matrix(3, 2), 1), InvalidArgument);
  EXPECT_THROW(extract_qv_attention(a, 4), InvalidArgument);
  EXPECT_EQ(extract_qv_attention(a, 3).rows(), 0u);
}

TEST(Extract, EmptyVisualGivesEmptySlice) {
  const auto qv = extract_qv_attention(Matrix(2, 2, std::vector<float>{1, 0, 0.5f, 0.5f}), 0);
  EXPECT_EQ(qv.cols(), 0u);
}

TEST(Score, MaxOverQuestionRows) {
  Matrix qv(3, 2, std::vector<float>{0.1f, 0.7f, 0.4f, 0.2f, 0.2f, 0.3f});
  EXPECT_EQ(score_visual_tokens(qv), (std::vector<float>{0.4f, 0.7f}));
  Matrix one(1, 3, std::vector<float>{0.3f, 0.1f, 0.6f});
  EXPECT_EQ(score_visual_tokens(one), (std::vector<float>{0.3f, 0.1f, 0.6f}));
  Matrix swapped(3, 2, std::vector<float>{0.2f, 0.3f, 0.1f, 0.7f, 0.4f, 0.2f});
  EXPECT_EQ(score_visual_tokens(swapped), score_visual_tokens(qv));
}

TEST(SelectTop, TieBrokenByIndex) {
  const std::vector<float> a{0.9f, 0.1f, 0.5f, 0.5f};
  const auto s = select_top_alpha(a, 0.5);
  EXPECT_EQ(s.keep_count, 2u);
  EXPECT_EQ(s.indices, (std::vector<std::size_t>{0, 2}));
}

TEST(SelectTop, AlphaOneKeepsAll) {
  const std::vector<float> a{0.2f, 0.1f, 0.3f};
  EXPECT_EQ(select_top_alpha(a, 1.0).indices, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(SelectTop, KeepCountIsCeiling) {
  EXPECT_EQ(keep_count_for(0.4, 10), 4u);
  EXPECT_EQ(keep_count_for(0.4, 11), 5u);
  EXPECT_EQ(keep_count_for(0.4, 160), 64u);
  EXPECT_EQ(keep_count_for(0.7, 10), 7u);  // 0.7*10 = 7.000000000000001 in binary
  EXPECT_EQ(keep_count_for(0.01, 3), 1u);
  EXPECT_THROW(select_top_alpha(std::vector<float>{1.0f}, 0.0), InvalidArgument);
}

TEST(SelectTop, SelectedDominateRest) {
  Rng rng(1);
  for (int it = 0; it < 200; ++it) {
    const auto a = random_scores(rng, 1 + rng.below(40), it % 2 == 0);
    const auto s = select_top_alpha(a, 0.05 + 0.95 * rng.uniform());
    ASSERT_EQ(s.indices.size(), s.keep_count);
    ASSERT_TRUE(std::is_sorted(s.indices.begin(), s.indices.end()));
    float min_in = INFINITY, max_out = -INFINITY;
    std::vector<bool> in(a.size(), false);
    for (auto i : s.indices) in[i] = true;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (in[i]) {
        min_in = std::min(min_in, a[i]);
      } else {
        max_out = std::max(max_out, a[i]);
      }
    }
    ASSERT_GE(min_in, max_out);
  }
}

TEST(SelectTop, MonotoneTransformInvariance) {
  Rng rng(2);
  for (int it = 0; it < 200; ++it) {
    const auto a = random_scores(rng, 1 + rng.below(50), it % 3 == 0);
    std::vector<float> b(a.size());
    std::transform(a.begin(), a.end(), b.begin(), [](float x) { return std::exp(3.0f * x) + 1.0f; });
    const double alpha = 0.05 + 0.95 * rng.uniform();
    ASSERT_EQ(select_top_alpha(a, alpha).indices, select_top_alpha(b, alpha).indices);
  }
}

TEST(SelectTop, AlphaNesting) {
  Rng rng(3);
  for (int it = 0; it < 200; ++it) {
    const auto a = random_scores(rng, 1 + rng.below(50), it % 2 == 1);
    double a1 = 0.01 + 0.99 * rng.uniform(), a2 = 0.01 + 0.99 * rng.uniform();
    if (a1 > a2) std::swap(a1, a2);
    const auto s1 = select_top_alpha(a, a1).indices, s2 = select_top_alpha(a, a2).indices;
    ASSERT_TRUE(std::includes(s2.begin(), s2.end(), s1.begin(), s1.end()));
  }
}

TEST(Compress, AlphaOneMatchesFullPrefill) {
  Rng rng(4);
  const auto m = init_model(small_spec());
  const auto visual = random_visual(rng, 10, 16);
  const std::vector<std::uint32_t> q{1, 2, 3};
  const auto full = prefill(m, visual, q, 3);
  const auto sel = select_top_alpha(score_visual_tokens(extract_qv_attention(full.attention_at_m, 10)), 1.0);
  const auto out = compress_and_continue(m, full, sel, 3);
  ASSERT_EQ(out.final_hidden.rows(), 13u);
  for (std::size_t r = 0; r < 13; ++r)
    for (std::size_t c = 0; c < 16; ++c) EXPECT_NEAR(out.final_hidden(r, c), full.hidden.back()(r, c), 1e-5);
}

TEST(Compress, LengthsAndBitIdenticalRows) {
  Rng rng(5);
  const auto m = init_model(small_spec());
  const auto visual = random_visual(rng, 12, 16);
  const std::vector<std::uint32_t> q{4, 5};
  const auto pre = prefill(m, visual, q, 2, false);
  const auto sel = select_top_alpha(score_visual_tokens(extract_qv_attention(pre.attention_at_m, 12)), 0.4);
  ASSERT_EQ(sel.indices.size(), 5u);
  const auto out = compress_and_continue(m, pre, sel, 2);
  EXPECT_EQ(out.caches.length(), 7u);
  EXPECT_EQ(out.caches.next_position, 14u);
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t r = 0; r < out.positions.size(); ++r) {
      const auto src = out.positions[r];
      ASSERT_TRUE(std::equal(out.caches.layers[l].keys.row(r).begin(), out.caches.layers[l].keys.row(r).end(),
                             pre.caches.layers[l].keys.row(src).begin()));
      ASSERT_TRUE(std::equal(out.caches.layers[l].values.row(r).begin(), out.caches.layers[l].values.row(r).end(),
                             pre.caches.layers[l].values.row(src).begin()));
    }
  }
  EXPECT_EQ(out.positions.back(), 13u);
}

TEST(Compress, DecodeAttentionMatchesMaskedFullCache) {
  Rng rng(6);
  const auto m = init_model(small_spec());
  const auto visual = random_visual(rng, 15, 16);
  const std::vector<std::uint32_t> q{7, 8, 9};
  const std::size_t M = 3;
  const auto full = prefill(m, visual, q, M);
  const auto sel = select_top_alpha(score_visual_tokens(extract_qv_attention(full.attention_at_m, 15)), 0.4);
  auto compressed = compress_and_continue(m, full, sel, M);

  DecodeTrace trace;
  decode_step(m, compressed.caches, 10, &trace);
  const std::size_t dh = 8;
  for (std::size_t l = 0; l < M; ++l) {
    // Full cache plus the decoded row; pruned visual columns are masked out.
    auto keys = full.caches.layers[l].keys, values = full.caches.layers[l].values;
    keys.append_row(compressed.caches.layers[l].keys.row(compressed.caches.layers[l].size() - 1));
    values.append_row(compressed.caches.layers[l].values.row(compressed.caches.layers[l].size() - 1));
    std::vector<bool> visible(keys.rows(), true);
    for (std::size_t j = 0; j < 15; ++j) visible[j] = std::binary_search(sel.indices.begin(), sel.indices.end(), j);
    const auto& query = trace.queries[l];
    for (std::size_t h = 0; h < 2; ++h) {
      std::vector<double> s(keys.rows(), -INFINITY);
      double mx = -INFINITY;
      for (std::size_t j = 0; j < keys.rows(); ++j) {
        if (!visible[j]) continue;
        double acc = 0;
        for (std::size_t d = 0; d < dh; ++d) acc += double(query[h * dh + d]) * keys(j, h * dh + d);
        s[j] = acc / std::sqrt(double(dh));
        mx = std::max(mx, s[j]);
      }
      double z = 0;
      for (auto& x : s) z += (x = std::exp(x - mx));
      for (std::size_t d = 0; d < dh; ++d) {
        double o = 0;
        for (std::size_t j = 0; j < keys.rows(); ++j) o += s[j] / z * values(j, h * dh + d);
        EXPECT_NEAR(trace.attention_out[l][h * dh + d], o, 1e-6) << "layer " << l;
      }
    }
  }
}

TEST(Compress, Errors) {
  Rng rng(7);
  const auto m = init_model(small_spec());
  const auto pre = prefill(m, random_visual(rng, 4, 16), std::vector<std::uint32_t>{1}, 2);
  SelectionSet bad;
  bad.indices = {0, 4};
  EXPECT_THROW(compress_and_continue(m, pre, bad, 2), InvalidArgument);
  bad.indices = {2, 1};
  EXPECT_THROW(compress_and_continue(m, pre, bad, 2), InvalidArgument);
  SelectionSet ok;
  ok.indices = {1};
  EXPECT_THROW(compress_and_continue(m, pre, ok, 3), InvalidArgument);  // captured layer differs
  EXPECT_NO_THROW(compress_and_continue(m, pre, ok, 2));
}
