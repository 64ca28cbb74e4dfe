#pragma once

// Spatio-temporal token merging.
//
// 1. Frames are clustered on their mean-pooled features and split into
//    maximal runs of equal label (temporal segments).
// 2. Inside a segment, a location is static when the mean pairwise cosine of
//    its per-frame tokens reaches tau. Single-frame segments are all static.
// 3. Static locations are averaged over the segment's frames; dynamic ones
//    keep one token per frame.
// 4. Static tokens are clustered once per segment, dynamic tokens per frame,
//    and every cluster is replaced by its mean.
//
// Output order: segments in time order; inside a segment, static clusters
// first, then each frame's dynamic clusters; clusters ordered by their
// smallest source location.

#include "prunevid/clustering.hpp"
#include "prunevid/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <utility>
#include <vector>

namespace prunevid {

struct FrameRange {
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // inclusive

  [[nodiscard]] std::size_t length() const noexcept { return end - start + 1; }
  friend bool operator==(const FrameRange&, const FrameRange&) = default;
};

struct SegmentPartition {
  std::vector<FrameRange> segments;

  [[nodiscard]] std::size_t size() const noexcept { return segments.size(); }
  friend bool operator==(const SegmentPartition&, const SegmentPartition&) = default;

  /// Throws unless the ranges are sorted, contiguous and cover [0, frames).
  void check_covers(std::size_t frames) const {
    std::size_t next = 0;
    for (const auto& s : segments) {
      if (s.start != next || s.end < s.start) throw InvalidArgument("partition is not contiguous");
      next = s.end + 1;
    }
    if (next != frames) throw InvalidArgument("partition does not cover all frames");
  }
};

struct SegmentMask {
  std::vector<bool> is_static;     // per location
  std::vector<double> mean_sim;    // s_bar per location
  std::size_t zero_norm_pairs = 0; // pairs whose similarity was forced to 0

  [[nodiscard]] std::size_t static_count() const {
    return static_cast<std::size_t>(std::count(is_static.begin(), is_static.end(), true));
  }
};

struct StaticMask {
  std::vector<SegmentMask> segments;  // parallel to SegmentPartition::segments

  [[nodiscard]] std::size_t zero_norm_pairs() const {
    std::size_t n = 0;
    for (const auto& s : segments) n += s.zero_norm_pairs;
    return n;
  }
};

struct LocatedToken {
  std::size_t frame = 0;  // for static tokens: first frame of the segment
  std::size_t location = 0;
  std::vector<float> values;
};

/// merge_temporal output for one segment.
struct SegmentTokens {
  std::size_t segment_id = 0;
  FrameRange frames;
  std::vector<LocatedToken> static_tokens;                 // ascending location
  std::vector<std::vector<LocatedToken>> dynamic_by_frame; // [frame - start], ascending location

  [[nodiscard]] std::size_t token_count() const {
    std::size_t n = static_tokens.size();
    for (const auto& f : dynamic_by_frame) n += f.size();
    return n;
  }
};

struct SegmentTrace {
  FrameRange frames;
  std::size_t static_locations = 0;
  std::size_t dynamic_locations = 0;
  std::size_t tokens_after_temporal = 0;
  std::size_t static_clusters = 0;
  std::size_t dynamic_clusters_per_frame = 0;
  std::size_t tokens_after_spatial = 0;
  std::vector<std::size_t> cluster_sizes;  // member cells per emitted token, in output order
};

struct MergedTokenSet {
  Matrix tokens;  // K x C
  std::vector<Provenance> provenance;
  SegmentPartition partition;
  std::vector<SegmentTrace> trace;
  std::size_t zero_norm_pairs = 0;

  [[nodiscard]] std::size_t size() const noexcept { return tokens.rows(); }
};

namespace detail {

inline std::vector<float> mean_of(const std::vector<std::span<const float>>& rows, std::size_t channels) {
  std::vector<double> acc(channels, 0.0);
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < channels; ++c) acc[c] += r[c];
  }
  std::vector<float> out(channels);
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (std::size_t c = 0; c < channels; ++c) out[c] = static_cast<float>(acc[c] * inv);
  return out;
}

/// Cosine in double; 0 when either vector has zero norm (reported via `zero_norm`).
inline double cosine(std::span<const float> a, std::span<const float> b, bool& zero_norm) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) {
    const double x = a[c], y = b[c];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) {
    zero_norm = true;
    return 0.0;
  }
  zero_norm = false;
  return dot / std::sqrt(na * nb);
}

}  // namespace detail

/// Mean-pooled frame features, one row per frame.
inline Matrix frame_features(const TokenGrid& grid) {
  Matrix out(grid.frames(), grid.channels());
  for (std::size_t t = 0; t < grid.frames(); ++t) {
    std::vector<std::span<const float>> rows;
    rows.reserve(grid.tokens_per_frame());
    for (std::size_t i = 0; i < grid.tokens_per_frame(); ++i) rows.push_back(grid.token(t, i));
    const auto m = detail::mean_of(rows, grid.channels());
    std::copy(m.begin(), m.end(), out.row(t).begin());
  }
  return out;
}

/// Splits a per-frame label sequence into maximal runs of equal label.
inline SegmentPartition runs_of_labels(const std::vector<std::size_t>& labels) {
  SegmentPartition p;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (t == 0 || labels[t] != labels[t - 1]) {
      p.segments.push_back({t, t});
    } else {
      p.segments.back().end = t;
    }
  }
  return p;
}

inline SegmentPartition segment_frames(const TokenGrid& grid, double gamma, std::size_t k_knn) {
  const auto n_clusters = ratio_count(gamma, grid.frames());
  const auto clusters = dpc_knn(frame_features(grid), k_knn, std::min(n_clusters, grid.frames()));
  return runs_of_labels(clusters.labels);
}

inline StaticMask compute_static_mask(const TokenGrid& grid, const SegmentPartition& partition, double tau) {
  partition.check_covers(grid.frames());
  const auto nv = grid.tokens_per_frame();
  StaticMask mask;
  mask.segments.reserve(partition.size());
  for (const auto& seg : partition.segments) {
    SegmentMask sm;
    sm.is_static.assign(nv, true);
    sm.mean_sim.assign(nv, 1.0);
    const auto len = seg.length();
    if (len > 1) {
      const double pairs = static_cast<double>(len * (len - 1) / 2);
      for (std::size_t i = 0; i < nv; ++i) {
        double acc = 0.0;
        for (std::size_t t = seg.start; t <= seg.end; ++t) {
          for (std::size_t u = t + 1; u <= seg.end; ++u) {
            bool zero = false;
            acc += detail::cosine(grid.token(t, i), grid.token(u, i), zero);
            if (zero) ++sm.zero_norm_pairs;
          }
        }
        sm.mean_sim[i] = acc / pairs;
        sm.is_static[i] = sm.mean_sim[i] >= tau;
      }
    }
    mask.segments.push_back(std::move(sm));
  }
  return mask;
}

inline std::vector<SegmentTokens> merge_temporal(const TokenGrid& grid, const SegmentPartition& partition,
                                                 const StaticMask& mask) {
  if (mask.segments.size() != partition.size()) throw InvalidArgument("mask does not match partition");
  const auto nv = grid.tokens_per_frame();
  std::vector<SegmentTokens> out;
  out.reserve(partition.size());
  for (std::size_t b = 0; b < partition.size(); ++b) {
    const auto& seg = partition.segments[b];
    const auto& sm = mask.segments[b];
    if (sm.is_static.size() != nv) throw InvalidArgument("mask width does not match grid");
    SegmentTokens st;
    st.segment_id = b;
    st.frames = seg;
    st.dynamic_by_frame.resize(seg.length());
    for (std::size_t i = 0; i < nv; ++i) {
      if (sm.is_static[i]) {
        std::vector<std::span<const float>> rows;
        for (std::size_t t = seg.start; t <= seg.end; ++t) rows.push_back(grid.token(t, i));
        st.static_tokens.push_back({seg.start, i, detail::mean_of(rows, grid.channels())});
      } else {
        for (std::size_t t = seg.start; t <= seg.end; ++t) {
          const auto tok = grid.token(t, i);
          st.dynamic_by_frame[t - seg.start].push_back({t, i, {tok.begin(), tok.end()}});
        }
      }
    }
    out.push_back(std::move(st));
  }
  return out;
}

namespace detail {

struct Cluster {
  std::vector<std::size_t> members;  // indices into the clustered token list
  std::size_t min_location = 0;
};

/// Clusters `tokens` into max(1, round(beta * n)) groups, ordered by smallest source location.
inline std::vector<Cluster> cluster_tokens(const std::vector<LocatedToken>& tokens, double beta, std::size_t k_knn) {
  if (tokens.empty()) return {};
  const auto channels = tokens.front().values.size();
  Matrix points(tokens.size(), channels);
  for (std::size_t r = 0; r < tokens.size(); ++r) {
    std::copy(tokens[r].values.begin(), tokens[r].values.end(), points.row(r).begin());
  }
  const auto n_clusters = std::min(ratio_count(beta, tokens.size()), tokens.size());
  const auto res = dpc_knn(points, k_knn, n_clusters);
  std::vector<Cluster> clusters(n_clusters);
  for (std::size_t r = 0; r < tokens.size(); ++r) clusters[res.labels[r]].members.push_back(r);
  for (auto& c : clusters) {
    c.min_location = tokens[c.members.front()].location;
    for (auto m : c.members) c.min_location = std::min(c.min_location, tokens[m].location);
  }
  std::sort(clusters.begin(), clusters.end(),
            [](const Cluster& a, const Cluster& b) { return a.min_location < b.min_location; });
  return clusters;
}

}  // namespace detail

/// Spatial merging for one segment. Appends the segment's tokens to `out`.
inline void merge_spatial(const SegmentTokens& segment, double beta, std::size_t k_knn, MergedTokenSet& out,
                          SegmentTrace* trace = nullptr) {
  std::vector<std::size_t> seg_frames(segment.frames.length());
  std::iota(seg_frames.begin(), seg_frames.end(), segment.frames.start);

  auto emit = [&](const std::vector<LocatedToken>& tokens, const detail::Cluster& cluster,
                  std::vector<std::size_t> frames, MergeKind kind) {
    std::vector<std::span<const float>> rows;
    Provenance prov{segment.segment_id, std::move(frames), {}, kind};
    for (auto m : cluster.members) {
      rows.emplace_back(tokens[m].values);
      prov.source_locations.push_back(tokens[m].location);
    }
    std::sort(prov.source_locations.begin(), prov.source_locations.end());
    const auto channels = tokens.front().values.size();
    if (out.tokens.cols() == 0 && out.tokens.rows() == 0) out.tokens = Matrix(0, channels);
    out.tokens.append_row(detail::mean_of(rows, channels));
    if (trace) trace->cluster_sizes.push_back(prov.member_count());
    out.provenance.push_back(std::move(prov));
  };

  const auto static_clusters = detail::cluster_tokens(segment.static_tokens, beta, k_knn);
  for (const auto& c : static_clusters) emit(segment.static_tokens, c, seg_frames, MergeKind::static_merged);

  std::size_t dyn_clusters = 0;
  for (const auto& frame_tokens : segment.dynamic_by_frame) {
    const auto clusters = detail::cluster_tokens(frame_tokens, beta, k_knn);
    dyn_clusters = clusters.size();
    for (const auto& c : clusters) {
      emit(frame_tokens, c, {frame_tokens.front().frame}, MergeKind::dynamic_merged);
    }
  }
  if (trace) {
    trace->static_clusters = static_clusters.size();
    trace->dynamic_clusters_per_frame = dyn_clusters;
  }
}

inline MergedTokenSet merge_pipeline(const TokenGrid& grid, const PruneConfig& config) {
  config.validate();
  MergedTokenSet out;
  out.tokens = Matrix(0, grid.channels());
  out.partition = segment_frames(grid, config.gamma, config.k_knn);
  const auto mask = compute_static_mask(grid, out.partition, config.tau);
  out.zero_norm_pairs = mask.zero_norm_pairs();
  const auto segments = merge_temporal(grid, out.partition, mask);
  for (std::size_t b = 0; b < segments.size(); ++b) {
    SegmentTrace tr;
    tr.frames = segments[b].frames;
    tr.static_locations = mask.segments[b].static_count();
    tr.dynamic_locations = grid.tokens_per_frame() - tr.static_locations;
    tr.tokens_after_temporal = segments[b].token_count();
    const auto before = out.size();
    merge_spatial(segments[b], config.beta, config.k_knn, out, &tr);
    tr.tokens_after_spatial = out.size() - before;
    out.trace.push_back(std::move(tr));
  }
  return out;
}

}  // namespace prunevid
