#pragma once

#include "prunevid/core.hpp"
#include "prunevid/metrics.hpp"
#include "prunevid/rng.hpp"
#include "prunevid/select.hpp"
#include "prunevid/stmerge.hpp"
#include "prunevid/tinyllm.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace prunevid {

/// Seeded synthetic question ids; the selector only needs attention geometry.
inline std::vector<std::uint32_t> synthetic_question(std::size_t length, std::size_t vocab, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::uint32_t> ids(length);
  for (auto& id : ids) id = static_cast<std::uint32_t>(rng.below(vocab));
  return ids;
}

struct VideoRun {
  MergedTokenSet merged;
  SelectionSet selection;
  CompressedState compressed;
  EfficiencyReport report;
};

/// Prefill to layer M on merged tokens, select, compress and finish the
/// remaining layers on the reduced sequence.
inline VideoRun run_on_merged(const Model& model, MergedTokenSet merged, std::size_t raw_tokens,
                              std::span<const std::uint32_t> question, const PruneConfig& config,
                              std::string video_id) {
  const auto& spec = model.spec();
  config.validate(spec.layers);
  if (question.empty()) throw InvalidArgument("at least one question token is required");
  VideoRun run;
  const auto pre = prefill(model, merged.tokens, question, config.m_layer, /*full_depth=*/false);
  const auto a_qv = extract_qv_attention(pre.attention_at_m, pre.n_visual);
  run.selection = select_top_alpha(score_visual_tokens(a_qv), config.alpha);
  run.compressed = compress_and_continue(model, pre, run.selection, config.m_layer);

  std::size_t temporal = 0;
  for (const auto& tr : merged.trace) temporal += tr.tokens_after_temporal;
  run.report = make_report(std::move(video_id), spec.layers, config.m_layer, spec.channels, question.size(),
                           raw_tokens, temporal, merged.size(), run.selection.indices.size(), merged.partition.size());
  run.merged = std::move(merged);
  return run;
}

inline VideoRun run_video(const Model& model, const TokenGrid& grid, std::span<const std::uint32_t> question,
                          const PruneConfig& config, std::string video_id) {
  return run_on_merged(model, merge_pipeline(grid, config), grid.token_count(), question, config,
                       std::move(video_id));
}

inline nlohmann::ordered_json trace_json(const MergedTokenSet& merged) {
  nlohmann::ordered_json segs = nlohmann::ordered_json::array();
  for (const auto& tr : merged.trace) {
    const double density =
        static_cast<double>(tr.static_locations) / static_cast<double>(tr.static_locations + tr.dynamic_locations);
    segs.push_back({{"start_frame", tr.frames.start},
                    {"end_frame", tr.frames.end},
                    {"static_locations", tr.static_locations},
                    {"dynamic_locations", tr.dynamic_locations},
                    {"mask_density", density},
                    {"tokens_after_temporal", tr.tokens_after_temporal},
                    {"static_clusters", tr.static_clusters},
                    {"dynamic_clusters_per_frame", tr.dynamic_clusters_per_frame},
                    {"tokens_after_spatial", tr.tokens_after_spatial},
                    {"cluster_sizes", tr.cluster_sizes}});
  }
  return {{"segments", segs}, {"merged_tokens", merged.size()}, {"zero_norm_pairs", merged.zero_norm_pairs}};
}

/// Selection export: indices, scores and provenance of every merged token.
inline nlohmann::ordered_json selection_json(const VideoRun& run, std::size_t frames, std::size_t tokens_per_frame) {
  nlohmann::ordered_json prov = nlohmann::ordered_json::array();
  for (const auto& p : run.merged.provenance) {
    prov.push_back({{"segment", p.segment_id},
                    {"kind", to_string(p.kind)},
                    {"frames", p.source_frames},
                    {"locations", p.source_locations}});
  }
  nlohmann::ordered_json segments = nlohmann::ordered_json::array();
  for (const auto& s : run.merged.partition.segments) segments.push_back({s.start, s.end});
  return {{"video_id", run.report.video_id},
          {"frames", frames},
          {"tokens_per_frame", tokens_per_frame},
          {"alpha", run.selection.alpha},
          {"keep_count", run.selection.keep_count},
          {"segments", segments},
          {"indices", run.selection.indices},
          {"scores", run.selection.scores},
          {"provenance", prov}};
}

}  // namespace prunevid
