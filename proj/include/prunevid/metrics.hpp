#pragma once

#include "prunevid/core.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

namespace prunevid {

/// Cost model recorded in every report.
inline constexpr const char* kFlopsModel =
    "per-layer cost(n) = 4nC^2 (QKVO projections) + 2n^2C (scores and weighted values) + 16nC^2 (FFN, 4x width); "
    "baseline = L*cost(N_q + raw); pruned = M*cost(N_q + merged) + (L-M)*cost(N_q + selected)";

inline double layer_cost(double n, double channels) {
  return 4.0 * n * channels * channels + 2.0 * n * n * channels + 16.0 * n * channels * channels;
}

struct FlopsEstimate {
  double baseline = 0.0;
  double pruned = 0.0;
  double multiplier = 1.0;
};

inline FlopsEstimate flops_estimate(std::size_t layers, std::size_t m_layer, std::size_t channels,
                                    std::size_t n_question, std::size_t raw, std::size_t merged,
                                    std::size_t selected) {
  if (m_layer >= layers) throw InvalidArgument("flops_estimate: M must be smaller than L");
  const double c = static_cast<double>(channels);
  const double q = static_cast<double>(n_question);
  FlopsEstimate f;
  f.baseline = static_cast<double>(layers) * layer_cost(q + static_cast<double>(raw), c);
  f.pruned = static_cast<double>(m_layer) * layer_cost(q + static_cast<double>(merged), c) +
             static_cast<double>(layers - m_layer) * layer_cost(q + static_cast<double>(selected), c);
  f.multiplier = f.baseline > 0.0 ? f.pruned / f.baseline : 1.0;
  return f;
}

inline double retained_ratio(std::size_t selected, std::size_t raw) {
  if (raw == 0) throw InvalidArgument("retained_ratio: no raw tokens");
  return static_cast<double>(selected) / static_cast<double>(raw);
}

struct EfficiencyReport {
  std::string video_id;
  std::size_t raw_tokens = 0;
  std::size_t temporal_tokens = 0;  // after static averaging, before spatial clustering
  std::size_t merged_tokens = 0;
  std::size_t selected_tokens = 0;
  std::size_t question_tokens = 0;
  std::size_t segments = 0;
  double retained_ratio = 1.0;
  double merge_ratio = 1.0;  // merged / raw
  FlopsEstimate flops;
};

inline EfficiencyReport make_report(std::string video_id, std::size_t layers, std::size_t m_layer,
                                    std::size_t channels, std::size_t n_question, std::size_t raw,
                                    std::size_t temporal, std::size_t merged, std::size_t selected,
                                    std::size_t segments) {
  if (!(selected <= merged && merged <= raw)) throw InvalidArgument("report counts must satisfy selected <= merged <= raw");
  EfficiencyReport r;
  r.video_id = std::move(video_id);
  r.raw_tokens = raw;
  r.temporal_tokens = temporal;
  r.merged_tokens = merged;
  r.selected_tokens = selected;
  r.question_tokens = n_question;
  r.segments = segments;
  r.retained_ratio = retained_ratio(selected, raw);
  r.merge_ratio = static_cast<double>(merged) / static_cast<double>(raw);
  r.flops = flops_estimate(layers, m_layer, channels, n_question, raw, merged, selected);
  return r;
}

inline nlohmann::ordered_json to_json(const EfficiencyReport& r) {
  return {{"video_id", r.video_id},
          {"raw_tokens", r.raw_tokens},
          {"temporal_tokens", r.temporal_tokens},
          {"merged_tokens", r.merged_tokens},
          {"selected_tokens", r.selected_tokens},
          {"question_tokens", r.question_tokens},
          {"segments", r.segments},
          {"merge_ratio", r.merge_ratio},
          {"retained_ratio", r.retained_ratio},
          {"flops_baseline", r.flops.baseline},
          {"flops_pruned", r.flops.pruned},
          {"flops_multiplier", r.flops.multiplier}};
}

struct AggregateReport {
  std::size_t videos = 0;
  double mean_merge_ratio = 0.0;
  double mean_retained_ratio = 0.0;
  double mean_flops_multiplier = 0.0;
};

inline AggregateReport aggregate(const std::vector<EfficiencyReport>& reports) {
  AggregateReport a;
  a.videos = reports.size();
  if (reports.empty()) return a;
  for (const auto& r : reports) {
    a.mean_merge_ratio += r.merge_ratio;
    a.mean_retained_ratio += r.retained_ratio;
    a.mean_flops_multiplier += r.flops.multiplier;
  }
  const double n = static_cast<double>(reports.size());
  a.mean_merge_ratio /= n;
  a.mean_retained_ratio /= n;
  a.mean_flops_multiplier /= n;
  return a;
}

inline nlohmann::ordered_json to_json(const AggregateReport& a) {
  return {{"videos", a.videos},
          {"mean_merge_ratio", a.mean_merge_ratio},
          {"mean_retained_ratio", a.mean_retained_ratio},
          {"mean_flops_multiplier", a.mean_flops_multiplier}};
}

inline std::string reports_csv(const std::vector<EfficiencyReport>& reports) {
  std::ostringstream out;
  out.precision(17);
  out << "# " << kFlopsModel << "\n";
  out << "video_id,raw_tokens,temporal_tokens,merged_tokens,selected_tokens,question_tokens,segments,"
         "merge_ratio,retained_ratio,flops_baseline,flops_pruned,flops_multiplier\n";
  for (const auto& r : reports) {
    out << r.video_id << ',' << r.raw_tokens << ',' << r.temporal_tokens << ',' << r.merged_tokens << ','
        << r.selected_tokens << ',' << r.question_tokens << ',' << r.segments << ',' << r.merge_ratio << ','
        << r.retained_ratio << ',' << r.flops.baseline << ',' << r.flops.pruned << ',' << r.flops.multiplier
        << '\n';
  }
  return out.str();
}

}  // namespace prunevid
