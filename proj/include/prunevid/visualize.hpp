#pragma once

// Maps per-token selection scores back onto the original (frame, location)
// cells and renders one heatmap per temporal segment as a binary PPM.

#include "prunevid/core.hpp"
#include "prunevid/stmerge.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace prunevid {

struct SelectionExport {
  std::string video_id;
  std::size_t frames = 0;
  std::size_t tokens_per_frame = 0;
  SegmentPartition partition;
  std::vector<float> scores;
  std::vector<std::size_t> indices;
  std::vector<Provenance> provenance;
};

inline SelectionExport parse_selection(const nlohmann::json& j) {
  SelectionExport e;
  e.video_id = j.at("video_id").get<std::string>();
  e.frames = j.at("frames").get<std::size_t>();
  e.tokens_per_frame = j.at("tokens_per_frame").get<std::size_t>();
  for (const auto& s : j.at("segments")) e.partition.segments.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()});
  e.scores = j.at("scores").get<std::vector<float>>();
  e.indices = j.at("indices").get<std::vector<std::size_t>>();
  for (const auto& p : j.at("provenance")) {
    Provenance pr;
    pr.segment_id = p.at("segment").get<std::size_t>();
    pr.kind = p.at("kind").get<std::string>() == "static" ? MergeKind::static_merged : MergeKind::dynamic_merged;
    pr.source_frames = p.at("frames").get<std::vector<std::size_t>>();
    pr.source_locations = p.at("locations").get<std::vector<std::size_t>>();
    e.provenance.push_back(std::move(pr));
  }
  if (e.scores.size() != e.provenance.size()) throw InvalidArgument("selection export: scores and provenance differ in length");
  return e;
}

struct CellMap {
  std::size_t frames = 0;
  std::size_t tokens_per_frame = 0;
  std::vector<float> score;       // normalised to [0, 1] per video
  std::vector<bool> selected;
  std::vector<std::size_t> coverage;  // merged tokens covering each cell

  [[nodiscard]] std::size_t at(std::size_t frame, std::size_t location) const { return frame * tokens_per_frame + location; }
};

/// Min-max rescale; a constant vector maps to all zeros.
inline std::vector<float> normalize_scores(const std::vector<float>& scores) {
  if (scores.empty()) return {};
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  std::vector<float> out(scores.size(), 0.0f);
  const double range = static_cast<double>(*hi) - *lo;
  if (range <= 0.0) return out;
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = static_cast<float>((scores[i] - *lo) / range);
  return out;
}

inline CellMap backproject(const SelectionExport& e) {
  CellMap m;
  m.frames = e.frames;
  m.tokens_per_frame = e.tokens_per_frame;
  const auto cells = e.frames * e.tokens_per_frame;
  m.score.assign(cells, 0.0f);
  m.selected.assign(cells, false);
  m.coverage.assign(cells, 0);
  std::vector<bool> is_selected(e.provenance.size(), false);
  for (auto i : e.indices) {
    if (i >= e.provenance.size()) throw InvalidArgument("selection index out of range");
    is_selected[i] = true;
  }
  const auto norm = normalize_scores(e.scores);
  for (std::size_t k = 0; k < e.provenance.size(); ++k) {
    for (auto t : e.provenance[k].source_frames) {
      for (auto loc : e.provenance[k].source_locations) {
        if (t >= e.frames || loc >= e.tokens_per_frame) throw InvalidArgument("provenance cell out of range");
        const auto c = m.at(t, loc);
        m.score[c] = norm[k];
        m.selected[c] = is_selected[k];
        ++m.coverage[c];
      }
    }
  }
  return m;
}

namespace detail {

inline void heat_color(float v, unsigned char rgb[3]) {
  // black -> red -> yellow -> white
  const float x = std::clamp(v, 0.0f, 1.0f) * 3.0f;
  rgb[0] = static_cast<unsigned char>(255.0f * std::min(x, 1.0f));
  rgb[1] = static_cast<unsigned char>(255.0f * std::clamp(x - 1.0f, 0.0f, 1.0f));
  rgb[2] = static_cast<unsigned char>(255.0f * std::clamp(x - 2.0f, 0.0f, 1.0f));
}

}  // namespace detail

/// One panel per frame, locations laid out on a near-square grid. Selected
/// cells get a green outline.
inline void write_segment_ppm(const CellMap& map, const FrameRange& segment, const std::filesystem::path& path,
                              std::size_t cell_px = 8) {
  const auto grid_w = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(map.tokens_per_frame))));
  const auto grid_h = (map.tokens_per_frame + grid_w - 1) / grid_w;
  const std::size_t gap = 2;
  const auto panel_w = grid_w * cell_px;
  const auto width = segment.length() * (panel_w + gap) - gap;
  const auto height = grid_h * cell_px;
  std::vector<unsigned char> img(width * height * 3, 40);

  for (std::size_t f = 0; f < segment.length(); ++f) {
    const auto t = segment.start + f;
    for (std::size_t loc = 0; loc < map.tokens_per_frame; ++loc) {
      const auto c = map.at(t, loc);
      unsigned char rgb[3];
      detail::heat_color(map.score[c], rgb);
      const auto x0 = f * (panel_w + gap) + (loc % grid_w) * cell_px;
      const auto y0 = (loc / grid_w) * cell_px;
      for (std::size_t dy = 0; dy < cell_px; ++dy) {
        for (std::size_t dx = 0; dx < cell_px; ++dx) {
          const bool edge = dx == 0 || dy == 0 || dx + 1 == cell_px || dy + 1 == cell_px;
          unsigned char* px = &img[((y0 + dy) * width + x0 + dx) * 3];
          if (edge && map.selected[c]) {
            px[0] = 0;
            px[1] = 220;
            px[2] = 0;
          } else {
            std::copy(rgb, rgb + 3, px);
          }
        }
      }
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "P6\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
}

}  // namespace prunevid
