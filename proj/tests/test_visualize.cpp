#include "prunevid/pipeline.hpp"
#include "prunevid/synth.hpp"
#include "prunevid/visualize.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;
using namespace prunevid;

namespace {

ModelSpec small_model() {
  ModelSpec s;
  s.layers = 4;
  s.heads = 2;
  s.channels = 32;
  s.seed = 3;
  return s;
}

SelectionExport export_for(double alpha) {
  const auto video = generate(SynthSpec{.seed = 9});
  const Model model(small_model());
  PruneConfig config;
  config.alpha = alpha;
  config.m_layer = 2;
  const auto q = synthetic_question(4, model.spec().vocab, 1);
  const auto run = run_video(model, video.grid, q, config, "v");
  // Round-trip through JSON, as the CLI does.
  return parse_selection(nlohmann::json::parse(selection_json(run, 16, 64).dump()));
}

}  // namespace

TEST(Backproject, EveryCellCoveredOnce) {
  const auto map = backproject(export_for(0.4));
  for (auto c : map.coverage) ASSERT_EQ(c, 1u);
  for (auto s : map.score) {
    ASSERT_GE(s, 0.0f);
    ASSERT_LE(s, 1.0f);
  }
}

TEST(Backproject, AlphaOneSelectsEveryCell) {
  const auto map = backproject(export_for(1.0));
  for (bool s : map.selected) ASSERT_TRUE(s);
}

TEST(Backproject, RejectsOutOfRangeIndex) {
  auto e = export_for(0.4);
  e.indices.push_back(e.provenance.size());
  EXPECT_THROW(backproject(e), InvalidArgument);
}

TEST(Normalize, MinMax) {
  EXPECT_EQ(normalize_scores({2.0f, 4.0f, 3.0f}), (std::vector<float>{0.0f, 1.0f, 0.5f}));
  EXPECT_EQ(normalize_scores({0.3f, 0.3f}), (std::vector<float>{0.0f, 0.0f}));
  EXPECT_TRUE(normalize_scores({}).empty());
}

TEST(Ppm, HeaderAndSize) {
  const auto e = export_for(0.4);
  const auto map = backproject(e);
  const auto path = fs::temp_directory_path() / "prunevid_test_segment.ppm";
  write_segment_ppm(map, e.partition.segments[0], path, 4);
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  in.get();
  EXPECT_EQ(magic, "P6");
  EXPECT_EQ(maxval, 255u);
  const auto frames = e.partition.segments[0].length();
  EXPECT_EQ(w, frames * 8 * 4 + (frames - 1) * 2);  // 64 cells -> 8x8 grid per frame
  EXPECT_EQ(h, 32u);
  const auto header = static_cast<std::size_t>(in.tellg());
  EXPECT_EQ(fs::file_size(path), header + w * h * 3);
}
