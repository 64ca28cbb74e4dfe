#include "prunevid/stmerge.hpp"
#include "prunevid/synth.hpp"
#include "prunevid/token_io.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace prunevid;

namespace {

double cosine(std::span<const float> a, std::span<const float> b) {
  bool zero = false;
  return detail::cosine(a, b, zero);
}

}  // namespace

TEST(Synth, FullyStaticNoiselessFramesIdenticalWithinScene) {
  SynthSpec spec;
  spec.static_fraction = 1.0;
  spec.static_noise = 0.0;
  spec.seed = 2;
  const auto v = generate(spec);
  for (const auto& s : v.scenes.segments)
    for (std::size_t t = s.start + 1; t <= s.end; ++t)
      for (std::size_t i = 0; i < spec.tokens_per_frame; ++i) {
        const auto a = v.grid.token(s.start, i), b = v.grid.token(t, i);
        ASSERT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
      }
}

TEST(Synth, StaticCountPerScene) {
  const auto v = generate(SynthSpec{.seed = 1});
  ASSERT_EQ(v.static_mask.size(), 4u);
  for (const auto& m : v.static_mask) EXPECT_EQ(std::count(m.begin(), m.end(), true), 48);
  EXPECT_EQ(v.scenes, (SegmentPartition{{{0, 3}, {4, 7}, {8, 11}, {12, 15}}}));
}

TEST(Synth, SameSeedSameBytes) {
  const SynthSpec spec{.seed = 77};
  EXPECT_EQ(encode_token_grid(generate(spec).grid), encode_token_grid(generate(spec).grid));
  const SynthSpec other{.seed = 78};
  EXPECT_NE(encode_token_grid(generate(spec).grid), encode_token_grid(generate(other).grid));
}

TEST(Synth, CosineMarginsHold) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto v = generate(SynthSpec{.seed = seed});
    for (std::size_t s = 0; s < v.scenes.size(); ++s) {
      const auto& seg = v.scenes.segments[s];
      for (std::size_t i = 0; i < 64; ++i)
        for (std::size_t t = seg.start; t <= seg.end; ++t)
          for (std::size_t u = t + 1; u <= seg.end; ++u) {
            const double c = cosine(v.grid.token(t, i), v.grid.token(u, i));
            if (v.static_mask[s][i]) {
              ASSERT_GE(c, 0.95 - 1e-6);
            } else {
              ASSERT_LE(c, 0.5 + 1e-6);
            }
          }
    }
  }
}

TEST(Synth, SceneSeparation) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto v = generate(SynthSpec{.seed = seed});
    EXPECT_GE(scene_separation_ratio(v.grid, v.scenes), 5.0);
  }
}

TEST(Synth, RejectsInvalidSpecs) {
  EXPECT_THROW(generate(SynthSpec{.static_fraction = 1.1}), InvalidArgument);
  EXPECT_THROW(generate(SynthSpec{.static_fraction = -0.1}), InvalidArgument);
  EXPECT_THROW(generate(SynthSpec{.frames = 15}), InvalidArgument);
  EXPECT_THROW(generate(SynthSpec{.channels = 0}), InvalidArgument);
}

TEST(Synth, DefaultCorpusShape) {
  const auto specs = default_corpus();
  ASSERT_EQ(specs.size(), 10u);
  for (const auto& s : specs) {
    const auto v = generate(s);
    EXPECT_EQ(v.grid.frames(), 16u);
    EXPECT_EQ(v.grid.tokens_per_frame(), 64u);
    EXPECT_EQ(v.grid.channels(), 64u);
  }
  EXPECT_NE(specs[0].seed, specs[1].seed);
}

TEST(Synth, GroundTruthJson) {
  const SynthSpec spec{.seed = 4};
  const auto v = generate(spec);
  const auto j = ground_truth_json(spec, v);
  ASSERT_EQ(j.at("scenes").size(), 4u);
  EXPECT_EQ(j.at("scenes")[1].at("start_frame"), 4);
  EXPECT_EQ(j.at("scenes")[1].at("static_locations").size(), 48u);
  EXPECT_EQ(j.at("spec").at("seed"), 4);
}
