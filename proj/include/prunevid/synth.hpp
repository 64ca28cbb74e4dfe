#pragma once

// Synthetic video tokens with planted scenes and static/dynamic locations.
//
// Each scene picks its static locations at random. A static location holds
// scene_offset + base + jitter(static_noise) in every frame, where the bases
// are centred across the scene's static locations and the scene offsets are
// orthogonal with equal norm. A dynamic location draws a fresh
// N(0, dynamic_drift^2) vector every frame. Mean-pooled frame features are
// therefore the scene offset (scaled by the static fraction) plus dynamic
// noise, and the offset norm is chosen so that scenes sit `separation` times
// further apart than frames inside a scene.
//
// Margins are enforced by redrawing: static tokens get pairwise cosine
// >= 0.95 when static_noise <= 0.05, dynamic tokens get pairwise cosine
// <= 0.5, and scene separation is at least 5x the largest intra-scene
// frame-feature distance.

#include "prunevid/core.hpp"
#include "prunevid/rng.hpp"
#include "prunevid/stmerge.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

namespace prunevid {

struct SynthSpec {
  std::size_t frames = 16;
  std::size_t tokens_per_frame = 64;
  std::size_t channels = 32;
  std::size_t n_scenes = 4;
  double static_fraction = 0.75;
  double static_noise = 0.05;
  double dynamic_drift = 1.0;
  double separation = 8.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (frames == 0 || tokens_per_frame == 0 || channels == 0) throw InvalidArgument("synth: dimensions must be positive");
    if (n_scenes == 0 || frames % n_scenes != 0) throw InvalidArgument("synth: n_scenes must divide frames");
    if (!(static_fraction >= 0.0 && static_fraction <= 1.0)) throw InvalidArgument("synth: static_fraction must be in [0, 1]");
    if (!(static_noise >= 0.0) || !std::isfinite(static_noise)) throw InvalidArgument("synth: static_noise must be >= 0");
    if (!(dynamic_drift > 0.0) || !std::isfinite(dynamic_drift)) throw InvalidArgument("synth: dynamic_drift must be > 0");
    if (!(separation >= 5.0) || !std::isfinite(separation)) throw InvalidArgument("synth: separation must be >= 5");
  }

  [[nodiscard]] std::size_t static_locations() const { return round_count(static_fraction * static_cast<double>(tokens_per_frame)); }
};

struct SynthVideo {
  TokenGrid grid;
  SegmentPartition scenes;
  std::vector<std::vector<bool>> static_mask;  // per scene, per location
};

inline constexpr double kStaticCosineFloor = 0.95;
inline constexpr double kDynamicCosineCeiling = 0.5;
inline constexpr double kSceneSeparationFloor = 5.0;

namespace detail {

inline double cosine_d(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / std::sqrt(na * nb);
}

inline std::vector<double> gaussian_vector(Rng& rng, std::size_t n, double sigma) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(0.0, sigma);
  return v;
}

/// `count` orthonormal directions (random unit vectors once count > dim).
inline std::vector<std::vector<double>> scene_directions(Rng& rng, std::size_t count, std::size_t dim) {
  std::vector<std::vector<double>> dirs;
  while (dirs.size() < count) {
    auto v = gaussian_vector(rng, dim, 1.0);
    if (dirs.size() < dim) {
      for (const auto& d : dirs) {
        double dot = 0;
        for (std::size_t i = 0; i < dim; ++i) dot += v[i] * d[i];
        for (std::size_t i = 0; i < dim; ++i) v[i] -= dot * d[i];
      }
    }
    double norm = 0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;
    for (auto& x : v) x /= norm;
    dirs.push_back(std::move(v));
  }
  return dirs;
}

inline double frame_distance(const Matrix& f, std::size_t a, std::size_t b) {
  double acc = 0;
  for (std::size_t c = 0; c < f.cols(); ++c) {
    const double d = static_cast<double>(f(a, c)) - f(b, c);
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace detail

/// Smallest inter-scene over largest intra-scene frame-feature distance.
inline double scene_separation_ratio(const TokenGrid& grid, const SegmentPartition& scenes) {
  const auto feats = frame_features(grid);
  std::vector<std::size_t> scene_of(grid.frames());
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    for (auto t = scenes.segments[s].start; t <= scenes.segments[s].end; ++t) scene_of[t] = s;
  }
  double intra = 0.0, inter = INFINITY;
  for (std::size_t a = 0; a < grid.frames(); ++a) {
    for (std::size_t b = a + 1; b < grid.frames(); ++b) {
      const double d = detail::frame_distance(feats, a, b);
      if (scene_of[a] == scene_of[b]) intra = std::max(intra, d);
      else inter = std::min(inter, d);
    }
  }
  if (intra == 0.0) return INFINITY;
  return inter / intra;
}

inline SynthVideo generate(const SynthSpec& spec) {
  spec.validate();
  const auto T = spec.frames, nv = spec.tokens_per_frame, C = spec.channels;
  const auto n_static = spec.static_locations();
  const auto n_dynamic = nv - n_static;
  const auto scene_len = T / spec.n_scenes;
  const bool enforce_static = spec.static_noise <= 0.05;
  const bool enforce_dynamic = C >= 4;
  const bool enforce_separation = spec.n_scenes > 1 && n_static > 0;
  constexpr int kMaxDraws = 256;

  // Expected frame-feature distance between two frames of one scene.
  const double intra = std::sqrt(2.0 * static_cast<double>(C)) *
                       std::sqrt(static_cast<double>(n_dynamic) * spec.dynamic_drift * spec.dynamic_drift +
                                 static_cast<double>(n_static) * spec.static_noise * spec.static_noise) /
                       static_cast<double>(nv);
  double offset_norm = 0.0;
  if (n_static > 0) {
    offset_norm = spec.separation * std::max(intra, 1e-3) * static_cast<double>(nv) /
                  (static_cast<double>(n_static) * std::sqrt(2.0));
  }

  Rng rng(spec.seed);
  for (int attempt = 0; attempt < 16; ++attempt) {
    const auto dirs = detail::scene_directions(rng, spec.n_scenes, C);
    std::vector<float> data(T * nv * C);
    auto cell = [&](std::size_t t, std::size_t i) { return data.begin() + static_cast<std::ptrdiff_t>((t * nv + i) * C); };
    SegmentPartition scenes;
    std::vector<std::vector<bool>> static_mask;

    for (std::size_t s = 0; s < spec.n_scenes; ++s) {
      const auto t0 = s * scene_len;
      scenes.segments.push_back({t0, t0 + scene_len - 1});

      std::vector<std::size_t> perm(nv);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      for (std::size_t i = 0; i < n_static; ++i) std::swap(perm[i], perm[i + rng.below(nv - i)]);
      std::vector<bool> is_static(nv, false);
      for (std::size_t i = 0; i < n_static; ++i) is_static[perm[i]] = true;

      std::vector<std::vector<double>> bases;
      std::vector<double> base_mean(C, 0.0);
      for (std::size_t i = 0; i < nv; ++i) {
        if (!is_static[i]) continue;
        bases.push_back(detail::gaussian_vector(rng, C, 1.0));
        for (std::size_t c = 0; c < C; ++c) base_mean[c] += bases.back()[c] / static_cast<double>(n_static);
      }

      std::size_t b = 0;
      for (std::size_t i = 0; i < nv; ++i) {
        std::vector<std::vector<double>> frames_i;
        if (is_static[i]) {
          std::vector<double> centre(C);
          for (std::size_t c = 0; c < C; ++c) centre[c] = offset_norm * dirs[s][c] + bases[b][c] - base_mean[c];
          ++b;
          for (std::size_t t = 0; t < scene_len; ++t) {
            std::vector<double> v;
            for (int draw = 0;; ++draw) {
              if (draw == kMaxDraws) throw Error("synth: cannot meet the static cosine margin");
              v = centre;
              for (auto& x : v) x += rng.normal(0.0, spec.static_noise);
              const bool ok = !enforce_static || std::all_of(frames_i.begin(), frames_i.end(), [&](const auto& u) {
                return detail::cosine_d(u, v) >= kStaticCosineFloor;
              });
              if (ok) break;
            }
            frames_i.push_back(std::move(v));
          }
        } else {
          for (std::size_t t = 0; t < scene_len; ++t) {
            std::vector<double> v;
            for (int draw = 0;; ++draw) {
              if (draw == kMaxDraws) throw Error("synth: cannot meet the dynamic cosine margin");
              v = detail::gaussian_vector(rng, C, spec.dynamic_drift);
              const bool ok = !enforce_dynamic || std::all_of(frames_i.begin(), frames_i.end(), [&](const auto& u) {
                return detail::cosine_d(u, v) <= kDynamicCosineCeiling;
              });
              if (ok) break;
            }
            frames_i.push_back(std::move(v));
          }
        }
        for (std::size_t t = 0; t < scene_len; ++t) {
          std::transform(frames_i[t].begin(), frames_i[t].end(), cell(t0 + t, i),
                         [](double x) { return static_cast<float>(x); });
        }
      }
      static_mask.push_back(std::move(is_static));
    }

    SynthVideo video{TokenGrid(T, nv, C, std::move(data)), std::move(scenes), std::move(static_mask)};
    if (!enforce_separation || scene_separation_ratio(video.grid, video.scenes) >= kSceneSeparationFloor) {
      return video;
    }
  }
  throw Error("synth: cannot meet the scene separation margin");
}

/// The mixed corpus used for efficiency runs: varying static content over
/// four scenes of four frames.
inline std::vector<SynthSpec> default_corpus(std::size_t videos = 10, std::uint64_t seed = 7) {
  constexpr double kFractions[] = {0.125, 0.25, 0.375, 0.5, 0.625};
  std::vector<SynthSpec> specs;
  for (std::size_t v = 0; v < videos; ++v) {
    SynthSpec s;
    s.frames = 16;
    s.tokens_per_frame = 64;
    s.channels = 64;
    s.n_scenes = 4;
    s.static_fraction = kFractions[v % std::size(kFractions)];
    s.static_noise = 0.02;
    s.dynamic_drift = 0.5;
    s.seed = mix_seed(seed, v);
    specs.push_back(s);
  }
  return specs;
}

inline nlohmann::ordered_json to_json(const SynthSpec& s) {
  return {{"frames", s.frames},
          {"tokens_per_frame", s.tokens_per_frame},
          {"channels", s.channels},
          {"n_scenes", s.n_scenes},
          {"static_fraction", s.static_fraction},
          {"static_noise", s.static_noise},
          {"dynamic_drift", s.dynamic_drift},
          {"separation", s.separation},
          {"seed", s.seed}};
}

/// Ground-truth sidecar: scene ranges and static locations per scene.
inline nlohmann::ordered_json ground_truth_json(const SynthSpec& spec, const SynthVideo& video) {
  nlohmann::ordered_json scenes = nlohmann::ordered_json::array();
  for (std::size_t s = 0; s < video.scenes.size(); ++s) {
    std::vector<std::size_t> statics;
    for (std::size_t i = 0; i < video.static_mask[s].size(); ++i) {
      if (video.static_mask[s][i]) statics.push_back(i);
    }
    scenes.push_back({{"start_frame", video.scenes.segments[s].start},
                      {"end_frame", video.scenes.segments[s].end},
                      {"static_locations", statics}});
  }
  return {{"spec", to_json(spec)}, {"scenes", scenes}};
}

}  // namespace prunevid
