// Generates one synthetic video, prunes it with the default settings and
// prints the token counts at each stage.

#include "prunevid/prunevid.hpp"

#include <iostream>

int main() {
  using namespace prunevid;

  SynthSpec spec;
  spec.channels = 64;
  spec.static_fraction = 0.5;
  spec.seed = 1;
  const auto video = generate(spec);

  const Model model(ModelSpec{});
  const PruneConfig config;  // tau 0.8, gamma 0.25, beta 0.5, alpha 0.4, M 10
  const auto question = synthetic_question(16, model.spec().vocab, 42);
  const auto run = run_video(model, video.grid, question, config, "quickstart");

  const auto& r = run.report;
  std::cout << "raw tokens:        " << r.raw_tokens << "\n"
            << "segments:          " << r.segments << "\n"
            << "after temporal:    " << r.temporal_tokens << "\n"
            << "after spatial:     " << r.merged_tokens << "\n"
            << "selected at M:     " << r.selected_tokens << "\n"
            << "retained ratio:    " << r.retained_ratio << "\n"
            << "flops multiplier:  " << r.flops.multiplier << "\n"
            << "cache rows/layer:  " << run.compressed.caches.length() << "\n";

  auto caches = run.compressed.caches;
  const auto answer = greedy_decode(model, caches, question.back(), 8);
  std::cout << "greedy tokens:    ";
  for (auto t : answer) std::cout << ' ' << t;
  std::cout << "\n";
}
