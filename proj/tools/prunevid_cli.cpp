// prunevid: generate synthetic corpora, run the pruning pipeline, sweep
// hyperparameters and render selection heatmaps.
//
// Exit codes: 0 success, 1 partial or total failure, 2 usage error.

#include "prunevid/prunevid.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace prunevid;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// ---------------------------------------------------------------- generate

struct GenerateOptions {
  fs::path out;
  std::size_t videos = 10;
  std::uint64_t seed = 7;
  std::optional<std::size_t> frames, tokens, channels, scenes;
  std::optional<double> static_fraction, static_noise, dynamic_drift;
};

int cmd_generate(const GenerateOptions& o) {
  auto specs = default_corpus(o.videos, o.seed);
  for (auto& s : specs) {
    if (o.frames) s.frames = *o.frames;
    if (o.tokens) s.tokens_per_frame = *o.tokens;
    if (o.channels) s.channels = *o.channels;
    if (o.scenes) s.n_scenes = *o.scenes;
    if (o.static_fraction) s.static_fraction = *o.static_fraction;
    if (o.static_noise) s.static_noise = *o.static_noise;
    if (o.dynamic_drift) s.dynamic_drift = *o.dynamic_drift;
    try {
      s.validate();
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
  }
  fs::create_directories(o.out);
  for (std::size_t v = 0; v < specs.size(); ++v) {
    char name[32];
    std::snprintf(name, sizeof name, "video_%03zu", v);
    const auto video = generate(specs[v]);
    save_token_grid(video.grid, o.out / (std::string(name) + ".pvtg"));
    write_text(o.out / (std::string(name) + ".truth.json"), dump(ground_truth_json(specs[v], video)));
  }
  std::cout << "wrote " << specs.size() << " videos to " << o.out.string() << "\n";
  return kExitOk;
}

// --------------------------------------------------------------------- run

struct RunOptions {
  fs::path corpus;
  fs::path out = "out";
  std::string run_id = "default";
  std::optional<fs::path> config_file;
  PruneConfig config;
  ModelSpec model;
  std::size_t questions = 16;
  std::size_t workers = 1;
  std::string sweep;
  bool trace = false;
};

struct SweepAxis {
  std::string key;
  std::vector<double> values;
};

std::vector<SweepAxis> parse_sweep(const std::string& text) {
  static const std::vector<std::string> known{"tau", "gamma", "beta", "k", "m", "alpha"};
  std::vector<SweepAxis> axes;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw UsageError("sweep axis needs key=start:stop:step, got '" + item + "'");
    SweepAxis axis{item.substr(0, eq), {}};
    if (std::find(known.begin(), known.end(), axis.key) == known.end()) {
      throw UsageError("unknown sweep key '" + axis.key + "'");
    }
    std::vector<double> parts;
    std::stringstream range(item.substr(eq + 1));
    std::string p;
    try {
      while (std::getline(range, p, ':')) parts.push_back(std::stod(p));
    } catch (const std::exception&) {
      throw UsageError("bad number in sweep axis '" + item + "'");
    }
    if (parts.size() == 1) {
      axis.values = parts;
    } else if (parts.size() == 3 && parts[2] > 0 && parts[1] >= parts[0]) {
      const auto steps = static_cast<std::size_t>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
      for (std::size_t i = 0; i <= steps; ++i) {
        // Rounded to 12 digits so 0.1 + 2 * 0.1 prints as 0.3.
        const double v = parts[0] + static_cast<double>(i) * parts[2];
        axis.values.push_back(std::round(v * 1e12) / 1e12);
      }
    } else {
      throw UsageError("sweep axis '" + item + "' must be a value or start:stop:step");
    }
    axes.push_back(std::move(axis));
  }
  return axes;
}

struct VideoInput {
  std::string id;
  fs::path path;
};

struct VideoOutcome {
  std::optional<TokenGrid> grid;
  std::string error;
};

template <typename F>
void parallel_for(std::size_t n, std::size_t workers, F&& body) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

ordered_json config_json(const PruneConfig& c) {
  return {{"tau", c.tau}, {"gamma", c.gamma}, {"beta", c.beta}, {"alpha", c.alpha},
          {"m_layer", c.m_layer}, {"k_knn", c.k_knn}, {"seed", c.seed}};
}

ordered_json model_json(const ModelSpec& m) {
  return {{"layers", m.layers}, {"heads", m.heads},   {"channels", m.channels}, {"ffn_multiplier", m.ffn_multiplier},
          {"vocab", m.vocab},   {"max_seq", m.max_seq}, {"seed", m.seed}};
}

void apply_config_file(const fs::path& path, RunOptions& o, const CLI::App& app) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("config file is not valid JSON: ") + e.what());
  }
  // Explicit flags win over the file.
  auto take = [&](const char* key, const char* flag, auto& field) {
    if (j.contains(key) && app.count(flag) == 0) j.at(key).get_to(field);
  };
  take("tau", "--tau", o.config.tau);
  take("gamma", "--gamma", o.config.gamma);
  take("beta", "--beta", o.config.beta);
  take("alpha", "--alpha", o.config.alpha);
  take("m_layer", "--m-layer", o.config.m_layer);
  take("k_knn", "--k-knn", o.config.k_knn);
  take("seed", "--seed", o.config.seed);
  take("layers", "--layers", o.model.layers);
  take("heads", "--heads", o.model.heads);
  take("width", "--width", o.model.channels);
  take("questions", "--questions", o.questions);
  take("workers", "--workers", o.workers);
}

int cmd_run(RunOptions o) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!fs::is_directory(o.corpus)) throw UsageError("corpus directory not found: " + o.corpus.string());
  o.model.seed = o.config.seed;
  try {
    o.model.validate();
    o.config.validate(o.model.layers);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  if (o.questions == 0) throw UsageError("--questions must be >= 1");
  const auto axes = o.sweep.empty() ? std::vector<SweepAxis>{} : parse_sweep(o.sweep);

  std::vector<VideoInput> inputs;
  for (const auto& entry : fs::directory_iterator(o.corpus)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pvtg") {
      inputs.push_back({entry.path().stem().string(), entry.path()});
    }
  }
  std::sort(inputs.begin(), inputs.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  if (inputs.empty()) {
    std::cerr << "no .pvtg files in " << o.corpus.string() << "\n";
    return kExitFailure;
  }

  std::vector<VideoOutcome> loaded(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    try {
      loaded[i].grid = load_token_grid(inputs[i].path);
      if (o.model.visual_channels == 0 && loaded[i].grid->channels() != o.model.channels) {
        throw Error("token width " + std::to_string(loaded[i].grid->channels()) + " does not match model width " +
                    std::to_string(o.model.channels));
      }
    } catch (const std::exception& e) {
      loaded[i].error = e.what();
      loaded[i].grid.reset();
      std::cerr << "skipping " << inputs[i].path.string() << ": " << e.what() << "\n";
    }
  }

  const Model model(o.model);
  const auto run_dir = o.out / o.run_id;
  fs::create_directories(run_dir / "selections");
  if (o.trace) fs::create_directories(run_dir / "traces");

  auto question_for = [&](const std::string& id) {
    return synthetic_question(o.questions, o.model.vocab, mix_seed(o.config.seed, fnv1a(id)));
  };

  std::vector<std::optional<EfficiencyReport>> reports(inputs.size());
  std::vector<std::string> errors(inputs.size());
  parallel_for(inputs.size(), o.workers, [&](std::size_t i) {
    if (!loaded[i].grid) return;
    try {
      const auto& grid = *loaded[i].grid;
      const auto run = run_video(model, grid, question_for(inputs[i].id), o.config, inputs[i].id);
      write_text(run_dir / "selections" / (inputs[i].id + ".json"),
                 dump(selection_json(run, grid.frames(), grid.tokens_per_frame())));
      if (o.trace) write_text(run_dir / "traces" / (inputs[i].id + ".json"), dump(trace_json(run.merged)));
      reports[i] = run.report;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  std::vector<EfficiencyReport> ok;
  ordered_json videos = ordered_json::array(), failures = ordered_json::array(), input_paths = ordered_json::array();
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    input_paths.push_back(inputs[i].path.generic_string());
    if (reports[i]) {
      ok.push_back(*reports[i]);
      videos.push_back(to_json(*reports[i]));
    } else {
      const auto& reason = loaded[i].error.empty() ? errors[i] : loaded[i].error;
      if (!errors[i].empty()) std::cerr << "failed " << inputs[i].id << ": " << errors[i] << "\n";
      failures.push_back({{"video_id", inputs[i].id}, {"reason", reason}});
    }
  }
  const auto agg = aggregate(ok);

  ordered_json manifest = {{"tool", "prunevid"},
                           {"version", PRUNEVID_VERSION},
                           {"seed", o.config.seed},
                           {"config", config_json(o.config)},
                           {"model", model_json(o.model)},
                           {"question_tokens", o.questions},
                           {"flops_model", kFlopsModel},
                           {"inputs", input_paths},
                           {"videos", videos},
                           {"failures", failures},
                           {"aggregate", to_json(agg)}};

  if (!axes.empty()) {
    // Nesting order tau, gamma, beta, k, m, alpha lets merges and prefills be reused.
    std::map<std::string, std::vector<double>> values;
    values["tau"] = {o.config.tau};
    values["gamma"] = {o.config.gamma};
    values["beta"] = {o.config.beta};
    values["k"] = {static_cast<double>(o.config.k_knn)};
    values["m"] = {static_cast<double>(o.config.m_layer)};
    values["alpha"] = {o.config.alpha};
    for (const auto& a : axes) values[a.key] = a.values;

    std::vector<PruneConfig> points;
    for (double tau : values["tau"])
      for (double gamma : values["gamma"])
        for (double beta : values["beta"])
          for (double k : values["k"])
            for (double m : values["m"])
              for (double alpha : values["alpha"]) {
                PruneConfig c = o.config;
                c.tau = tau;
                c.gamma = gamma;
                c.beta = beta;
                c.k_knn = static_cast<std::size_t>(std::llround(k));
                c.m_layer = static_cast<std::size_t>(std::llround(m));
                c.alpha = alpha;
                try {
                  c.validate(o.model.layers);
                } catch (const InvalidArgument& e) {
                  throw UsageError(std::string("sweep point invalid: ") + e.what());
                }
                points.push_back(c);
              }

    std::vector<std::vector<std::optional<EfficiencyReport>>> grid_reports(
        points.size(), std::vector<std::optional<EfficiencyReport>>(inputs.size()));
    parallel_for(inputs.size(), o.workers, [&](std::size_t i) {
      if (!loaded[i].grid) return;
      const auto& grid = *loaded[i].grid;
      const auto question = question_for(inputs[i].id);
      std::optional<MergedTokenSet> merged;
      std::optional<PrefillResult> pre;
      const PruneConfig* merged_for = nullptr;
      const PruneConfig* pre_for = nullptr;
      for (std::size_t p = 0; p < points.size(); ++p) {
        const auto& c = points[p];
        try {
          if (!merged_for || merged_for->tau != c.tau || merged_for->gamma != c.gamma ||
              merged_for->beta != c.beta || merged_for->k_knn != c.k_knn) {
            merged = merge_pipeline(grid, c);
            merged_for = &c;
            pre_for = nullptr;
          }
          if (!pre_for || pre_for->m_layer != c.m_layer) {
            pre = prefill(model, merged->tokens, question, c.m_layer, false);
            pre_for = &c;
          }
          const auto sel = select_top_alpha(score_visual_tokens(extract_qv_attention(pre->attention_at_m, pre->n_visual)), c.alpha);
          static_cast<void>(compress_and_continue(model, *pre, sel, c.m_layer));
          std::size_t temporal = 0;
          for (const auto& tr : merged->trace) temporal += tr.tokens_after_temporal;
          grid_reports[p][i] = make_report(inputs[i].id, o.model.layers, c.m_layer, o.model.channels, question.size(),
                                           grid.token_count(), temporal, merged->size(), sel.indices.size(),
                                           merged->partition.size());
        } catch (const std::exception& e) {
          merged_for = nullptr;
          std::cerr << "sweep point " << p << " failed for " << inputs[i].id << ": " << e.what() << "\n";
        }
      }
    });

    ordered_json sweep = ordered_json::array();
    std::ostringstream csv;
    csv.precision(17);
    csv << "tau,gamma,beta,k_knn,m_layer,alpha,videos,mean_merge_ratio,mean_retained_ratio,mean_flops_multiplier\n";
    for (std::size_t p = 0; p < points.size(); ++p) {
      std::vector<EfficiencyReport> rs;
      ordered_json per_video = ordered_json::array();
      for (const auto& r : grid_reports[p]) {
        if (r) {
          rs.push_back(*r);
          per_video.push_back(to_json(*r));
        }
      }
      const auto a = aggregate(rs);
      sweep.push_back({{"config", config_json(points[p])}, {"aggregate", to_json(a)}, {"videos", per_video}});
      const auto& c = points[p];
      csv << c.tau << ',' << c.gamma << ',' << c.beta << ',' << c.k_knn << ',' << c.m_layer << ',' << c.alpha << ','
          << a.videos << ',' << a.mean_merge_ratio << ',' << a.mean_retained_ratio << ',' << a.mean_flops_multiplier
          << '\n';
    }
    write_text(run_dir / "sweep.json", dump({{"sweep", o.sweep}, {"points", sweep}}));
    write_text(run_dir / "sweep.csv", csv.str());
    manifest["sweep"] = o.sweep;
  }

  write_text(run_dir / "manifest.json", dump(manifest));
  write_text(run_dir / "reports.csv", reports_csv(ok));

  std::cout.precision(6);
  std::cout << "videos: " << ok.size() << "/" << inputs.size() << "\n"
            << "mean merge ratio:      " << agg.mean_merge_ratio << "\n"
            << "mean retained ratio:   " << agg.mean_retained_ratio << "\n"
            << "mean flops multiplier: " << agg.mean_flops_multiplier << "\n"
            << "manifest: " << (run_dir / "manifest.json").string() << "\n";
  std::cerr << "elapsed " << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s\n";
  return ok.size() == inputs.size() ? kExitOk : kExitFailure;
}

// --------------------------------------------------------------- visualize

int cmd_visualize(const fs::path& run_dir, const std::string& video, std::optional<fs::path> out_dir) {
  const auto manifest = run_dir / "manifest.json";
  if (!fs::exists(manifest)) throw UsageError("no manifest.json in " + run_dir.string());
  const auto export_path = run_dir / "selections" / (video + ".json");
  std::ifstream in(export_path);
  if (!in) {
    std::cerr << "missing selection export " << export_path.string() << "\n";
    return kExitFailure;
  }
  const auto e = parse_selection(nlohmann::json::parse(in));
  const auto map = backproject(e);
  const auto out = out_dir.value_or(run_dir / "viz" / video);
  fs::create_directories(out);
  for (std::size_t s = 0; s < e.partition.size(); ++s) {
    char name[32];
    std::snprintf(name, sizeof name, "segment_%02zu.ppm", s);
    write_segment_ppm(map, e.partition.segments[s], out / name);
  }
  std::size_t once = 0, selected = 0;
  for (std::size_t c = 0; c < map.coverage.size(); ++c) {
    once += map.coverage[c] == 1;
    selected += map.selected[c];
  }
  write_text(out / "summary.json", dump({{"video_id", e.video_id},
                                         {"cells", map.coverage.size()},
                                         {"cells_covered_once", once},
                                         {"selected_cells", selected},
                                         {"segments", e.partition.size()}}));
  std::cout << "wrote " << e.partition.size() << " heatmaps to " << out.string() << "\n";
  return once == map.coverage.size() ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal visual token merging and attention-guided selection on a toy transformer"};
  app.require_subcommand(1);
  app.set_version_flag("--version", PRUNEVID_VERSION);

  GenerateOptions gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic PVTG corpus with ground-truth sidecars");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--videos", gen.videos, "Number of videos")->check(CLI::PositiveNumber);
  g->add_option("--seed", gen.seed, "Corpus seed");
  g->add_option("--frames", gen.frames, "Frames per video")->check(CLI::PositiveNumber);
  g->add_option("--tokens", gen.tokens, "Tokens per frame")->check(CLI::PositiveNumber);
  g->add_option("--channels", gen.channels, "Token channels")->check(CLI::PositiveNumber);
  g->add_option("--scenes", gen.scenes, "Scenes per video (must divide frames)")->check(CLI::PositiveNumber);
  g->add_option("--static-fraction", gen.static_fraction, "Static locations per scene (default: mixed corpus)")
      ->check(CLI::Range(0.0, 1.0));
  g->add_option("--static-noise", gen.static_noise, "Per-frame jitter of static tokens")->check(CLI::NonNegativeNumber);
  g->add_option("--dynamic-drift", gen.dynamic_drift, "Scale of dynamic tokens")->check(CLI::PositiveNumber);

  RunOptions run;
  std::string config_path;
  auto* r = app.add_subcommand("run", "Run merge, prefill, selection and compression over a corpus");
  r->add_option("--corpus", run.corpus, "Directory of .pvtg files")->required();
  r->add_option("--out", run.out, "Output root; reports go to <out>/<run-id>/");
  r->add_option("--run-id", run.run_id, "Run name");
  r->add_option("--config", config_path, "JSON config file; explicit flags override it");
  r->add_option("--tau", run.config.tau, "Static similarity threshold");
  r->add_option("--gamma", run.config.gamma, "Temporal segment ratio");
  r->add_option("--beta", run.config.beta, "Spatial cluster ratio");
  r->add_option("--alpha", run.config.alpha, "Selection ratio");
  r->add_option("--m-layer", run.config.m_layer, "Selection layer (1-based)");
  r->add_option("--k-knn", run.config.k_knn, "Neighbours for DPC-KNN density");
  r->add_option("--seed", run.config.seed, "Model and question seed");
  r->add_option("--workers", run.workers, "Videos processed in parallel")->check(CLI::PositiveNumber);
  r->add_option("--sweep", run.sweep, "Grid, e.g. alpha=0.1:0.9:0.1,m=2:11:1");
  r->add_flag("--trace", run.trace, "Write per-video merge traces");
  r->add_option("--layers", run.model.layers, "Model depth L");
  r->add_option("--heads", run.model.heads, "Attention heads");
  r->add_option("--width", run.model.channels, "Model width C");
  r->add_option("--questions", run.questions, "Question tokens per video");

  fs::path viz_run;
  std::string viz_video;
  std::optional<fs::path> viz_out;
  auto* v = app.add_subcommand("visualize", "Render selection heatmaps for one video of a run");
  v->add_option("--run", viz_run, "Run directory containing manifest.json")->required();
  v->add_option("--video", viz_video, "Video id")->required();
  v->add_option("--out", viz_out, "Output directory (default <run>/viz/<video>)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*r) {
      if (!config_path.empty()) apply_config_file(config_path, run, *r);
      return cmd_run(run);
    }
    if (*v) return cmd_visualize(viz_run, viz_video, viz_out);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
