#include "grounder/cli.hpp"

#include "grounder/config.hpp"
#include "grounder/errors.hpp"
#include "grounder/evaluation.hpp"
#include "grounder/image_io.hpp"
#include "grounder/pipeline.hpp"
#include "grounder/retrieval_bench.hpp"
#include "grounder/scene.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <nlohmann/json.hpp>
#include <opencv2/core/version.hpp>

#include <atomic>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#ifndef GROUNDER_VERSION
#define GROUNDER_VERSION "0.0.0"
#endif

using nlohmann::json;
namespace fs = std::filesystem;

namespace grounder {

std::string version_string() { return GROUNDER_VERSION; }

namespace {

/// Input problem the user can fix; reported without a stack of context.
class CliError : public std::runtime_error {
 public:
  CliError(int code, const std::string& what) : std::runtime_error(what), code_(code) {}
  [[nodiscard]] int code() const { return code_; }

 private:
  int code_;
};

struct GlobalFlags {
  std::string config;
  std::string out = "out";
  int jobs = 1;
  std::uint64_t seed = 0;
  std::vector<std::string> sets;
  CLI::Option* jobs_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
};

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_manifest(const fs::path& out_dir, const std::string& command, const std::vector<std::string>& args,
                    const PipelineConfig& config) {
  json versions = {{"grounder", version_string()},
                   {"opencv", CV_VERSION},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                   {"cli11", CLI11_VERSION},
                   {"compiler", __VERSION__}};
  write_json(out_dir / "manifest.json", {{"command", command},
                                         {"args", args},
                                         {"created_utc", utc_timestamp()},
                                         {"config", to_json(config)},
                                         {"versions", versions}});
}

/// The command-line layer for resolve_config: --set assignments, then dedicated flags.
json cli_layer(const GlobalFlags& g, const json& dedicated) {
  json layer = json::object();
  for (const auto& s : g.sets) layer.merge_patch(override_from_assignment(s));
  if (g.jobs_opt && g.jobs_opt->count() > 0) layer["jobs"] = g.jobs;
  if (g.seed_opt && g.seed_opt->count() > 0) layer["seed"] = g.seed;
  layer.merge_patch(dedicated);
  return layer;
}

// ---- ground ------------------------------------------------------------------------------------

struct GroundArgs {
  std::string scene_root;
  std::string queries;
  std::string script;
  int M = 0, L = 0, N = 0, frame_stride = 0;
  double detection_threshold = 0;
  CLI::Option *M_opt = nullptr, *L_opt = nullptr, *N_opt = nullptr, *stride_opt = nullptr, *thr_opt = nullptr,
              *script_opt = nullptr;
};

struct SceneBundle {
  Scene scene;
  PerceptionSet perception;
};

int cmd_ground(const GlobalFlags& g, const GroundArgs& a, const std::vector<std::string>& args, std::ostream& out,
               std::ostream& err) {
  json dedicated = json::object();
  if (a.M_opt->count()) dedicated["M"] = a.M;
  if (a.L_opt->count()) dedicated["L"] = a.L;
  if (a.N_opt->count()) dedicated["N"] = a.N;
  if (a.stride_opt->count()) dedicated["frame_stride"] = a.frame_stride;
  if (a.thr_opt->count()) dedicated["detection_threshold"] = a.detection_threshold;
  if (a.script_opt->count()) dedicated["backend"] = {{"script", a.script}};
  const PipelineConfig config = resolve_config(g.config, cli_layer(g, dedicated));

  std::vector<Query> queries = load_queries(a.queries);
  if (queries.empty()) throw CliError(kExitInput, "no queries in " + a.queries);
  std::sort(queries.begin(), queries.end(), [](const Query& x, const Query& y) { return x.query_id < y.query_id; });
  for (std::size_t i = 1; i < queries.size(); ++i)
    if (queries[i].query_id == queries[i - 1].query_id)
      throw CliError(kExitInput, "duplicate query_id " + queries[i].query_id + " in " + a.queries);

  std::map<std::string, SceneBundle> scenes;
  for (const auto& q : queries) {
    if (scenes.count(q.scene_id)) continue;
    SceneBundle b;
    b.scene = load_scene(a.scene_root, q.scene_id, LoadOptions{config.frame_stride});
    b.perception = make_perception(config.perception, fs::path(a.scene_root) / q.scene_id, q.scene_id);
    scenes.emplace(q.scene_id, std::move(b));
  }
  auto factory = make_backend_factory(config.backend);

  const fs::path out_dir = g.out;
  fs::create_directories(out_dir / "transcripts");
  write_manifest(out_dir, "ground", args, config);

  std::vector<QueryRun> runs(queries.size());
  std::vector<std::string> crashes(queries.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < queries.size(); i = next++) {
      const Query& q = queries[i];
      const SceneBundle& b = scenes.at(q.scene_id);
      try {
        auto backend = factory->session(q.query_id);
        runs[i] = ground_query(b.scene, q, config, *backend, b.perception.view());
      } catch (const std::exception& e) {
        runs[i].result.query_id = q.query_id;
        runs[i].result.scene_id = q.scene_id;
        runs[i].result.status = GroundingStatus::Error;
        runs[i].result.reason = e.what();
      }
    }
  };
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(config.jobs), queries.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  json results = json::array();
  json timing = json::object();
  int errors = 0, successes = 0;
  for (auto& run : runs) {
    GroundingResult& r = run.result;
    if (run.anchor_mask) {
      const std::string rel = "masks/" + r.query_id + "_" + r.target_frame_id + ".png";
      write_mask(out_dir / rel, run.anchor_mask->bitmap);
      r.anchor_mask = rel;
    }
    write_json(out_dir / "transcripts" / (r.query_id + ".json"), run.transcript.to_json());
    results.push_back(r.to_json());
    timing[r.query_id] = run.timing.to_json();
    if (r.status == GroundingStatus::Error) {
      ++errors;
      err << "error: query " << r.query_id << ": " << r.reason << '\n';
    }
    if (r.status == GroundingStatus::Success) ++successes;
  }
  write_json(out_dir / "results.json", results);
  write_json(out_dir / "timing.json", timing);
  out << "grounded " << successes << " of " << queries.size() << " queries (" << errors << " errors); results in "
      << (out_dir / "results.json").string() << '\n';
  return errors > 0 ? kExitPartial : kExitOk;
}

// ---- eval --------------------------------------------------------------------------------------

struct EvalArgs {
  std::string results;
  std::string queries;
  bool mask_iou = false;
};

int cmd_eval(const GlobalFlags& g, const EvalArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const PipelineConfig config = resolve_config(g.config, cli_layer(g, json::object()));
  const auto results = load_results(a.results);
  if (results.empty()) throw CliError(kExitInput, "results file " + a.results + " holds no results");
  const auto queries = load_queries(a.queries);

  std::map<std::string, const Query*> by_id;
  for (const auto& q : queries) by_id[q.query_id] = &q;
  std::set<std::string> result_ids;
  for (const auto& r : results) result_ids.insert(r.query_id);
  std::vector<std::string> missing_gt, missing_results;
  for (const auto& id : result_ids)
    if (!by_id.count(id)) missing_gt.push_back(id);
  for (const auto& [id, q] : by_id)
    if (!result_ids.count(id)) missing_results.push_back(id);
  if (!missing_gt.empty() || !missing_results.empty()) {
    std::ostringstream msg;
    msg << "results and ground truth disagree on query ids;";
    if (!missing_gt.empty()) {
      msg << " no ground truth for:";
      for (const auto& id : missing_gt) msg << ' ' << id;
      msg << ';';
    }
    if (!missing_results.empty()) {
      msg << " no result for:";
      for (const auto& id : missing_results) msg << ' ' << id;
    }
    throw CliError(kExitInput, msg.str());
  }

  const fs::path results_dir = fs::path(a.results).parent_path();
  std::vector<EvalRecord> records;
  std::size_t nr3d_total = 0, nr3d_hits = 0;
  for (const auto& r : results) {
    const Query& q = *by_id.at(r.query_id);
    std::optional<Aabb3> gt = q.gt_box;
    if (!gt && q.gt_index && *q.gt_index >= 0 && static_cast<std::size_t>(*q.gt_index) < q.gt_boxes.size())
      gt = q.gt_boxes[static_cast<std::size_t>(*q.gt_index)];
    if (!gt && !a.mask_iou) throw CliError(kExitInput, "query " + q.query_id + " has no ground-truth box");
    const double iou = (gt && r.box) ? iou3d(*r.box, *gt) : 0.0;
    EvalRecord rec = EvalRecord::make(r.query_id, iou, q.splits);
    if (a.mask_iou) {
      double m = 0;
      const auto gt_mask = q.gt_mask_paths.find(r.target_frame_id);
      if (!r.anchor_mask.empty() && gt_mask != q.gt_mask_paths.end()) {
        try {
          m = mask_iou(read_mask(results_dir / r.anchor_mask), read_mask(gt_mask->second));
        } catch (const std::invalid_argument& e) {
          throw CliError(kExitInput, "query " + r.query_id + ": " + e.what());
        }
      }
      rec.mask_iou = m;
    }
    records.push_back(rec);
    if (!q.gt_boxes.empty() && q.gt_index) {
      ++nr3d_total;
      if (r.box && nr3d_match(*r.box, q.gt_boxes) == static_cast<std::size_t>(*q.gt_index)) ++nr3d_hits;
    }
  }
  AccuracyReport report = accuracy_report(records);
  if (nr3d_total > 0)
    report.nr3d_top1 = round1(100.0 * static_cast<double>(nr3d_hits) / static_cast<double>(nr3d_total));

  const fs::path out_dir = g.out;
  fs::create_directories(out_dir);
  write_manifest(out_dir, "eval", args, config);
  write_json(out_dir / "report.json", report.to_json());
  {
    std::ofstream f(out_dir / "records.jsonl");
    for (const auto& rec : records) f << to_json(rec).dump() << '\n';
    std::ofstream t(out_dir / "report.txt");
    t << report.to_table();
  }
  out << report.to_table();
  return kExitOk;
}

// ---- stitch ------------------------------------------------------------------------------------

struct StitchArgs {
  std::string scene_root;
  std::string scene;
  std::string frames;
  int count = -1;
  int L = 0;
  CLI::Option* L_opt = nullptr;
};

json plan_json(const StitchPlan& plan, const std::vector<std::string>& ids) {
  json entries = json::array();
  for (const auto& e : plan.entries) {
    json frames = json::array();
    for (std::size_t i : e.frames) frames.push_back(ids.empty() ? json(i) : json(ids.at(i)));
    entries.push_back({{"layout", {e.layout.rows, e.layout.cols}}, {"frames", frames}});
  }
  return {{"entries", entries},
          {"image_count", plan.image_count()},
          {"total_capacity", plan.total_capacity()},
          {"soft_limit_exceeded", plan.soft_limit_exceeded}};
}

int cmd_stitch(const GlobalFlags& g, const StitchArgs& a, const std::vector<std::string>& args, std::ostream& out,
               std::ostream& err) {
  json dedicated = json::object();
  if (a.L_opt->count()) dedicated["L"] = a.L;
  const PipelineConfig config = resolve_config(g.config, cli_layer(g, dedicated));
  const fs::path out_dir = g.out;

  if (a.count >= 0) {
    const StitchPlan plan = plan_layouts(static_cast<std::size_t>(a.count), config.L);
    out << plan_json(plan, {}).dump(2) << '\n';
    return kExitOk;
  }
  if (a.scene_root.empty() || a.scene.empty())
    throw CliError(kExitUsage, "stitch needs --count, or --scene-root and --scene");

  const Scene scene = load_scene(a.scene_root, a.scene, LoadOptions{config.frame_stride});
  std::vector<std::string> ids;
  if (a.frames.empty()) {
    ids = scene.frame_ids();
  } else {
    std::stringstream ss(a.frames);
    for (std::string id; std::getline(ss, id, ',');) {
      if (scene.find(id) == nullptr) throw CliError(kExitInput, "frame " + id + " is not in scene " + a.scene);
      ids.push_back(id);
    }
  }
  const StitchPlan plan = plan_layouts(ids.size(), config.L);
  if (plan.soft_limit_exceeded)
    err << "warning: " << ids.size() << " frames exceed 27*L; using " << plan.image_count() << " images\n";
  const auto composites = render_composites(scene, ids, plan, config.style);
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < composites.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "stitched_%02zu.png", i);
    write_rgb(out_dir / name, composites[i].raster);
  }
  write_json(out_dir / "plan.json", plan_json(plan, ids));
  write_manifest(out_dir, "stitch", args, config);
  out << "wrote " << composites.size() << " stitched images to " << out_dir.string() << '\n';
  return kExitOk;
}

// ---- bench -------------------------------------------------------------------------------------

struct BenchArgs {
  std::string backend = "echo";
  int count = 0;
  std::string layouts;
  int images_per_request = 0;
  bool timing = false;
  int copies = 30;
  int trials = 10;
  std::string source;
  int corrupt = 0;
  double latency_ms = 5;
  double latency_per_image_ms = 0;
  CLI::Option *count_opt = nullptr, *layouts_opt = nullptr, *ipr_opt = nullptr, *source_opt = nullptr;
};

int cmd_bench(const GlobalFlags& g, const BenchArgs& a, const std::vector<std::string>& args, std::ostream& out,
              std::ostream& err) {
  json bench = json::object();
  if (a.count_opt->count()) bench["count"] = a.count;
  if (a.ipr_opt->count()) bench["images_per_request"] = a.images_per_request;
  if (a.source_opt->count()) bench["source"] = a.source;
  if (a.layouts_opt->count()) {
    json list = json::array();
    std::stringstream ss(a.layouts);
    for (std::string l; std::getline(ss, l, ',');) list.push_back(l);
    bench["layouts"] = list;
  }
  json dedicated = json::object();
  if (!bench.empty()) dedicated["bench"] = bench;
  const PipelineConfig config = resolve_config(g.config, cli_layer(g, dedicated));
  const BenchConfig& bc = config.bench;

  SuiteOptions so;
  so.count = a.timing ? 1 : bc.count;
  so.seed = config.seed;
  so.source_dir = bc.source;
  so.synthetic_size = {bc.image_width, bc.image_height};
  so.block_fraction = bc.block_fraction;
  const auto suite = generate_suite(so);
  const json manifest = suite_manifest(suite, config.seed);

  const fs::path out_dir = g.out;
  fs::create_directories(out_dir);
  write_json(out_dir / "suite_manifest.json", manifest);
  write_manifest(out_dir, "bench", args, config);

  std::unique_ptr<BackendFactory> factory;
  if (a.backend == "echo") {
    factory = std::make_unique<EchoBackendFactory>(manifest_colors(manifest), a.corrupt);
  } else if (a.backend == "latency") {
    if (!a.timing) throw CliError(kExitUsage, "--backend latency only applies to --timing");
  } else if (a.backend == "scripted" || a.backend == "http") {
    BackendConfig b = config.backend;
    b.kind = a.backend;
    factory = make_backend_factory(b);
  } else {
    throw CliError(kExitUsage, "unknown --backend " + a.backend + " (echo, latency, scripted, http)");
  }

  if (a.timing) {
    std::unique_ptr<VlmBackend> backend = a.backend == "latency"
                                              ? std::make_unique<LatencyBackend>(a.latency_ms, a.latency_per_image_ms)
                                              : factory->session("timing");
    const auto rows = time_requests(suite.front().image, a.copies, a.trials, *backend);
    write_timing_csv(out_dir / "timing.csv", rows);
    const bool any = std::any_of(rows.begin(), rows.end(), [](const TimingRow& r) { return r.mean_s.has_value(); });
    out << "wrote " << rows.size() << " timing rows to " << (out_dir / "timing.csv").string() << '\n';
    if (!any) {
      err << "error: every timing request failed\n";
      return kExitFailed;
    }
    return kExitOk;
  }

  SweepOptions sweep;
  sweep.style = config.style;
  sweep.style.annotate_ids = false;
  sweep.max_in_flight = bc.max_in_flight;
  const auto rows = run_layout_sweep(suite, bc.layouts, bc.images_per_request, *factory, sweep);
  write_sweep_csv(out_dir / "sweep.csv", rows);
  int requests = 0, incomplete = 0;
  for (const auto& r : rows) {
    requests += r.requests;
    incomplete += r.incomplete;
    out << format_layout(r.layout) << ": "
        << (r.accuracy ? std::to_string(*r.accuracy) : std::string("n/a")) << " (" << r.incomplete
        << " incomplete)\n";
  }
  if (incomplete > 0) err << "warning: " << incomplete << " of " << requests << " requests incomplete\n";
  return incomplete == requests ? kExitFailed : kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"3D visual grounding pipeline, evaluation and visual-retrieval benchmark", "grounder"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  app.add_option("--config", g.config, "TOML or JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  g.jobs_opt = app.add_option("--jobs", g.jobs, "Queries processed in parallel")->check(CLI::PositiveNumber);
  g.seed_opt = app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--set", g.sets, "Override a config key, e.g. --set projection.erosion_kernel=11");

  GroundArgs ga;
  auto* ground = app.add_subcommand("ground", "Ground every query of a queries file");
  ground->add_option("--scene-root", ga.scene_root, "Directory holding <scene_id>/ folders")->required();
  ground->add_option("--queries", ga.queries, "Queries JSON-lines file")->required()->check(CLI::ExistingFile);
  ga.script_opt = ground->add_option("--script", ga.script, "Scripted backend responses (sets backend.script)");
  ga.M_opt = ground->add_option("--M", ga.M, "Retry limit");
  ga.L_opt = ground->add_option("--L", ga.L, "Soft limit on stitched images");
  ga.N_opt = ground->add_option("--N", ga.N, "Ensemble image count");
  ga.stride_opt = ground->add_option("--frame-stride", ga.frame_stride, "Keep every n-th frame");
  ga.thr_opt = ground->add_option("--detection-threshold", ga.detection_threshold, "Detector score threshold");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Score grounding results against ground truth");
  eval->add_option("--results", ea.results, "results.json written by ground")->required()->check(CLI::ExistingFile);
  eval->add_option("--queries", ea.queries, "Queries file with ground truth")->required()->check(CLI::ExistingFile);
  eval->add_flag("--mask-iou", ea.mask_iou, "Also score anchor masks against ground-truth 2D masks");

  StitchArgs sa;
  auto* stitch_cmd = app.add_subcommand("stitch", "Plan layouts and write stitched composites");
  stitch_cmd->add_option("--scene-root", sa.scene_root, "Directory holding <scene_id>/ folders");
  stitch_cmd->add_option("--scene", sa.scene, "Scene id");
  stitch_cmd->add_option("--frames", sa.frames, "Comma-separated frame ids (default: all sampled frames)");
  stitch_cmd->add_option("--count", sa.count, "Only print the plan for this many frames")->check(CLI::NonNegativeNumber);
  sa.L_opt = stitch_cmd->add_option("--L", sa.L, "Soft limit on stitched images");

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Visual-retrieval benchmark: layout sweep or request timing");
  bench->add_option("--backend", ba.backend, "echo, latency, scripted or http")->capture_default_str();
  ba.count_opt = bench->add_option("--count", ba.count, "Suite size (1-1000)");
  ba.layouts_opt = bench->add_option("--layouts", ba.layouts, "Comma-separated layouts, e.g. 4x1,2x4,5x5");
  ba.ipr_opt = bench->add_option("--images-per-request", ba.images_per_request, "Composites per request");
  ba.source_opt = bench->add_option("--source", ba.source, "Directory of source images (default: synthetic)");
  bench->add_flag("--timing", ba.timing, "Measure request time against the number of attached copies");
  bench->add_option("--copies", ba.copies, "Largest copy count for --timing")->check(CLI::PositiveNumber);
  bench->add_option("--trials", ba.trials, "Trials per copy count")->check(CLI::PositiveNumber);
  bench->add_option("--corrupt", ba.corrupt, "Echo backend: wrong colors per request")->check(CLI::NonNegativeNumber);
  bench->add_option("--latency-ms", ba.latency_ms, "Latency backend: fixed delay");
  bench->add_option("--latency-per-image-ms", ba.latency_per_image_ms, "Latency backend: delay per image");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << version_string() << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (ground->parsed()) return cmd_ground(g, ga, args, out, err);
    if (eval->parsed()) return cmd_eval(g, ea, args, out);
    if (stitch_cmd->parsed()) return cmd_stitch(g, sa, args, out, err);
    if (bench->parsed()) return cmd_bench(g, ba, args, out, err);
  } catch (const CliError& e) {
    err << "error: " << e.what() << '\n';
    return e.code();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitUsage;
}

}  // namespace grounder
