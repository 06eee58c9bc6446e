#include "grounder/pipeline.hpp"

#include "grounder/errors.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>

using nlohmann::json;
namespace fs = std::filesystem;

namespace grounder {

fs::path resolve_scene_path(const std::string& configured, const fs::path& scene_dir, const std::string& scene_id) {
  std::string s = configured;
  for (auto pos = s.find("{scene_id}"); pos != std::string::npos; pos = s.find("{scene_id}", pos + scene_id.size()))
    s.replace(pos, 10, scene_id);
  const fs::path p(s);
  return p.is_absolute() ? p : scene_dir / p;
}

PerceptionSet make_perception(const PerceptionConfig& config, const fs::path& scene_dir, const std::string& scene_id) {
  PerceptionSet set;
  if (config.kind == "http") {
    set.preselector = std::make_unique<HttpDetector>(
        HttpServiceOptions{config.detector_url, config.detector_path, config.api_key_env, config.timeout_s});
    set.target_detector = std::make_unique<HttpDetector>(
        HttpServiceOptions{config.detector_url, config.detector_path, config.api_key_env, config.timeout_s});
    set.segmenter = std::make_unique<HttpSegmenter>(
        HttpServiceOptions{config.segmenter_url, config.segmenter_path, config.api_key_env, config.timeout_s});
  } else {
    const fs::path det = resolve_scene_path(config.detections, scene_dir, scene_id);
    set.preselector = std::make_unique<FixtureDetector>(FixtureDetector::from_file(det));
    const fs::path target =
        config.target_detections.empty() ? det : resolve_scene_path(config.target_detections, scene_dir, scene_id);
    set.target_detector = std::make_unique<FixtureDetector>(FixtureDetector::from_file(target));
    set.segmenter = std::make_unique<FixtureSegmenter>(resolve_scene_path(config.masks, scene_dir, scene_id));
  }
  // Matches come from a fixture in both modes; without one the projection is anchor-only.
  if (!config.matches.empty()) {
    const fs::path m = resolve_scene_path(config.matches, scene_dir, scene_id);
    if (fs::exists(m)) set.matcher = std::make_unique<FixtureMatcher>(FixtureMatcher::from_file(m));
  }
  return set;
}

std::unique_ptr<BackendFactory> make_backend_factory(const BackendConfig& config) {
  if (config.kind == "http") return std::make_unique<HttpBackendFactory>(config.http);
  if (config.script.empty()) throw ValidationError("backend.kind = \"scripted\" requires backend.script");
  return std::make_unique<ScriptedBackendFactory>(ScriptedBackendFactory::from_file(config.script));
}

AgentConfig agent_config(const PipelineConfig& config) {
  AgentConfig a;
  a.max_retries = config.M;
  a.soft_limit = config.L;
  a.detection_threshold = config.detection_threshold;
  a.style = config.style;
  return a;
}

json StageTiming::to_json() const {
  json j = json::object();
  for (const auto& [stage, s] : seconds) j[stage] = s;
  return j;
}

std::string to_string(GroundingStatus status) {
  switch (status) {
    case GroundingStatus::Success: return "success";
    case GroundingStatus::Failure: return "failure";
    case GroundingStatus::Error: return "error";
  }
  return "unknown";
}

json GroundingResult::to_json() const {
  json j;
  j["query_id"] = query_id;
  j["scene_id"] = scene_id;
  j["status"] = to_string(status);
  if (!reason.empty()) j["reason"] = reason;
  j["box"] = box ? json(box->to_array()) : json(nullptr);
  j["target_frame_id"] = target_frame_id.empty() ? json(nullptr) : json(target_frame_id);
  j["object_id"] = object_id >= 0 ? json(object_id) : json(nullptr);
  j["retries_used"] = retries_used;
  j["views_used"] = views_used;
  j["views_rejected"] = json::array();
  for (const auto& [fid, chamfer] : views_rejected)
    j["views_rejected"].push_back({{"frame_id", fid}, {"chamfer", chamfer ? json(*chamfer) : json(nullptr)}});
  j["views_unmatched"] = views_unmatched;
  json per_view = json::array();
  for (const auto& v : stats.views) {
    per_view.push_back({{"frame_id", v.frame_id},
                        {"anchor", v.anchor},
                        {"accepted", v.accepted},
                        {"mask_pixels", v.mask_pixels},
                        {"filtered_pixels", v.filtered_pixels},
                        {"points", v.points}});
  }
  j["point_counts"] = {{"views", per_view}, {"union", stats.union_points}, {"final", stats.final_points}};
  j["anchor_mask"] = anchor_mask.empty() ? json(nullptr) : json(anchor_mask);
  return j;
}

GroundingResult GroundingResult::from_json(const json& j) {
  GroundingResult r;
  r.query_id = j.at("query_id").get<std::string>();
  r.scene_id = j.value("scene_id", "");
  const std::string status = j.value("status", "failure");
  r.status = status == "success" ? GroundingStatus::Success
             : status == "error" ? GroundingStatus::Error
                                 : GroundingStatus::Failure;
  r.reason = j.value("reason", "");
  if (j.contains("box") && !j["box"].is_null()) r.box = Aabb3::from_array(j["box"].get<std::array<double, 6>>());
  if (j.contains("target_frame_id") && j["target_frame_id"].is_string())
    r.target_frame_id = j["target_frame_id"].get<std::string>();
  if (j.contains("object_id") && j["object_id"].is_number_integer()) r.object_id = j["object_id"].get<int>();
  r.retries_used = j.value("retries_used", 0);
  if (j.contains("views_used")) r.views_used = j["views_used"].get<std::vector<std::string>>();
  if (j.contains("anchor_mask") && j["anchor_mask"].is_string()) r.anchor_mask = j["anchor_mask"].get<std::string>();
  return r;
}

namespace {

class Stopwatch {
 public:
  explicit Stopwatch(StageTiming& timing) : timing_(timing), last_(std::chrono::steady_clock::now()) {}
  void lap(const std::string& stage) {
    const auto now = std::chrono::steady_clock::now();
    timing_.seconds.emplace_back(stage, std::chrono::duration<double>(now - last_).count());
    last_ = now;
  }

 private:
  StageTiming& timing_;
  std::chrono::steady_clock::time_point last_;
};

}  // namespace

QueryRun ground_query(const Scene& scene, const Query& query, const PipelineConfig& config, VlmBackend& backend,
                      const PerceptionBackends& perception) {
  QueryRun run;
  GroundingResult& r = run.result;
  r.query_id = query.query_id;
  r.scene_id = query.scene_id;
  Stopwatch watch(run.timing);

  try {
    run.transcript = run_grounding_loop(scene, query, agent_config(config), backend, perception);
  } catch (const PipelineError& e) {
    watch.lap("grounding_loop");
    r.status = GroundingStatus::Error;
    r.reason = e.what();
    return run;
  } catch (const TransportError& e) {
    watch.lap("grounding_loop");
    r.status = GroundingStatus::Error;
    r.reason = e.what();
    return run;
  }
  watch.lap("grounding_loop");
  const AgentTranscript& t = run.transcript;
  r.retries_used = t.retries_used;
  if (t.failed()) {
    r.status = GroundingStatus::Failure;
    r.reason = t.failure_reason;
    return run;
  }
  r.target_frame_id = t.outcome->frame_id;
  r.object_id = t.outcome->object_id;

  const Frame& anchor_frame = *scene.find(t.outcome->frame_id);
  MaskedView anchor{&anchor_frame, {}};
  try {
    anchor.mask = segment(anchor_frame, t.outcome->detection.box, *perception.segmenter);
  } catch (const SegmentationError& e) {
    watch.lap("segmentation");
    r.status = GroundingStatus::Failure;
    r.reason = std::string("anchor segmentation failed: ") + e.what();
    return run;
  }
  run.anchor_mask = anchor.mask;
  watch.lap("segmentation");

  const std::size_t others = static_cast<std::size_t>(std::max(config.N - 1, 0));
  const auto candidate_ids = nearest_in_sequence(t.preselected, anchor_frame.frame_id, others);
  std::vector<MaskedView> matched;
  if (perception.matcher != nullptr && !candidate_ids.empty()) {
    std::vector<const Frame*> candidates;
    for (const auto& id : candidate_ids) candidates.push_back(scene.find(id));
    const auto links = match_anchor(anchor_frame, anchor.mask, candidates, *perception.matcher);
    std::vector<std::string> linked;
    for (const auto& link : links) {
      const Frame& frame = *scene.find(link.target_frame);
      try {
        const auto dets = filter_detections(perception.target_detector->detect(frame, t.analyzed.target_class),
                                            t.analyzed.target_class, config.detection_threshold);
        const auto pick = choose_matched_detection(link, dets);
        if (!pick) continue;
        matched.push_back({&frame, segment(frame, dets[*pick].box, *perception.segmenter)});
        linked.push_back(link.target_frame);
      } catch (const SegmentationError& e) {
        run.transcript.warnings.push_back("view " + frame.frame_id + " excluded: " + e.what());
      } catch (const TransportError& e) {
        run.transcript.warnings.push_back("view " + frame.frame_id + " excluded: " + e.what());
      }
    }
    for (const auto& id : candidate_ids)
      if (std::find(linked.begin(), linked.end(), id) == linked.end()) r.views_unmatched.push_back(id);
  } else {
    r.views_unmatched = candidate_ids;
  }
  watch.lap("matching");

  ProjectionConfig pc = config.projection;
  pc.ensemble_n = config.N;
  try {
    ProjectionResult proj = ensemble_project(anchor, matched, pc);
    r.box = proj.box;
    r.stats = std::move(proj.stats);
    r.views_used = r.stats.views_used();
    for (const auto& v : r.stats.views)
      if (!v.accepted) r.views_rejected.emplace_back(v.frame_id, v.chamfer);
    r.status = GroundingStatus::Success;
  } catch (const ProjectionError& e) {
    r.status = GroundingStatus::Failure;
    r.reason = std::string("projection failed: ") + e.what();
  }
  watch.lap("projection");
  return run;
}

std::vector<GroundingResult> load_results(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open results file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw IngestionError("malformed results file " + path.string() + ": " + e.what());
  }
  if (j.is_object() && j.contains("results")) j = j["results"];
  if (!j.is_array()) throw IngestionError("results file must hold a JSON array: " + path.string());
  std::vector<GroundingResult> out;
  for (const auto& e : j) out.push_back(GroundingResult::from_json(e));
  std::sort(out.begin(), out.end(),
            [](const GroundingResult& a, const GroundingResult& b) { return a.query_id < b.query_id; });
  return out;
}

}  // namespace grounder
