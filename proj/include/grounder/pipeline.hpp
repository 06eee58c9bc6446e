#pragma once

#include "grounder/agent.hpp"
#include "grounder/config.hpp"
#include "grounder/projection.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace grounder {

/// Owns the perception backends for one scene.
struct PerceptionSet {
  std::unique_ptr<Detector> preselector;
  std::unique_ptr<Detector> target_detector;
  std::unique_ptr<Segmenter> segmenter;
  std::unique_ptr<Matcher> matcher;  // may be null: anchor-only projection

  [[nodiscard]] PerceptionBackends view() const {
    return {preselector.get(), target_detector.get(), segmenter.get(), matcher.get()};
  }
};

/// Resolves a fixture path from config against the scene directory, substituting {scene_id}.
std::filesystem::path resolve_scene_path(const std::string& configured, const std::filesystem::path& scene_dir,
                                         const std::string& scene_id);

/// Builds fixture or HTTP perception backends for the scene stored under `scene_dir`.
PerceptionSet make_perception(const PerceptionConfig& config, const std::filesystem::path& scene_dir,
                              const std::string& scene_id);

std::unique_ptr<BackendFactory> make_backend_factory(const BackendConfig& config);

AgentConfig agent_config(const PipelineConfig& config);

struct StageTiming {
  std::vector<std::pair<std::string, double>> seconds;  // in execution order
  [[nodiscard]] nlohmann::json to_json() const;
};

enum class GroundingStatus { Success, Failure, Error };
std::string to_string(GroundingStatus status);

struct GroundingResult {
  std::string query_id;
  std::string scene_id;
  GroundingStatus status = GroundingStatus::Failure;
  std::string reason;  // failure or error message
  std::optional<Aabb3> box;
  std::string target_frame_id;
  int object_id = -1;
  int retries_used = 0;
  std::vector<std::string> views_used;
  std::vector<std::pair<std::string, std::optional<double>>> views_rejected;
  std::vector<std::string> views_unmatched;  // ensemble candidates the matcher or detector could not link
  ProjectionStats stats;
  std::string anchor_mask;  // path relative to the output directory, when written

  [[nodiscard]] nlohmann::json to_json() const;
  static GroundingResult from_json(const nlohmann::json& j);
};

struct QueryRun {
  GroundingResult result;
  AgentTranscript transcript;
  StageTiming timing;
  std::optional<Mask2D> anchor_mask;
};

/// Agent loop, anchor segmentation, ensemble matching and projection for one query.
/// Grounding failures land in the result; PipelineError from the backend becomes status Error.
QueryRun ground_query(const Scene& scene, const Query& query, const PipelineConfig& config, VlmBackend& backend,
                      const PerceptionBackends& perception);

/// Results sorted by query_id.
std::vector<GroundingResult> load_results(const std::filesystem::path& path);

}  // namespace grounder
