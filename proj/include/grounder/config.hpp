#pragma once

#include "grounder/projection.hpp"
#include "grounder/stitcher.hpp"
#include "grounder/vlm.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace grounder {

struct BackendConfig {
  std::string kind = "scripted";  // "scripted" | "http"
  std::string script;             // scripted: path to the response script
  HttpBackendOptions http;
  int max_in_flight = 4;
};

/// Fixture paths may contain {scene_id}; relative paths resolve against the scene directory.
struct PerceptionConfig {
  std::string kind = "fixture";  // "fixture" | "http"
  std::string detections = "detections.json";
  std::string target_detections;  // empty: same as `detections`
  std::string masks = "masks/index.json";
  std::string matches = "matches.json";
  std::string detector_url;
  std::string detector_path = "/detect";
  std::string segmenter_url;
  std::string segmenter_path = "/segment";
  std::string api_key_env;
  double timeout_s = 60;
};

struct BenchConfig {
  int count = 1000;
  std::vector<Layout> layouts = {{1, 1}, {2, 2}, {3, 3}, {4, 1}, {2, 4}, {4, 4}, {5, 5}, {6, 6}};
  int images_per_request = 1;
  double block_fraction = 0.1;
  int image_width = 320;
  int image_height = 240;
  std::string source;  // directory of images; empty = synthetic
  int max_in_flight = 4;
};

struct PipelineConfig {
  int M = 3;
  int L = 6;
  int N = 7;
  int frame_stride = 20;
  double detection_threshold = 0.30;
  ProjectionConfig projection;
  StitchStyle style;
  BackendConfig backend;
  PerceptionConfig perception;
  BenchConfig bench;
  int jobs = 1;
  std::uint64_t seed = 0;

  /// Throws ValidationError on out-of-range values.
  void validate() const;
};

/// Snapshot using the same key names the loader accepts.
nlohmann::json to_json(const PipelineConfig& config);

/// Applies the keys present in `layer` on top of `config`. Unknown keys are rejected.
void apply_config_layer(PipelineConfig& config, const nlohmann::json& layer);

/// Reads a .toml or .json file into a JSON object (tables become objects).
nlohmann::json read_config_file(const std::filesystem::path& path);

/// Defaults, then the file (if any), then command-line overrides.
PipelineConfig resolve_config(const std::filesystem::path& file, const nlohmann::json& cli_layer);

/// Parses "a.b=value" into {"a": {"b": value}}; value is read as JSON when it parses, else as a string.
nlohmann::json override_from_assignment(const std::string& assignment);

Layout parse_layout(const std::string& text);
std::string format_layout(const Layout& layout);

}  // namespace grounder
