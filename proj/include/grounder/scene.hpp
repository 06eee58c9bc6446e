#pragma once

#include "grounder/geometry.hpp"

#include <Eigen/Geometry>
#include <opencv2/core.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace grounder {

/// Depth rasters store millimeters; divide by this to get meters.
inline constexpr double kDepthScale = 1000.0;

struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  /// Throws ValidationError unless fx, fy > 0 and the principal point lies in the raster.
  void validate() const;
  [[nodiscard]] Eigen::Matrix3d matrix() const;
};

/// Rigid world-from-camera transform.
struct Pose {
  Eigen::Isometry3d world_from_camera = Eigen::Isometry3d::Identity();

  /// Builds a pose from a row-major 4x4 matrix, validating the rotation block.
  static Pose from_matrix(const Eigen::Matrix4d& m, double tol = 1e-6);
  [[nodiscard]] Eigen::Matrix4d matrix() const { return world_from_camera.matrix(); }
};

/// Posed RGB-D observation. Rasters share storage between copies (cv::Mat); treat as immutable.
struct Frame {
  std::string frame_id;
  cv::Mat color;  // CV_8UC3, RGB order
  cv::Mat depth;  // CV_16UC1, millimeters, 0 = invalid
  CameraIntrinsics color_intrinsics;
  CameraIntrinsics depth_intrinsics;
  Pose pose;

  /// Depth in meters at (u, v) of the depth raster, or nullopt when invalid.
  [[nodiscard]] std::optional<double> depth_m(int u, int v) const;
};

struct Scene {
  std::string scene_id;
  std::vector<Frame> frames;

  [[nodiscard]] const Frame* find(const std::string& frame_id) const;
  [[nodiscard]] std::vector<std::string> frame_ids() const;
};

struct Query {
  std::string query_id;
  std::string scene_id;
  std::string text;
  std::optional<Aabb3> gt_box;
  /// frame_id -> mask image path (loaded lazily by evaluation).
  std::map<std::string, std::string> gt_mask_paths;
  /// Split labels, e.g. "unique"/"multiple" or "easy"/"hard"/"vd"/"vid".
  std::vector<std::string> splits;
  /// Nr3D-style distractor set: every same-class box in the scene plus the index of the target.
  std::vector<Aabb3> gt_boxes;
  std::optional<int> gt_index;
};

bool is_frame_id(const std::string& s);
std::string format_frame_id(int index);

struct LoadOptions {
  int stride = 1;
};

/// Reads <root>/<scene_id>/{color,depth,pose}/ plus intrinsics_{color,depth}.txt.
Scene load_scene(const std::filesystem::path& root, const std::string& scene_id,
                 const LoadOptions& options = {});

/// Writes a scene in the layout `load_scene` reads. Color is written as PNG.
void save_scene(const std::filesystem::path& root, const Scene& scene);

/// Keeps frames at sequence indices 0, stride, 2*stride, ...
Scene sample_frames(const Scene& scene, int stride);

Eigen::Matrix4d read_matrix4(const std::filesystem::path& path);
void write_matrix4(const std::filesystem::path& path, const Eigen::Matrix4d& m);
CameraIntrinsics intrinsics_from_matrix(const Eigen::Matrix4d& k, int width, int height);

/// One JSON object per line: query_id, scene_id, text, optional gt_box, splits, gt_masks,
/// gt_boxes, gt_index.
std::vector<Query> load_queries(const std::filesystem::path& path);
void save_queries(const std::filesystem::path& path, const std::vector<Query>& queries);

}  // namespace grounder
