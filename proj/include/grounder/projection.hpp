#pragma once

#include "grounder/geometry.hpp"
#include "grounder/scene.hpp"

#include <optional>
#include <string>
#include <vector>

namespace grounder {

struct ProjectionConfig {
  int erosion_kernel = 15;
  int top_components = 2;
  double chamfer_threshold = 0.1;  // meters
  int outlier_nb = 5;
  double outlier_std_ratio = 1.0;
  int ensemble_n = 7;

  /// Throws ValidationError on an even/non-positive kernel, zero counts or a non-positive threshold.
  void validate() const;
};

/// Binary erosion with a kernel x kernel square; pixels outside the raster count as background.
Mask2D erode_mask(const Mask2D& mask, int kernel);

/// Keeps the k largest 8-connected components. Equal sizes: the component whose first pixel in
/// row-major order comes first wins.
Mask2D top_components(const Mask2D& mask, int k);

/// Nearest-neighbour resampling of a binary raster (pixel centers map to pixel centers).
cv::Mat resample_mask_nearest(const cv::Mat& mask, cv::Size size);

/// Back-projects every true mask pixel with valid depth into world coordinates. Masks at color
/// resolution are resampled to the depth raster first. Pixel centers sit at (u + 0.5, v + 0.5).
PointCloud3 unproject_mask(const Frame& frame, const Mask2D& mask);

/// Symmetric mean of nearest-neighbour Euclidean distances. Throws on empty input.
double chamfer_l2(const PointCloud3& a, const PointCloud3& b);

/// Mean distance from each point to its `nb` nearest other points.
std::vector<double> mean_neighbor_distances(const PointCloud3& cloud, int nb);

/// Indices kept by statistical outlier removal (ascending).
std::vector<std::size_t> statistical_inlier_indices(const PointCloud3& cloud, int nb, double std_ratio);

/// Drops points whose mean neighbour distance exceeds mu + std_ratio * sigma over the cloud.
/// Clouds with at most `nb` points are returned unchanged.
PointCloud3 remove_statistical_outliers(const PointCloud3& cloud, int nb, double std_ratio);

/// Componentwise hull. Throws ProjectionError("no valid points") on an empty cloud.
Aabb3 aabb_of(const PointCloud3& cloud);

struct MaskedView {
  const Frame* frame = nullptr;
  Mask2D mask;
};

struct ViewStats {
  std::string frame_id;
  bool anchor = false;
  bool accepted = false;
  int mask_pixels = 0;
  int filtered_pixels = 0;  // after erosion + component filtering
  std::size_t points = 0;
  std::optional<double> chamfer;  // matched views only, when the cloud is nonempty
};

struct ProjectionStats {
  std::vector<ViewStats> views;  // anchor first, then matched views in input order
  std::size_t union_points = 0;
  std::size_t final_points = 0;

  [[nodiscard]] std::vector<std::string> views_used() const;
};

struct ProjectionResult {
  Aabb3 box;
  PointCloud3 cloud;  // post-filter
  ProjectionStats stats;
};

/// Single-view sub-pipeline: erode -> top components -> unproject.
PointCloud3 project_view(const MaskedView& view, const ProjectionConfig& config, ViewStats* stats = nullptr);

/// Multi-view ensemble: per-view clouds, Chamfer gate against the anchor, union, outlier
/// removal, AABB. Throws ProjectionError if the anchor yields no points.
ProjectionResult ensemble_project(const MaskedView& anchor, const std::vector<MaskedView>& matched,
                                  const ProjectionConfig& config);

}  // namespace grounder
