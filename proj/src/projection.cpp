#include "grounder/projection.hpp"

#include "grounder/errors.hpp"
#include "grounder/knn.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace grounder {

void ProjectionConfig::validate() const {
  if (erosion_kernel < 1 || erosion_kernel % 2 == 0)
    throw ValidationError("erosion_kernel must be odd and >= 1");
  if (top_components < 1) throw ValidationError("top_components must be >= 1");
  if (outlier_nb < 1) throw ValidationError("outlier_nb must be >= 1");
  if (ensemble_n < 1) throw ValidationError("ensemble_n must be >= 1");
  if (!(chamfer_threshold > 0)) throw ValidationError("chamfer_threshold must be > 0");
  if (!(outlier_std_ratio >= 0)) throw ValidationError("outlier_std_ratio must be >= 0");
}

Mask2D erode_mask(const Mask2D& mask, int kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("erosion kernel must be odd and >= 1");
  Mask2D out{mask.frame_id, {}};
  cv::Mat binary;
  cv::compare(mask.bitmap, 0, binary, cv::CMP_GT);
  if (kernel == 1) {
    out.bitmap = binary;
    return out;
  }
  const cv::Mat element = cv::getStructuringElement(cv::MORPH_RECT, cv::Size(kernel, kernel));
  cv::erode(binary, out.bitmap, element, cv::Point(-1, -1), 1, cv::BORDER_CONSTANT, cv::Scalar(0));
  return out;
}

Mask2D top_components(const Mask2D& mask, int k) {
  if (k < 1) throw std::invalid_argument("top_components: k must be >= 1");
  const int rows = mask.bitmap.rows, cols = mask.bitmap.cols;
  cv::Mat labels(rows, cols, CV_32S, cv::Scalar(-1));
  std::vector<int> sizes;
  std::vector<cv::Point> stack;

  // Labels are assigned in row-major order of each component's first pixel.
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      if (mask.bitmap.at<std::uint8_t>(y, x) == 0 || labels.at<int>(y, x) >= 0) continue;
      const int label = static_cast<int>(sizes.size());
      int size = 0;
      labels.at<int>(y, x) = label;
      stack.assign(1, {x, y});
      while (!stack.empty()) {
        const cv::Point p = stack.back();
        stack.pop_back();
        ++size;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = p.x + dx, ny = p.y + dy;
            if (nx < 0 || ny < 0 || nx >= cols || ny >= rows) continue;
            if (mask.bitmap.at<std::uint8_t>(ny, nx) == 0 || labels.at<int>(ny, nx) >= 0) continue;
            labels.at<int>(ny, nx) = label;
            stack.push_back({nx, ny});
          }
        }
      }
      sizes.push_back(size);
    }
  }

  std::vector<int> order(sizes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return sizes[a] > sizes[b]; });
  std::vector<bool> keep(sizes.size(), false);
  for (std::size_t i = 0; i < order.size() && i < static_cast<std::size_t>(k); ++i) keep[order[i]] = true;

  Mask2D out{mask.frame_id, cv::Mat::zeros(rows, cols, CV_8UC1)};
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      const int l = labels.at<int>(y, x);
      if (l >= 0 && keep[static_cast<std::size_t>(l)]) out.bitmap.at<std::uint8_t>(y, x) = 255;
    }
  }
  return out;
}

cv::Mat resample_mask_nearest(const cv::Mat& mask, cv::Size size) {
  if (mask.size() == size) return mask;
  cv::Mat out(size, CV_8UC1);
  for (int v = 0; v < size.height; ++v) {
    const int sv = std::min(mask.rows - 1, static_cast<int>((v + 0.5) * mask.rows / size.height));
    for (int u = 0; u < size.width; ++u) {
      const int su = std::min(mask.cols - 1, static_cast<int>((u + 0.5) * mask.cols / size.width));
      out.at<std::uint8_t>(v, u) = mask.at<std::uint8_t>(sv, su) ? 255 : 0;
    }
  }
  return out;
}

PointCloud3 unproject_mask(const Frame& frame, const Mask2D& mask) {
  const CameraIntrinsics& k = frame.depth_intrinsics;
  const cv::Mat bitmap = resample_mask_nearest(mask.bitmap, frame.depth.size());
  PointCloud3 cloud;
  for (int v = 0; v < bitmap.rows; ++v) {
    for (int u = 0; u < bitmap.cols; ++u) {
      if (bitmap.at<std::uint8_t>(v, u) == 0) continue;
      const auto d = frame.depth_m(u, v);
      if (!d) continue;
      const Vec3 cam(*d * (u + 0.5 - k.cx) / k.fx, *d * (v + 0.5 - k.cy) / k.fy, *d);
      cloud.points.push_back(frame.pose.world_from_camera * cam);
    }
  }
  return cloud;
}

namespace {

double mean_nn_distance(const PointCloud3& from, const KdTree3& to) {
  double sum = 0;
  for (const auto& p : from.points) sum += to.nearest(p).distance;
  return sum / static_cast<double>(from.size());
}

double chamfer_l2(const PointCloud3& a, const KdTree3& tree_a, const PointCloud3& b) {
  const KdTree3 tree_b(b.points);
  return 0.5 * (mean_nn_distance(a, tree_b) + mean_nn_distance(b, tree_a));
}

}  // namespace

double chamfer_l2(const PointCloud3& a, const PointCloud3& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("chamfer_l2: empty point cloud");
  return chamfer_l2(a, KdTree3(a.points), b);
}

std::vector<double> mean_neighbor_distances(const PointCloud3& cloud, int nb) {
  const KdTree3 tree(cloud.points);
  std::vector<double> means(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto nn = tree.knn(cloud.points[i], static_cast<std::size_t>(nb), i);
    double sum = 0;
    for (const auto& n : nn) sum += n.distance;
    means[i] = nn.empty() ? 0.0 : sum / static_cast<double>(nn.size());
  }
  return means;
}

std::vector<std::size_t> statistical_inlier_indices(const PointCloud3& cloud, int nb, double std_ratio) {
  if (nb < 1) throw std::invalid_argument("remove_statistical_outliers: nb must be >= 1");
  std::vector<std::size_t> keep(cloud.size());
  std::iota(keep.begin(), keep.end(), std::size_t{0});
  if (cloud.size() <= static_cast<std::size_t>(nb)) return keep;

  const auto means = mean_neighbor_distances(cloud, nb);
  const double n = static_cast<double>(means.size());
  const double mu = std::accumulate(means.begin(), means.end(), 0.0) / n;
  double sq = 0;
  for (double m : means) sq += (m - mu) * (m - mu);
  const double sigma = std::sqrt(sq / (n - 1.0));
  const double threshold = mu + std_ratio * sigma;

  keep.clear();
  for (std::size_t i = 0; i < means.size(); ++i)
    if (means[i] <= threshold) keep.push_back(i);
  return keep;
}

PointCloud3 remove_statistical_outliers(const PointCloud3& cloud, int nb, double std_ratio) {
  PointCloud3 out;
  for (std::size_t i : statistical_inlier_indices(cloud, nb, std_ratio)) out.points.push_back(cloud.points[i]);
  return out;
}

Aabb3 aabb_of(const PointCloud3& cloud) {
  if (cloud.empty()) throw ProjectionError("no valid points");
  Aabb3 box{cloud.points.front(), cloud.points.front()};
  for (const auto& p : cloud.points) {
    box.min = box.min.cwiseMin(p);
    box.max = box.max.cwiseMax(p);
  }
  return box;
}

std::vector<std::string> ProjectionStats::views_used() const {
  std::vector<std::string> out;
  for (const auto& v : views)
    if (v.accepted) out.push_back(v.frame_id);
  return out;
}

PointCloud3 project_view(const MaskedView& view, const ProjectionConfig& config, ViewStats* stats) {
  const Mask2D eroded = erode_mask(view.mask, config.erosion_kernel);
  const Mask2D kept = top_components(eroded, config.top_components);
  PointCloud3 cloud = unproject_mask(*view.frame, kept);
  if (stats) {
    stats->frame_id = view.frame->frame_id;
    stats->mask_pixels = view.mask.count();
    stats->filtered_pixels = kept.count();
    stats->points = cloud.size();
  }
  return cloud;
}

ProjectionResult ensemble_project(const MaskedView& anchor, const std::vector<MaskedView>& matched,
                                  const ProjectionConfig& config) {
  config.validate();
  if (anchor.frame == nullptr) throw std::invalid_argument("ensemble_project: anchor without frame");
  if (!anchor.mask.valid()) throw ProjectionError("anchor mask is empty");

  ProjectionResult result;
  ViewStats anchor_stats;
  anchor_stats.anchor = true;
  const PointCloud3 anchor_cloud = project_view(anchor, config, &anchor_stats);
  if (anchor_cloud.empty())
    throw ProjectionError("anchor view " + anchor.frame->frame_id + " yields no valid points");
  anchor_stats.accepted = true;
  result.stats.views.push_back(anchor_stats);

  const KdTree3 anchor_tree(anchor_cloud.points);
  PointCloud3 merged = anchor_cloud;
  for (const auto& view : matched) {
    ViewStats vs;
    const PointCloud3 cloud = project_view(view, config, &vs);
    if (!cloud.empty()) {
      vs.chamfer = chamfer_l2(anchor_cloud, anchor_tree, cloud);
      vs.accepted = *vs.chamfer <= config.chamfer_threshold;
    }
    if (vs.accepted) merged.points.insert(merged.points.end(), cloud.points.begin(), cloud.points.end());
    result.stats.views.push_back(vs);
  }
  result.stats.union_points = merged.size();

  result.cloud = remove_statistical_outliers(merged, config.outlier_nb, config.outlier_std_ratio);
  result.stats.final_points = result.cloud.size();
  result.box = aabb_of(result.cloud);
  return result;
}

}  // namespace grounder
