#pragma once

#include <Eigen/Core>
#include <opencv2/core.hpp>

#include <array>
#include <string>
#include <vector>

namespace grounder {

using Vec3 = Eigen::Vector3d;

/// World-frame points in meters.
struct PointCloud3 {
  std::vector<Vec3> points;

  [[nodiscard]] bool empty() const { return points.empty(); }
  [[nodiscard]] std::size_t size() const { return points.size(); }
};

struct Aabb3 {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  [[nodiscard]] Vec3 center() const { return 0.5 * (min + max); }
  [[nodiscard]] Vec3 extent() const { return max - min; }
  [[nodiscard]] double volume() const {
    const Vec3 e = extent();
    return e.x() * e.y() * e.z();
  }
  [[nodiscard]] bool valid() const {
    return (min.array() <= max.array()).all();
  }
  /// Flat [xmin, ymin, zmin, xmax, ymax, zmax].
  [[nodiscard]] std::array<double, 6> to_array() const {
    return {min.x(), min.y(), min.z(), max.x(), max.y(), max.z()};
  }
  static Aabb3 from_array(const std::array<double, 6>& a) {
    return {Vec3(a[0], a[1], a[2]), Vec3(a[3], a[4], a[5])};
  }
};

/// Pixel box [x0, y0, x1, y1].
struct Box2 {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  [[nodiscard]] double cx() const { return 0.5 * (x0 + x1); }
  [[nodiscard]] double cy() const { return 0.5 * (y0 + y1); }
  [[nodiscard]] bool contains(double u, double v) const {
    return u >= x0 && u <= x1 && v >= y0 && v <= y1;
  }
  bool operator==(const Box2&) const = default;
};

/// Binary instance mask. `bitmap` is CV_8UC1, 0 = background, 255 = object.
struct Mask2D {
  std::string frame_id;
  cv::Mat bitmap;

  [[nodiscard]] int count() const { return bitmap.empty() ? 0 : cv::countNonZero(bitmap); }
  [[nodiscard]] bool valid() const { return count() > 0; }
};

}  // namespace grounder
