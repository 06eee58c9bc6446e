#pragma once

#include "grounder/geometry.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace grounder {

/// Intersection over union of two boxes. Zero-volume boxes score 0 unless the boxes are
/// identical, in which case they score 1.
double iou3d(const Aabb3& a, const Aabb3& b);

/// |pred AND gt| / |pred OR gt|. Two empty masks score 1. Throws std::invalid_argument when the
/// rasters differ in size.
double mask_iou(const cv::Mat& pred, const cv::Mat& gt);

inline constexpr double kIouThresholdLow = 0.25;
inline constexpr double kIouThresholdHigh = 0.5;

struct EvalRecord {
  std::string query_id;
  double iou3d = 0;
  bool hit25 = false;  // iou3d > 0.25
  bool hit50 = false;  // iou3d > 0.5
  std::vector<std::string> splits;
  std::optional<double> mask_iou;

  static EvalRecord make(std::string query_id, double iou, std::vector<std::string> splits = {});
};

struct SplitAccuracy {
  std::string split;
  std::size_t count = 0;
  double acc25 = 0;  // percent, one decimal
  double acc50 = 0;
  std::optional<double> mask_acc25;
  std::optional<double> mask_acc50;
};

struct AccuracyReport {
  SplitAccuracy overall;
  std::vector<SplitAccuracy> splits;  // sorted by split name
  std::optional<double> nr3d_top1;    // percent

  [[nodiscard]] nlohmann::json to_json() const;
  [[nodiscard]] std::string to_table() const;
};

/// Per-split and overall Acc@0.25 / Acc@0.5 in percent, rounded to one decimal.
/// Throws std::invalid_argument on an empty record list.
AccuracyReport accuracy_report(const std::vector<EvalRecord>& records);

/// Index of the ground-truth box whose center is nearest to pred's center; ties pick the lowest
/// index. Throws std::invalid_argument on an empty list.
std::size_t nr3d_match(const Aabb3& pred, const std::vector<Aabb3>& gt_boxes);

double round1(double percent);

nlohmann::json to_json(const EvalRecord& record);
EvalRecord eval_record_from_json(const nlohmann::json& j);

}  // namespace grounder
