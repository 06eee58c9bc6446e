#include "grounder/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

namespace grounder {

double iou3d(const Aabb3& a, const Aabb3& b) {
  const Vec3 lo = a.min.cwiseMax(b.min);
  const Vec3 hi = a.max.cwiseMin(b.max);
  const Vec3 overlap = (hi - lo).cwiseMax(0.0);
  const double inter = overlap.x() * overlap.y() * overlap.z();
  const double uni = a.volume() + b.volume() - inter;
  if (uni <= 0) return (a.min == b.min && a.max == b.max) ? 1.0 : 0.0;
  return inter / uni;
}

double mask_iou(const cv::Mat& pred, const cv::Mat& gt) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("mask_iou: dimension mismatch");
  cv::Mat p, g, inter, uni;
  cv::compare(pred, 0, p, cv::CMP_GT);
  cv::compare(gt, 0, g, cv::CMP_GT);
  cv::bitwise_and(p, g, inter);
  cv::bitwise_or(p, g, uni);
  const int u = cv::countNonZero(uni);
  if (u == 0) return 1.0;
  return static_cast<double>(cv::countNonZero(inter)) / u;
}

EvalRecord EvalRecord::make(std::string query_id, double iou, std::vector<std::string> splits) {
  EvalRecord r;
  r.query_id = std::move(query_id);
  r.iou3d = iou;
  r.hit25 = iou > kIouThresholdLow;
  r.hit50 = iou > kIouThresholdHigh;
  r.splits = std::move(splits);
  return r;
}

double round1(double percent) { return std::round(percent * 10.0) / 10.0; }

namespace {

SplitAccuracy summarize(const std::string& name, const std::vector<const EvalRecord*>& rows) {
  SplitAccuracy s;
  s.split = name;
  s.count = rows.size();
  std::size_t h25 = 0, h50 = 0, m25 = 0, m50 = 0, with_mask = 0;
  for (const auto* r : rows) {
    h25 += r->hit25;
    h50 += r->hit50;
    if (r->mask_iou) {
      ++with_mask;
      m25 += *r->mask_iou > kIouThresholdLow;
      m50 += *r->mask_iou > kIouThresholdHigh;
    }
  }
  const double n = static_cast<double>(rows.size());
  s.acc25 = round1(100.0 * static_cast<double>(h25) / n);
  s.acc50 = round1(100.0 * static_cast<double>(h50) / n);
  if (with_mask > 0) {
    s.mask_acc25 = round1(100.0 * static_cast<double>(m25) / static_cast<double>(with_mask));
    s.mask_acc50 = round1(100.0 * static_cast<double>(m50) / static_cast<double>(with_mask));
  }
  return s;
}

}  // namespace

AccuracyReport accuracy_report(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw std::invalid_argument("accuracy_report: no records");
  AccuracyReport report;
  std::vector<const EvalRecord*> all;
  std::set<std::string> names;
  for (const auto& r : records) {
    all.push_back(&r);
    names.insert(r.splits.begin(), r.splits.end());
  }
  report.overall = summarize("overall", all);
  for (const auto& name : names) {
    std::vector<const EvalRecord*> rows;
    for (const auto& r : records)
      if (std::find(r.splits.begin(), r.splits.end(), name) != r.splits.end()) rows.push_back(&r);
    report.splits.push_back(summarize(name, rows));
  }
  return report;
}

nlohmann::json AccuracyReport::to_json() const {
  auto row = [](const SplitAccuracy& s) {
    nlohmann::json j = {{"split", s.split}, {"count", s.count}, {"acc@0.25", s.acc25}, {"acc@0.5", s.acc50}};
    if (s.mask_acc25) j["mask_acc@0.25"] = *s.mask_acc25;
    if (s.mask_acc50) j["mask_acc@0.5"] = *s.mask_acc50;
    return j;
  };
  nlohmann::json j = {{"overall", row(overall)}, {"splits", nlohmann::json::array()}};
  for (const auto& s : splits) j["splits"].push_back(row(s));
  if (nr3d_top1) j["nr3d_top1"] = *nr3d_top1;
  return j;
}

std::string AccuracyReport::to_table() const {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-12s %6s %9s %9s\n", "split", "count", "Acc@0.25", "Acc@0.5");
  os << buf;
  auto line = [&](const SplitAccuracy& s) {
    std::snprintf(buf, sizeof buf, "%-12s %6zu %9.1f %9.1f", s.split.c_str(), s.count, s.acc25, s.acc50);
    os << buf;
    if (s.mask_acc25) {
      std::snprintf(buf, sizeof buf, "   mask %5.1f %5.1f", *s.mask_acc25, *s.mask_acc50);
      os << buf;
    }
    os << '\n';
  };
  line(overall);
  for (const auto& s : splits) line(s);
  if (nr3d_top1) {
    std::snprintf(buf, sizeof buf, "%-12s %16.1f\n", "nr3d top-1", *nr3d_top1);
    os << buf;
  }
  return os.str();
}

std::size_t nr3d_match(const Aabb3& pred, const std::vector<Aabb3>& gt_boxes) {
  if (gt_boxes.empty()) throw std::invalid_argument("nr3d_match: no ground-truth boxes");
  const Vec3 c = pred.center();
  std::size_t best = 0;
  double best_d = (gt_boxes[0].center() - c).norm();
  for (std::size_t i = 1; i < gt_boxes.size(); ++i) {
    const double d = (gt_boxes[i].center() - c).norm();
    if (d < best_d) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

nlohmann::json to_json(const EvalRecord& r) {
  nlohmann::json j = {{"query_id", r.query_id}, {"iou3d", r.iou3d}, {"hit25", r.hit25},
                      {"hit50", r.hit50}, {"splits", r.splits}};
  if (r.mask_iou) j["mask_iou"] = *r.mask_iou;
  return j;
}

EvalRecord eval_record_from_json(const nlohmann::json& j) {
  EvalRecord r = EvalRecord::make(j.at("query_id").get<std::string>(), j.at("iou3d").get<double>(),
                                  j.value("splits", std::vector<std::string>{}));
  if (j.contains("mask_iou")) r.mask_iou = j["mask_iou"].get<double>();
  return r;
}

}  // namespace grounder
