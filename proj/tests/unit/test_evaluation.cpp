#include "grounder/evaluation.hpp"

#include <gtest/gtest.h>

#include <Eigen/Geometry>

#include <random>

using namespace grounder;

namespace {

Aabb3 unit_at(double x, double y = 0, double z = 0) { return {Vec3(x, y, z), Vec3(x + 1, y + 1, z + 1)}; }

std::vector<EvalRecord> records(const std::vector<double>& ious) {
  std::vector<EvalRecord> out;
  for (std::size_t i = 0; i < ious.size(); ++i) out.push_back(EvalRecord::make("q" + std::to_string(i), ious[i]));
  return out;
}

}  // namespace

TEST(Iou3d, Examples) {
  EXPECT_DOUBLE_EQ(iou3d(unit_at(0), unit_at(0)), 1.0);
  EXPECT_DOUBLE_EQ(iou3d(unit_at(0), unit_at(2)), 0.0);
  EXPECT_NEAR(iou3d(unit_at(0), unit_at(0.5)), 1.0 / 3.0, 1e-9);
}

TEST(Iou3d, DegenerateBoxes) {
  const Aabb3 point{Vec3(1, 1, 1), Vec3(1, 1, 1)};
  EXPECT_DOUBLE_EQ(iou3d(point, point), 1.0);
  EXPECT_DOUBLE_EQ(iou3d(point, {Vec3(2, 2, 2), Vec3(2, 2, 2)}), 0.0);
  EXPECT_DOUBLE_EQ(iou3d(point, unit_at(0.5, 0.5, 0.5)), 0.0);
}

TEST(Iou3d, SymmetricAndTranslationInvariant) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2), s(0.1, 2);
  for (int t = 0; t < 200; ++t) {
    const Vec3 a0(u(rng), u(rng), u(rng)), b0(u(rng), u(rng), u(rng));
    const Aabb3 a{a0, a0 + Vec3(s(rng), s(rng), s(rng))};
    const Aabb3 b{b0, b0 + Vec3(s(rng), s(rng), s(rng))};
    const Vec3 shift(u(rng), u(rng), u(rng));
    const double v = iou3d(a, b);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_DOUBLE_EQ(v, iou3d(b, a));
    EXPECT_NEAR(v, iou3d({a.min + shift, a.max + shift}, {b.min + shift, b.max + shift}), 1e-9);
    EXPECT_NEAR(iou3d(a, a), 1.0, 1e-15);
  }
}

TEST(MaskIou, Examples) {
  cv::Mat a = cv::Mat::zeros(20, 20, CV_8UC1), b = cv::Mat::zeros(20, 20, CV_8UC1);
  a(cv::Rect(0, 0, 10, 10)).setTo(255);
  EXPECT_DOUBLE_EQ(mask_iou(a, a), 1.0);
  b(cv::Rect(10, 10, 5, 5)).setTo(255);
  EXPECT_DOUBLE_EQ(mask_iou(a, b), 0.0);
  cv::Mat half = cv::Mat::zeros(20, 20, CV_8UC1);
  half(cv::Rect(5, 0, 10, 10)).setTo(1);
  EXPECT_DOUBLE_EQ(mask_iou(a, half), 50.0 / 150.0);
  EXPECT_DOUBLE_EQ(mask_iou(cv::Mat::zeros(3, 3, CV_8UC1), cv::Mat::zeros(3, 3, CV_8UC1)), 1.0);
  EXPECT_THROW(mask_iou(a, cv::Mat::zeros(10, 20, CV_8UC1)), std::invalid_argument);
}

TEST(AccuracyReport, ThresholdCounting) {
  const auto r = accuracy_report(records({0.9, 0.3, 0.2, 0.6}));
  EXPECT_EQ(r.overall.acc25, 75.0);
  EXPECT_EQ(r.overall.acc50, 50.0);
  EXPECT_EQ(r.overall.count, 4u);
  const auto all = accuracy_report(records({1.0, 1.0}));
  EXPECT_EQ(all.overall.acc25, 100.0);
  EXPECT_EQ(all.overall.acc50, 100.0);
  const auto edge = accuracy_report(records({0.26}));
  EXPECT_EQ(edge.overall.acc25, 100.0);
  EXPECT_EQ(edge.overall.acc50, 0.0);
  const auto strict = accuracy_report(records({0.25, 0.5}));
  EXPECT_EQ(strict.overall.acc25, 50.0);
  EXPECT_EQ(strict.overall.acc50, 0.0);
  EXPECT_THROW(accuracy_report({}), std::invalid_argument);
}

TEST(AccuracyReport, SplitsAndWeightedOverall) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<EvalRecord> rs;
  for (int i = 0; i < 37; ++i)
    rs.push_back(EvalRecord::make("q" + std::to_string(i), u(rng), {i % 3 == 0 ? "unique" : "multiple"}));
  const auto r = accuracy_report(rs);
  ASSERT_EQ(r.splits.size(), 2u);
  EXPECT_EQ(r.splits[0].split, "multiple");
  EXPECT_EQ(r.splits[1].split, "unique");
  EXPECT_EQ(r.splits[0].count + r.splits[1].count, 37u);
  std::size_t hits = 0;
  for (const auto& x : rs) hits += x.iou3d > 0.25;
  EXPECT_EQ(r.overall.acc25, round1(100.0 * hits / 37.0));
  // Overall equals the count-weighted split mean up to the one-decimal rounding of each split.
  const double weighted =
      (r.splits[0].acc25 * r.splits[0].count + r.splits[1].acc25 * r.splits[1].count) / 37.0;
  EXPECT_NEAR(r.overall.acc25, weighted, 0.1);
}

TEST(AccuracyReport, RoundsToOneDecimal) {
  const auto r = accuracy_report(records({0.9, 0.1, 0.1}));
  EXPECT_EQ(r.overall.acc25, 33.3);
  EXPECT_NE(r.to_table().find("33.3"), std::string::npos);
  EXPECT_EQ(r.to_json()["overall"]["acc@0.25"], 33.3);
}

TEST(AccuracyReport, MaskColumns) {
  auto rs = records({0.9, 0.1});
  rs[0].mask_iou = 0.6;
  rs[1].mask_iou = 0.3;
  const auto r = accuracy_report(rs);
  ASSERT_TRUE(r.overall.mask_acc25);
  EXPECT_EQ(*r.overall.mask_acc25, 100.0);
  EXPECT_EQ(*r.overall.mask_acc50, 50.0);
}

TEST(Nr3dMatch, Examples) {
  const Aabb3 pred{Vec3(-0.5, -0.5, -0.5), Vec3(0.5, 0.5, 0.5)};
  auto centered = [](double x, double y, double z) {
    return Aabb3{Vec3(x - 0.5, y - 0.5, z - 0.5), Vec3(x + 0.5, y + 0.5, z + 0.5)};
  };
  EXPECT_EQ(nr3d_match(pred, {centered(0.1, 0, 0), centered(2, 0, 0)}), 0u);
  EXPECT_EQ(nr3d_match(pred, {centered(2, 0, 0), centered(0.1, 0, 0)}), 1u);
  EXPECT_EQ(nr3d_match(pred, {centered(5, 5, 5)}), 0u);
  EXPECT_EQ(nr3d_match(pred, {centered(3, 0, 0), centered(1, 0, 0), centered(-1, 0, 0), centered(0, 1, 0)}), 1u);
  EXPECT_THROW(nr3d_match(pred, {}), std::invalid_argument);
}

TEST(Nr3dMatch, RigidMotionInvariant) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-3, 3);
  Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
  T.rotate(Eigen::AngleAxisd(1.1, Vec3(1, 2, 3).normalized()));
  T.pretranslate(Vec3(4, -2, 1));
  auto move = [&](const Aabb3& b) {
    const Vec3 c = T * b.center();
    const Vec3 h = 0.5 * b.extent();
    return Aabb3{c - h, c + h};
  };
  for (int t = 0; t < 100; ++t) {
    const Aabb3 pred = unit_at(u(rng), u(rng), u(rng));
    std::vector<Aabb3> gt, gt_moved;
    for (int i = 0; i < 6; ++i) {
      gt.push_back(unit_at(u(rng), u(rng), u(rng)));
      gt_moved.push_back(move(gt.back()));
    }
    EXPECT_EQ(nr3d_match(pred, gt), nr3d_match(move(pred), gt_moved));
  }
}

TEST(EvalRecord, JsonRoundTrip) {
  EvalRecord r = EvalRecord::make("q7", 0.4, {"hard", "vd"});
  r.mask_iou = 0.2;
  const EvalRecord back = eval_record_from_json(to_json(r));
  EXPECT_EQ(back.query_id, "q7");
  EXPECT_EQ(back.iou3d, 0.4);
  EXPECT_TRUE(back.hit25);
  EXPECT_FALSE(back.hit50);
  EXPECT_EQ(back.splits, r.splits);
  EXPECT_EQ(back.mask_iou, r.mask_iou);
}
