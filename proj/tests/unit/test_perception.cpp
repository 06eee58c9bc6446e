#include "grounder/errors.hpp"
#include "grounder/image_io.hpp"
#include "grounder/perception.hpp"

#include "synthetic.hpp"

#include <gtest/gtest.h>
#include <opencv2/imgproc.hpp>

#include <fstream>
#include <set>

using namespace grounder;
using namespace grounder::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

Scene blank_scene(int n, int step = 20) {
  Scene s;
  s.scene_id = "s";
  for (int i = 0; i < n; ++i) {
    Frame f;
    f.frame_id = format_frame_id(i * step);
    f.color = cv::Mat(60, 80, CV_8UC3, cv::Scalar(0, 0, 0));
    f.depth = cv::Mat(60, 80, CV_16UC1, cv::Scalar(1000));
    f.color_intrinsics = f.depth_intrinsics = make_intrinsics(80, 60, 50);
    s.frames.push_back(f);
  }
  return s;
}

json det(const std::string& label, double score, std::vector<double> box = {1, 1, 10, 10}) {
  return {{"label", label}, {"box", box}, {"score", score}};
}

/// Thresholds a gray image: the oracle segmenter for solid synthetic shapes.
class ThresholdSegmenter : public Segmenter {
 public:
  Mask2D segment(const Frame& frame, const Box2& box) override {
    cv::Mat gray, m;
    cv::cvtColor(frame.color, gray, cv::COLOR_RGB2GRAY);
    m = gray > 127;
    cv::Mat roi = cv::Mat::zeros(m.size(), CV_8UC1);
    roi(cv::Rect(cv::Point(int(box.x0), int(box.y0)), cv::Point(int(box.x1), int(box.y1)))).setTo(255);
    // Grow from the box into the connected bright region.
    cv::Mat seeds = m & roi, out;
    cv::Mat prev;
    out = seeds;
    do {
      prev = out.clone();
      cv::dilate(out, out, cv::Mat());
      out &= m;
    } while (cv::countNonZero(out != prev) > 0);
    return {frame.frame_id, out};
  }
};

class ThrowingDetector : public Detector {
 public:
  std::vector<Detection2D> detect(const Frame& frame, const std::string&) override {
    if (frame.frame_id == "00020") throw TransportError("boom");
    return {{frame.frame_id, "chair", {0, 0, 5, 5}, 0.9}};
  }
};

}  // namespace

TEST(Preselect, FramesContainingClass) {
  const Scene s = blank_scene(3);
  FixtureDetector d(json{{"00000", {det("chair", 0.9)}}, {"00020", {det("table", 0.9)}}, {"00040", {det("Chair ", 0.5)}}});
  EXPECT_EQ(preselect_views(s, "chair", d, 0.3), (std::vector<std::string>{"00000", "00040"}));
  EXPECT_TRUE(preselect_views(s, "chair", d, 1.0).empty());
}

TEST(Preselect, ThresholdEnumeration) {
  const Scene s = blank_scene(5);
  const std::vector<double> scores = {0.2, 0.35, 0.3, 0.9, 0.1};
  json fx = json::object();
  for (std::size_t i = 0; i < scores.size(); ++i) fx[s.frames[i].frame_id] = {det("lamp", scores[i])};
  FixtureDetector d(fx);
  std::vector<std::string> want;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i] >= 0.3) want.push_back(s.frames[i].frame_id);
  const auto got = preselect_views(s, "lamp", d, 0.3);
  EXPECT_EQ(got, want);
  EXPECT_EQ(got, (std::vector<std::string>{"00020", "00040", "00060"}));
}

TEST(Preselect, SubsetOrderPreservingAndSkipsFailures) {
  const Scene s = blank_scene(4);
  ThrowingDetector d;
  std::vector<std::string> warnings;
  const auto got = preselect_views(s, "chair", d, 0.3, &warnings);
  EXPECT_EQ(got, (std::vector<std::string>{"00000", "00040", "00060"}));
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("00020"), std::string::npos);
}

TEST(FixtureDetector, Pure) {
  const Scene s = blank_scene(1);
  FixtureDetector d(json{{"00000", {det("chair", 0.9), det("table", 0.4)}}});
  const auto a = d.detect(s.frames[0], "chair");
  const auto b = d.detect(s.frames[0], "chair");
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[1].box, b[1].box);
  EXPECT_EQ(a[1].class_label, "table");
}

TEST(Annotate, IdsAtCentersWhiteOnBlack) {
  const cv::Mat img(200, 300, CV_8UC3, cv::Scalar(100, 150, 200));
  std::vector<Detection2D> ds = {{"f", "c", {10, 10, 60, 60}, 1},
                                 {"f", "c", {100, 20, 200, 120}, 1},
                                 {"f", "c", {220, 100, 290, 190}, 1}};
  const auto a = annotate_candidates(img, ds);
  ASSERT_EQ(a.id_map, (std::vector<std::size_t>{0, 1, 2}));
  ASSERT_EQ(a.label_rects.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const cv::Rect r = a.label_rects[i];
    EXPECT_NEAR(r.x + r.width / 2.0, ds[i].box.cx(), 1.0);
    EXPECT_NEAR(r.y + r.height / 2.0, ds[i].box.cy(), 1.0);
    int white = 0, black = 0;
    for (int y = r.y; y < r.br().y; ++y)
      for (int x = r.x; x < r.br().x; ++x) {
        const auto p = a.image.at<cv::Vec3b>(y, x);
        white += p == cv::Vec3b(255, 255, 255);
        black += p == cv::Vec3b(0, 0, 0);
      }
    EXPECT_GT(white, 10);
    EXPECT_GT(black, white);
    EXPECT_EQ(white + black, r.area());
  }
  // Untouched outside labels.
  EXPECT_EQ(a.image.at<cv::Vec3b>(199, 0), cv::Vec3b(100, 150, 200));
}

TEST(Annotate, IdenticalBoxesOffsetByTextHeight) {
  const cv::Mat img(200, 200, CV_8UC3, cv::Scalar(0, 0, 0));
  std::vector<Detection2D> ds(2, {"f", "c", {50, 50, 150, 150}, 1});
  const auto a = annotate_candidates(img, ds);
  EXPECT_EQ(a.label_rects[0].x, a.label_rects[1].x);
  EXPECT_EQ(a.label_rects[1].y - a.label_rects[0].y, a.label_rects[0].height);
  EXPECT_EQ((a.label_rects[0] & a.label_rects[1]).area(), 0);
}

TEST(Annotate, IdMapIsBijection) {
  const cv::Mat img(300, 300, CV_8UC3, cv::Scalar(0, 0, 0));
  std::vector<Detection2D> ds;
  for (int i = 0; i < 9; ++i) ds.push_back({"f", "c", {double(i * 20), 100, double(i * 20 + 30), 140}, 1});
  const auto a = annotate_candidates(img, ds);
  std::set<std::size_t> seen(a.id_map.begin(), a.id_map.end());
  EXPECT_EQ(seen.size(), ds.size());
  EXPECT_EQ(*seen.rbegin(), ds.size() - 1);
  for (std::size_t i = 0; i < a.label_rects.size(); ++i)
    for (std::size_t j = i + 1; j < a.label_rects.size(); ++j)
      EXPECT_EQ((a.label_rects[i] & a.label_rects[j]).area(), 0);
}

TEST(MatchAnchor, IdentityPreservedVerbatim) {
  const Scene s = blank_scene(2);
  cv::Mat m = cv::Mat::zeros(60, 80, CV_8UC1);
  m(cv::Rect(10, 10, 20, 20)).setTo(255);
  json pairs = json::array();
  for (int i = 0; i < 10; ++i) pairs.push_back({10.5 + i, 12.5, 10.5 + i, 12.5});
  FixtureMatcher matcher(json{{FixtureMatcher::key("00000", "00020"), pairs}});
  const auto out = match_anchor(s.frames[0], {"00000", m}, {&s.frames[1]}, matcher);
  ASSERT_EQ(out.size(), 1u);
  ASSERT_EQ(out[0].pairs.size(), 10u);
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(out[0].pairs[static_cast<std::size_t>(i)].source, cv::Point2d(10.5 + i, 12.5));
    EXPECT_EQ(out[0].pairs[static_cast<std::size_t>(i)].target, cv::Point2d(10.5 + i, 12.5));
  }
}

TEST(MatchAnchor, OutsideMaskDroppedAndEmptyOmitted) {
  const Scene s = blank_scene(3);
  cv::Mat m = cv::Mat::zeros(60, 80, CV_8UC1);
  m(cv::Rect(0, 0, 40, 60)).setTo(255);
  json pairs = json::array();
  std::size_t inside = 0;
  for (int i = 0; i < 20; ++i) {
    const double u = i < 14 ? 5.5 + i : 45.5 + i;  // 30% land outside the mask
    inside += i < 14;
    pairs.push_back({u, 30.5, 20.0, 20.0});
  }
  pairs.push_back({5.5, 5.5, 500.0, 5.0});  // target outside the raster
  FixtureMatcher matcher(json{{FixtureMatcher::key("00000", "00020"), pairs}, {FixtureMatcher::key("00000", "00040"), json::array()}});
  const auto out = match_anchor(s.frames[0], {"00000", m}, {&s.frames[1], &s.frames[2]}, matcher);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].target_frame, "00020");
  EXPECT_EQ(out[0].pairs.size(), inside);
}

TEST(ChooseMatched, MostContainedPairsLowestIndexOnTie) {
  MatchPairs mp{"a", "b", {}};
  for (int i = 0; i < 5; ++i) mp.pairs.push_back({{0, 0}, {15.0 + i, 15.0}});
  mp.pairs.push_back({{0, 0}, {55, 55}});
  std::vector<Detection2D> ds = {{"b", "c", {50, 50, 60, 60}, 1}, {"b", "c", {10, 10, 30, 30}, 1}, {"b", "c", {0, 0, 40, 40}, 1}};
  EXPECT_EQ(choose_matched_detection(mp, ds), 1u);
  EXPECT_FALSE(choose_matched_detection(mp, {{"b", "c", {100, 100, 110, 110}, 1}}).has_value());
}

TEST(NearestInSequence, PrefersEarlierOnTies) {
  const std::vector<std::string> f = {"a", "b", "c", "d", "e", "f", "g"};
  EXPECT_EQ(nearest_in_sequence(f, "d", 3), (std::vector<std::string>{"b", "c", "e"}));
  EXPECT_EQ(nearest_in_sequence(f, "a", 2), (std::vector<std::string>{"b", "c"}));
  EXPECT_EQ(nearest_in_sequence(f, "d", 10).size(), 6u);
  EXPECT_TRUE(nearest_in_sequence(f, "z", 3).empty());
}

TEST(Segment, FixturePassthroughAndMissingEntry) {
  const fs::path dir = fresh_temp_dir("seg");
  cv::Mat m = cv::Mat::zeros(60, 80, CV_8UC1);
  m(cv::Rect(3, 4, 10, 12)).setTo(255);
  write_mask(dir / "00000_0.png", m);
  std::ofstream(dir / "index.json") << json{{"00000", {{{"box", {3, 4, 13, 16}}, {"mask", "00000_0.png"}}}}}.dump();
  FixtureSegmenter seg(dir / "index.json");
  const Scene s = blank_scene(2);
  const Mask2D got = segment(s.frames[0], {3.2, 4, 13, 16}, seg);
  EXPECT_EQ(cv::norm(got.bitmap, m, cv::NORM_INF), 0.0);
  EXPECT_THROW(segment(s.frames[1], {3, 4, 13, 16}, seg), SegmentationError);
  EXPECT_THROW(segment(s.frames[0], {3, 4, 130, 16}, seg), SegmentationError);
  fs::remove_all(dir);
}

TEST(Segment, ThresholdOracleOnSolidRectangle) {
  Scene s = blank_scene(1);
  s.frames[0].color = cv::Mat(60, 80, CV_8UC3, cv::Scalar(0, 0, 0));
  s.frames[0].color(cv::Rect(20, 10, 30, 25)).setTo(cv::Scalar(255, 255, 255));
  ThresholdSegmenter seg;
  const Mask2D got = segment(s.frames[0], {25, 15, 40, 30}, seg);
  cv::Mat want = cv::Mat::zeros(60, 80, CV_8UC1);
  want(cv::Rect(20, 10, 30, 25)).setTo(255);
  EXPECT_EQ(cv::norm(got.bitmap, want, cv::NORM_INF), 0.0);
}

TEST(SameClass, CaseAndWhitespace) {
  EXPECT_TRUE(same_class(" Chair", "chair "));
  EXPECT_FALSE(same_class("chair", "chairs"));
}
