#pragma once

#include "grounder/geometry.hpp"
#include "grounder/scene.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace grounder {

struct Detection2D {
  std::string frame_id;
  std::string class_label;
  Box2 box;
  double score = 0;
};

struct PixelPair {
  cv::Point2d source;
  cv::Point2d target;
};

struct MatchPairs {
  std::string source_frame;
  std::string target_frame;
  std::vector<PixelPair> pairs;
};

/// Open-vocabulary 2D detector. Returns every detection it produces for the frame; callers
/// filter by class and score with `filter_detections`.
class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::vector<Detection2D> detect(const Frame& frame, const std::string& target_class) = 0;
};

/// Box-prompted instance segmenter. Throws SegmentationError when it has no mask.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual Mask2D segment(const Frame& frame, const Box2& box) = 0;
};

/// Dense cross-view matcher producing pixel correspondences from `source` into `target`.
class Matcher {
 public:
  virtual ~Matcher() = default;
  virtual MatchPairs match(const Frame& source, const Frame& target) = 0;
};

/// Case-insensitive, whitespace-trimmed label comparison.
bool same_class(const std::string& a, const std::string& b);

/// Detections of `target_class` scoring at least `threshold`, in detector order.
std::vector<Detection2D> filter_detections(const std::vector<Detection2D>& detections,
                                           const std::string& target_class, double threshold);

/// Frames with at least one target-class detection at or above `threshold`, in scene order.
/// A detector failure on one frame skips that frame and is reported through `warnings`.
std::vector<std::string> preselect_views(const Scene& scene, const std::string& target_class, Detector& detector,
                                         double threshold, std::vector<std::string>* warnings = nullptr);

struct AnnotatedCandidates {
  cv::Mat image;                    // RGB
  std::vector<std::size_t> id_map;  // object id -> index into the detection list
  std::vector<cv::Rect> label_rects;
};

/// Draws ids 0..k-1 at the box centers, white text on a black background. Labels that would
/// overlap an earlier label move down by one text height until they are clear.
AnnotatedCandidates annotate_candidates(const cv::Mat& rgb, const std::vector<Detection2D>& detections,
                                        int font_px = 24);

/// Runs the matcher from the anchor into each candidate. Pairs whose source pixel is outside the
/// anchor mask, or whose pixels are outside either raster, are dropped; candidates that end up
/// with no pairs (or whose matcher call fails) are omitted.
std::vector<MatchPairs> match_anchor(const Frame& anchor_frame, const Mask2D& anchor_mask,
                                     const std::vector<const Frame*>& candidates, Matcher& matcher);

/// Index of the detection whose box contains the most matched target pixels (ties: lowest index),
/// or nullopt when no box contains any.
std::optional<std::size_t> choose_matched_detection(const MatchPairs& matches,
                                                    const std::vector<Detection2D>& detections);

/// Up to `count` frames nearest to the anchor in sequence order, excluding the anchor. Equal
/// distances prefer the earlier frame. Result is in sequence order.
std::vector<std::string> nearest_in_sequence(const std::vector<std::string>& frames, const std::string& anchor,
                                             std::size_t count);

/// Thin wrapper mirroring the contract of the operation; delegates to the segmenter and rejects
/// boxes outside the color raster and empty masks.
Mask2D segment(const Frame& frame, const Box2& box, Segmenter& segmenter);

// ---- Fixture backends ----------------------------------------------------------------------

/// {frame_id: [{"label": str, "box": [x0,y0,x1,y1], "score": s}, ...]}
class FixtureDetector : public Detector {
 public:
  explicit FixtureDetector(const nlohmann::json& fixture);
  static FixtureDetector from_file(const std::filesystem::path& path);
  std::vector<Detection2D> detect(const Frame& frame, const std::string& target_class) override;

 private:
  std::map<std::string, std::vector<Detection2D>> by_frame_;
};

/// masks/index.json: {frame_id: [{"box": [x0,y0,x1,y1], "mask": "<frame_id>_<k>.png"}, ...]},
/// mask paths relative to the index. Boxes match within half a pixel per coordinate.
class FixtureSegmenter : public Segmenter {
 public:
  explicit FixtureSegmenter(const std::filesystem::path& index_path);
  Mask2D segment(const Frame& frame, const Box2& box) override;

 private:
  struct Entry {
    Box2 box;
    std::filesystem::path mask;
  };
  std::map<std::string, std::vector<Entry>> by_frame_;
};

/// {"<source>-><target>": [[su, sv, tu, tv], ...]}. Missing keys yield no pairs.
class FixtureMatcher : public Matcher {
 public:
  explicit FixtureMatcher(const nlohmann::json& fixture);
  static FixtureMatcher from_file(const std::filesystem::path& path);
  MatchPairs match(const Frame& source, const Frame& target) override;

  static std::string key(const std::string& source, const std::string& target);

 private:
  std::map<std::string, std::vector<PixelPair>> pairs_;
};

// ---- HTTP clients --------------------------------------------------------------------------

struct HttpServiceOptions {
  std::string base_url;
  std::string path;
  std::string api_key_env;
  double timeout_s = 60;
};

/// POST multipart {image: PNG, params: {"frame_id", "classes": [target]}}; response is the
/// fixture's per-frame list: [{"label", "box", "score"}].
class HttpDetector : public Detector {
 public:
  explicit HttpDetector(HttpServiceOptions options) : options_(std::move(options)) {}
  std::vector<Detection2D> detect(const Frame& frame, const std::string& target_class) override;

 private:
  HttpServiceOptions options_;
};

/// POST multipart {image: PNG, params: {"frame_id", "box"}}; response {"mask_png_base64": "..."}.
class HttpSegmenter : public Segmenter {
 public:
  explicit HttpSegmenter(HttpServiceOptions options) : options_(std::move(options)) {}
  Mask2D segment(const Frame& frame, const Box2& box) override;

 private:
  HttpServiceOptions options_;
};

std::vector<Detection2D> detections_from_json(const std::string& frame_id, const nlohmann::json& list);
nlohmann::json to_json(const Detection2D& d);

}  // namespace grounder
