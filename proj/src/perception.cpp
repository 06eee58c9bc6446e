#include "grounder/perception.hpp"

#include "grounder/errors.hpp"
#include "grounder/http.hpp"
#include "grounder/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace grounder {

namespace {

std::string normalize_label(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  std::string out = s.substr(b, e - b + 1);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

Box2 box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw std::invalid_argument("box must be [x0, y0, x1, y1]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open fixture: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IngestionError("malformed fixture " + path.string() + ": " + e.what());
  }
}

bool inside(const cv::Point2d& p, const cv::Mat& raster) {
  return p.x >= 0 && p.y >= 0 && p.x < raster.cols && p.y < raster.rows;
}

}  // namespace

bool same_class(const std::string& a, const std::string& b) { return normalize_label(a) == normalize_label(b); }

std::vector<Detection2D> filter_detections(const std::vector<Detection2D>& detections,
                                           const std::string& target_class, double threshold) {
  std::vector<Detection2D> out;
  for (const auto& d : detections)
    if (same_class(d.class_label, target_class) && d.score >= threshold) out.push_back(d);
  return out;
}

std::vector<std::string> preselect_views(const Scene& scene, const std::string& target_class, Detector& detector,
                                         double threshold, std::vector<std::string>* warnings) {
  std::vector<std::string> out;
  for (const auto& frame : scene.frames) {
    try {
      if (!filter_detections(detector.detect(frame, target_class), target_class, threshold).empty())
        out.push_back(frame.frame_id);
    } catch (const std::exception& e) {
      if (warnings) warnings->push_back("detector failed on frame " + frame.frame_id + ": " + e.what());
    }
  }
  return out;
}

AnnotatedCandidates annotate_candidates(const cv::Mat& rgb, const std::vector<Detection2D>& detections,
                                        int font_px) {
  constexpr int font = cv::FONT_HERSHEY_SIMPLEX;
  constexpr int thickness = 2;
  constexpr int pad = 3;
  const double scale = cv::getFontScaleFromHeight(font, font_px, thickness);

  AnnotatedCandidates out;
  out.image = rgb.clone();
  for (std::size_t id = 0; id < detections.size(); ++id) {
    const std::string text = std::to_string(id);
    int baseline = 0;
    const cv::Size ts = cv::getTextSize(text, font, scale, thickness, &baseline);
    const cv::Size label(ts.width + 2 * pad, ts.height + baseline + 2 * pad);
    const Box2& b = detections[id].box;
    cv::Rect rect(static_cast<int>(std::lround(b.cx())) - label.width / 2,
                  static_cast<int>(std::lround(b.cy())) - label.height / 2, label.width, label.height);
    auto collides = [&](const cv::Rect& r) {
      return std::any_of(out.label_rects.begin(), out.label_rects.end(),
                         [&](const cv::Rect& o) { return (r & o).area() > 0; });
    };
    while (collides(rect)) rect.y += label.height;
    cv::rectangle(out.image, rect, cv::Scalar(0, 0, 0), cv::FILLED);
    cv::putText(out.image, text, cv::Point(rect.x + pad, rect.y + pad + ts.height), font, scale,
                cv::Scalar(255, 255, 255), thickness, cv::LINE_8);
    out.id_map.push_back(id);
    out.label_rects.push_back(rect);
  }
  return out;
}

std::vector<MatchPairs> match_anchor(const Frame& anchor_frame, const Mask2D& anchor_mask,
                                     const std::vector<const Frame*>& candidates, Matcher& matcher) {
  if (!anchor_mask.valid()) throw std::invalid_argument("match_anchor: anchor mask is empty");
  std::vector<MatchPairs> out;
  for (const Frame* candidate : candidates) {
    MatchPairs raw;
    try {
      raw = matcher.match(anchor_frame, *candidate);
    } catch (const std::exception&) {
      continue;
    }
    MatchPairs kept{anchor_frame.frame_id, candidate->frame_id, {}};
    for (const auto& pair : raw.pairs) {
      if (!inside(pair.source, anchor_mask.bitmap) || !inside(pair.target, candidate->color)) continue;
      const int u = static_cast<int>(std::floor(pair.source.x));
      const int v = static_cast<int>(std::floor(pair.source.y));
      if (anchor_mask.bitmap.at<std::uint8_t>(v, u) == 0) continue;
      kept.pairs.push_back(pair);
    }
    if (!kept.pairs.empty()) out.push_back(std::move(kept));
  }
  return out;
}

std::optional<std::size_t> choose_matched_detection(const MatchPairs& matches,
                                                    const std::vector<Detection2D>& detections) {
  std::optional<std::size_t> best;
  std::size_t best_count = 0;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const auto count = static_cast<std::size_t>(
        std::count_if(matches.pairs.begin(), matches.pairs.end(),
                      [&](const PixelPair& p) { return detections[i].box.contains(p.target.x, p.target.y); }));
    if (count > best_count) {
      best = i;
      best_count = count;
    }
  }
  return best;
}

std::vector<std::string> nearest_in_sequence(const std::vector<std::string>& frames, const std::string& anchor,
                                             std::size_t count) {
  const auto it = std::find(frames.begin(), frames.end(), anchor);
  if (it == frames.end()) return {};
  const long a = it - frames.begin();
  std::vector<long> picks;
  for (long step = 1; picks.size() < count; ++step) {
    const bool has_before = a - step >= 0;
    const bool has_after = a + step < static_cast<long>(frames.size());
    if (!has_before && !has_after) break;
    if (has_before) picks.push_back(a - step);
    if (has_after && picks.size() < count) picks.push_back(a + step);
  }
  std::sort(picks.begin(), picks.end());
  std::vector<std::string> out;
  for (long p : picks) out.push_back(frames[static_cast<std::size_t>(p)]);
  return out;
}

Mask2D segment(const Frame& frame, const Box2& box, Segmenter& segmenter) {
  if (!(box.x0 >= 0 && box.y0 >= 0 && box.x1 <= frame.color.cols && box.y1 <= frame.color.rows &&
        box.x0 < box.x1 && box.y0 < box.y1))
    throw SegmentationError("box outside frame " + frame.frame_id);
  Mask2D mask = segmenter.segment(frame, box);
  if (!mask.valid()) throw SegmentationError("empty mask for frame " + frame.frame_id);
  mask.frame_id = frame.frame_id;
  return mask;
}

std::vector<Detection2D> detections_from_json(const std::string& frame_id, const json& list) {
  std::vector<Detection2D> out;
  for (const auto& d : list) {
    Detection2D det;
    det.frame_id = frame_id;
    det.class_label = d.at("label").get<std::string>();
    det.box = box_from_json(d.at("box"));
    det.score = d.value("score", 1.0);
    out.push_back(std::move(det));
  }
  return out;
}

json to_json(const Detection2D& d) {
  return {{"label", d.class_label}, {"box", {d.box.x0, d.box.y0, d.box.x1, d.box.y1}}, {"score", d.score}};
}

FixtureDetector::FixtureDetector(const json& fixture) {
  for (const auto& [frame_id, list] : fixture.items()) by_frame_[frame_id] = detections_from_json(frame_id, list);
}

FixtureDetector FixtureDetector::from_file(const fs::path& path) { return FixtureDetector(read_json(path)); }

std::vector<Detection2D> FixtureDetector::detect(const Frame& frame, const std::string&) {
  const auto it = by_frame_.find(frame.frame_id);
  return it == by_frame_.end() ? std::vector<Detection2D>{} : it->second;
}

FixtureSegmenter::FixtureSegmenter(const fs::path& index_path) {
  const json index = read_json(index_path);
  const fs::path base = index_path.parent_path();
  for (const auto& [frame_id, list] : index.items()) {
    for (const auto& e : list)
      by_frame_[frame_id].push_back({box_from_json(e.at("box")), base / e.at("mask").get<std::string>()});
  }
}

Mask2D FixtureSegmenter::segment(const Frame& frame, const Box2& box) {
  const auto it = by_frame_.find(frame.frame_id);
  if (it != by_frame_.end()) {
    for (const auto& e : it->second) {
      const bool same = std::abs(e.box.x0 - box.x0) <= 0.5 && std::abs(e.box.y0 - box.y0) <= 0.5 &&
                        std::abs(e.box.x1 - box.x1) <= 0.5 && std::abs(e.box.y1 - box.y1) <= 0.5;
      if (same) return {frame.frame_id, read_mask(e.mask)};
    }
  }
  throw SegmentationError("no fixture mask for frame " + frame.frame_id);
}

FixtureMatcher::FixtureMatcher(const json& fixture) {
  for (const auto& [k, list] : fixture.items()) {
    auto& dst = pairs_[k];
    for (const auto& p : list) {
      if (!p.is_array() || p.size() != 4) throw std::invalid_argument("match entry must be [su, sv, tu, tv]");
      dst.push_back({{p[0].get<double>(), p[1].get<double>()}, {p[2].get<double>(), p[3].get<double>()}});
    }
  }
}

FixtureMatcher FixtureMatcher::from_file(const fs::path& path) { return FixtureMatcher(read_json(path)); }

std::string FixtureMatcher::key(const std::string& source, const std::string& target) {
  return source + "->" + target;
}

MatchPairs FixtureMatcher::match(const Frame& source, const Frame& target) {
  MatchPairs out{source.frame_id, target.frame_id, {}};
  const auto it = pairs_.find(key(source.frame_id, target.frame_id));
  if (it != pairs_.end()) out.pairs = it->second;
  return out;
}

namespace {

HttpHeaders auth_headers(const HttpServiceOptions& options) {
  HttpHeaders headers;
  if (!options.api_key_env.empty()) {
    if (const char* key = std::getenv(options.api_key_env.c_str()))
      headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  return headers;
}

json post_frame(const HttpServiceOptions& options, const Frame& frame, const json& params) {
  const auto png = encode_rgb(frame.color, ".png");
  const std::vector<MultipartField> fields{
      {"image", std::string(png.begin(), png.end()), frame.frame_id + ".png", "image/png"},
      {"params", params.dump(), "", "application/json"}};
  const HttpResponse res =
      http_post_multipart(options.base_url, options.path, fields, auth_headers(options), options.timeout_s);
  if (res.status != 200) throw TransportError("service returned HTTP " + std::to_string(res.status));
  try {
    return json::parse(res.body);
  } catch (const json::parse_error& e) {
    throw ResponseFormatError(std::string("malformed service response: ") + e.what());
  }
}

}  // namespace

std::vector<Detection2D> HttpDetector::detect(const Frame& frame, const std::string& target_class) {
  const json body = post_frame(options_, frame, {{"frame_id", frame.frame_id}, {"classes", {target_class}}});
  return detections_from_json(frame.frame_id, body);
}

Mask2D HttpSegmenter::segment(const Frame& frame, const Box2& box) {
  const json body =
      post_frame(options_, frame, {{"frame_id", frame.frame_id}, {"box", {box.x0, box.y0, box.x1, box.y1}}});
  const auto bytes = base64_decode(body.at("mask_png_base64").get<std::string>());
  cv::Mat raw = cv::imdecode(bytes, cv::IMREAD_GRAYSCALE);
  if (raw.empty()) throw SegmentationError("undecodable mask for frame " + frame.frame_id);
  cv::Mat mask;
  cv::compare(raw, 0, mask, cv::CMP_GT);
  return {frame.frame_id, mask};
}

}  // namespace grounder
