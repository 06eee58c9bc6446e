#include "grounder/stitcher.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace grounder {

namespace {

/// Ceiling of a / b for b > 0 and any sign of a.
long ceil_div(long a, long b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }

/// Appends a run taking `want` frames out of `remaining`, clamped to what is left.
void take(std::vector<LayoutRun>& runs, Layout layout, long want, long& remaining) {
  const long k = std::clamp(want, 0L, remaining);
  if (k > 0) runs.push_back({layout, static_cast<std::size_t>(k)});
  remaining -= k;
}

}  // namespace

std::size_t StitchPlan::total_capacity() const {
  std::size_t total = 0;
  for (const auto& e : entries) total += static_cast<std::size_t>(e.layout.capacity());
  return total;
}

std::size_t StitchPlan::count(const Layout& layout) const {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(), [&](const StitchEntry& e) { return e.layout == layout; }));
}

std::vector<LayoutRun> dynamic_stitching_runs(std::size_t n_frames, int soft_limit) {
  if (soft_limit < 1) throw std::invalid_argument("soft limit must be >= 1");
  const long L = soft_limit;
  long n = static_cast<long>(n_frames);
  long remaining = n;
  std::vector<LayoutRun> runs;
  if (n == 0) return runs;

  if (n <= 4 * L) {
    take(runs, kLayout4x1, remaining, remaining);
  } else if (n <= 8 * L) {
    const long n8 = ceil_div(n - 4 * L, 4);
    const long n4 = L - n8;
    take(runs, kLayout4x1, 4 * n4, remaining);
    take(runs, kLayout2x4, remaining, remaining);
  } else if (n <= 16 * L) {
    const long n16 = ceil_div(n - 8 * L, 8);
    n = std::max(n - 16 * n16, 0L);
    const long n48 = L - n16;
    const long n8 = ceil_div(n - 4 * n48, 4);
    const long n4 = n48 - n8;
    take(runs, kLayout4x1, 4 * n4, remaining);
    take(runs, kLayout2x4, 8 * n8, remaining);
    take(runs, kLayout8x2, remaining, remaining);
  } else if (n <= 27 * L) {
    // 11 = 27 - 16: each (9,3) frees eleven more slots than an (8,2).
    const long n27 = ceil_div(n - 16 * L, 11);
    const long n4816 = L - n27;
    n = std::max(n - 27 * n27, 0L);
    const long n16 = ceil_div(n - 8 * n4816, 8);
    const long n48 = n4816 - n16;
    n = std::max(n - 16 * n16, 0L);
    const long n8 = ceil_div(n - 4 * n48, 4);
    const long n4 = n48 - n8;
    take(runs, kLayout4x1, 4 * n4, remaining);
    take(runs, kLayout2x4, 8 * n8, remaining);
    take(runs, kLayout8x2, 16 * n16, remaining);
    take(runs, kLayout9x3, remaining, remaining);
  } else {
    const long n27 = n / 27;
    take(runs, kLayout9x3, 27 * n27, remaining);
    auto rest = dynamic_stitching_runs(static_cast<std::size_t>(remaining), 1);
    runs.insert(runs.end(), rest.begin(), rest.end());
  }
  return runs;
}

StitchPlan plan_layouts(std::size_t n, int soft_limit) {
  auto runs = dynamic_stitching_runs(n, soft_limit);
  std::stable_sort(runs.begin(), runs.end(), [](const LayoutRun& a, const LayoutRun& b) {
    return a.layout.capacity() < b.layout.capacity();
  });

  StitchPlan plan;
  plan.soft_limit_exceeded = n > 27 * static_cast<std::size_t>(soft_limit);
  std::size_t next = 0;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    // Adjacent runs of one layout (overflow (9,3) run + a (9,3) remainder) share composites.
    std::size_t frames = runs[r].frames;
    while (r + 1 < runs.size() && runs[r + 1].layout == runs[r].layout) frames += runs[++r].frames;
    const auto cap = static_cast<std::size_t>(runs[r].layout.capacity());
    for (std::size_t done = 0; done < frames; done += cap) {
      StitchEntry entry{runs[r].layout, {}};
      const std::size_t k = std::min(cap, frames - done);
      for (std::size_t i = 0; i < k; ++i) entry.frames.push_back(next++);
      plan.entries.push_back(std::move(entry));
    }
  }
  return plan;
}

cv::Mat letterbox(const cv::Mat& image, cv::Size cell) {
  cv::Mat out(cell, CV_8UC3, kBackgroundGray);
  if (image.empty()) return out;
  const double scale =
      std::min(static_cast<double>(cell.width) / image.cols, static_cast<double>(cell.height) / image.rows);
  const int w = std::clamp(static_cast<int>(std::lround(image.cols * scale)), 1, cell.width);
  const int h = std::clamp(static_cast<int>(std::lround(image.rows * scale)), 1, cell.height);
  cv::Mat resized;
  if (w == image.cols && h == image.rows) {
    resized = image;
  } else {
    cv::resize(image, resized, cv::Size(w, h), 0, 0, scale < 1.0 ? cv::INTER_AREA : cv::INTER_LINEAR);
  }
  resized.copyTo(out(cv::Rect((cell.width - w) / 2, (cell.height - h) / 2, w, h)));
  return out;
}

namespace {

constexpr int kLabelFont = cv::FONT_HERSHEY_SIMPLEX;
constexpr int kLabelThickness = 2;
constexpr int kLabelMargin = 4;

}  // namespace

cv::Rect id_label_region(const std::string& text, int font_px) {
  const double scale = cv::getFontScaleFromHeight(kLabelFont, font_px, kLabelThickness);
  int baseline = 0;
  const cv::Size ts = cv::getTextSize(text, kLabelFont, scale, kLabelThickness, &baseline);
  return {0, 0, ts.width + 2 * kLabelMargin, ts.height + baseline + 2 * kLabelMargin};
}

cv::Rect draw_id_label(cv::Mat& image, const std::string& text, int font_px, const cv::Scalar& color) {
  const double scale = cv::getFontScaleFromHeight(kLabelFont, font_px, kLabelThickness);
  int baseline = 0;
  const cv::Size ts = cv::getTextSize(text, kLabelFont, scale, kLabelThickness, &baseline);
  cv::putText(image, text, cv::Point(kLabelMargin, kLabelMargin + ts.height), kLabelFont, scale, color,
              kLabelThickness, cv::LINE_8);
  return id_label_region(text, font_px) & cv::Rect(0, 0, image.cols, image.rows);
}

StitchedImage stitch(const std::vector<std::pair<std::string, cv::Mat>>& frames,
                     const Layout& layout, const StitchStyle& style) {
  if (layout.rows < 1 || layout.cols < 1) throw std::invalid_argument("layout must be at least 1x1");
  if (static_cast<int>(frames.size()) > layout.capacity())
    throw std::invalid_argument("too many frames (" + std::to_string(frames.size()) +
                                ") for layout capacity " + std::to_string(layout.capacity()));
  const cv::Size cell = style.cell;
  StitchedImage out;
  out.layout = layout;
  out.raster = cv::Mat(cell.height * layout.rows, cell.width * layout.cols, CV_8UC3, kBackgroundGray);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const int idx = static_cast<int>(i);
    const cv::Rect dst((idx % layout.cols) * cell.width, (idx / layout.cols) * cell.height, cell.width,
                       cell.height);
    cv::Mat tile = letterbox(frames[i].second, cell);
    if (style.annotate_ids) draw_id_label(tile, frames[i].first, style.font_px);
    tile.copyTo(out.raster(dst));
    out.cell_map.emplace_back(idx, frames[i].first);
  }
  return out;
}

cv::Size vlm_target_size(cv::Size size) {
  const int long_side = std::max(size.width, size.height);
  const int short_side = std::min(size.width, size.height);
  if (long_side <= kVlmMaxLongSide && short_side <= kVlmMaxShortSide) return size;
  const double scale = std::min(static_cast<double>(kVlmMaxLongSide) / long_side,
                                static_cast<double>(kVlmMaxShortSide) / short_side);
  auto fit = [&](int v) { return std::max(1, static_cast<int>(std::floor(v * scale + 0.5))); };
  cv::Size out(fit(size.width), fit(size.height));
  // Rounding may overshoot a bound by one pixel.
  const bool wide = size.width >= size.height;
  int& lng = wide ? out.width : out.height;
  int& sht = wide ? out.height : out.width;
  lng = std::min(lng, kVlmMaxLongSide);
  sht = std::min(sht, kVlmMaxShortSide);
  return out;
}

cv::Mat resize_for_vlm(const cv::Mat& image) {
  if (image.empty()) throw std::invalid_argument("resize_for_vlm: empty image");
  const cv::Size target = vlm_target_size(image.size());
  if (target == image.size()) return image.clone();
  cv::Mat out;
  cv::resize(image, out, target, 0, 0, cv::INTER_AREA);
  return out;
}

}  // namespace grounder
