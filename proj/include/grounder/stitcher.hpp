#pragma once

#include <opencv2/core.hpp>

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace grounder {

/// Grid of `rows` x `cols` cells, filled left-to-right, top-to-bottom.
struct Layout {
  int rows = 1;
  int cols = 1;

  [[nodiscard]] int capacity() const { return rows * cols; }
  bool operator==(const Layout&) const = default;
};

inline constexpr Layout kLayout4x1{4, 1};
inline constexpr Layout kLayout2x4{2, 4};
inline constexpr Layout kLayout8x2{8, 2};
inline constexpr Layout kLayout9x3{9, 3};
/// Layout family used for planning, ascending capacity.
inline constexpr std::array<Layout, 4> kPlanningLayouts{kLayout4x1, kLayout2x4, kLayout8x2,
                                                        kLayout9x3};

/// One composite image: a layout and the (0-based) input frame indices placed in it.
struct StitchEntry {
  Layout layout;
  std::vector<std::size_t> frames;
};

struct StitchPlan {
  std::vector<StitchEntry> entries;
  bool soft_limit_exceeded = false;

  [[nodiscard]] std::size_t image_count() const { return entries.size(); }
  [[nodiscard]] std::size_t total_capacity() const;
  /// Number of composites using `layout`.
  [[nodiscard]] std::size_t count(const Layout& layout) const;
};

/// Frame budget per layout as computed by the dynamic stitching recurrence, in the order the
/// recurrence emits them (the overflow branch lists its (9,3) run before the remainder).
struct LayoutRun {
  Layout layout;
  std::size_t frames = 0;
};
std::vector<LayoutRun> dynamic_stitching_runs(std::size_t n, int soft_limit);

/// Plans composites for `n` frames under soft limit `soft_limit` (L). Entries are ordered by
/// ascending layout capacity and frames are assigned contiguously in that order.
StitchPlan plan_layouts(std::size_t n, int soft_limit);

struct StitchStyle {
  cv::Size cell{512, 384};
  bool annotate_ids = true;
  int font_px = 24;
};

inline const cv::Scalar kBackgroundGray{128, 128, 128};
inline const cv::Scalar kIdRed{255, 0, 0};

struct StitchedImage {
  cv::Mat raster;  // RGB
  Layout layout;
  /// (cell index, frame id), in fill order.
  std::vector<std::pair<int, std::string>> cell_map;
};

/// Resizes `image` into `cell` preserving aspect ratio, centered on a gray background.
cv::Mat letterbox(const cv::Mat& image, cv::Size cell);

/// Top-left rectangle covered by a label of `text` at `font_px` pixel height.
cv::Rect id_label_region(const std::string& text, int font_px);
/// Draws `text` at the top-left of `image`; returns the covered region.
cv::Rect draw_id_label(cv::Mat& image, const std::string& text, int font_px,
                       const cv::Scalar& color = kIdRed);

/// Composites `frames` into one raster. Throws std::invalid_argument if they do not fit.
StitchedImage stitch(const std::vector<std::pair<std::string, cv::Mat>>& frames,
                     const Layout& layout, const StitchStyle& style = {});

inline constexpr int kVlmMaxLongSide = 2048;
inline constexpr int kVlmMaxShortSide = 768;

/// Uniform downscale (never upscale) so the long side is <= 2048 and the short side <= 768.
cv::Mat resize_for_vlm(const cv::Mat& image);
cv::Size vlm_target_size(cv::Size size);

}  // namespace grounder
