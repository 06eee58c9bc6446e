#pragma once

#include <opencv2/core.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace grounder {

/// Reads an 8-bit color image as RGB. Throws IngestionError naming the path on failure.
cv::Mat read_rgb(const std::filesystem::path& path);
/// Reads a 16-bit single channel PNG (depth in millimeters).
cv::Mat read_depth(const std::filesystem::path& path);
/// Reads a binary mask; any nonzero pixel becomes 255.
cv::Mat read_mask(const std::filesystem::path& path);

void write_rgb(const std::filesystem::path& path, const cv::Mat& rgb);
void write_depth(const std::filesystem::path& path, const cv::Mat& depth_mm);
void write_mask(const std::filesystem::path& path, const cv::Mat& mask);

/// Encodes an RGB raster; `ext` is ".png" or ".jpg".
std::vector<unsigned char> encode_rgb(const cv::Mat& rgb, const std::string& ext = ".png");
std::string base64_encode(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> base64_decode(const std::string& text);

}  // namespace grounder
