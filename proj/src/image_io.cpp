#include "grounder/image_io.hpp"

#include "grounder/errors.hpp"

#include <openssl/evp.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace grounder {

namespace {

void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

}  // namespace

cv::Mat read_rgb(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IngestionError("cannot read color image: " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return rgb;
}

cv::Mat read_depth(const std::filesystem::path& path) {
  cv::Mat depth = cv::imread(path.string(), cv::IMREAD_ANYDEPTH);
  if (depth.empty()) throw IngestionError("cannot read depth image: " + path.string());
  if (depth.type() != CV_16UC1)
    throw IngestionError("depth image is not 16-bit single channel: " + path.string());
  return depth;
}

cv::Mat read_mask(const std::filesystem::path& path) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (raw.empty()) throw IngestionError("cannot read mask: " + path.string());
  cv::Mat mask;
  cv::compare(raw, 0, mask, cv::CMP_GT);
  return mask;
}

void write_rgb(const std::filesystem::path& path, const cv::Mat& rgb) {
  ensure_parent(path);
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), bgr)) throw IngestionError("cannot write image: " + path.string());
}

void write_depth(const std::filesystem::path& path, const cv::Mat& depth_mm) {
  ensure_parent(path);
  if (!cv::imwrite(path.string(), depth_mm))
    throw IngestionError("cannot write depth image: " + path.string());
}

void write_mask(const std::filesystem::path& path, const cv::Mat& mask) {
  ensure_parent(path);
  cv::Mat out;
  cv::compare(mask, 0, out, cv::CMP_GT);
  if (!cv::imwrite(path.string(), out)) throw IngestionError("cannot write mask: " + path.string());
}

std::vector<unsigned char> encode_rgb(const cv::Mat& rgb, const std::string& ext) {
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  std::vector<unsigned char> bytes;
  if (!cv::imencode(ext, bgr, bytes)) throw std::runtime_error("image encoding failed (" + ext + ")");
  return bytes;
}

std::string base64_encode(const std::vector<unsigned char>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  std::vector<unsigned char> out(3 * (text.size() / 4) + 3);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw std::invalid_argument("invalid base64 input");
  // EVP_DecodeBlock counts '=' padding as zero bytes.
  std::size_t len = static_cast<std::size_t>(n);
  for (auto it = text.rbegin(); it != text.rend() && *it == '='; ++it) --len;
  out.resize(len);
  return out;
}

}  // namespace grounder
