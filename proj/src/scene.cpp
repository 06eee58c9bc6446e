#include "grounder/scene.hpp"

#include "grounder/errors.hpp"
#include "grounder/image_io.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace grounder {

void CameraIntrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0))
    throw ValidationError("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ValidationError("intrinsics: empty image size");
  if (!(cx >= 0 && cx < width && cy >= 0 && cy < height))
    throw ValidationError("intrinsics: principal point outside the image");
}

Eigen::Matrix3d CameraIntrinsics::matrix() const {
  Eigen::Matrix3d k;
  k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return k;
}

Pose Pose::from_matrix(const Eigen::Matrix4d& m, double tol) {
  if (!m.allFinite()) throw ValidationError("pose contains non-finite values");
  const Eigen::RowVector4d bottom = m.row(3);
  if ((bottom - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > tol)
    throw ValidationError("pose bottom row is not [0 0 0 1]");
  const Eigen::Matrix3d r = m.topLeftCorner<3, 3>();
  const double ortho_err = (r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho_err > tol) throw ValidationError("pose rotation is not orthonormal");
  if (std::abs(r.determinant() - 1.0) > tol)
    throw ValidationError("pose rotation determinant is not +1");
  Pose pose;
  pose.world_from_camera.matrix() = m;
  return pose;
}

std::optional<double> Frame::depth_m(int u, int v) const {
  if (u < 0 || v < 0 || u >= depth.cols || v >= depth.rows) return std::nullopt;
  const std::uint16_t raw = depth.at<std::uint16_t>(v, u);
  if (raw == 0) return std::nullopt;
  return static_cast<double>(raw) / kDepthScale;
}

const Frame* Scene::find(const std::string& frame_id) const {
  auto it = std::lower_bound(frames.begin(), frames.end(), frame_id,
                             [](const Frame& f, const std::string& id) { return f.frame_id < id; });
  if (it == frames.end() || it->frame_id != frame_id) return nullptr;
  return &*it;
}

std::vector<std::string> Scene::frame_ids() const {
  std::vector<std::string> ids;
  ids.reserve(frames.size());
  for (const auto& f : frames) ids.push_back(f.frame_id);
  return ids;
}

bool is_frame_id(const std::string& s) {
  static const std::regex pattern("^[0-9]{5}$");
  return std::regex_match(s, pattern);
}

std::string format_frame_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05d", index);
  return buf;
}

Eigen::Matrix4d read_matrix4(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open matrix file: " + path.string());
  std::vector<double> values;
  std::string token;
  while (in >> token) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(token, &used));
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      // stod rejects "-inf"/"nan" spellings inconsistently; treat them as non-finite values.
      if (token == "inf" || token == "-inf" || token == "nan" || token == "-nan") {
        values.push_back(std::numeric_limits<double>::quiet_NaN());
      } else {
        throw IngestionError("malformed number '" + token + "' in " + path.string());
      }
    }
  }
  if (values.size() != 16)
    throw IngestionError("expected 16 values in " + path.string() + ", got " +
                         std::to_string(values.size()));
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = values[static_cast<std::size_t>(4 * r + c)];
  return m;
}

void write_matrix4(const fs::path& path, const Eigen::Matrix4d& m) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write matrix file: " + path.string());
  char buf[64];
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
      out << buf << (c == 3 ? '\n' : ' ');
    }
  }
}

CameraIntrinsics intrinsics_from_matrix(const Eigen::Matrix4d& k, int width, int height) {
  CameraIntrinsics in;
  in.fx = k(0, 0);
  in.fy = k(1, 1);
  in.cx = k(0, 2);
  in.cy = k(1, 2);
  in.width = width;
  in.height = height;
  return in;
}

namespace {

struct FrameFiles {
  std::string id;
  fs::path color;
};

std::vector<FrameFiles> list_color_frames(const fs::path& color_dir) {
  if (!fs::is_directory(color_dir))
    throw IngestionError("missing color directory: " + color_dir.string());
  std::vector<FrameFiles> out;
  for (const auto& entry : fs::directory_iterator(color_dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (ext != ".jpg" && ext != ".png" && ext != ".jpeg") continue;
    const std::string stem = entry.path().stem().string();
    if (!is_frame_id(stem))
      throw IngestionError("frame name is not a 5-digit id: " + entry.path().string());
    out.push_back({stem, entry.path()});
  }
  std::sort(out.begin(), out.end(),
            [](const FrameFiles& a, const FrameFiles& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].id == out[i - 1].id)
      throw IngestionError("duplicate frame id " + out[i].id + " in " + color_dir.string());
  }
  return out;
}

}  // namespace

Scene load_scene(const fs::path& root, const std::string& scene_id, const LoadOptions& options) {
  if (options.stride < 1) throw std::invalid_argument("stride must be >= 1");
  const fs::path dir = root / scene_id;
  if (!fs::is_directory(dir)) throw IngestionError("missing scene directory: " + dir.string());
  const fs::path depth_dir = dir / "depth";
  const fs::path pose_dir = dir / "pose";
  if (!fs::is_directory(depth_dir))
    throw IngestionError("missing depth directory: " + depth_dir.string());
  if (!fs::is_directory(pose_dir))
    throw IngestionError("missing pose directory: " + pose_dir.string());

  const auto listing = list_color_frames(dir / "color");
  if (listing.empty()) throw IngestionError("scene has no frames: " + dir.string());

  const Eigen::Matrix4d k_color = read_matrix4(dir / "intrinsics_color.txt");
  const Eigen::Matrix4d k_depth = read_matrix4(dir / "intrinsics_depth.txt");

  Scene scene;
  scene.scene_id = scene_id;
  for (std::size_t i = 0; i < listing.size(); i += static_cast<std::size_t>(options.stride)) {
    const auto& files = listing[i];
    Frame frame;
    frame.frame_id = files.id;
    frame.color = read_rgb(files.color);
    frame.depth = read_depth(depth_dir / (files.id + ".png"));
    const fs::path pose_path = pose_dir / (files.id + ".txt");
    try {
      frame.pose = Pose::from_matrix(read_matrix4(pose_path));
    } catch (const ValidationError& e) {
      throw ValidationError(std::string(e.what()) + ": " + pose_path.string());
    }
    frame.color_intrinsics = intrinsics_from_matrix(k_color, frame.color.cols, frame.color.rows);
    frame.depth_intrinsics = intrinsics_from_matrix(k_depth, frame.depth.cols, frame.depth.rows);
    frame.color_intrinsics.validate();
    frame.depth_intrinsics.validate();
    scene.frames.push_back(std::move(frame));
  }
  return scene;
}

void save_scene(const fs::path& root, const Scene& scene) {
  if (scene.frames.empty()) throw std::invalid_argument("cannot save an empty scene");
  const fs::path dir = root / scene.scene_id;
  fs::create_directories(dir / "color");
  fs::create_directories(dir / "depth");
  fs::create_directories(dir / "pose");
  auto k4 = [](const CameraIntrinsics& in) {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m(0, 0) = in.fx;
    m(1, 1) = in.fy;
    m(0, 2) = in.cx;
    m(1, 2) = in.cy;
    return m;
  };
  write_matrix4(dir / "intrinsics_color.txt", k4(scene.frames.front().color_intrinsics));
  write_matrix4(dir / "intrinsics_depth.txt", k4(scene.frames.front().depth_intrinsics));
  for (const auto& f : scene.frames) {
    write_rgb(dir / "color" / (f.frame_id + ".png"), f.color);
    write_depth(dir / "depth" / (f.frame_id + ".png"), f.depth);
    write_matrix4(dir / "pose" / (f.frame_id + ".txt"), f.pose.matrix());
  }
}

Scene sample_frames(const Scene& scene, int stride) {
  if (stride < 1) throw std::invalid_argument("stride must be >= 1");
  Scene out;
  out.scene_id = scene.scene_id;
  for (std::size_t i = 0; i < scene.frames.size(); i += static_cast<std::size_t>(stride))
    out.frames.push_back(scene.frames[i]);
  return out;
}

namespace {

Aabb3 box_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 6) throw ValidationError(where + ": box must have 6 numbers");
  std::array<double, 6> a{};
  for (std::size_t i = 0; i < 6; ++i) a[i] = j.at(i).get<double>();
  Aabb3 box = Aabb3::from_array(a);
  if (!box.valid()) throw ValidationError(where + ": box min exceeds max");
  return box;
}

}  // namespace

std::vector<Query> load_queries(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open queries file: " + path.string());
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::vector<Query> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw IngestionError(where + ": " + e.what());
    }
    Query q;
    try {
      q.query_id = j.at("query_id").get<std::string>();
      q.scene_id = j.at("scene_id").get<std::string>();
      q.text = j.at("text").get<std::string>();
    } catch (const json::exception& e) {
      throw IngestionError(where + ": " + e.what());
    }
    if (q.text.empty()) throw ValidationError(where + ": empty query text");
    if (j.contains("gt_box") && !j["gt_box"].is_null()) q.gt_box = box_from_json(j["gt_box"], where);
    if (j.contains("splits")) {
      q.splits = j["splits"].get<std::vector<std::string>>();
    } else if (j.contains("split")) {
      q.splits.push_back(j["split"].get<std::string>());
    }
    if (j.contains("gt_masks")) {
      for (const auto& [fid, p] : j["gt_masks"].items()) {
        fs::path mp = p.get<std::string>();
        q.gt_mask_paths[fid] = (mp.is_absolute() ? mp : base / mp).string();
      }
    }
    if (j.contains("gt_boxes")) {
      for (const auto& b : j["gt_boxes"]) q.gt_boxes.push_back(box_from_json(b, where));
    }
    if (j.contains("gt_index")) q.gt_index = j["gt_index"].get<int>();
    out.push_back(std::move(q));
  }
  return out;
}

void save_queries(const fs::path& path, const std::vector<Query>& queries) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write queries file: " + path.string());
  for (const auto& q : queries) {
    json j = {{"query_id", q.query_id}, {"scene_id", q.scene_id}, {"text", q.text}};
    if (q.gt_box) j["gt_box"] = q.gt_box->to_array();
    if (!q.splits.empty()) j["splits"] = q.splits;
    if (!q.gt_mask_paths.empty()) j["gt_masks"] = q.gt_mask_paths;
    if (!q.gt_boxes.empty()) {
      j["gt_boxes"] = json::array();
      for (const auto& b : q.gt_boxes) j["gt_boxes"].push_back(b.to_array());
    }
    if (q.gt_index) j["gt_index"] = *q.gt_index;
    out << j.dump() << '\n';
  }
}

}  // namespace grounder
