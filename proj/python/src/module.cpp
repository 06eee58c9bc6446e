#include "grounder/cli.hpp"
#include "grounder/errors.hpp"
#include "grounder/evaluation.hpp"
#include "grounder/projection.hpp"
#include "grounder/retrieval_bench.hpp"
#include "grounder/stitcher.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace grounder;

namespace {

using Points = py::array_t<double, py::array::c_style | py::array::forcecast>;

PointCloud3 to_cloud(const Points& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw std::invalid_argument("expected an (N, 3) array");
  PointCloud3 c;
  c.points.reserve(static_cast<std::size_t>(a.shape(0)));
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < r.shape(0); ++i) c.points.emplace_back(r(i, 0), r(i, 1), r(i, 2));
  return c;
}

py::array_t<double> from_cloud(const PointCloud3& c) {
  py::array_t<double> out({static_cast<py::ssize_t>(c.size()), py::ssize_t{3}});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < c.size(); ++i)
    for (int k = 0; k < 3; ++k) w(static_cast<py::ssize_t>(i), k) = c.points[i][k];
  return out;
}

Aabb3 to_box(const std::vector<double>& b) {
  if (b.size() != 6) throw std::invalid_argument("a box is [xmin, ymin, zmin, xmax, ymax, zmax]");
  return {Vec3(b[0], b[1], b[2]), Vec3(b[3], b[4], b[5])};
}

std::vector<double> from_box(const Aabb3& b) {
  return {b.min.x(), b.min.y(), b.min.z(), b.max.x(), b.max.y(), b.max.z()};
}

/// Wraps a 2D numpy raster without copying; the array must outlive the Mat.
template <class T>
cv::Mat wrap_raster(const py::array_t<T, py::array::c_style | py::array::forcecast>& a, int type) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2D raster");
  return cv::Mat(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), type, const_cast<T*>(a.data()));
}

struct PyView {
  py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast> depth;
  py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> mask;
  Frame frame;
};

PyView make_view(const py::dict& d, int index) {
  PyView v;
  v.depth = d["depth"].cast<decltype(v.depth)>();
  v.mask = d["mask"].cast<decltype(v.mask)>();
  v.frame.frame_id = d.contains("frame_id") ? d["frame_id"].cast<std::string>() : format_frame_id(index);
  v.frame.depth = wrap_raster(v.depth, CV_16UC1);
  const auto k = d["intrinsics"].cast<std::vector<double>>();
  if (k.size() != 4) throw std::invalid_argument("intrinsics are [fx, fy, cx, cy]");
  CameraIntrinsics ci{k[0], k[1], k[2], k[3], v.frame.depth.cols, v.frame.depth.rows};
  ci.validate();
  v.frame.depth_intrinsics = v.frame.color_intrinsics = ci;
  v.frame.pose = Pose::from_matrix(d["pose"].cast<Eigen::Matrix4d>());
  return v;
}

py::dict project(const py::list& views, const ProjectionConfig& config) {
  if (views.empty()) throw std::invalid_argument("project: need at least the anchor view");
  std::vector<PyView> held;
  held.reserve(views.size());
  for (std::size_t i = 0; i < views.size(); ++i) held.push_back(make_view(views[i].cast<py::dict>(), static_cast<int>(i)));
  auto masked = [](const PyView& v) {
    return MaskedView{&v.frame, {v.frame.frame_id, wrap_raster(v.mask, CV_8UC1)}};
  };
  std::vector<MaskedView> matched;
  for (std::size_t i = 1; i < held.size(); ++i) matched.push_back(masked(held[i]));
  const ProjectionResult r = ensemble_project(masked(held[0]), matched, config);

  py::list stats;
  for (const auto& v : r.stats.views) {
    py::dict s;
    s["frame_id"] = v.frame_id;
    s["anchor"] = v.anchor;
    s["accepted"] = v.accepted;
    s["mask_pixels"] = v.mask_pixels;
    s["filtered_pixels"] = v.filtered_pixels;
    s["points"] = v.points;
    s["chamfer"] = v.chamfer ? py::cast(*v.chamfer) : py::none();
    stats.append(s);
  }
  py::dict out;
  out["box"] = from_box(r.box);
  out["cloud"] = from_cloud(r.cloud);
  out["views"] = stats;
  return out;
}

py::dict plan(std::size_t n, int soft_limit) {
  const StitchPlan p = plan_layouts(n, soft_limit);
  py::list entries;
  for (const auto& e : p.entries) entries.append(py::make_tuple(e.layout.rows, e.layout.cols, e.frames));
  py::dict out;
  out["entries"] = entries;
  out["soft_limit_exceeded"] = p.soft_limit_exceeded;
  return out;
}

std::string report(const std::vector<double>& ious, const std::vector<std::vector<std::string>>& splits) {
  if (!splits.empty() && splits.size() != ious.size()) throw std::invalid_argument("splits must match ious in length");
  std::vector<EvalRecord> records;
  for (std::size_t i = 0; i < ious.size(); ++i)
    records.push_back(EvalRecord::make("q" + std::to_string(i), ious[i], splits.empty() ? std::vector<std::string>{} : splits[i]));
  return accuracy_report(records).to_json().dump();
}

py::tuple cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_grounder, m) {
  m.doc() = "Native core of the grounder package.";
  m.def("version", &version_string);

  py::class_<ProjectionConfig>(m, "ProjectionConfig")
      .def(py::init<>())
      .def_readwrite("erosion_kernel", &ProjectionConfig::erosion_kernel)
      .def_readwrite("top_components", &ProjectionConfig::top_components)
      .def_readwrite("chamfer_threshold", &ProjectionConfig::chamfer_threshold)
      .def_readwrite("outlier_nb", &ProjectionConfig::outlier_nb)
      .def_readwrite("outlier_std_ratio", &ProjectionConfig::outlier_std_ratio)
      .def_readwrite("ensemble_n", &ProjectionConfig::ensemble_n)
      .def("validate", &ProjectionConfig::validate);

  m.def("plan_layouts", &plan, py::arg("n"), py::arg("soft_limit") = 6,
        "Composite plan as {'entries': [(rows, cols, frames)], 'soft_limit_exceeded': bool}.");
  m.def("vlm_target_size", [](int w, int h) {
    const cv::Size s = vlm_target_size({w, h});
    return py::make_tuple(s.width, s.height);
  });

  m.def("iou3d", [](const std::vector<double>& a, const std::vector<double>& b) { return iou3d(to_box(a), to_box(b)); });
  m.def("nr3d_match", [](const std::vector<double>& pred, const std::vector<std::vector<double>>& gt) {
    std::vector<Aabb3> boxes;
    for (const auto& b : gt) boxes.push_back(to_box(b));
    return nr3d_match(to_box(pred), boxes);
  });
  m.def("accuracy_report_json", &report, py::arg("ious"), py::arg("splits") = std::vector<std::vector<std::string>>{});

  m.def("chamfer_l2", [](const Points& a, const Points& b) { return chamfer_l2(to_cloud(a), to_cloud(b)); });
  m.def("statistical_inlier_indices", [](const Points& p, int nb, double std_ratio) {
    return statistical_inlier_indices(to_cloud(p), nb, std_ratio);
  }, py::arg("points"), py::arg("nb") = 5, py::arg("std_ratio") = 1.0);
  m.def("remove_statistical_outliers", [](const Points& p, int nb, double std_ratio) {
    return from_cloud(remove_statistical_outliers(to_cloud(p), nb, std_ratio));
  }, py::arg("points"), py::arg("nb") = 5, py::arg("std_ratio") = 1.0);
  m.def("project", &project, py::arg("views"), py::arg("config") = ProjectionConfig{},
        "Ensemble projection. views[0] is the anchor; each view is a dict with depth (uint16 mm), "
        "mask (uint8), intrinsics [fx, fy, cx, cy] and a 4x4 world-from-camera pose.");

  m.def("score_retrieval", [](const std::vector<std::pair<std::string, std::string>>& gt, const std::string& reply) {
    return score_retrieval(gt, parse_retrieval_answer(reply));
  });

  m.def("run_cli", &cli, py::arg("args"), "Runs the command-line tool in-process; returns (code, stdout, stderr).");

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ProjectionError>(m, "ProjectionError", PyExc_RuntimeError);
}
