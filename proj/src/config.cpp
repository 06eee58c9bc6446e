#include "grounder/config.hpp"

#include "grounder/errors.hpp"

#include <toml.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

using nlohmann::json;

namespace grounder {

namespace {

json toml_to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    json out = json::object();
    for (const auto& [k, v] : *t) out[std::string(k.str())] = toml_to_json(v);
    return out;
  }
  if (const auto* a = node.as_array()) {
    json out = json::array();
    for (const auto& v : *a) out.push_back(toml_to_json(v));
    return out;
  }
  if (const auto* v = node.as_integer()) return v->get();
  if (const auto* v = node.as_floating_point()) return v->get();
  if (const auto* v = node.as_boolean()) return v->get();
  if (const auto* v = node.as_string()) return v->get();
  throw ValidationError("unsupported value type in config (dates and times are not accepted)");
}

/// Reads `key` from `obj` into `out` when present, converting type errors into ValidationError.
template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  if constexpr (std::is_same_v<T, std::string>) {
    // Command-line values such as script=001 arrive as numbers.
    if (obj.at(key).is_number()) {
      out = obj.at(key).dump();
      return;
    }
  }
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config key " + where + key + " has the wrong type: " + obj.at(key).dump());
  }
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
  if (!obj.is_object()) throw ValidationError("config section " + where + " must be a table");
  for (const auto& [k, v] : obj.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* n) { return k == n; }))
      throw ValidationError("unknown config key: " + where + k);
  }
}

Layout layout_from_json(const json& j) {
  if (j.is_string()) return parse_layout(j.get<std::string>());
  if (j.is_array() && j.size() == 2 && j[0].is_number_integer() && j[1].is_number_integer())
    return {j[0].get<int>(), j[1].get<int>()};
  throw ValidationError("layout must be \"RxC\" or [rows, cols]: " + j.dump());
}

}  // namespace

Layout parse_layout(const std::string& text) {
  const auto x = text.find_first_of("xX");
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    std::size_t used_r = 0, used_c = 0;
    const std::string rs = text.substr(0, x), cs = text.substr(x + 1);
    const int r = std::stoi(rs, &used_r), c = std::stoi(cs, &used_c);
    if (used_r != rs.size() || used_c != cs.size() || r < 1 || c < 1) throw std::invalid_argument(text);
    return {r, c};
  } catch (const std::logic_error&) {
    throw ValidationError("bad layout \"" + text + "\" (expected e.g. 4x1)");
  }
}

std::string format_layout(const Layout& layout) {
  return std::to_string(layout.rows) + "x" + std::to_string(layout.cols);
}

void PipelineConfig::validate() const {
  if (M < 0) throw ValidationError("M must be >= 0");
  if (L < 1) throw ValidationError("L must be >= 1");
  if (N < 1) throw ValidationError("N must be >= 1");
  if (frame_stride < 1) throw ValidationError("frame_stride must be >= 1");
  if (!(detection_threshold >= 0 && detection_threshold <= 1))
    throw ValidationError("detection_threshold must lie in [0, 1]");
  if (jobs < 1) throw ValidationError("jobs must be >= 1");
  projection.validate();
  if (backend.kind != "scripted" && backend.kind != "http")
    throw ValidationError("backend.kind must be \"scripted\" or \"http\", got \"" + backend.kind + "\"");
  if (backend.max_in_flight < 1) throw ValidationError("backend.max_in_flight must be >= 1");
  if (perception.kind != "fixture" && perception.kind != "http")
    throw ValidationError("perception.kind must be \"fixture\" or \"http\", got \"" + perception.kind + "\"");
  if (bench.count < 1 || bench.count > 1000) throw ValidationError("bench.count must lie in [1, 1000]");
  if (bench.images_per_request < 1) throw ValidationError("bench.images_per_request must be >= 1");
  if (!(bench.block_fraction > 0 && bench.block_fraction <= 0.5))
    throw ValidationError("bench.block_fraction must lie in (0, 0.5]");
  if (bench.image_width < 16 || bench.image_height < 16) throw ValidationError("bench image size too small");
  if (bench.max_in_flight < 1) throw ValidationError("bench.max_in_flight must be >= 1");
  if (bench.layouts.empty()) throw ValidationError("bench.layouts must not be empty");
}

json to_json(const PipelineConfig& c) {
  json layouts = json::array();
  for (const auto& l : c.bench.layouts) layouts.push_back(format_layout(l));
  const auto& h = c.backend.http;
  return {
      {"M", c.M},
      {"L", c.L},
      {"N", c.N},
      {"frame_stride", c.frame_stride},
      {"detection_threshold", c.detection_threshold},
      {"jobs", c.jobs},
      {"seed", c.seed},
      {"projection",
       {{"erosion_kernel", c.projection.erosion_kernel},
        {"top_components", c.projection.top_components},
        {"chamfer_threshold", c.projection.chamfer_threshold},
        {"outlier_nb", c.projection.outlier_nb},
        {"outlier_std_ratio", c.projection.outlier_std_ratio}}},
      {"stitch",
       {{"cell_width", c.style.cell.width},
        {"cell_height", c.style.cell.height},
        {"annotate_ids", c.style.annotate_ids},
        {"font_px", c.style.font_px}}},
      {"backend",
       {{"kind", c.backend.kind},
        {"script", c.backend.script},
        {"base_url", h.base_url},
        {"model", h.model},
        {"api_key_env", h.api_key_env},
        {"temperature", h.temperature},
        {"top_p", h.top_p},
        {"max_tokens", h.max_tokens},
        {"timeout_s", h.timeout_s},
        {"image_format", h.image_format},
        {"max_images", h.max_images},
        {"max_in_flight", c.backend.max_in_flight}}},
      {"perception",
       {{"kind", c.perception.kind},
        {"detections", c.perception.detections},
        {"target_detections", c.perception.target_detections},
        {"masks", c.perception.masks},
        {"matches", c.perception.matches},
        {"detector_url", c.perception.detector_url},
        {"detector_path", c.perception.detector_path},
        {"segmenter_url", c.perception.segmenter_url},
        {"segmenter_path", c.perception.segmenter_path},
        {"api_key_env", c.perception.api_key_env},
        {"timeout_s", c.perception.timeout_s}}},
      {"bench",
       {{"count", c.bench.count},
        {"layouts", layouts},
        {"images_per_request", c.bench.images_per_request},
        {"block_fraction", c.bench.block_fraction},
        {"image_width", c.bench.image_width},
        {"image_height", c.bench.image_height},
        {"source", c.bench.source},
        {"max_in_flight", c.bench.max_in_flight}}},
  };
}

void apply_config_layer(PipelineConfig& c, const json& layer) {
  if (layer.is_null()) return;
  reject_unknown(layer,
                 {"M", "L", "N", "frame_stride", "detection_threshold", "jobs", "seed", "projection", "stitch",
                  "backend", "perception", "bench"},
                 "");
  read(layer, "M", c.M, "");
  read(layer, "L", c.L, "");
  read(layer, "N", c.N, "");
  read(layer, "frame_stride", c.frame_stride, "");
  read(layer, "detection_threshold", c.detection_threshold, "");
  read(layer, "jobs", c.jobs, "");
  read(layer, "seed", c.seed, "");
  c.projection.ensemble_n = c.N;

  if (layer.contains("projection")) {
    const json& p = layer["projection"];
    reject_unknown(p, {"erosion_kernel", "top_components", "chamfer_threshold", "outlier_nb", "outlier_std_ratio"},
                   "projection.");
    read(p, "erosion_kernel", c.projection.erosion_kernel, "projection.");
    read(p, "top_components", c.projection.top_components, "projection.");
    read(p, "chamfer_threshold", c.projection.chamfer_threshold, "projection.");
    read(p, "outlier_nb", c.projection.outlier_nb, "projection.");
    read(p, "outlier_std_ratio", c.projection.outlier_std_ratio, "projection.");
  }
  if (layer.contains("stitch")) {
    const json& s = layer["stitch"];
    reject_unknown(s, {"cell_width", "cell_height", "annotate_ids", "font_px"}, "stitch.");
    read(s, "cell_width", c.style.cell.width, "stitch.");
    read(s, "cell_height", c.style.cell.height, "stitch.");
    read(s, "annotate_ids", c.style.annotate_ids, "stitch.");
    read(s, "font_px", c.style.font_px, "stitch.");
  }
  if (layer.contains("backend")) {
    const json& b = layer["backend"];
    if (b.contains("api_key")) throw ValidationError("backend.api_key is not accepted; set backend.api_key_env");
    reject_unknown(b,
                   {"kind", "script", "base_url", "model", "api_key_env", "temperature", "top_p", "max_tokens",
                    "timeout_s", "image_format", "max_images", "max_in_flight"},
                   "backend.");
    auto& h = c.backend.http;
    read(b, "kind", c.backend.kind, "backend.");
    read(b, "script", c.backend.script, "backend.");
    read(b, "base_url", h.base_url, "backend.");
    read(b, "model", h.model, "backend.");
    read(b, "api_key_env", h.api_key_env, "backend.");
    read(b, "temperature", h.temperature, "backend.");
    read(b, "top_p", h.top_p, "backend.");
    read(b, "max_tokens", h.max_tokens, "backend.");
    read(b, "timeout_s", h.timeout_s, "backend.");
    read(b, "image_format", h.image_format, "backend.");
    read(b, "max_images", h.max_images, "backend.");
    read(b, "max_in_flight", c.backend.max_in_flight, "backend.");
  }
  if (layer.contains("perception")) {
    const json& p = layer["perception"];
    reject_unknown(p,
                   {"kind", "detections", "target_detections", "masks", "matches", "detector_url", "detector_path",
                    "segmenter_url", "segmenter_path", "api_key_env", "timeout_s"},
                   "perception.");
    auto& q = c.perception;
    read(p, "kind", q.kind, "perception.");
    read(p, "detections", q.detections, "perception.");
    read(p, "target_detections", q.target_detections, "perception.");
    read(p, "masks", q.masks, "perception.");
    read(p, "matches", q.matches, "perception.");
    read(p, "detector_url", q.detector_url, "perception.");
    read(p, "detector_path", q.detector_path, "perception.");
    read(p, "segmenter_url", q.segmenter_url, "perception.");
    read(p, "segmenter_path", q.segmenter_path, "perception.");
    read(p, "api_key_env", q.api_key_env, "perception.");
    read(p, "timeout_s", q.timeout_s, "perception.");
  }
  if (layer.contains("bench")) {
    const json& b = layer["bench"];
    reject_unknown(b,
                   {"count", "layouts", "images_per_request", "block_fraction", "image_width", "image_height",
                    "source", "max_in_flight"},
                   "bench.");
    read(b, "count", c.bench.count, "bench.");
    read(b, "images_per_request", c.bench.images_per_request, "bench.");
    read(b, "block_fraction", c.bench.block_fraction, "bench.");
    read(b, "image_width", c.bench.image_width, "bench.");
    read(b, "image_height", c.bench.image_height, "bench.");
    read(b, "source", c.bench.source, "bench.");
    read(b, "max_in_flight", c.bench.max_in_flight, "bench.");
    if (b.contains("layouts")) {
      if (!b["layouts"].is_array()) throw ValidationError("bench.layouts must be a list");
      c.bench.layouts.clear();
      for (const auto& l : b["layouts"]) c.bench.layouts.push_back(layout_from_json(l));
    }
  }
}

json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open config file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (ext == ".json") {
    try {
      return json::parse(buf.str());
    } catch (const json::parse_error& e) {
      throw IngestionError("malformed config " + path.string() + ": " + e.what());
    }
  }
  try {
    return toml_to_json(toml::parse(buf.str(), path.string()));
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "malformed config " << path.string() << ": " << e.description() << " at line "
        << e.source().begin.line;
    throw IngestionError(msg.str());
  }
}

PipelineConfig resolve_config(const std::filesystem::path& file, const json& cli_layer) {
  PipelineConfig config;
  if (!file.empty()) apply_config_layer(config, read_config_file(file));
  apply_config_layer(config, cli_layer);
  config.validate();
  return config;
}

json override_from_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("expected key=value, got \"" + assignment + "\"");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json root = json::object();
  json* cur = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ValidationError("bad config key \"" + key + "\"");
    if (dot == std::string::npos) {
      (*cur)[part] = value;
      break;
    }
    cur = &(*cur)[part];
    start = dot + 1;
  }
  return root;
}

}  // namespace grounder
