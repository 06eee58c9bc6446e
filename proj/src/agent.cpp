#include "grounder/agent.hpp"

#include "grounder/errors.hpp"
#include "grounder/json_extract.hpp"
#include "grounder/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <functional>

using nlohmann::json;

namespace grounder {

std::string to_string(FeedbackKind kind) {
  switch (kind) {
    case FeedbackKind::ImageInvalid: return "image_invalid";
    case FeedbackKind::ObjectNotExisting: return "object_not_existing";
    case FeedbackKind::ObjectIdInvalid: return "object_id_invalid";
  }
  return "unknown";
}

std::string normalize_image_id(const json& value) {
  std::string s;
  if (value.is_number_integer()) {
    s = std::to_string(value.get<long long>());
  } else if (value.is_string()) {
    s = value.get<std::string>();
  } else {
    return value.dump();
  }
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  if (b == std::string::npos) return s;
  const std::string t = s.substr(b, e - b + 1);
  const bool digits = !t.empty() && t.size() <= 5 &&
                      std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c); });
  return digits ? std::string(5 - t.size(), '0') + t : s;
}

std::string format_conditions(const AnalyzedQuery& analyzed) {
  json list = json::array();
  for (const auto& a : analyzed.attributes) list.push_back(a);
  for (const auto& c : analyzed.conditions) list.push_back(c);
  return list.dump();
}

namespace {

using ShapeCheck = std::function<bool(const json&)>;

/// Sends the conversation, appends the reply, and re-asks once if no JSON object of the expected
/// shape comes back.
json request_json(std::vector<ChatMessage>& conversation, VlmBackend& backend, const ShapeCheck& shape_ok,
                  int* structural_reasks) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    if (attempt == 1) {
      conversation.push_back({"user", std::string(prompts::kStructuralReask), {}});
      if (structural_reasks) ++*structural_reasks;
    }
    const std::string reply = chat_with_retry(backend, conversation);
    conversation.push_back({"assistant", reply, {}});
    if (auto parsed = extract_json_object(reply); parsed && shape_ok(*parsed)) return *parsed;
  }
  throw ResponseFormatError("model reply is not a JSON object of the expected form");
}

std::vector<std::string> string_list(const json& j, const char* key) {
  std::vector<std::string> out;
  if (!j.contains(key)) return out;
  const json& v = j[key];
  if (v.is_array()) {
    for (const auto& e : v) out.push_back(e.is_string() ? e.get<std::string>() : e.dump());
  } else if (v.is_string()) {
    out.push_back(v.get<std::string>());
  }
  return out;
}

std::optional<long> as_integer(const json& v) {
  if (v.is_number_integer()) return v.get<long>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d == static_cast<double>(static_cast<long>(d))) return static_cast<long>(d);
    return std::nullopt;
  }
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s.empty() || s.size() > 9) return std::nullopt;
    std::size_t i = s[0] == '-' ? 1 : 0;
    if (i == s.size()) return std::nullopt;
    for (std::size_t k = i; k < s.size(); ++k)
      if (!std::isdigit(static_cast<unsigned char>(s[k]))) return std::nullopt;
    return std::stol(s);
  }
  return std::nullopt;
}

ImageSelection parse_image_selection(const json& j) {
  ImageSelection sel;
  sel.reasoning = j.value("reasoning", "");
  const json& id = j.at("target_image_id");
  sel.raw_target_image_id = id.is_string() ? id.get<std::string>() : id.dump();
  sel.target_image_id = normalize_image_id(id);
  for (const auto& r : string_list(j, "reference_image_ids")) sel.reference_image_ids.push_back(normalize_image_id(r));
  return sel;
}

ChatImage composite_image(const StitchedImage& s, std::size_t index) {
  ChatImage img;
  img.rgb = s.raster;
  img.label = "stitched_" + std::to_string(index);
  for (const auto& cell : s.cell_map) img.cell_ids.push_back(cell.second);
  return img;
}

}  // namespace

AnalyzedQuery analyze_query(const std::string& text, VlmBackend& backend, std::vector<ChatMessage>* messages) {
  if (text.empty()) throw std::invalid_argument("analyze_query: empty query");
  std::vector<ChatMessage> conversation{{"user", prompts::query_analysis(text), {}}};
  const json j = request_json(
      conversation, backend, [](const json& v) { return v.contains("target_class") && v["target_class"].is_string(); },
      nullptr);
  if (messages) *messages = conversation;
  AnalyzedQuery out;
  out.target_class = j["target_class"].get<std::string>();
  if (out.target_class.empty()) out.target_class = "unknown";
  out.attributes = string_list(j, "attributes");
  out.conditions = string_list(j, "conditions");
  return out;
}

std::vector<ChatMessage> grounding_opening(const AnalyzedQuery& analyzed, const std::string& query,
                                           const std::vector<StitchedImage>& stitched, int num_views) {
  ChatMessage user{"user", prompts::input(query, analyzed.target_class, format_conditions(analyzed), num_views), {}};
  for (std::size_t i = 0; i < stitched.size(); ++i) user.images.push_back(composite_image(stitched[i], i));
  return {{"system", std::string(prompts::kGroundingSystem), {}}, std::move(user)};
}

ImageSelection select_target_image(std::vector<ChatMessage>& conversation, VlmBackend& backend,
                                   int* structural_reasks) {
  const json j = request_json(
      conversation, backend,
      [](const json& v) {
        return v.contains("target_image_id") && (v["target_image_id"].is_string() || v["target_image_id"].is_number());
      },
      structural_reasks);
  return parse_image_selection(j);
}

ImageSelection select_target_image(const AnalyzedQuery& analyzed, const std::string& query,
                                   const std::vector<StitchedImage>& stitched, VlmBackend& backend) {
  if (stitched.empty()) throw std::invalid_argument("select_target_image: no stitched images");
  std::size_t views = 0;
  for (const auto& s : stitched) views += s.cell_map.size();
  auto conversation = grounding_opening(analyzed, query, stitched, static_cast<int>(views));
  return select_target_image(conversation, backend);
}

ObjectSelection select_object_id(std::vector<ChatMessage>& conversation, const std::string& prompt_text,
                                 const cv::Mat& annotated, VlmBackend& backend, int* structural_reasks) {
  ChatMessage ask{"user", prompt_text, {}};
  if (!annotated.empty()) ask.images.push_back({annotated, "candidates", {}});
  conversation.push_back(std::move(ask));
  const json j = request_json(
      conversation, backend,
      [](const json& v) { return v.contains("object_id") && as_integer(v["object_id"]).has_value(); },
      structural_reasks);
  ObjectSelection sel;
  sel.reasoning = j.value("reasoning", "");
  sel.raw_object_id = j["object_id"].is_string() ? j["object_id"].get<std::string>() : j["object_id"].dump();
  sel.object_id = *as_integer(j["object_id"]);
  return sel;
}

ObjectSelection select_object_id(const cv::Mat& annotated, int num_candidates, VlmBackend& backend) {
  if (num_candidates < 2) throw std::invalid_argument("select_object_id needs at least two candidates");
  std::vector<ChatMessage> conversation;
  return select_object_id(conversation, prompts::bbox_select(num_candidates), annotated, backend);
}

std::vector<StitchedImage> render_composites(const Scene& scene, const std::vector<std::string>& frame_ids,
                                             const StitchPlan& plan, const StitchStyle& style) {
  std::vector<StitchedImage> out;
  for (const auto& entry : plan.entries) {
    std::vector<std::pair<std::string, cv::Mat>> cells;
    for (std::size_t idx : entry.frames) {
      const std::string& id = frame_ids.at(idx);
      const Frame* f = scene.find(id);
      if (f == nullptr) throw std::invalid_argument("render_composites: unknown frame " + id);
      cells.emplace_back(id, f->color);
    }
    StitchedImage s = stitch(cells, entry.layout, style);
    s.raster = resize_for_vlm(s.raster);
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

class GroundingLoop {
 public:
  GroundingLoop(const Scene& scene, const Query& query, const AgentConfig& config, VlmBackend& backend,
                const PerceptionBackends& perception, AgentTranscript& t)
      : scene_(scene), query_(query), config_(config), backend_(backend), perception_(perception), t_(t) {}

  void run() {
    t_.analyzed = analyze_query(query_.text, backend_, &t_.analysis_messages);
    t_.preselected = preselect_views(scene_, t_.analyzed.target_class, *perception_.preselector,
                                     config_.detection_threshold, &t_.warnings);
    if (t_.preselected.empty()) {
      t_.failure_reason = "no frame contains the target class";
      return;
    }
    t_.plan = plan_layouts(t_.preselected.size(), config_.soft_limit);
    const auto stitched = render_composites(scene_, t_.preselected, t_.plan, config_.style);
    t_.messages = grounding_opening(t_.analyzed, query_.text, stitched, static_cast<int>(t_.preselected.size()));

    while (true) {
      const ImageSelection sel = select_target_image(t_.messages, backend_, &t_.structural_reasks);
      t_.image_selections.push_back(sel);
      const bool shown =
          std::find(t_.preselected.begin(), t_.preselected.end(), sel.target_image_id) != t_.preselected.end();
      if (!shown) {
        if (!retry(FeedbackKind::ImageInvalid, sel.raw_target_image_id,
                   prompts::image_id_invalid(sel.raw_target_image_id)))
          return;
        continue;
      }
      const Frame& frame = *scene_.find(sel.target_image_id);
      auto candidates = filter_detections(perception_.target_detector->detect(frame, t_.analyzed.target_class),
                                          t_.analyzed.target_class, config_.detection_threshold);
      if (candidates.empty()) {
        if (!retry(FeedbackKind::ObjectNotExisting, sel.raw_target_image_id,
                   prompts::detection_not_exist(sel.raw_target_image_id, t_.analyzed.target_class)))
          return;
        continue;
      }
      if (candidates.size() == 1) {
        t_.outcome = GroundingTarget{frame.frame_id, 0, candidates.front(), candidates};
        return;
      }
      select_object(frame, std::move(candidates));
      return;
    }
  }

 private:
  /// Appends feedback and returns true while retries remain; otherwise records the failure.
  bool retry(FeedbackKind kind, const std::string& id, std::string message) {
    if (t_.retries_used >= config_.max_retries) {
      t_.failure_reason = "no valid selection within " + std::to_string(config_.max_retries) + " retries (last: " +
                          to_string(kind) + " " + id + ")";
      return false;
    }
    ++t_.retries_used;
    t_.feedback.push_back({kind, id, t_.messages.size()});
    t_.messages.push_back({"user", std::move(message), {}});
    return true;
  }

  void select_object(const Frame& frame, std::vector<Detection2D> candidates) {
    const int k = static_cast<int>(candidates.size());
    const AnnotatedCandidates annotated = annotate_candidates(frame.color, candidates, config_.style.font_px);
    const cv::Mat image = resize_for_vlm(annotated.image);
    std::string prompt = prompts::bbox_select(k);
    cv::Mat attach = image;
    while (true) {
      ObjectSelection sel = select_object_id(t_.messages, prompt, attach, backend_, &t_.structural_reasks);
      if (sel.object_id >= 0 && sel.object_id < k) {
        const auto id = static_cast<std::size_t>(sel.object_id);
        t_.outcome = GroundingTarget{frame.frame_id, static_cast<int>(id), candidates[annotated.id_map[id]], candidates};
        return;
      }
      if (t_.retries_used >= config_.max_retries) {
        t_.failure_reason = "no valid selection within " + std::to_string(config_.max_retries) +
                            " retries (last: object_id_invalid " + sel.raw_object_id + ")";
        return;
      }
      ++t_.retries_used;
      // select_object_id appends the next prompt itself; record where it lands.
      t_.feedback.push_back({FeedbackKind::ObjectIdInvalid, sel.raw_object_id, t_.messages.size()});
      prompt = prompts::object_id_invalid(sel.raw_object_id, k);
      attach = cv::Mat();
    }
  }

  const Scene& scene_;
  const Query& query_;
  const AgentConfig& config_;
  VlmBackend& backend_;
  const PerceptionBackends& perception_;
  AgentTranscript& t_;
};

}  // namespace

AgentTranscript run_grounding_loop(const Scene& scene, const Query& query, const AgentConfig& config,
                                   VlmBackend& backend, const PerceptionBackends& perception) {
  if (perception.preselector == nullptr || perception.target_detector == nullptr)
    throw std::invalid_argument("run_grounding_loop: detectors are required");
  AgentTranscript t;
  try {
    GroundingLoop(scene, query, config, backend, perception, t).run();
  } catch (const ResponseFormatError& e) {
    t.outcome.reset();
    t.failure_reason = e.what();
  }
  return t;
}

nlohmann::json AgentTranscript::to_json() const {
  json j;
  j["analysis"] = {{"target_class", analyzed.target_class},
                   {"attributes", analyzed.attributes},
                   {"conditions", analyzed.conditions}};
  j["analysis_messages"] = json::array();
  for (const auto& m : analysis_messages) j["analysis_messages"].push_back(grounder::to_json(m));
  j["preselected"] = preselected;
  j["plan"] = json::array();
  for (const auto& e : plan.entries)
    j["plan"].push_back({{"layout", {e.layout.rows, e.layout.cols}}, {"frames", e.frames.size()}});
  j["messages"] = json::array();
  for (const auto& m : messages) j["messages"].push_back(grounder::to_json(m));
  j["feedback"] = json::array();
  for (const auto& f : feedback)
    j["feedback"].push_back({{"kind", to_string(f.kind)}, {"id", f.referenced_id}, {"message_index", f.message_index}});
  j["retries_used"] = retries_used;
  j["structural_reasks"] = structural_reasks;
  if (outcome) {
    j["outcome"] = {{"target_frame_id", outcome->frame_id},
                    {"object_id", outcome->object_id},
                    {"detection", grounder::to_json(outcome->detection)},
                    {"num_candidates", outcome->candidates.size()}};
  } else {
    j["outcome"] = {{"failure", failure_reason}};
  }
  if (!image_selections.empty()) {
    j["reference_image_ids"] = image_selections.back().reference_image_ids;
  }
  if (!warnings.empty()) j["warnings"] = warnings;
  return j;
}

}  // namespace grounder
