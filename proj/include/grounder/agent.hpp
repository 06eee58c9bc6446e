#pragma once

#include "grounder/perception.hpp"
#include "grounder/scene.hpp"
#include "grounder/stitcher.hpp"
#include "grounder/vlm.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace grounder {

struct AnalyzedQuery {
  std::string target_class = "unknown";
  std::vector<std::string> attributes;
  std::vector<std::string> conditions;
};

enum class FeedbackKind { ImageInvalid, ObjectNotExisting, ObjectIdInvalid };
std::string to_string(FeedbackKind kind);

struct Feedback {
  FeedbackKind kind;
  std::string referenced_id;
  std::size_t message_index = 0;  // position of the feedback message in the transcript
};

struct ImageSelection {
  std::string reasoning;
  std::string target_image_id;      // normalized to five digits when numeric
  std::string raw_target_image_id;  // as returned by the model
  std::vector<std::string> reference_image_ids;
};

struct ObjectSelection {
  std::string reasoning;
  long object_id = -1;
  std::string raw_object_id;
};

struct GroundingTarget {
  std::string frame_id;
  int object_id = 0;
  Detection2D detection;
  std::vector<Detection2D> candidates;
};

struct AgentTranscript {
  std::vector<ChatMessage> analysis_messages;
  std::vector<ChatMessage> messages;
  AnalyzedQuery analyzed;
  std::vector<std::string> preselected;
  StitchPlan plan;
  std::vector<ImageSelection> image_selections;
  std::vector<Feedback> feedback;
  int retries_used = 0;
  int structural_reasks = 0;
  std::optional<GroundingTarget> outcome;
  std::string failure_reason;
  std::vector<std::string> warnings;

  [[nodiscard]] bool failed() const { return !outcome.has_value(); }
  [[nodiscard]] nlohmann::json to_json() const;
};

struct AgentConfig {
  int max_retries = 3;  // M
  int soft_limit = 6;   // L
  double detection_threshold = 0.30;
  StitchStyle style;
};

/// Detector used for view pre-selection, detector used to validate the chosen image (may be the
/// same object), and the segmenter/matcher consumed downstream by the pipeline.
struct PerceptionBackends {
  Detector* preselector = nullptr;
  Detector* target_detector = nullptr;
  Segmenter* segmenter = nullptr;
  Matcher* matcher = nullptr;
};

/// Normalizes "3" / 3 to "00003"; other strings pass through unchanged.
std::string normalize_image_id(const nlohmann::json& value);

/// Attributes followed by conditions, rendered as a JSON array for the input prompt.
std::string format_conditions(const AnalyzedQuery& analyzed);

/// Sends the query analysis prompt and parses {target_class, attributes, conditions}.
/// Throws ResponseFormatError when the reply is still unparseable after one re-ask.
AnalyzedQuery analyze_query(const std::string& text, VlmBackend& backend,
                            std::vector<ChatMessage>* messages = nullptr);

/// System prompt plus the input prompt with the stitched composites attached.
std::vector<ChatMessage> grounding_opening(const AnalyzedQuery& analyzed, const std::string& query,
                                           const std::vector<StitchedImage>& stitched, int num_views);

/// Asks for the target image on an existing conversation, appending the reply(ies).
ImageSelection select_target_image(std::vector<ChatMessage>& conversation, VlmBackend& backend,
                                   int* structural_reasks = nullptr);
/// Opens a fresh conversation over `stitched` and asks for the target image.
ImageSelection select_target_image(const AnalyzedQuery& analyzed, const std::string& query,
                                   const std::vector<StitchedImage>& stitched, VlmBackend& backend);

/// Appends `prompt_text` with the annotated image and asks for an object id. The id is returned
/// as given; range checking is the caller's job.
ObjectSelection select_object_id(std::vector<ChatMessage>& conversation, const std::string& prompt_text,
                                 const cv::Mat& annotated, VlmBackend& backend, int* structural_reasks = nullptr);
ObjectSelection select_object_id(const cv::Mat& annotated, int num_candidates, VlmBackend& backend);

/// Stitches the given frames following plan_layouts and resizes each composite for the VLM.
std::vector<StitchedImage> render_composites(const Scene& scene, const std::vector<std::string>& frame_ids,
                                             const StitchPlan& plan, const StitchStyle& style);

/// Full grounding-and-feedback loop for one query. Grounding failure is reported in the
/// transcript; transport failures surface as PipelineError.
AgentTranscript run_grounding_loop(const Scene& scene, const Query& query, const AgentConfig& config,
                                   VlmBackend& backend, const PerceptionBackends& perception);

}  // namespace grounder
