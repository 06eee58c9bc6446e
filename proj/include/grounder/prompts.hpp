#pragma once

#include <map>
#include <string>
#include <string_view>

namespace grounder::prompts {

// Placeholders: {query}
extern const std::string_view kQueryAnalysis;
extern const std::string_view kGroundingSystem;
// Placeholders: {query} {pred_target_class} {conditions} {num_view_selections}
extern const std::string_view kInput;
// Placeholders: {num_candidate_bboxes}
extern const std::string_view kBboxSelect;
// Placeholders: {image_id}
extern const std::string_view kImageIdInvalid;
// Placeholders: {image_id} {pred_target_class}
extern const std::string_view kDetectionNotExist;
// Placeholders: {object_id}; followed by a newline and the rendered bbox select prompt.
extern const std::string_view kObjectIdInvalidPrefix;
/// Sent once when a reply holds no parseable JSON object. Not a grounding retry.
extern const std::string_view kStructuralReask;
// Placeholders: {num_images}. Visual-retrieval benchmark request.
extern const std::string_view kRetrieval;

/// Substitutes every "{key}" for the given keys. Unknown braces are left untouched.
std::string render(std::string_view tmpl, const std::map<std::string, std::string>& values);

std::string query_analysis(const std::string& query);
std::string input(const std::string& query, const std::string& target_class, const std::string& conditions,
                  int num_views);
std::string bbox_select(int num_candidates);
std::string image_id_invalid(const std::string& image_id);
std::string detection_not_exist(const std::string& image_id, const std::string& target_class);
std::string object_id_invalid(const std::string& object_id, int num_candidates);
std::string retrieval(int num_images);

}  // namespace grounder::prompts
