#include "grounder/prompts.hpp"

namespace grounder::prompts {

const std::string_view kQueryAnalysis =
    R"(You are working on a 3D visual grounding task, which involves receiving a query that specifies a particular object by describing its attributes and grounding conditions to uniquely identify the object. Here, attributes refer to the inherent properties of the object, such as category, color, appearance, function, etc. Grounding conditions refer to considerations of other objects or other conditions in the scene, such as location, relative position to other objects, etc.
Now, I need you to first parse this query, return the category of the object to be found, and list each of the object's attributes and grounding conditions. Each attribute and condition should be returned individually. Sometimes the object's category is not explicitly specified, and you need to deduce it through reasoning. If you cannot deduce after reasoning, you can use 'unknown' for the category.
Your response should be formatted as a JSON object.
Here are some examples:
Input:
Query: this is a brown cabinet. it is to the right of a picture.
Output:
{
"target_class": "cabinet",
"attributes": ["it's brown"],
"conditions": ["it's to the right of a picture"]
}

Ensure your response adheres strictly to this JSON format, as it will be directly parsed and used.
Query: {query})";

const std::string_view kGroundingSystem =
    "You are good at finding objects specified by user queries in indoor rooms by watching the videos "
    "scanning the rooms.";

const std::string_view kBboxSelect =
    R"(Great! Here is the detailed version of your selected image. There are {num_candidate_bboxes} candidate objects shown in the image. I have annotated each object at the center with an object ID in white color text and black background. Do not mix the annotated IDs with the actual appearance of the objects. Please give me the ID of the correct target object for the query.
Reply using JSON format with two keys "reasoning" and "object_id" like this:
{
  "reasoning": "your reasons",   // Explain the justification why you select the object ID.
  "object_id": 0   // The object ID you selected. Always give one object ID from the image, which you are the most confident of, even you think the image does not contain the correct object.
})";

const std::string_view kImageIdInvalid =
    R"(The image {image_id} you selected does not exist. Did you perhaps see it incorrectly? Please reconsider and select another image. Remember to reply using JSON format with the three keys "reasoning", "target_image_id", and "reference_image_ids" as required before.)";

const std::string_view kDetectionNotExist =
    R"(The image {image_id} you selected does not seem to include any objects that fall into the category of {pred_target_class}. Please reconsider and select another image. Remember to reply using JSON format with the three keys "reasoning", "target_image_id", and "reference_image_ids" as required before.)";

const std::string_view kInput =
    R"(Imagine you are in a room and are asked to find one object. Given a series of images from a video scanning an indoor room and a query describing a specific object in the room, you need to analyze the images to locate the object mentioned in the query within the images.
You will be provided with multiple images, and the top-left corner of each image will have an ID indicating the order in which it appears in the video. Adjacent images have adjacent IDs. Please note that to save space, multiple images have been combined into one image with dynamic layouts. You will also be provided with a query sentence describing the object that needs to be found, as well as a parsed version of this query describing the target class of the object to be found and the conditions that this object must satisfy. Please find the ID of the image containing this object based on these conditions. Note that I have filtered the video to remove some images that do not contain objects of the target class. To locate the target object, you need to consider multiple images from different perspectives and determine which image contains the object that meets the conditions. Note, that each condition might not be judged based on just one image alone. Also, the conditions may not be accurate, so it's reasonable for the correct object not to meet all the conditions. You need to find the most possible object based on the query. If you think multiple objects are correct, simply return the one you are most confident of. If you think no objects are meeting the conditions, make a guess to avoid returning nothing. Usually the correct object is visible in multiple images, and you should return the image in which the object is most clearly observed. Your response should be formatted as a JSON object with three keys "reasoning", "target_image_id", and "reference_image_ids" like this:
{
 "reasoning": "your reasoning process" // Explain the process of how you identified and located the target object. If reasoning across different images is needed, explain which images were used and how you reasoned with them.
"target_image_id": "00001", // Replace with the actual image ID (only one ID) annotated on the image that contains the target object.
"reference_image_ids": ["00001", "00002", ...] // A list of IDs of images that are used to determine wether the conditions are met or not.
}
Here is a good example:
query: Find the black table that is surrounded by four chairs.
{
  "reasoning": "After carefully examining all the input images, I found image 00003, 00005, and 00021 contain different tables, but only the tables in image 00003 and 00021 are black. Further, I found image 00001, image 00002, image 00003, and image 00004 show four chairs and these chairs surround the black table in image 00003. The chair in image 00005 does not meet this condition. So the correct object is the table in image 00003",
  "target_image_id": "00003",
  "reference_image_ids": ["00001", "00002", "00003", "00004"]
}
Now start the task:
Query: "{query}"
Target Class: {pred_target_class}
Conditions: {conditions}
Here are the {num_view_selections} images for your reference.)";

const std::string_view kObjectIdInvalidPrefix = "The object ID {object_id} you selected is invalid. Please reconsider.";

const std::string_view kStructuralReask =
    "Your previous reply could not be parsed as a JSON object. Please reply again using only the JSON format "
    "required before.";

const std::string_view kRetrieval =
    "You will see {num_images} photos, possibly combined into grid images. Each photo has a five-digit ID written "
    "in red at its top-left corner and one solid color block somewhere on it. The block color is one of: red, green, "
    "blue, yellow, white, black.\n"
    "List the ID and the block color of every photo you can see. Reply with a JSON object with two keys: \"ids\", "
    "the list of IDs, and \"colors\", the list of block colors in the same order.";

std::string render(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  // Single pass, so substituted values are never re-scanned for placeholders.
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const std::size_t open = tmpl.find('{', pos);
    if (open == std::string_view::npos) break;
    const std::size_t close = tmpl.find('}', open + 1);
    if (close == std::string_view::npos) break;
    out.append(tmpl.substr(pos, open - pos));
    const auto it = values.find(std::string(tmpl.substr(open + 1, close - open - 1)));
    if (it != values.end()) {
      out.append(it->second);
      pos = close + 1;
    } else {
      out.push_back('{');
      pos = open + 1;
    }
  }
  out.append(tmpl.substr(pos));
  return out;
}

std::string query_analysis(const std::string& query) { return render(kQueryAnalysis, {{"query", query}}); }

std::string input(const std::string& query, const std::string& target_class, const std::string& conditions,
                  int num_views) {
  return render(kInput, {{"query", query},
                         {"pred_target_class", target_class},
                         {"conditions", conditions},
                         {"num_view_selections", std::to_string(num_views)}});
}

std::string bbox_select(int num_candidates) {
  return render(kBboxSelect, {{"num_candidate_bboxes", std::to_string(num_candidates)}});
}

std::string image_id_invalid(const std::string& image_id) {
  return render(kImageIdInvalid, {{"image_id", image_id}});
}

std::string detection_not_exist(const std::string& image_id, const std::string& target_class) {
  return render(kDetectionNotExist, {{"image_id", image_id}, {"pred_target_class", target_class}});
}

std::string object_id_invalid(const std::string& object_id, int num_candidates) {
  return render(kObjectIdInvalidPrefix, {{"object_id", object_id}}) + "\n" + bbox_select(num_candidates);
}

std::string retrieval(int num_images) { return render(kRetrieval, {{"num_images", std::to_string(num_images)}}); }

}  // namespace grounder::prompts
