#include "grounder/json_extract.hpp"

namespace grounder {

namespace {

/// End index (inclusive) of the object opening at `open`, or npos when unbalanced.
std::size_t matching_brace(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false, escaped = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::string_view::npos;
}

}  // namespace

std::optional<nlohmann::json> extract_json_object(std::string_view text) {
  for (std::size_t open = text.find('{'); open != std::string_view::npos; open = text.find('{', open + 1)) {
    const std::size_t close = matching_brace(text, open);
    if (close == std::string_view::npos) continue;
    const auto candidate = text.substr(open, close - open + 1);
    auto parsed = nlohmann::json::parse(candidate, nullptr, /*allow_exceptions=*/false,
                                        /*ignore_comments=*/true);
    if (!parsed.is_discarded() && parsed.is_object()) return parsed;
  }
  return std::nullopt;
}

}  // namespace grounder
