#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <string_view>

namespace grounder {

/// First balanced top-level {...} in `text` that parses as JSON (// and /* */ comments allowed).
/// Tolerates code fences and surrounding prose.
std::optional<nlohmann::json> extract_json_object(std::string_view text);

}  // namespace grounder
