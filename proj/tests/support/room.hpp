#pragma once

#include "synthetic.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace grounder::testing {

struct RoomQuery {
  Query query;
  int object = 0;              // index into the room objects
  std::string target_frame;    // frame the script finally settles on
  int object_id = 0;           // candidate id within that frame
  std::vector<std::string> feedback;  // expected feedback kinds, in order
};

/// A furnished room seen by an arc of cameras, with ten scripted queries. Queries q07..q10 walk
/// through image_invalid, object_not_existing and object_id_invalid before settling.
struct Room {
  SyntheticScene synth;
  std::vector<RoomQuery> queries;
  std::string hidden_frame;  // chairs withheld from the target detector here
  nlohmann::json script;     // {"calls": [], "per_query": {...}}
};

Room make_room();

/// Writes <root>/scenes/<scene_id>/..., <root>/queries.jsonl and <root>/script.json.
void write_room(const Room& room, const std::filesystem::path& root);

}  // namespace grounder::testing
