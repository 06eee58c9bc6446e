#include "grounder/config.hpp"
#include "grounder/errors.hpp"

#include "synthetic.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace grounder;
using namespace grounder::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& text) {
  std::ofstream(dir / name) << text;
  return dir / name;
}

}  // namespace

TEST(Config, Defaults) {
  const PipelineConfig c = resolve_config({}, json::object());
  EXPECT_EQ(c.M, 3);
  EXPECT_EQ(c.L, 6);
  EXPECT_EQ(c.N, 7);
  EXPECT_EQ(c.frame_stride, 20);
  EXPECT_DOUBLE_EQ(c.detection_threshold, 0.30);
  EXPECT_EQ(c.projection.erosion_kernel, 15);
  EXPECT_EQ(c.projection.top_components, 2);
  EXPECT_DOUBLE_EQ(c.projection.chamfer_threshold, 0.1);
  EXPECT_EQ(c.projection.outlier_nb, 5);
  EXPECT_DOUBLE_EQ(c.projection.outlier_std_ratio, 1.0);
  EXPECT_DOUBLE_EQ(c.backend.http.temperature, 0.1);
  EXPECT_DOUBLE_EQ(c.backend.http.top_p, 0.3);
}

TEST(Config, FileThenCommandLine) {
  const fs::path dir = fresh_temp_dir("cfg");
  const fs::path toml = write_file(dir, "c.toml",
                                   "M = 5\nL = 4\n[projection]\nerosion_kernel = 11\n"
                                   "[backend]\nkind = \"http\"\nmodel = \"m\"\napi_key_env = \"MY_KEY\"\n");
  const PipelineConfig file_only = resolve_config(toml, json::object());
  EXPECT_EQ(file_only.M, 5);
  EXPECT_EQ(file_only.L, 4);
  EXPECT_EQ(file_only.N, 7);
  EXPECT_EQ(file_only.projection.erosion_kernel, 11);
  EXPECT_EQ(file_only.backend.kind, "http");
  EXPECT_EQ(file_only.backend.http.api_key_env, "MY_KEY");

  json cli = override_from_assignment("projection.erosion_kernel=9");
  cli.merge_patch(json{{"M", 1}});
  const PipelineConfig layered = resolve_config(toml, cli);
  EXPECT_EQ(layered.M, 1);
  EXPECT_EQ(layered.L, 4);
  EXPECT_EQ(layered.projection.erosion_kernel, 9);

  const fs::path js = write_file(dir, "c.json", R"({"N": 3, "bench": {"layouts": ["2x4", [3, 3]], "count": 10}})");
  const PipelineConfig from_json = resolve_config(js, json::object());
  EXPECT_EQ(from_json.N, 3);
  EXPECT_EQ(from_json.projection.ensemble_n, 3);
  ASSERT_EQ(from_json.bench.layouts.size(), 2u);
  EXPECT_EQ(from_json.bench.layouts[0], (Layout{2, 4}));
  EXPECT_EQ(from_json.bench.layouts[1], (Layout{3, 3}));
  fs::remove_all(dir);
}

TEST(Config, SnapshotReloads) {
  PipelineConfig c;
  c.M = 2;
  c.projection.chamfer_threshold = 0.05;
  c.bench.layouts = {{5, 5}};
  PipelineConfig back;
  apply_config_layer(back, to_json(c));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
}

TEST(Config, Rejections) {
  PipelineConfig c;
  EXPECT_THROW(apply_config_layer(c, json{{"retries", 2}}), ValidationError);
  EXPECT_THROW(apply_config_layer(c, json{{"projection", {{"kernel", 3}}}}), ValidationError);
  EXPECT_THROW(apply_config_layer(c, json{{"M", "three"}}), ValidationError);
  try {
    apply_config_layer(c, json{{"backend", {{"api_key", "sk-123"}}}});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("api_key_env"), std::string::npos);
  }
  EXPECT_THROW(resolve_config({}, json{{"projection", {{"erosion_kernel", 4}}}}), ValidationError);
  EXPECT_THROW(resolve_config({}, json{{"L", 0}}), ValidationError);
  EXPECT_THROW(resolve_config({}, json{{"bench", {{"count", 1001}}}}), ValidationError);

  const fs::path dir = fresh_temp_dir("cfg");
  EXPECT_THROW(resolve_config(write_file(dir, "bad.toml", "M = [\n"), json::object()), IngestionError);
  EXPECT_THROW(resolve_config(dir / "absent.toml", json::object()), IngestionError);
  fs::remove_all(dir);
}

TEST(Config, Assignments) {
  EXPECT_EQ(override_from_assignment("a.b.c=3"), (json{{"a", {{"b", {{"c", 3}}}}}}));
  EXPECT_EQ(override_from_assignment("backend.model=gpt-4o"), (json{{"backend", {{"model", "gpt-4o"}}}}));
  EXPECT_EQ(override_from_assignment("x=true"), (json{{"x", true}}));
  EXPECT_THROW(override_from_assignment("novalue"), ValidationError);
  EXPECT_THROW(override_from_assignment("a..b=1"), ValidationError);
}

TEST(Config, Layouts) {
  EXPECT_EQ(parse_layout("4x1"), (Layout{4, 1}));
  EXPECT_EQ(parse_layout("2x4"), (Layout{2, 4}));
  for (const char* bad : {"4", "0x3", "ax2", "3x", "3x3x3"}) EXPECT_THROW(parse_layout(bad), ValidationError) << bad;
  for (int r = 1; r <= 9; ++r)
    for (int c = 1; c <= 9; ++c) EXPECT_EQ(parse_layout(format_layout({r, c})), (Layout{r, c}));
}
