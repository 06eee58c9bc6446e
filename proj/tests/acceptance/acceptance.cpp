// Runs every primary acceptance criterion at its stated tolerance and budget, one line each.

#include "grounder/cli.hpp"
#include "grounder/config.hpp"
#include "grounder/evaluation.hpp"
#include "grounder/projection.hpp"
#include "grounder/prompts.hpp"
#include "grounder/retrieval_bench.hpp"
#include "grounder/stitcher.hpp"

#include "cube.hpp"
#include "oracles.hpp"
#include "room.hpp"
#include "synthetic.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

using namespace grounder;
using namespace grounder::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Thrown by a criterion body to report what went wrong.
struct Fail {
  std::string why;
};

void require(bool ok, const std::string& why) {
  if (!ok) throw Fail{why};
}

std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

using Entries = std::vector<std::pair<Layout, std::vector<std::size_t>>>;

Entries as_pairs(const StitchPlan& plan) {
  Entries out;
  for (const auto& e : plan.entries) out.emplace_back(e.layout, e.frames);
  return out;
}

std::map<int, std::vector<std::size_t>> sizes_by_capacity(const Entries& entries) {
  std::map<int, std::vector<std::size_t>> out;
  for (const auto& [layout, frames] : entries) out[layout.capacity()].push_back(frames.size());
  for (auto& [cap, v] : out) std::sort(v.begin(), v.end());
  return out;
}

// ---- criteria -------------------------------------------------------------------------------------

void plan_examples() {
  const StitchPlan a = plan_layouts(40, 6);
  require(a.image_count() == 6 && a.count(kLayout4x1) == 2 && a.count(kLayout2x4) == 4,
          "plan_layouts(40, 6) is not 2 x (4,1) + 4 x (2,4)");
  const StitchPlan b = plan_layouts(84, 6);
  require(b.image_count() == 6 && b.count(kLayout4x1) == 1 && b.count(kLayout8x2) == 5,
          "plan_layouts(84, 6) is not 1 x (4,1) + 5 x (8,2)");
}

void stitching_sweep() {
  for (int L = 1; L <= 10; ++L) {
    for (std::size_t n = 0; n <= 500; ++n) {
      const std::string at = " at n=" + std::to_string(n) + " L=" + std::to_string(L);
      const StitchPlan p = plan_layouts(n, L);
      require(p.total_capacity() >= n, "capacity below n" + at);
      std::vector<std::size_t> placed;
      for (const auto& e : p.entries) {
        require(!e.frames.empty() && e.frames.size() <= static_cast<std::size_t>(e.layout.capacity()),
                "entry over capacity or empty" + at);
        placed.insert(placed.end(), e.frames.begin(), e.frames.end());
      }
      require(placed == iota_n(n), "frames not placed exactly once" + at);
      for (std::size_t i = 1; i < p.entries.size(); ++i)
        require(p.entries[i - 1].layout.capacity() <= p.entries[i].layout.capacity(), "capacity not ascending" + at);
      const auto oracle = stitching_oracle(iota_n(n), L);
      if (n <= 27 * static_cast<std::size_t>(L)) {
        require(p.image_count() <= static_cast<std::size_t>(L), "more than L images" + at);
        require(as_pairs(p) == oracle, "differs from the oracle" + at);
      } else {
        require(p.soft_limit_exceeded, "soft limit not flagged" + at);
        require(sizes_by_capacity(as_pairs(p)) == sizes_by_capacity(oracle), "overflow differs from the oracle" + at);
      }
    }
  }
}

void sor_oracle_match() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(1, 200);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    PointCloud3 c;
    const int n = size(rng);
    for (int i = 0; i < n; ++i) c.points.emplace_back(u(rng), u(rng), u(rng));
    if (t % 4 == 0) c.points.emplace_back(3.0 + u(rng), 3.0, -3.0);
    for (int nb : {1, 5})
      for (double r : {0.5, 1.0})
        require(statistical_inlier_indices(c, nb, r) == sor_oracle(c, nb, r),
                "cloud " + std::to_string(t) + " nb=" + std::to_string(nb) + " r=" + std::to_string(r));
  }
}

void cube_ensemble(std::string& detail) {
  const CubeRig rig = cube_rig(kCubeAzimuths, true);
  require((rig.distractor.center() - rig.cube.center()).norm() == 2.0, "distractor not 2 m away");
  auto view = [&](std::size_t i, int obj) { return cube_view(rig, i, obj); };
  const Aabb3& cube = rig.cube;
  const ProjectionConfig cfg;
  const auto base = ensemble_project(view(0, 0), {view(1, 0), view(2, 0)}, cfg);
  const double iou = iou3d(base.box, cube);
  std::ostringstream os;
  os << "IoU " << iou;
  require(iou >= 0.90, "three-view IoU " + std::to_string(iou) + " < 0.90");

  const auto gated = ensemble_project(view(0, 0), {view(1, 0), view(2, 0), view(3, 1)}, cfg);
  require(gated.stats.views.size() == 4, "expected four view records");
  const ViewStats& v = gated.stats.views[3];
  require(!v.accepted, "mismatched view was accepted");
  require(v.chamfer && *v.chamfer > cfg.chamfer_threshold, "mismatched view chamfer not above the gate");
  const double shift = std::max((gated.box.min - base.box.min).cwiseAbs().maxCoeff(),
                                (gated.box.max - base.box.max).cwiseAbs().maxCoeff());
  require(shift < 1e-3, "box moved " + std::to_string(shift) + " m");
  os << ", gate chamfer " << *v.chamfer << " m, corner shift " << shift << " m";
  detail = os.str();
}

struct RoomRun {
  fs::path root;
  Room room;
};

int ground(const RoomRun& r, const fs::path& out, const std::string& jobs) {
  std::ostringstream o, e;
  const int code = run_cli({"--out", out.string(), "--jobs", jobs, "--set", "M=3", "--set",
                            "perception.target_detections=target_detections.json", "ground", "--scene-root",
                            (r.root / "scenes").string(), "--queries", (r.root / "queries.jsonl").string(), "--script",
                            (r.root / "script.json").string(), "--frame-stride", "1"},
                           o, e);
  if (code != kExitOk) throw Fail{"ground exited " + std::to_string(code) + ": " + e.str()};
  return code;
}

json read_json(const fs::path& p) { return json::parse(read_text(p)); }

void end_to_end(const RoomRun& r, std::string& detail) {
  ground(r, r.root / "run_a", "1");
  std::ostringstream o, e;
  const int code = run_cli({"--out", (r.root / "eval").string(), "eval", "--results",
                            (r.root / "run_a" / "results.json").string(), "--queries",
                            (r.root / "queries.jsonl").string()},
                           o, e);
  require(code == kExitOk, "eval exited " + std::to_string(code) + ": " + e.str());
  const json report = read_json(r.root / "eval" / "report.json");
  const double acc = report["overall"]["acc@0.25"].get<double>();
  require(report["overall"]["count"] == 10, "expected 10 queries");
  require(acc == 100.0, "Acc@0.25 = " + std::to_string(acc));

  std::set<std::string> kinds;
  for (const auto& rq : r.room.queries) {
    const json t = read_json(r.root / "run_a" / "transcripts" / (rq.query.query_id + ".json"));
    const std::string& qid = rq.query.query_id;
    const std::string cls = r.room.synth.objects[static_cast<std::size_t>(rq.object)].label;
    require(t["analysis_messages"][0]["text"] == golden("query_analysis", {{"query", rq.query.text}}),
            qid + ": query analysis prompt differs from golden");
    require(t["messages"][0]["text"] == golden("grounding_system"), qid + ": system prompt differs from golden");
    json conditions = t["analysis"]["attributes"];
    for (const auto& c : t["analysis"]["conditions"]) conditions.push_back(c);
    require(t["messages"][1]["text"] == golden("input", {{"query", rq.query.text},
                                                         {"pred_target_class", cls},
                                                         {"conditions", conditions.dump()},
                                                         {"num_view_selections",
                                                          std::to_string(t["preselected"].size())}}),
            qid + ": input prompt differs from golden");
    require(t["feedback"].size() == rq.feedback.size(), qid + ": feedback count");
    require(t["retries_used"] == static_cast<int>(rq.feedback.size()), qid + ": retries_used");
    const std::size_t k = t["outcome"]["num_candidates"].get<std::size_t>();
    for (std::size_t i = 0; i < rq.feedback.size(); ++i) {
      const json& f = t["feedback"][i];
      const std::string kind = f["kind"].get<std::string>();
      require(kind == rq.feedback[i], qid + ": feedback " + std::to_string(i) + " is " + kind);
      kinds.insert(kind);
      const std::string text = t["messages"][f["message_index"].get<std::size_t>()]["text"].get<std::string>();
      std::string want;
      if (kind == "image_invalid") want = golden("image_id_invalid", {{"image_id", f["id"].get<std::string>()}});
      if (kind == "object_not_existing")
        want = golden("detection_not_exist", {{"image_id", r.room.hidden_frame}, {"pred_target_class", cls}});
      if (kind == "object_id_invalid")
        want = golden("object_id_invalid_prefix", {{"object_id", f["id"].get<std::string>()}}) + "\n" +
               golden("bbox_select", {{"num_candidate_bboxes", std::to_string(k)}});
      require(text == want, qid + ": " + kind + " prompt differs from golden");
    }
    if (k > 1) {
      bool found = false;
      for (const auto& m : t["messages"])
        found = found || m["text"] == golden("bbox_select", {{"num_candidate_bboxes", std::to_string(k)}});
      require(found, qid + ": no bbox_select prompt");
    }
  }
  require(kinds.size() == 3, "not all three feedback kinds exercised");
  detail = "Acc@0.25 " + std::to_string(acc).substr(0, 5) + "%, 3 feedback kinds";
}

void retrieval() {
  const std::vector<std::pair<std::string, std::string>> gt = {
      {"00001", "red"}, {"00002", "green"}, {"00003", "blue"}, {"00004", "white"}};
  RetrievalAnswer a{{{"00001", "red"}, {"00002", "green"}, {"00003", "yellow"}, {"00004", "white"}}};
  require(score_retrieval(gt, a) == 0.75, "worked example is not 0.75");

  SuiteOptions o;
  o.count = 120;
  o.seed = 11;
  const auto suite = generate_suite(o);
  EchoBackendFactory echo(manifest_colors(suite_manifest(suite, o.seed)));
  SweepOptions so;
  so.style.cell = {160, 120};
  const auto rows = run_layout_sweep(suite, {{1, 1}, {2, 2}, {3, 3}, {4, 1}, {2, 4}, {4, 4}, {5, 5}, {6, 6}}, 1, echo, so);
  for (const auto& row : rows)
    require(row.accuracy && *row.accuracy == 1.0 && row.incomplete == 0,
            "echo sweep below 1.0 at " + format_layout(row.layout));
}

void metric_fixtures() {
  const double iou = iou3d({Vec3(0, 0, 0), Vec3(1, 1, 1)}, {Vec3(0.5, 0, 0), Vec3(1.5, 1, 1)});
  require(std::abs(iou - 1.0 / 3.0) <= 1e-9, "shifted cube IoU " + std::to_string(iou));
  std::vector<EvalRecord> recs;
  for (double v : {0.9, 0.3, 0.2, 0.6}) recs.push_back(EvalRecord::make("q", v));
  const AccuracyReport rep = accuracy_report(recs);
  require(rep.overall.acc25 == 75.0 && rep.overall.acc50 == 50.0, "accuracy_report is not 75.0/50.0");
  const Aabb3 pred{Vec3(-0.5, -0.5, -0.5), Vec3(0.5, 0.5, 0.5)};
  auto at = [](double x) { return Aabb3{Vec3(x - 0.5, -0.5, -0.5), Vec3(x + 0.5, 0.5, 0.5)}; };
  for (int rep_i = 0; rep_i < 3; ++rep_i) {
    require(nr3d_match(pred, {at(1), at(-1)}) == 0, "tie did not pick the lowest index");
    require(nr3d_match(pred, {at(3), at(-1), at(1)}) == 1, "tie did not pick the lowest index");
  }
}

void determinism(const RoomRun& r) {
  ground(r, r.root / "run_b", "1");
  ground(r, r.root / "run_c", "3");
  const std::string a = read_text(r.root / "run_b" / "results.json");
  require(a == read_text(r.root / "run_c" / "results.json"), "results.json differs between runs");
  require(a == read_text(r.root / "run_a" / "results.json"), "results.json differs from the first run");
  for (const auto& rq : r.room.queries) {
    const fs::path t = fs::path("transcripts") / (rq.query.query_id + ".json");
    require(read_text(r.root / "run_b" / t) == read_text(r.root / "run_c" / t), "transcript differs: " + t.string());
  }
}

}  // namespace

int main() {
  RoomRun room{fresh_temp_dir("acceptance"), make_room()};
  write_room(room.room, room.root);

  struct Criterion {
    std::string name;
    double budget_s;
    std::function<void(std::string&)> body;
  };
  const std::vector<Criterion> criteria = {
      {"plan_layouts worked examples (40,6) and (84,6)", 1e-3, [](std::string&) { plan_examples(); }},
      {"stitching sweep n 0..500 x L 1..10 vs oracle", 5, [](std::string&) { stitching_sweep(); }},
      {"statistical outlier removal vs all-pairs oracle, 100 clouds", 10, [](std::string&) { sor_oracle_match(); }},
      {"cube ensemble IoU >= 0.90 and chamfer gate", 5, [](std::string& d) { cube_ensemble(d); }},
      {"end-to-end scripted run, goldens and Acc@0.25 = 100%", 30, [&](std::string& d) { end_to_end(room, d); }},
      {"retrieval worked example 0.75 and echo sweep 1.0", 5, [](std::string&) { retrieval(); }},
      {"metric fixtures", 5, [](std::string&) { metric_fixtures(); }},
      {"determinism of results.json across runs", 60, [&](std::string&) { determinism(room); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    std::string detail, error;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.body(detail);
    } catch (const Fail& f) {
      error = f.why;
    } catch (const std::exception& e) {
      error = std::string("exception: ") + e.what();
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (error.empty() && s >= c.budget_s) error = "over budget";
    const bool ok = error.empty();
    if (!ok) ++failed;
    std::printf("%s  %-58s %9.4f s (budget %g s)%s%s\n", ok ? "PASS" : "FAIL", c.name.c_str(), s, c.budget_s,
                ok ? (detail.empty() ? "" : "  ") : "  ", ok ? detail.c_str() : error.c_str());
  }
  std::printf("%zu of %zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  fs::remove_all(room.root);
  return failed == 0 ? 0 : 1;
}
