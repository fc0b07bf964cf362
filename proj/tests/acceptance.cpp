// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "support.hpp"

using namespace semfield;
using namespace testing_support;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

Outcome slerp_norms() {
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<std::uint64_t> area(1, 1'000'000);
  const std::size_t dims[] = {2, 8, 512};
  double worst = 0.0;
  const auto t0 = Clock::now();
  for (int i = 0; i < 10'000; ++i) {
    const auto d = dims[i % 3];
    auto a = random_unit_f(rng, d), b = random_unit_f(rng, d);
    auto r = slerp_aggregate<float>(a, area(rng), b, area(rng));
    double s = 0.0;
    for (float x : r) s += double(x) * x;
    worst = std::max(worst, std::abs(std::sqrt(s) - 1.0));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-6 && secs < 5.0, "max |norm-1| = " + fmt(worst) + ", " + fmt(secs) + " s"};
}

Outcome restricted_improvement() {
  std::mt19937_64 rng(1002);
  std::uniform_real_distribution<double> share(0.01, 0.99);
  int improved = 0, trials = 0;
  while (trials < 10'000) {
    const std::size_t d = 2 + static_cast<std::size_t>(rng() % 15);
    auto fa = random_unit(rng, d), fb = random_unit(rng, d), fc = random_unit(rng, d);
    const double ac = dot<double>(fa, fc), bc = dot<double>(fb, fc);
    if (!(ac > bc && bc >= 0.0)) continue;
    ++trials;
    const double t = share(rng);
    const auto area_b = static_cast<std::uint64_t>(std::llround(t * 100'000.0));
    auto fused = slerp_aggregate<double>(fa, 100'000 - area_b, fb, area_b);
    improved += dot<double>(fused, fc) > bc;
  }
  std::uniform_real_distribution<double> th(1e-4, std::numbers::pi - 1e-4), tt(0.0, 1.0);
  double worst = 0.0;
  bool at_least_one = true;
  for (int i = 0; i < 10'000; ++i) {
    const double theta = th(rng), t = tt(rng);
    const auto p = aggregation_weights(theta, t);
    const double expect = std::cos((1 - 2 * t) * theta / 2) / std::cos(theta / 2);
    worst = std::max(worst, std::abs(p.a + p.b - expect) / std::max(1.0, expect));
    at_least_one = at_least_one && p.a + p.b >= 1.0 - 1e-12;
  }
  return {improved == trials && worst <= 1e-7 && at_least_one,
          std::to_string(improved) + "/" + std::to_string(trials) + " improved, weight-sum error " + fmt(worst)};
}

Outcome distance_oracle() {
  std::mt19937_64 rng(1003);
  std::uniform_real_distribution<float> u(-2.0f, 2.0f);
  double worst = 0.0;
  bool flags = true;
  for (int k : {3, 5, 7}) {
    for (int trial = 0; trial < 100; ++trial) {
      Grid<Vec3f> pts(16, 16);
      for (auto& p : pts.data) p = {u(rng), u(rng), u(rng)};
      Grid<std::uint32_t> labels(16, 16);
      const std::uint32_t n = 1 + trial % 5;
      for (auto& l : labels.data) l = static_cast<std::uint32_t>(rng() % (n + 1)) == n ? kUnlabeled : static_cast<std::uint32_t>(rng() % n);
      auto d = neighborhood_semantic_distance(pts, labels, {k, 0.8});
      auto ref = brute_distance(pts, labels, k);
      for (std::size_t p = 0; p < 256; ++p) {
        worst = std::max(worst, std::abs(double(d.distance.data[p]) - ref.value[p]));
        flags = flags && d.isolated.data[p] == ref.isolated[p];
      }
    }
  }
  return {worst <= 1e-6 && flags, "max deviation " + fmt(worst) + " over 300 maps"};
}

Outcome ensemble_oracle() {
  std::mt19937_64 rng(1004);
  int exact = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t h = 8 + rng() % 17, w = 8 + rng() % 17;
    std::vector<MaskRecord> masks;
    const auto count = 1 + rng() % 12;
    for (std::uint32_t id = 0; id < count; ++id) {
      // Duplicated rectangles force equal-area ties.
      auto bits = (id > 0 && rng() % 4 == 0) ? masks[rng() % masks.size()].bitmap : random_rect_bitmap(rng, h, w);
      masks.push_back(make_mask(id * 3 + 1, 0, id, bits));
    }
    std::shuffle(masks.begin(), masks.end(), rng);
    std::vector<const MaskRecord*> ptrs;
    for (const auto& m : masks) ptrs.push_back(&m);
    exact += ensemble_view_labels(ptrs, h, w) == brute_labels(masks, h, w);
  }
  return {exact == 50, std::to_string(exact) + "/50 layouts identical"};
}

Outcome metrics_oracle() {
  std::mt19937_64 rng(1005);
  std::uniform_real_distribution<double> u(0.0, 1.0), depth(0.5, 20.0), noise(0.8, 1.2);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::uint8_t> p(1024), g(1024), mask(1024);
    const double dp = u(rng), dg = u(rng);
    for (std::size_t i = 0; i < 1024; ++i) {
      p[i] = u(rng) < dp;
      g[i] = u(rng) < dg;
      mask[i] = u(rng) < 0.9;
    }
    auto s = seg_eval<std::uint8_t>(p, g);
    auto r = brute_seg(p, g);
    worst = std::max({worst, std::abs(s.iou - r.iou), std::abs(s.pixel_accuracy - r.pa), std::abs(s.precision - r.p)});
    std::vector<double> gt(1024), pred(1024);
    for (std::size_t i = 0; i < 1024; ++i) {
      gt[i] = depth(rng);
      pred[i] = gt[i] * noise(rng) * 0.5;
    }
    for (bool align : {false, true}) {
      auto e = depth_eval<double>(pred, gt, mask, align);
      auto b = brute_depth(pred, gt, mask, align);
      worst = std::max({worst, std::abs(e.rel - b.rel), std::abs(e.tau - b.tau)});
    }
  }
  std::vector<double> gt{1.0, 2.5, 4.0, 7.25}, at3, at5;
  for (double x : gt) {
    at3.push_back(1.03 * x);
    at5.push_back(1.05 * x);
  }
  const double tau3 = depth_eval<double>(at3, gt, {}, false).tau;
  const double tau5 = depth_eval<double>(at5, gt, {}, false).tau;
  return {worst <= 1e-9 && tau3 == 100.0 && tau5 == 0.0,
          "max deviation " + fmt(worst) + ", tau(1.03) = " + fmt(tau3) + ", tau(1.05) = " + fmt(tau5)};
}

struct Cube {
  synthetic::Scene scene = synthetic::two_view_cube();
  TempDir dir{"accept"};
  std::unique_ptr<FixtureBackend> backend;
  Cube() {
    synthetic::write_scene(scene, dir.path());
    backend = std::make_unique<FixtureBackend>(dir / "backend");
  }
};

Outcome refinement_direction(Cube& cube) {
  const auto t0 = Clock::now();
  PipelineConfig off;
  off.ablations.no_refine = true;
  auto raw = run_fuse(cube.scene.input, off, nullptr);
  auto refined = run_fuse(cube.scene.input, {}, cube.backend.get());
  const double secs = seconds_since(t0);
  auto gt = synthetic::ground_truth_bundle(cube.scene);
  const double rel_raw = evaluate_depth(raw.bundle, gt, true)["rel"].get<double>();
  const double rel_ref = evaluate_depth(refined.bundle, gt, true)["rel"].get<double>();
  const auto an_raw = total_anomalies(raw.bundle), an_ref = total_anomalies(refined.bundle);
  return {rel_ref < rel_raw && an_ref < an_raw && secs < 10.0,
          "rel " + fmt(rel_raw) + " -> " + fmt(rel_ref) + ", anomalies " + std::to_string(an_raw) + " -> " +
              std::to_string(an_ref) + ", " + fmt(secs) + " s"};
}

Outcome multilevel_ablation(Cube& cube) {
  auto gt = synthetic::ground_truth_bundle(cube.scene);
  auto iou = [&](const PipelineConfig& cfg) {
    auto r = run_fuse(cube.scene.input, cfg, cube.backend.get());
    auto j = evaluate_segmentation(r.bundle, r.field, gt, cube.scene.seg_queries, {}, cube.backend.get());
    return j["per_query"][0]["iou"].get<double>();
  };
  PipelineConfig no_ml;
  no_ml.ablations.no_multilevel = true;
  const double full = iou({}), ablated = iou(no_ml);
  return {full > ablated, "red cube IoU " + fmt(full) + " (full) vs " + fmt(ablated) + " (--no-multilevel)"};
}

Outcome desk_run(Cube& cube) {
  const auto t0 = Clock::now();
  auto input = read_bundle(cube.dir / "bundle");
  auto r = run_fuse(input, {}, cube.backend.get());
  write_fused_bundle(r.bundle, r.field, cube.dir / "fused");
  auto fused = read_bundle(cube.dir / "fused");
  auto field = fuse_views(fused);
  auto q = run_query(fused, field, "red cube", {});
  const double secs = seconds_since(t0);
  return {secs < 10.0 && q.selected_count > 0,
          fmt(secs) + " s for fuse + query, " + std::to_string(q.selected_count) + " points selected"};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SEMFIELD_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism(Cube& cube) {
  const auto in = (cube.dir / "bundle").string(), be = (cube.dir / "backend").string();
  const auto a = (cube.dir / "run_a").string(), b = (cube.dir / "run_b").string();
  const int ca = run_cli("fuse '" + in + "' '" + a + "' --fixture-backend '" + be + "'");
  const int cb = run_cli("fuse '" + in + "' '" + b + "' --fixture-backend '" + be + "'");
  if (ca != 0 || cb != 0) return {false, "fuse exited with " + std::to_string(ca) + "/" + std::to_string(cb)};
  const auto sa = snapshot(a), sb = snapshot(b);
  return {sa == sb && !sa.empty(), std::to_string(sa.size()) + " files compared"};
}

}  // namespace

int main() {
  Cube cube;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"aggregation keeps unit norm", slerp_norms},
      {"aggregation improves the closer-to-query embedding", restricted_improvement},
      {"windowed distance equals brute force", distance_oracle},
      {"ensemble labels equal smallest covering mask", ensemble_oracle},
      {"metrics equal brute force", metrics_oracle},
      {"refinement lowers depth error and anomaly count", [&] { return refinement_direction(cube); }},
      {"multi-level disambiguation raises query IoU", [&] { return multilevel_ablation(cube); }},
      {"desk-scale fuse and query under 10 s", [&] { return desk_run(cube); }},
      {"fuse output is byte-identical across runs", [&] { return determinism(cube); }},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << " (" << o.detail << ")" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
