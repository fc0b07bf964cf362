#pragma once

// End-to-end fusion: normalize -> multi-level -> cross-view -> ensemble ->
// anomaly detection -> refinement -> field assembly, with per-stage timing.

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "semfield/aggregation.hpp"
#include "semfield/anomaly.hpp"
#include "semfield/backend.hpp"
#include "semfield/bundle.hpp"
#include "semfield/disambiguation.hpp"
#include "semfield/field.hpp"
#include "semfield/query.hpp"

namespace semfield {

struct Ablations {
  bool no_multilevel = false;
  bool no_crossview = false;
  bool no_global_norm = false;
  bool no_refine = false;

  bool operator==(const Ablations&) const = default;
};

struct PipelineConfig {
  double containment_threshold = kDefaultContainmentThreshold;
  AnomalyConfig anomaly;
  double query_threshold = kDefaultQueryThreshold;
  Ablations ablations;
  /// Run the cross-view pass before the multi-level pass.
  bool crossview_first = false;
  BackendDescriptor backend;

  void validate() const {
    if (!(containment_threshold > 0.0 && containment_threshold <= 1.0)) throw Error("containment_threshold must lie in (0, 1]");
    anomaly.validate();
    if (!(query_threshold >= 0.0 && query_threshold <= 1.0)) throw Error("query threshold must lie in [0, 1]");
  }

  json to_json() const {
    return {{"containment_threshold", containment_threshold},
            {"anomaly", {{"window", anomaly.window}, {"threshold", anomaly.threshold}}},
            {"query_threshold", query_threshold},
            {"ablations",
             {{"no_multilevel", ablations.no_multilevel},
              {"no_crossview", ablations.no_crossview},
              {"no_global_norm", ablations.no_global_norm},
              {"no_refine", ablations.no_refine}}},
            {"disambiguation_order", crossview_first ? "crossview-first" : "multilevel-first"},
            {"backend", backend.to_json()}};
  }

  /// Keys missing from `j` keep their defaults.
  static PipelineConfig from_json(const json& j) {
    PipelineConfig c;
    if (j.is_null()) return c;
    try {
      c.containment_threshold = j.value("containment_threshold", c.containment_threshold);
      if (j.contains("anomaly")) {
        c.anomaly.window = j["anomaly"].value("window", c.anomaly.window);
        c.anomaly.threshold = j["anomaly"].value("threshold", c.anomaly.threshold);
      }
      c.query_threshold = j.value("query_threshold", c.query_threshold);
      if (j.contains("ablations")) {
        const auto& a = j["ablations"];
        c.ablations.no_multilevel = a.value("no_multilevel", false);
        c.ablations.no_crossview = a.value("no_crossview", false);
        c.ablations.no_global_norm = a.value("no_global_norm", false);
        c.ablations.no_refine = a.value("no_refine", false);
      }
      const auto order = j.value("disambiguation_order", std::string("multilevel-first"));
      if (order != "multilevel-first" && order != "crossview-first") throw Error("unknown disambiguation_order \"" + order + "\"");
      c.crossview_first = order == "crossview-first";
      if (j.contains("backend")) c.backend = BackendDescriptor::from_json(j["backend"]);
    } catch (const json::exception& e) {
      throw Error(std::string("invalid pipeline config: ") + e.what());
    }
    c.validate();
    return c;
  }
};

struct StageTiming {
  std::string name;
  double seconds = 0.0;
  bool skipped = false;
};

struct TimingReport {
  std::vector<StageTiming> stages;
  double wall_seconds = 0.0;

  double total_seconds() const {
    double t = 0.0;
    for (const auto& s : stages) t += s.seconds;
    return t;
  }

  json to_json() const {
    json stages_json = json::array();
    for (const auto& s : stages) stages_json.push_back({{"name", s.name}, {"seconds", s.seconds}, {"skipped", s.skipped}});
    return {{"stages", stages_json}, {"total_seconds", total_seconds()}, {"wall_seconds", wall_seconds}};
  }
};

struct FuseResult {
  SceneBundle bundle;
  SemanticField field;
  TimingReport timing;
};

/// Runs the fusion pipeline on an input bundle. Works on a copy; any stage
/// error propagates before anything is returned.
inline FuseResult run_fuse(const SceneBundle& input, const PipelineConfig& cfg, Backend* backend) {
  cfg.validate();
  using clock = std::chrono::steady_clock;
  FuseResult result;
  auto& timing = result.timing;
  const auto start = clock::now();
  auto last = start;
  auto stage = [&](const char* name, bool skipped, const std::function<void()>& body) {
    if (!skipped) body();
    const auto now = clock::now();
    timing.stages.push_back({name, std::chrono::duration<double>(now - last).count(), skipped});
    last = now;
  };

  SceneBundle b = input;
  EmbeddingTable table;
  stage("normalize", false, [&] { table = normalize_rows(b.mask_embeddings); });

  auto multilevel = [&] {
    stage("multi_level", cfg.ablations.no_multilevel, [&] {
      auto hierarchies = build_all_hierarchies(b, cfg.containment_threshold);
      table = multi_level_disambiguate(hierarchies, b, std::move(table));
    });
  };
  auto crossview = [&] {
    stage("cross_view", cfg.ablations.no_crossview, [&] { table = cross_view_disambiguate(b, std::move(table)); });
  };
  if (cfg.crossview_first) {
    crossview();
    multilevel();
  } else {
    multilevel();
    crossview();
  }

  stage("ensemble", false, [&] {
    b.label_maps = ensemble_pixel_embeddings(b);
    b.field_embeddings = as_field_table(b, table);
  });

  stage("anomaly", false, [&] {
    if (b.pointmaps.empty()) {
      if (!backend || !backend->has(kCapPointmaps)) {
        throw Error("bundle has no pointmaps and no pointmap backend is configured");
      }
      std::vector<Image> images;
      for (const auto& v : b.views) images.push_back(v.image);
      auto predicted = backend->predict_pointmaps(images);
      for (std::size_t v = 0; v < predicted.size(); ++v) {
        b.pointmaps.emplace_back(static_cast<std::uint32_t>(v), std::move(predicted[v]));
      }
    }
    annotate_anomalies(b, cfg.anomaly);
  });

  stage("refine", cfg.ablations.no_refine, [&] {
    if (!backend) throw Error("refinement needs a pointmap backend (pass --no-refine to skip it)");
    b = repredict_smoothed(b, *backend, cfg.anomaly);
  });

  b.manifest.config = cfg.to_json();
  stage("fuse", false, [&] { result.field = fuse_views(b); });
  timing.wall_seconds = std::chrono::duration<double>(clock::now() - start).count();
  result.bundle = std::move(b);
  return result;
}

/// Standalone refinement of an already fused bundle.
inline FuseResult run_refine(const SceneBundle& input, const PipelineConfig& cfg, Backend& backend) {
  cfg.validate();
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  FuseResult r;
  auto t0 = clock::now();
  r.bundle = refine_pointmaps(input, backend, cfg.anomaly);
  r.bundle.manifest.config = cfg.to_json();
  auto t1 = clock::now();
  r.field = fuse_views(r.bundle);
  auto t2 = clock::now();
  r.timing.stages.push_back({"refine", std::chrono::duration<double>(t1 - t0).count(), false});
  r.timing.stages.push_back({"fuse", std::chrono::duration<double>(t2 - t1).count(), false});
  r.timing.wall_seconds = std::chrono::duration<double>(t2 - start).count();
  return r;
}

/// Pipeline configuration a fused bundle was produced with (defaults for raw bundles).
inline PipelineConfig config_of(const SceneBundle& b) { return PipelineConfig::from_json(b.manifest.config); }

}  // namespace semfield
