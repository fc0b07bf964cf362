// semfield: command-line front end for building, querying and serving
// semantic fields from scene bundles.
//
// Exit status: 0 ok, 1 query matched nothing, 2 error.

#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "semfield/remote_backend.hpp"
#include "semfield/semfield.hpp"
#include "semfield/server.hpp"

namespace {

using namespace semfield;

constexpr int kExitOk = 0;
constexpr int kExitNoMatch = 1;
constexpr int kExitError = 2;

struct ConfigFlags {
  std::string config_path;
  std::optional<double> containment;
  std::optional<int> window;
  std::optional<double> anomaly_threshold;
  std::optional<double> threshold;
  bool no_multilevel = false;
  bool no_crossview = false;
  bool no_global_norm = false;
  bool no_refine = false;
  bool crossview_first = false;
  std::string fixture_backend;
  std::string remote_backend;

  void add_backend(CLI::App* app) {
    auto* fx = app->add_option("--fixture-backend", fixture_backend, "Directory holding a fixture backend");
    auto* rm = app->add_option("--remote-backend", remote_backend, "Base URL of a remote model backend");
    fx->excludes(rm);
  }

  void add_pipeline(CLI::App* app) {
    app->add_option("--config", config_path, "Pipeline configuration (JSON); flags override it")->check(CLI::ExistingFile);
    app->add_option("--containment", containment, "Containment ratio for the mask hierarchy");
    app->add_option("--anomaly-window", window, "Neighbourhood size k for anomaly detection");
    app->add_option("--anomaly-threshold", anomaly_threshold, "Anomaly threshold on the normalized distance");
    app->add_flag("--no-multilevel", no_multilevel, "Skip multi-level disambiguation");
    app->add_flag("--no-crossview", no_crossview, "Skip cross-view disambiguation");
    app->add_flag("--no-global-norm", no_global_norm, "Normalize query similarity per view");
    app->add_flag("--no-refine", no_refine, "Skip pointmap refinement");
    app->add_flag("--crossview-first", crossview_first, "Run cross-view before multi-level disambiguation");
    add_backend(app);
  }

  PipelineConfig resolve(const PipelineConfig& base = {}) const {
    PipelineConfig c = base;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      json j;
      try {
        j = json::parse(in);
      } catch (const json::exception& e) {
        throw Error("cannot parse " + config_path + ": " + e.what());
      }
      c = PipelineConfig::from_json(j);
    }
    if (containment) c.containment_threshold = *containment;
    if (window) c.anomaly.window = *window;
    if (anomaly_threshold) c.anomaly.threshold = *anomaly_threshold;
    if (threshold) c.query_threshold = *threshold;
    c.ablations.no_multilevel = c.ablations.no_multilevel || no_multilevel;
    c.ablations.no_crossview = c.ablations.no_crossview || no_crossview;
    c.ablations.no_global_norm = c.ablations.no_global_norm || no_global_norm;
    c.ablations.no_refine = c.ablations.no_refine || no_refine;
    c.crossview_first = c.crossview_first || crossview_first;
    if (!fixture_backend.empty()) {
      c.backend = BackendDescriptor{};
      c.backend.kind = "fixture";
      c.backend.fixture_root = fixture_backend;
    } else if (!remote_backend.empty()) {
      c.backend = BackendDescriptor{};
      c.backend.kind = "remote";
      c.backend.endpoint = remote_backend;
    }
    c.validate();
    return c;
  }
};

void print_timing(const TimingReport& t, std::ostream& out) {
  for (const auto& s : t.stages) {
    out << "  " << s.name << (s.skipped ? " (skipped)" : "") << ": " << s.seconds * 1000.0 << " ms\n";
  }
  out << "  total: " << t.total_seconds() * 1000.0 << " ms (wall " << t.wall_seconds * 1000.0 << " ms)\n";
}

void write_json(const std::string& path, const json& j) { write_file_bytes(path, j.dump(2) + "\n"); }

SceneBundle load_fused(const std::string& dir) {
  auto b = read_bundle(dir);
  if (b.label_maps.empty() || b.pointmaps.empty()) {
    throw Error(dir + " is not a fused bundle (run `semfield fuse` first)");
  }
  return b;
}

FieldServer* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Build, query and serve semantic 3D fields from multi-view scene bundles"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  // ingest
  std::string ingest_in, ingest_out;
  auto* ingest = app.add_subcommand("ingest", "Validate a bundle and rewrite it in canonical form");
  ingest->add_option("input", ingest_in, "Input bundle directory")->required()->check(CLI::ExistingDirectory);
  ingest->add_option("output", ingest_out, "Canonical output directory (omit to only validate)");

  // fuse
  ConfigFlags fuse_flags;
  std::string fuse_in, fuse_out, fuse_timing;
  auto* fuse = app.add_subcommand("fuse", "Run the full pipeline and write a fused bundle");
  fuse->add_option("input", fuse_in, "Input bundle directory")->required()->check(CLI::ExistingDirectory);
  fuse->add_option("output", fuse_out, "Output bundle directory")->required();
  fuse->add_option("--timing-report", fuse_timing, "Write the per-stage timing report (JSON) here");
  fuse_flags.add_pipeline(fuse);
  fuse->add_option("--threshold", fuse_flags.threshold, "Default query threshold recorded in the bundle");

  // refine
  ConfigFlags refine_flags;
  std::string refine_in, refine_out;
  auto* refine = app.add_subcommand("refine", "Re-predict pointmaps of a fused bundle from smoothed images");
  refine->add_option("input", refine_in, "Fused bundle directory")->required()->check(CLI::ExistingDirectory);
  refine->add_option("output", refine_out, "Output bundle directory")->required();
  refine_flags.add_pipeline(refine);

  // query
  ConfigFlags query_flags;
  std::string query_bundle, query_text, query_export, query_color = "similarity";
  bool query_ascii = false, query_keep = false;
  auto* query = app.add_subcommand("query", "Select the points matching a text query");
  query->add_option("bundle", query_bundle, "Fused bundle directory")->required()->check(CLI::ExistingDirectory);
  query->add_option("text", query_text, "Query text")->required();
  query->add_option("--threshold", query_flags.threshold, "Selection threshold on normalized similarity");
  query->add_flag("--no-global-norm", query_flags.no_global_norm, "Normalize similarity per view");
  query->add_option("--export", query_export, "Write a PLY of the result");
  query->add_option("--color-mode", query_color, "PLY coloring: rgb, label or similarity");
  query->add_flag("--keep-anomalies", query_keep, "Keep anomalous points in the PLY");
  query->add_flag("--ascii", query_ascii, "Write ASCII PLY");
  query_flags.add_backend(query);

  // export-ply
  ConfigFlags export_flags;
  std::string export_bundle, export_out, export_color = "rgb", export_query;
  bool export_ascii = false, export_keep = false;
  auto* exportp = app.add_subcommand("export-ply", "Write the fused point cloud as PLY");
  exportp->add_option("bundle", export_bundle, "Fused bundle directory")->required()->check(CLI::ExistingDirectory);
  exportp->add_option("output", export_out, "PLY path")->required();
  exportp->add_option("--color-mode", export_color, "rgb, label or similarity");
  exportp->add_option("--query", export_query, "Query text for similarity coloring");
  exportp->add_option("--threshold", export_flags.threshold, "Selection threshold for similarity coloring");
  exportp->add_flag("--keep-anomalies", export_keep, "Keep anomalous points");
  exportp->add_flag("--ascii", export_ascii, "Write ASCII PLY");
  export_flags.add_backend(exportp);

  // eval
  ConfigFlags eval_flags;
  std::string eval_pred, eval_gt, eval_queries, eval_out;
  bool eval_no_align = false;
  auto* eval = app.add_subcommand("eval", "Score a fused bundle against ground truth");
  eval->add_option("--pred", eval_pred, "Fused prediction bundle")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--gt", eval_gt, "Ground-truth bundle")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--queries", eval_queries, "JSON array of {text, object_ids}")->check(CLI::ExistingFile);
  eval->add_option("--threshold", eval_flags.threshold, "Selection threshold");
  eval->add_flag("--no-align", eval_no_align, "Skip median scale alignment of depth");
  eval->add_flag("--no-global-norm", eval_flags.no_global_norm, "Normalize similarity per view");
  eval->add_option("--report", eval_out, "Write the report here instead of stdout");
  eval_flags.add_backend(eval);

  // serve
  ConfigFlags serve_flags;
  std::string serve_bundle, serve_host = "127.0.0.1";
  int serve_port = 8080;
  auto* serve = app.add_subcommand("serve", "Serve the query API over a fused bundle");
  serve->add_option("bundle", serve_bundle, "Fused bundle directory")->required()->check(CLI::ExistingDirectory);
  serve->add_option("--host", serve_host, "Bind address");
  serve->add_option("--port", serve_port, "Port (0 picks a free one)");
  serve->add_option("--threshold", serve_flags.threshold, "Default query threshold");
  serve_flags.add_backend(serve);

  // make-fixture
  std::string fixture_name = "two_view_cube", fixture_out;
  auto* make_fixture = app.add_subcommand("make-fixture", "Generate a synthetic scene with bundle, ground truth and backend");
  make_fixture->add_option("output", fixture_out, "Output directory")->required();
  make_fixture->add_option("--scene", fixture_name, "Scene name")->check(CLI::IsMember({"two_view_cube"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (*ingest) {
      auto b = read_bundle(ingest_in);
      std::cout << ingest_in << ": " << b.views.size() << " views, " << b.masks.size() << " masks, d=" << b.manifest.dim
                << ", " << b.manifest.height << "x" << b.manifest.width << "\n";
      if (!ingest_out.empty()) {
        write_bundle(b, ingest_out);
        std::cout << "wrote " << ingest_out << "\n";
      }
      return kExitOk;
    }

    if (*fuse) {
      auto cfg = fuse_flags.resolve();
      auto input = read_bundle(fuse_in);
      auto backend = make_backend(cfg.backend);
      auto result = run_fuse(input, cfg, backend.get());
      write_fused_bundle(result.bundle, result.field, fuse_out);
      std::cout << "fused " << result.field.size() << " points from " << result.bundle.views.size() << " views, "
                << total_anomalies(result.bundle) << " anomalous\n";
      print_timing(result.timing, std::cout);
      if (!fuse_timing.empty()) write_json(fuse_timing, result.timing.to_json());
      return kExitOk;
    }

    if (*refine) {
      auto input = load_fused(refine_in);
      auto cfg = refine_flags.resolve(config_of(input));
      auto backend = make_backend(cfg.backend);
      if (!backend) throw Error("refine needs a pointmap backend (--fixture-backend or --remote-backend)");
      const auto before = total_anomalies(input);
      auto result = run_refine(input, cfg, *backend);
      write_fused_bundle(result.bundle, result.field, refine_out);
      std::cout << "anomalies: " << before << " -> " << total_anomalies(result.bundle) << "\n";
      return kExitOk;
    }

    if (*query) {
      auto b = load_fused(query_bundle);
      auto cfg = query_flags.resolve(config_of(b));
      auto backend = query_flags.fixture_backend.empty() && query_flags.remote_backend.empty() ? nullptr : make_backend(cfg.backend);
      auto field = fuse_views(b);
      auto r = run_query(b, field, query_text, {cfg.query_threshold, !cfg.ablations.no_global_norm}, backend.get());
      std::cout << query_summary(r, field.size()).dump(2) << "\n";
      if (!query_export.empty()) {
        PlyOptions opts{parse_color_mode(query_color), !query_ascii, query_keep};
        export_ply(field, query_export, opts, &r);
      }
      return r.selected_count == 0 ? kExitNoMatch : kExitOk;
    }

    if (*exportp) {
      auto b = load_fused(export_bundle);
      auto cfg = export_flags.resolve(config_of(b));
      auto field = fuse_views(b);
      PlyOptions opts{parse_color_mode(export_color), !export_ascii, export_keep};
      std::optional<QueryResult> r;
      if (!export_query.empty()) {
        auto backend = export_flags.fixture_backend.empty() && export_flags.remote_backend.empty() ? nullptr : make_backend(cfg.backend);
        r = run_query(b, field, export_query, {cfg.query_threshold, !cfg.ablations.no_global_norm}, backend.get());
      }
      export_ply(field, export_out, opts, r ? &*r : nullptr);
      std::cout << "wrote " << exported_vertex_count(field, opts) << " vertices to " << export_out << "\n";
      return kExitOk;
    }

    if (*eval) {
      auto pred = load_fused(eval_pred);
      auto gt = read_bundle(eval_gt);
      auto cfg = eval_flags.resolve(config_of(pred));
      json report;
      report["depth"] = evaluate_depth(pred, gt, !eval_no_align);
      if (!eval_queries.empty()) {
        std::ifstream in(eval_queries);
        json queries = json::parse(in);
        auto backend = eval_flags.fixture_backend.empty() && eval_flags.remote_backend.empty() ? nullptr : make_backend(cfg.backend);
        auto field = fuse_views(pred);
        report["segmentation"] = evaluate_segmentation(
            pred, field, gt, queries, {!eval_no_align, cfg.query_threshold, !cfg.ablations.no_global_norm}, backend.get());
      }
      if (eval_out.empty()) {
        std::cout << report.dump(2) << "\n";
      } else {
        write_json(eval_out, report);
      }
      return kExitOk;
    }

    if (*serve) {
      auto b = load_fused(serve_bundle);
      auto cfg = serve_flags.resolve(config_of(b));
      auto backend = serve_flags.fixture_backend.empty() && serve_flags.remote_backend.empty() ? nullptr : make_backend(cfg.backend);
      FieldServer server(std::move(b), cfg, backend.get());
      const int port = server.bind(serve_host, serve_port);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on http://" << serve_host << ":" << port << std::endl;
      server.listen();
      g_server = nullptr;
      return kExitOk;
    }

    if (*make_fixture) {
      auto scene = synthetic::two_view_cube();
      synthetic::write_scene(scene, fixture_out);
      std::cout << "wrote " << fixture_name << " to " << fixture_out << "\n";
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
