#pragma once

// Read-only HTTP API over a fused bundle:
//   GET  /api/scene                 summary JSON (n, N, d, bounds, ...)
//   GET  /api/points?decimate=k     tensor container, f32 M x 6 (x, y, z, r, g, b)
//   POST /api/query                 {"text", "threshold"} -> multipart: summary JSON,
//                                   selection (u8 N), similarity (f32 N)
//   GET  /api/views/{id}/image      tensor container, u8 3 x H x W
// Errors are JSON {"code", "message"} with a 4xx/5xx status.

#include <limits>
#include <string>

#include "httplib.h"
#include "semfield/pipeline.hpp"
#include "semfield/wire.hpp"

namespace semfield {

class FieldServer {
 public:
  FieldServer(SceneBundle bundle, PipelineConfig cfg, Backend* embedder = nullptr)
      : bundle_(std::move(bundle)), cfg_(std::move(cfg)), embedder_(embedder), field_(fuse_views(bundle_)) {
    routes();
  }

  /// Binds to host:port (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port) {
    int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    return bound;
  }

  /// Blocks until stop().
  void listen() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

  const SemanticField& field() const { return field_; }

  json scene_summary() const {
    std::array<float, 3> lo{std::numeric_limits<float>::max(), std::numeric_limits<float>::max(), std::numeric_limits<float>::max()};
    std::array<float, 3> hi{std::numeric_limits<float>::lowest(), std::numeric_limits<float>::lowest(), std::numeric_limits<float>::lowest()};
    for (const auto& p : field_.points) {
      for (std::size_t k = 0; k < 3; ++k) {
        lo[k] = std::min(lo[k], p[k]);
        hi[k] = std::max(hi[k], p[k]);
      }
    }
    return {{"n", bundle_.views.size()},
            {"N", field_.size()},
            {"d", bundle_.manifest.dim},
            {"height", bundle_.manifest.height},
            {"width", bundle_.manifest.width},
            {"bounds", {{"min", lo}, {"max", hi}}},
            {"default_threshold", cfg_.query_threshold}};
  }

 private:
  static void fail(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    res.status = status;
    res.set_content(json{{"code", code}, {"message", message}}.dump(), "application/json");
  }

  void routes() {
    server_.Get("/api/scene", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(scene_summary().dump(), "application/json");
    });

    server_.Get("/api/points", [this](const httplib::Request& req, httplib::Response& res) {
      std::size_t k = 1;
      if (req.has_param("decimate")) {
        try {
          std::size_t used = 0;
          const auto s = req.get_param_value("decimate");
          long long v = std::stoll(s, &used);
          if (used != s.size() || v < 1) throw std::invalid_argument("range");
          k = static_cast<std::size_t>(v);
        } catch (const std::exception&) {
          return fail(res, 400, "bad_request", "decimate must be a positive integer");
        }
      }
      std::vector<float> flat;
      std::uint64_t m = 0;
      for (std::size_t p = 0; p < field_.size(); p += k, ++m) {
        const auto& x = field_.points[p];
        const auto& c = field_.colors[p];
        flat.insert(flat.end(), {x[0], x[1], x[2], float(c[0]), float(c[1]), float(c[2])});
      }
      res.set_content(encode_tensor(TensorBlock::from<float>({m, 6}, flat)), "application/octet-stream");
    });

    server_.Post("/api/query", [this](const httplib::Request& req, httplib::Response& res) {
      std::string text;
      double threshold = cfg_.query_threshold;
      try {
        auto j = json::parse(req.body);
        text = j.at("text").get<std::string>();
        if (j.contains("threshold")) threshold = j["threshold"].get<double>();
      } catch (const json::exception& e) {
        return fail(res, 400, "bad_request", std::string("expected {\"text\", \"threshold\"}: ") + e.what());
      }
      if (text.empty()) return fail(res, 400, "bad_request", "query text is empty");
      if (!(threshold >= 0.0 && threshold <= 1.0)) return fail(res, 400, "bad_request", "threshold must lie in [0, 1]");
      QueryResult r;
      try {
        r = run_query(bundle_, field_, text, {threshold, !cfg_.ablations.no_global_norm}, embedder_);
      } catch (const BackendError& e) {
        return fail(res, 502, "backend_error", e.what());
      } catch (const Error& e) {
        return fail(res, 422, "query_failed", e.what());
      }
      WirePayload out;
      out.manifest = query_summary(r, field_.size());
      out.tensors.emplace_back("selection", TensorBlock::from<std::uint8_t>({r.selected.size()}, r.selected));
      out.tensors.emplace_back("similarity", TensorBlock::from<float>({r.similarity.size()}, r.similarity));
      auto enc = encode_payload(out);
      res.set_content(enc.body, enc.content_type);
    });

    server_.Get(R"(/api/views/(\d+)/image)", [this](const httplib::Request& req, httplib::Response& res) {
      std::size_t id = 0;
      try {
        id = std::stoul(req.matches[1].str());
      } catch (const std::exception&) {
        return fail(res, 400, "bad_request", "bad view id");
      }
      if (id >= bundle_.views.size()) return fail(res, 404, "not_found", "no view " + req.matches[1].str());
      const auto& img = bundle_.views[id].image;
      res.set_content(encode_tensor(TensorBlock::from<std::uint8_t>({3, img.height, img.width}, img.data)),
                      "application/octet-stream");
    });

    server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string msg = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        msg = e.what();
      } catch (...) {
      }
      fail(res, 500, "internal", msg);
    });
  }

  SceneBundle bundle_;
  PipelineConfig cfg_;
  Backend* embedder_;
  SemanticField field_;
  httplib::Server server_;
};

}  // namespace semfield
