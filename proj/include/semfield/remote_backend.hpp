#pragma once

// HTTP client for model servers speaking the backend protocol:
//   GET  /v1/capabilities   -> {"capabilities": [...]}
//   POST /v1/pointmaps      multipart: manifest {"views": n} + view_<i> (u8 3xHxW)
//                           reply:     manifest + pointmap_<i> (f32 HxWx3)
//   POST /v1/embed_text     multipart: manifest {"text": q}
//                           reply:     manifest + embedding (f32 d)
// Failures come back as non-2xx with a JSON body {"code", "message"}.

#include <memory>
#include <string>

#include "httplib.h"
#include "semfield/backend.hpp"
#include "semfield/wire.hpp"

namespace semfield {

class RemoteBackend : public Backend {
 public:
  explicit RemoteBackend(const std::string& endpoint, std::vector<std::string> required = {})
      : endpoint_(endpoint), client_(endpoint) {
    client_.set_connection_timeout(5);
    client_.set_read_timeout(300);
    auto res = client_.Get("/v1/capabilities");
    if (!res) throw BackendError("backend " + endpoint_ + " unreachable: " + httplib::to_string(res.error()));
    check_status(res.value(), "/v1/capabilities");
    try {
      capabilities_ = nlohmann::json::parse(res->body).at("capabilities").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw BackendError("malformed capability reply from " + endpoint_ + ": " + e.what());
    }
    for (const auto& cap : required) {
      if (!has(cap)) throw BackendError("backend " + endpoint_ + " lacks declared capability " + cap);
    }
  }

 protected:
  std::vector<Grid<Vec3f>> do_predict_pointmaps(std::span<const Image> views) override {
    WirePayload req;
    req.manifest = {{"views", views.size()}};
    for (std::size_t v = 0; v < views.size(); ++v) {
      req.tensors.emplace_back("view_" + std::to_string(v),
                               TensorBlock::from<std::uint8_t>({3, views[v].height, views[v].width}, views[v].data));
    }
    auto reply = post("/v1/pointmaps", req);
    std::vector<Grid<Vec3f>> out;
    for (std::size_t v = 0; v < views.size(); ++v) {
      out.push_back(pointmap_from_tensor(reply.tensor("pointmap_" + std::to_string(v)), views[v].height, views[v].width));
    }
    return out;
  }

  std::vector<float> do_embed_text(std::string_view query) override {
    WirePayload req;
    req.manifest = {{"text", std::string(query)}};
    auto reply = post("/v1/embed_text", req);
    const auto& t = reply.tensor("embedding");
    if (t.dtype != DType::f32 || t.shape.size() != 1) throw BackendError("text embedding must be a f32 vector");
    return t.values<float>();
  }

 private:
  void check_status(const httplib::Response& res, const std::string& path) const {
    if (res.status >= 200 && res.status < 300) return;
    std::string code = "error", message = res.body;
    try {
      auto j = nlohmann::json::parse(res.body);
      code = j.value("code", code);
      message = j.value("message", message);
    } catch (const nlohmann::json::exception&) {
    }
    throw BackendError("remote " + path + " failed with status " + std::to_string(res.status) + " (" + code + "): " + message);
  }

  WirePayload post(const std::string& path, const WirePayload& req) {
    auto enc = encode_payload(req);
    auto res = client_.Post(path, enc.body, enc.content_type);
    if (!res) throw BackendError("backend " + endpoint_ + " unreachable: " + httplib::to_string(res.error()));
    check_status(res.value(), path);
    return decode_payload(res->body, res->get_header_value("Content-Type"));
  }

  std::string endpoint_;
  httplib::Client client_;
};

/// Instantiates and handshakes the backend a descriptor names (nullptr for kind "none").
inline std::unique_ptr<Backend> make_backend(const BackendDescriptor& d) {
  if (d.kind == "none") return nullptr;
  if (d.kind == "remote") return std::make_unique<RemoteBackend>(d.endpoint, d.capabilities);
  auto fixture = std::make_unique<FixtureBackend>(d.fixture_root);
  for (const auto& cap : d.capabilities) {
    if (!fixture->has(cap)) throw BackendError("fixture " + d.fixture_root + " lacks declared capability " + cap);
  }
  return fixture;
}

}  // namespace semfield
