#pragma once

// Backend wire payloads: a JSON manifest part followed by named tensor parts,
// carried as multipart/form-data. Requests and responses share this shape.

#include <algorithm>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "semfield/error.hpp"
#include "semfield/tensor.hpp"

namespace semfield {

struct WirePayload {
  nlohmann::json manifest = nlohmann::json::object();
  std::vector<std::pair<std::string, TensorBlock>> tensors;

  const TensorBlock& tensor(std::string_view name) const {
    for (const auto& [n, t] : tensors) {
      if (n == name) return t;
    }
    throw BackendError("payload has no tensor named " + std::string(name));
  }
};

struct EncodedPayload {
  std::string content_type;
  std::string body;
};

namespace detail {

inline bool valid_part_name(std::string_view name) {
  if (name.empty() || name == "manifest") return false;
  for (char c : name) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-' || c == '.';
    if (!ok) return false;
  }
  return true;
}

inline std::string part(std::string_view boundary, std::string_view name, std::string_view type,
                        std::string_view content) {
  std::string s;
  s += "--";
  s += boundary;
  s += "\r\nContent-Disposition: form-data; name=\"";
  s += name;
  s += "\"\r\nContent-Type: ";
  s += type;
  s += "\r\n\r\n";
  s += content;
  s += "\r\n";
  return s;
}

}  // namespace detail

/// Deterministic encoding. The boundary is derived from the content and bumped
/// until it occurs nowhere in the parts.
inline EncodedPayload encode_payload(const WirePayload& payload) {
  nlohmann::json manifest = payload.manifest;
  nlohmann::json names = nlohmann::json::array();
  std::vector<std::string> blobs;
  for (const auto& [name, t] : payload.tensors) {
    if (!detail::valid_part_name(name)) throw Error("invalid tensor part name \"" + name + "\"");
    names.push_back(name);
    blobs.push_back(encode_tensor(t));
  }
  manifest["tensors"] = names;
  const std::string manifest_text = manifest.dump();

  std::uint64_t seed = fnv1a64({reinterpret_cast<const std::uint8_t*>(manifest_text.data()), manifest_text.size()});
  std::string boundary;
  for (;; ++seed) {
    boundary = "pe3r-" + hex64(seed);
    bool clash = manifest_text.find(boundary) != std::string::npos;
    for (const auto& b : blobs) clash = clash || b.find(boundary) != std::string::npos;
    if (!clash) break;
  }

  EncodedPayload out;
  out.content_type = "multipart/form-data; boundary=" + boundary;
  out.body = detail::part(boundary, "manifest", "application/json", manifest_text);
  for (std::size_t i = 0; i < blobs.size(); ++i) {
    out.body += detail::part(boundary, payload.tensors[i].first, "application/octet-stream", blobs[i]);
  }
  out.body += "--" + boundary + "--\r\n";
  return out;
}

/// Parses a multipart payload. Every tensor listed in the manifest must be present.
inline WirePayload decode_payload(std::string_view body, std::string_view content_type) {
  auto bpos = content_type.find("boundary=");
  if (bpos == std::string_view::npos) throw BackendError("multipart payload without boundary");
  std::string boundary(content_type.substr(bpos + 9));
  if (auto semi = boundary.find(';'); semi != std::string::npos) boundary.resize(semi);
  if (boundary.size() >= 2 && boundary.front() == '"' && boundary.back() == '"') boundary = boundary.substr(1, boundary.size() - 2);
  const std::string delim = "--" + boundary;

  std::vector<std::pair<std::string, std::string>> parts;
  std::size_t pos = body.find(delim);
  if (pos == std::string_view::npos) throw BackendError("multipart payload missing first boundary");
  while (true) {
    pos += delim.size();
    if (body.substr(pos, 2) == "--") break;
    if (body.substr(pos, 2) != "\r\n") throw BackendError("malformed multipart boundary line");
    pos += 2;
    auto header_end = body.find("\r\n\r\n", pos);
    if (header_end == std::string_view::npos) throw BackendError("multipart part without header terminator");
    std::string_view headers = body.substr(pos, header_end - pos);
    auto npos = headers.find("name=\"");
    if (npos == std::string_view::npos) throw BackendError("multipart part without a name");
    auto nend = headers.find('"', npos + 6);
    std::string name(headers.substr(npos + 6, nend - npos - 6));
    std::size_t content_start = header_end + 4;
    auto next = body.find("\r\n" + delim, content_start);
    if (next == std::string_view::npos) throw BackendError("multipart part \"" + name + "\" is unterminated");
    parts.emplace_back(std::move(name), std::string(body.substr(content_start, next - content_start)));
    pos = next + 2;
  }

  WirePayload out;
  bool have_manifest = false;
  for (const auto& [name, content] : parts) {
    if (name == "manifest") {
      try {
        out.manifest = nlohmann::json::parse(content);
      } catch (const nlohmann::json::exception& e) {
        throw BackendError(std::string("payload manifest is not JSON: ") + e.what());
      }
      have_manifest = true;
    }
  }
  if (!have_manifest) throw BackendError("payload has no manifest part");
  if (out.manifest.contains("tensors")) {
    for (const auto& n : out.manifest["tensors"]) {
      const auto name = n.get<std::string>();
      auto it = std::find_if(parts.begin(), parts.end(), [&](const auto& p) { return p.first == name; });
      if (it == parts.end()) throw BackendError("payload is missing tensor part \"" + name + "\"");
      try {
        out.tensors.emplace_back(name, decode_tensor(it->second));
      } catch (const BackendError&) {
        throw;
      } catch (const Error& e) {
        throw BackendError("tensor part \"" + name + "\": " + e.what());
      }
    }
    out.manifest.erase("tensors");
  }
  return out;
}

}  // namespace semfield
