#pragma once

#include <json.hpp>
#include <map>
#include <string>

#include "amplify/hash.hpp"
#include "amplify/io.hpp"
#include "amplify/nn.hpp"

namespace amplify {

// Self-describing checkpoint container:
//   magic line, u64 header length, JSON header, raw little-endian f32 blob.
// The content hash covers the header (with the hash field blanked) plus the
// parameter bytes; downstream stages embed upstream hashes and loaders refuse
// mismatched chains.
namespace ckpt {

constexpr const char* kMagic = "AMPLIFYCKPT1\n";

struct Header {
  std::string kind;                                 // tokenizer | forward | inverse
  u64 seed = 0;
  std::string config_text;                          // canonical experiment config
  std::string config_hash;
  std::map<std::string, std::string> upstream;      // name -> content hash
  nlohmann::ordered_json extra;                     // model-specific echo
  std::string content_hash;                         // filled at save / verified at load
};

inline nlohmann::ordered_json header_json(const Header& h, const ParamStore<float>& ps,
                                          const std::string& content_hash) {
  nlohmann::ordered_json j;
  j["format"] = kMagic;
  j["kind"] = h.kind;
  j["seed"] = h.seed;
  j["config_hash"] = h.config_hash;
  j["config"] = h.config_text;
  j["upstream"] = h.upstream;
  j["extra"] = h.extra.is_null() ? nlohmann::ordered_json::object() : h.extra;
  j["params"] = nlohmann::ordered_json::array();
  for (const auto& e : ps.entries()) {
    j["params"].push_back(nlohmann::ordered_json{{"name", e.name}, {"shape", e.value.shape}});
  }
  j["dtype"] = "f32";
  j["content_hash"] = content_hash;
  return j;
}

inline std::string compute_content_hash(const Header& h, const ParamStore<float>& ps) {
  Sha256 sha;
  sha.update(header_json(h, ps, "").dump());
  for (const auto& e : ps.entries()) sha.update_vector(e.value.data);
  return sha.hex();
}

inline std::string save(const fs::path& path, Header h, const ParamStore<float>& ps) {
  h.content_hash = compute_content_hash(h, ps);
  const std::string header = header_json(h, ps, h.content_hash).dump();
  std::string out;
  out += kMagic;
  const u64 len = header.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof(len));
  out += header;
  for (const auto& e : ps.entries()) {
    out.append(reinterpret_cast<const char*>(e.value.data.data()),
               e.value.data.size() * sizeof(float));
  }
  write_file_bytes(path, out.data(), out.size());
  return h.content_hash;
}

// Reads the header and fills an already-constructed ParamStore whose layout
// must match exactly (names and shapes in order).
inline Header load(const fs::path& path, ParamStore<float>& ps) {
  const auto bytes = read_file_bytes(path);
  const size_t magic_len = std::string(kMagic).size();
  AMPLIFY_CHECK(bytes.size() > magic_len + 8 &&
                    std::string(bytes.data(), magic_len) == kMagic,
                "not a checkpoint file: ", path.string());
  u64 header_len = 0;
  std::memcpy(&header_len, bytes.data() + magic_len, sizeof(header_len));
  const size_t blob_off = magic_len + 8 + header_len;
  AMPLIFY_CHECK(bytes.size() >= blob_off, "truncated checkpoint header");
  const auto j = nlohmann::ordered_json::parse(std::string(bytes.data() + magic_len + 8, header_len));

  Header h;
  h.kind = j["kind"].get<std::string>();
  h.seed = j["seed"].get<u64>();
  h.config_hash = j["config_hash"].get<std::string>();
  h.config_text = j["config"].get<std::string>();
  for (const auto& [k, v] : j["upstream"].items()) h.upstream[k] = v.get<std::string>();
  h.extra = j["extra"];
  h.content_hash = j["content_hash"].get<std::string>();

  AMPLIFY_CHECK(j["params"].size() == static_cast<size_t>(ps.count()),
                "checkpoint parameter count mismatch for ", path.string());
  size_t off = blob_off;
  for (i64 i = 0; i < ps.count(); ++i) {
    auto& e = ps.entry(static_cast<int>(i));
    const auto& spec = j["params"][static_cast<size_t>(i)];
    AMPLIFY_CHECK(spec["name"].get<std::string>() == e.name, "checkpoint parameter order mismatch: ",
                  spec["name"].get<std::string>(), " vs ", e.name);
    std::vector<i64> shape;
    for (const auto& d : spec["shape"]) shape.push_back(d.get<i64>());
    AMPLIFY_CHECK(shape == e.value.shape, "checkpoint shape mismatch for ", e.name);
    const size_t n = e.value.data.size() * sizeof(float);
    AMPLIFY_CHECK(off + n <= bytes.size(), "truncated checkpoint blob");
    std::memcpy(e.value.data.data(), bytes.data() + off, n);
    off += n;
  }
  AMPLIFY_CHECK(off == bytes.size(), "checkpoint has trailing bytes");

  // Round-trip integrity: recompute and compare.
  Header probe = h;
  AMPLIFY_CHECK(compute_content_hash(probe, ps) == h.content_hash,
                "checkpoint content hash mismatch: ", path.string());
  return h;
}

// Header-only peek (no parameter loading), for provenance checks.
inline Header peek(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  const size_t magic_len = std::string(kMagic).size();
  AMPLIFY_CHECK(bytes.size() > magic_len + 8 &&
                    std::string(bytes.data(), magic_len) == kMagic,
                "not a checkpoint file: ", path.string());
  u64 header_len = 0;
  std::memcpy(&header_len, bytes.data() + magic_len, sizeof(header_len));
  const auto j = nlohmann::ordered_json::parse(std::string(bytes.data() + magic_len + 8, header_len));
  Header h;
  h.kind = j["kind"].get<std::string>();
  h.seed = j["seed"].get<u64>();
  h.config_hash = j["config_hash"].get<std::string>();
  h.config_text = j["config"].get<std::string>();
  for (const auto& [k, v] : j["upstream"].items()) h.upstream[k] = v.get<std::string>();
  h.extra = j["extra"];
  h.content_hash = j["content_hash"].get<std::string>();
  return h;
}

}  // namespace ckpt

}  // namespace amplify
