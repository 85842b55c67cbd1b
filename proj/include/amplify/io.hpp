#pragma once

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "amplify/common.hpp"
#include "amplify/tensor.hpp"

namespace amplify {

static_assert(std::endian::native == std::endian::little,
              "array files are raw little-endian; big-endian hosts unsupported");

namespace fs = std::filesystem;

inline std::vector<char> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  AMPLIFY_CHECK(in.good(), "cannot open for read: ", path.string());
  in.seekg(0, std::ios::end);
  const auto len = static_cast<size_t>(in.tellg());
  in.seekg(0);
  std::vector<char> buf(len);
  in.read(buf.data(), static_cast<std::streamsize>(len));
  AMPLIFY_CHECK(in.good(), "short read: ", path.string());
  return buf;
}

inline std::string read_file_text(const fs::path& path) {
  auto b = read_file_bytes(path);
  return std::string(b.begin(), b.end());
}

inline void write_file_bytes(const fs::path& path, const void* ptr, size_t len) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  AMPLIFY_CHECK(out.good(), "cannot open for write: ", path.string());
  out.write(static_cast<const char*>(ptr), static_cast<std::streamsize>(len));
  AMPLIFY_CHECK(out.good(), "short write: ", path.string());
}

inline void write_file_text(const fs::path& path, const std::string& s) {
  write_file_bytes(path, s.data(), s.size());
}

// Raw row-major array files, dtype declared by the manifest that points at them.
template <typename T>
void write_array(const fs::path& path, const Tensor<T>& t) {
  write_file_bytes(path, t.data.data(), t.data.size() * sizeof(T));
}

template <typename T>
Tensor<T> read_array(const fs::path& path, std::vector<i64> shape) {
  Tensor<T> t(std::move(shape));
  auto bytes = read_file_bytes(path);
  AMPLIFY_CHECK(bytes.size() == t.data.size() * sizeof(T),
                "array size mismatch for ", path.string(), ": got ", bytes.size(), " bytes, want ",
                t.data.size() * sizeof(T));
  std::memcpy(t.data.data(), bytes.data(), bytes.size());
  return t;
}

}  // namespace amplify
