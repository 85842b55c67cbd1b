#pragma once

#include <openssl/evp.h>

#include <cstring>
#include <string>
#include <vector>

#include "amplify/common.hpp"

namespace amplify {

// Incremental SHA-256; used for checkpoint/dataset provenance hashes.
class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    AMPLIFY_CHECK(ctx_ != nullptr, "EVP_MD_CTX_new failed");
    AMPLIFY_CHECK(EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) == 1, "digest init failed");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* ptr, size_t len) {
    AMPLIFY_CHECK(EVP_DigestUpdate(ctx_, ptr, len) == 1, "digest update failed");
  }
  void update(const std::string& s) { update(s.data(), s.size()); }
  template <typename T>
  void update_vector(const std::vector<T>& v) {
    update(v.data(), v.size() * sizeof(T));
  }

  std::string hex() {
    unsigned char out[EVP_MAX_MD_SIZE];
    unsigned int n = 0;
    AMPLIFY_CHECK(EVP_DigestFinal_ex(ctx_, out, &n) == 1, "digest final failed");
    static const char* k = "0123456789abcdef";
    std::string h;
    h.reserve(2 * n);
    for (unsigned int i = 0; i < n; ++i) {
      h.push_back(k[out[i] >> 4]);
      h.push_back(k[out[i] & 0xf]);
    }
    return h;
  }

 private:
  EVP_MD_CTX* ctx_;
};

inline std::string sha256_hex(const void* ptr, size_t len) {
  Sha256 h;
  h.update(ptr, len);
  return h.hex();
}

inline std::string sha256_hex(const std::string& s) { return sha256_hex(s.data(), s.size()); }

}  // namespace amplify
