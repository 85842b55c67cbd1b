#pragma once

#include <cmath>
#include <vector>

#include "amplify/common.hpp"
#include "amplify/trackprep.hpp"

namespace amplify {

// Finite scalar quantization with an implicit codebook: each latent dimension
// is squashed by a bounded odd map and rounded to one of L_i levels. No
// learned codebook, no commitment loss.
//
// Per dimension with L levels (eps keeps the inverse map finite at the edges):
//   half  = (L - 1) * (1 + eps) / 2
//   g(x)  = tanh(x) * half               the squash, odd and bounded
//   digit = round(g(x) + (L - 1) / 2)    integer in [0, L)
//   center = (digit - (L - 1) / 2) / ((L - 1) / 2)   normalized, in [-1, 1]
// Even L places centers on half-integer levels, so none sits at exactly zero.
struct FsqConfig {
  std::vector<int> levels;

  static constexpr double kEps = 1e-3;

  i64 codebook_size() const {
    i64 p = 1;
    for (int l : levels) p *= l;
    return p;
  }
  int dims() const { return static_cast<int>(levels.size()); }

  void validate() const {
    AMPLIFY_CHECK(!levels.empty(), "fsq levels empty");
    for (int l : levels) AMPLIFY_CHECK(l >= 2, "fsq level must be >= 2, got ", l);
  }

  double half(int i) const { return (levels[static_cast<size_t>(i)] - 1) * (1.0 + kEps) / 2.0; }
  // Scale that maps centered levels to normalized centers.
  double center_scale(int i) const { return (levels[static_cast<size_t>(i)] - 1) / 2.0; }
};

// Digits of one quantized latent vector, digit i in [0, L_i).
struct Code {
  std::vector<i64> digits;
};

// Mixed-radix packing, least-significant dimension first:
// index = sum_i digits[i] * prod_{j<i} L_j.
inline i64 code_to_index(const Code& code, const FsqConfig& cfg) {
  AMPLIFY_CHECK(static_cast<int>(code.digits.size()) == cfg.dims(), "code dims mismatch");
  i64 index = 0, radix = 1;
  for (int i = 0; i < cfg.dims(); ++i) {
    const i64 d = code.digits[static_cast<size_t>(i)];
    AMPLIFY_CHECK(d >= 0 && d < cfg.levels[static_cast<size_t>(i)], "digit out of range: ", d);
    index += d * radix;
    radix *= cfg.levels[static_cast<size_t>(i)];
  }
  return index;
}

inline Code index_to_code(i64 index, const FsqConfig& cfg) {
  AMPLIFY_CHECK(index >= 0 && index < cfg.codebook_size(), "index out of range: ", index);
  Code code;
  code.digits.resize(static_cast<size_t>(cfg.dims()));
  for (int i = 0; i < cfg.dims(); ++i) {
    const i64 l = cfg.levels[static_cast<size_t>(i)];
    code.digits[static_cast<size_t>(i)] = index % l;
    index /= l;
  }
  return code;
}

// Squash a raw latent component for dimension i (the differentiable path).
template <typename T>
T fsq_squash(const FsqConfig& cfg, int i, T x) {
  AMPLIFY_CHECK(std::isfinite(static_cast<double>(x)), "non-finite latent");
  return static_cast<T>(std::tanh(static_cast<double>(x)) * cfg.half(i));
}

// Normalized squash, directly comparable to quantized centers.
template <typename T>
T fsq_squash_norm(const FsqConfig& cfg, int i, T x) {
  return static_cast<T>(static_cast<double>(fsq_squash(cfg, i, x)) / cfg.center_scale(i));
}

// Quantize one latent vector: returns digits and the normalized level centers.
// Training uses the straight-through contract: the quantized value used on the
// training path is squash_norm(x) + (center - squash_norm(x)) treated as a
// constant, so its sensitivity w.r.t. x is the squash path alone.
template <typename T>
Code fsq_quantize(const FsqConfig& cfg, const T* latent, T* centers_norm = nullptr) {
  Code code;
  code.digits.resize(static_cast<size_t>(cfg.dims()));
  for (int i = 0; i < cfg.dims(); ++i) {
    const int l = cfg.levels[static_cast<size_t>(i)];
    const double g = static_cast<double>(fsq_squash(cfg, i, latent[i]));
    const i64 digit =
        std::clamp<i64>(round_even(g + (l - 1) / 2.0), 0, static_cast<i64>(l) - 1);
    code.digits[static_cast<size_t>(i)] = digit;
    if (centers_norm != nullptr) {
      centers_norm[i] =
          static_cast<T>((static_cast<double>(digit) - (l - 1) / 2.0) / cfg.center_scale(i));
    }
  }
  return code;
}

// Pre-squash representative of a code's level centers: g(x) lands exactly on
// the centered level, so fsq_quantize of this vector returns the same code.
template <typename T>
std::vector<T> fsq_dequantize_latent(const FsqConfig& cfg, const Code& code) {
  std::vector<T> out(static_cast<size_t>(cfg.dims()));
  for (int i = 0; i < cfg.dims(); ++i) {
    const int l = cfg.levels[static_cast<size_t>(i)];
    const double level = static_cast<double>(code.digits[static_cast<size_t>(i)]) - (l - 1) / 2.0;
    out[static_cast<size_t>(i)] = static_cast<T>(std::atanh(level / cfg.half(i)));
  }
  return out;
}

// Normalized level centers of a code, the decoder-facing representation.
template <typename T>
std::vector<T> fsq_centers(const FsqConfig& cfg, const Code& code) {
  std::vector<T> out(static_cast<size_t>(cfg.dims()));
  for (int i = 0; i < cfg.dims(); ++i) {
    const int l = cfg.levels[static_cast<size_t>(i)];
    const double level = static_cast<double>(code.digits[static_cast<size_t>(i)]) - (l - 1) / 2.0;
    out[static_cast<size_t>(i)] = static_cast<T>(level / cfg.center_scale(i));
  }
  return out;
}

}  // namespace amplify
