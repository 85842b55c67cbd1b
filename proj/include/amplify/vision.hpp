#pragma once

#include <vector>

#include "amplify/graph.hpp"
#include "amplify/nn.hpp"

namespace amplify {

// Small trainable convolutional encoder producing a fixed 7x7 token grid.
// Stride-2 3x3 stages halve the image down to 8x8 (64 -> 3 stages,
// 128 -> 4), then a valid 2x2 stage lands on 7x7 at the model width.
template <typename T>
struct VisionEncoder {
  struct Stage {
    int w = -1, b = -1;
    int kernel = 3, stride = 2, pad = 1;
  };
  std::vector<Stage> stages;
  int pos = -1;  // [49, hidden]
  int resolution = 64;
  i64 hidden = 0;
  int side = 7;

  static VisionEncoder create(ParamStore<T>& ps, const std::string& prefix, int resolution,
                              std::vector<int> channels, i64 hidden, int side, Rng& rng) {
    AMPLIFY_CHECK(side == 7, "vision grid is 7x7");
    AMPLIFY_CHECK(resolution == 64 || resolution == 128, "unsupported resolution: ", resolution);
    AMPLIFY_CHECK(!channels.empty(), "vision needs at least one conv stage");
    VisionEncoder v;
    v.resolution = resolution;
    v.hidden = hidden;
    v.side = side;
    // Extra stride-2 stages repeat the last width until the map is 8x8.
    int downs = 0;
    for (int r = resolution; r > 8; r /= 2) ++downs;
    while (static_cast<int>(channels.size()) < downs) channels.push_back(channels.back());

    const T s = static_cast<T>(0.05);
    i64 in_ch = 3;
    for (int i = 0; i < downs; ++i) {
      Stage st;
      st.kernel = 3;
      st.stride = 2;
      st.pad = 1;
      st.w = ps.add(strcat_all(prefix, ".conv", i, ".w"),
                    Tensor<T>::randn({3 * 3 * in_ch, channels[static_cast<size_t>(i)]}, rng, s));
      st.b = ps.add(strcat_all(prefix, ".conv", i, ".b"),
                    Tensor<T>::zeros({channels[static_cast<size_t>(i)]}));
      v.stages.push_back(st);
      in_ch = channels[static_cast<size_t>(i)];
    }
    Stage last;
    last.kernel = 2;
    last.stride = 1;
    last.pad = 0;
    last.w = ps.add(prefix + ".proj.w", Tensor<T>::randn({2 * 2 * in_ch, hidden}, rng, s));
    last.b = ps.add(prefix + ".proj.b", Tensor<T>::zeros({hidden}));
    v.stages.push_back(last);
    v.pos = ps.add(prefix + ".pos", Tensor<T>::randn({static_cast<i64>(side) * side, hidden}, rng,
                                                     static_cast<T>(0.02)));
    return v;
  }

  // images: [B, R, R, 3] floats in [-1, 1] -> [B, 49, hidden].
  int build(Graph<T>& g, const std::vector<int>& p, int images) const {
    AMPLIFY_CHECK(g.val(images).ndim() == 4 && g.val(images).dim(1) == resolution &&
                      g.val(images).dim(2) == resolution,
                  "vision encoder: wrong image resolution");
    int x = images;
    for (size_t i = 0; i < stages.size(); ++i) {
      const Stage& st = stages[i];
      x = g.conv2d(x, p[static_cast<size_t>(st.w)], p[static_cast<size_t>(st.b)], st.kernel,
                   st.kernel, st.stride, st.pad);
      x = g.gelu(x);
    }
    const i64 bsz = g.val(x).dim(0);
    x = g.reshape(x, {bsz, static_cast<i64>(side) * side, hidden});
    return g.add_bcast0(x, p[static_cast<size_t>(pos)]);
  }

  // Marks this encoder's parameters in a trainability mask.
  void mark(std::vector<bool>& mask, bool trainable) const {
    for (const auto& st : stages) {
      mask[static_cast<size_t>(st.w)] = trainable;
      mask[static_cast<size_t>(st.b)] = trainable;
    }
    mask[static_cast<size_t>(pos)] = trainable;
  }
};

// [R, R, 3] bytes -> [R, R, 3] floats in [-1, 1].
template <typename T>
Tensor<T> image_to_float(const Tensor<u8>& img) {
  Tensor<T> out(img.shape);
  for (i64 i = 0; i < img.numel(); ++i) {
    out.data[static_cast<size_t>(i)] =
        static_cast<T>(static_cast<double>(img.data[static_cast<size_t>(i)]) / 255.0 * 2.0 - 1.0);
  }
  return out;
}

// Batch of frames -> [B, R, R, 3] floats.
template <typename T>
Tensor<T> frames_to_batch(const std::vector<const Tensor<u8>*>& frames) {
  AMPLIFY_CHECK(!frames.empty(), "empty frame batch");
  const i64 r = frames[0]->dim(0);
  Tensor<T> out({static_cast<i64>(frames.size()), r, r, 3});
  for (size_t i = 0; i < frames.size(); ++i) {
    AMPLIFY_CHECK(frames[i]->shape == frames[0]->shape, "frame shape mismatch");
    for (i64 j = 0; j < frames[i]->numel(); ++j) {
      out.data[static_cast<size_t>(static_cast<i64>(i) * r * r * 3 + j)] =
          static_cast<T>(static_cast<double>(frames[i]->data[static_cast<size_t>(j)]) / 255.0 * 2.0 - 1.0);
    }
  }
  return out;
}

}  // namespace amplify
