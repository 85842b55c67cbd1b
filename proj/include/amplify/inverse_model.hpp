#pragma once

#include <vector>

#include "amplify/config.hpp"
#include "amplify/fsq.hpp"
#include "amplify/graph.hpp"
#include "amplify/nn.hpp"
#include "amplify/trackprep.hpp"
#include "amplify/vision.hpp"

namespace amplify {

// Per-step Gaussian over a length-T action chunk.
struct ActionDistribution {
  Tensor<float> mu;     // [T, A]
  Tensor<float> sigma;  // [T, A], strictly positive by construction
};

struct ActionChunk {
  Tensor<float> actions;  // [T, A] in [-1, 1]
};

struct InverseConfig {
  i64 hidden = 128;
  int layers = 4;
  int heads = 8;
  double gamma = 0.99;
  int d = 16;        // learned action query tokens, one per motion code
  int horizon = 8;   // T action steps per chunk
  int action_dim = 3;
  FsqConfig fsq;
  std::vector<int> vision_channels{16, 32, 64};
  int vision_side = 7;
  int resolution = 64;
  double dropout = 0.0;

  i64 head_width() const { return static_cast<i64>(horizon) * action_dim * 2; }

  static InverseConfig from(const ExperimentConfig& cfg) {
    InverseConfig c;
    c.hidden = cfg.get_int("inv.hidden");
    c.layers = static_cast<int>(cfg.get_int("inv.layers"));
    c.heads = static_cast<int>(cfg.get_int("inv.heads"));
    c.gamma = cfg.get_real("inv.gamma");
    c.d = static_cast<int>(cfg.get_int("tok.d"));
    c.horizon = static_cast<int>(cfg.get_int("env.horizon"));
    c.action_dim = 3;
    c.fsq = cfg.fsq_config();
    c.vision_channels = cfg.get_int_list("fwd.vision_channels");
    c.vision_side = static_cast<int>(cfg.get_int("fwd.vision_side"));
    c.resolution = static_cast<int>(cfg.get_int("env.resolution"));
    c.dropout = cfg.get_real("inv.dropout");
    return c;
  }
};

// Goal-blind reference follower: d learned action queries cross-attend to
// image tokens, one proprioception token, and the motion-code embeddings;
// a final linear head reshapes the query outputs to T x A Gaussian parameters.
template <typename T>
class InverseModel {
 public:
  InverseModel(InverseConfig cfg, u64 seed) : cfg_(cfg) {
    cfg_.fsq.validate();
    Rng rng(mix_seed(seed, 0x1D4A));
    const i64 h = cfg_.hidden;
    const T s = static_cast<T>(0.02);
    vision_ = VisionEncoder<T>::create(ps_, "vision", cfg_.resolution, cfg_.vision_channels, h,
                                       cfg_.vision_side, rng);
    proprio_w_ = ps_.add("proprio.w", Tensor<T>::randn({3, h}, rng, static_cast<T>(0.2)));
    proprio_b_ = ps_.add("proprio.b", Tensor<T>::zeros({h}));
    code_embed_w_ = ps_.add("codes.embed.w", Tensor<T>::randn({cfg_.fsq.dims(), h}, rng,
                                                              static_cast<T>(0.2)));
    code_embed_b_ = ps_.add("codes.embed.b", Tensor<T>::zeros({h}));
    code_pos_ = ps_.add("codes.pos", Tensor<T>::randn({cfg_.d, h}, rng, s));
    action_queries_ = ps_.add("queries", Tensor<T>::randn({cfg_.d, h}, rng, s));
    for (int l = 0; l < cfg_.layers; ++l) {
      layers_.push_back(DecoderLayer<T>::create(ps_, strcat_all("dec.l", l), h, cfg_.heads, rng));
    }
    ln_f_ = LayerNormParams<T>::create(ps_, "ln_f", h);
    head_w_ = ps_.add("head.w", Tensor<T>::randn({static_cast<i64>(cfg_.d) * h, cfg_.head_width()},
                                                 rng, s));
    head_b_ = ps_.add("head.b", Tensor<T>::zeros({cfg_.head_width()}));
  }

  const InverseConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return ps_; }
  const ParamStore<T>& params() const { return ps_; }

  // Proprioception scaled to the unit box: x, y normalized by resolution,
  // grasp kept as {0, 1}.
  Tensor<T> pack_proprio(const std::vector<std::array<float, 3>>& rows) const {
    Tensor<T> out({static_cast<i64>(rows.size()), 3});
    for (size_t i = 0; i < rows.size(); ++i) {
      out.at({static_cast<i64>(i), 0}) =
          static_cast<T>(normalize_coord(rows[i][0], cfg_.resolution));
      out.at({static_cast<i64>(i), 1}) =
          static_cast<T>(normalize_coord(rows[i][1], cfg_.resolution));
      out.at({static_cast<i64>(i), 2}) = static_cast<T>(rows[i][2]);
    }
    return out;
  }

  Tensor<T> pack_codes(const std::vector<std::vector<i64>>& indices) const {
    const int b = cfg_.fsq.dims();
    Tensor<T> out({static_cast<i64>(indices.size()), cfg_.d, b});
    for (size_t i = 0; i < indices.size(); ++i) {
      AMPLIFY_CHECK(static_cast<int>(indices[i].size()) == cfg_.d, "need d code indices");
      for (int k = 0; k < cfg_.d; ++k) {
        const auto centers = fsq_centers<T>(cfg_.fsq, index_to_code(indices[i][static_cast<size_t>(k)], cfg_.fsq));
        std::copy(centers.begin(), centers.end(),
                  out.data.begin() + ((static_cast<i64>(i) * cfg_.d) + k) * b);
      }
    }
    return out;
  }

  // Gaussian head parameters, flattened [B, T*A*2]. `without_tracks` zeroes
  // the motion-code context tokens, the no-track ablation wiring.
  int build_head(Graph<T>& g, const std::vector<int>& p, int images, int proprio, int codes,
                 bool without_tracks = false, Rng* drop_rng = nullptr) const {
    const i64 bsz = g.val(images).dim(0);
    const int img_tokens = vision_.build(g, p, images);
    int prop_tok = g.linear(proprio, p[static_cast<size_t>(proprio_w_)], p[static_cast<size_t>(proprio_b_)]);
    prop_tok = g.reshape(prop_tok, {bsz, 1, cfg_.hidden});

    int code_tokens;
    if (without_tracks) {
      code_tokens = g.constant(Tensor<T>::zeros({bsz, cfg_.d, cfg_.hidden}));
    } else {
      code_tokens = g.linear(codes, p[static_cast<size_t>(code_embed_w_)], p[static_cast<size_t>(code_embed_b_)]);
      code_tokens = g.add_bcast0(code_tokens, p[static_cast<size_t>(code_pos_)]);
    }
    const int ctx = g.concat_dim1({img_tokens, prop_tok, code_tokens});

    int x = g.add_bcast0(g.constant(Tensor<T>::zeros({bsz, cfg_.d, cfg_.hidden})),
                         p[static_cast<size_t>(action_queries_)]);
    for (const auto& layer : layers_) {
      x = layer.build(g, p, x, ctx, nullptr, nullptr, cfg_.dropout, drop_rng);
    }
    x = ln_f_.build(g, p, x);
    x = g.reshape(x, {bsz, static_cast<i64>(cfg_.d) * cfg_.hidden});
    return g.linear(x, p[static_cast<size_t>(head_w_)], p[static_cast<size_t>(head_b_)]);
  }

  // Discounted Gaussian NLL against target chunks [B, T, A].
  int build_loss(Graph<T>& g, const std::vector<int>& p, int images, int proprio, int codes,
                 const Tensor<T>& targets, bool without_tracks = false,
                 Rng* drop_rng = nullptr) const {
    const int head = build_head(g, p, images, proprio, codes, without_tracks, drop_rng);
    return g.gaussian_nll(head, targets, cfg_.gamma);
  }

  // Single-state inference. Output is a pure function of the inputs and
  // parameters; the task/goal is not an input anywhere in this model.
  ActionDistribution decode_actions(const Tensor<u8>& obs, const std::array<float, 3>& proprio,
                                    const std::vector<i64>& indices,
                                    bool without_tracks = false) const {
    Graph<T> g;
    auto p = const_cast<ParamStore<T>&>(ps_).bind(g, false);
    const int images = g.constant(frames_to_batch<T>({&obs}));
    const int prop = g.constant(pack_proprio({proprio}));
    const int codes = g.constant(pack_codes({indices}));
    const int head = build_head(g, p, images, prop, codes, without_tracks);
    ActionDistribution dist;
    dist.mu = Tensor<float>({cfg_.horizon, cfg_.action_dim});
    dist.sigma = Tensor<float>({cfg_.horizon, cfg_.action_dim});
    const Tensor<T>& hv = g.val(head);
    for (int t = 0; t < cfg_.horizon; ++t) {
      for (int a = 0; a < cfg_.action_dim; ++a) {
        const size_t o = static_cast<size_t>(((t * cfg_.action_dim) + a) * 2);
        dist.mu.at({t, a}) = static_cast<float>(hv.data[o]);
        dist.sigma.at({t, a}) = std::exp(static_cast<float>(hv.data[o + 1]));
      }
    }
    return dist;
  }

 private:
  InverseConfig cfg_;
  ParamStore<T> ps_;
  VisionEncoder<T> vision_;
  int proprio_w_ = -1, proprio_b_ = -1;
  int code_embed_w_ = -1, code_embed_b_ = -1, code_pos_ = -1;
  int action_queries_ = -1;
  std::vector<DecoderLayer<T>> layers_;
  LayerNormParams<T> ln_f_;
  int head_w_ = -1, head_b_ = -1;
};

}  // namespace amplify
