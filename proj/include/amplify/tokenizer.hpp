#pragma once

#include <string>
#include <vector>

#include "amplify/config.hpp"
#include "amplify/fsq.hpp"
#include "amplify/graph.hpp"
#include "amplify/nn.hpp"
#include "amplify/trackprep.hpp"

namespace amplify {

enum class MaskMode { kPerTimestep, kCausal, kFull };
enum class TokenizerLoss { kWindowClassification, kMse };

inline MaskMode parse_mask_mode(const std::string& s) {
  if (s == "per_timestep") return MaskMode::kPerTimestep;
  if (s == "causal") return MaskMode::kCausal;
  if (s == "full") return MaskMode::kFull;
  fail("unknown mask mode: ", s);
}

inline TokenizerLoss parse_tokenizer_loss(const std::string& s) {
  if (s == "window_classification") return TokenizerLoss::kWindowClassification;
  if (s == "mse") return TokenizerLoss::kMse;
  fail("unknown tokenizer loss mode: ", s);
}

struct TokenizerConfig {
  int d = 16;             // code sequence length
  i64 hidden = 128;
  int layers = 2;
  int heads = 8;
  int local_window = 15;  // W
  MaskMode mask_mode = MaskMode::kCausal;
  TokenizerLoss loss_mode = TokenizerLoss::kWindowClassification;
  FsqConfig fsq;
  int horizon = 8;        // T; windows carry T frames, T-1 velocity steps
  i64 num_points = 64;    // N
  double dropout = 0.0;

  i64 steps() const { return horizon - 1; }
  i64 classes() const { return static_cast<i64>(local_window) * local_window; }
  i64 head_width() const {
    return steps() * (loss_mode == TokenizerLoss::kWindowClassification ? classes() : 2);
  }

  static TokenizerConfig from(const ExperimentConfig& cfg) {
    TokenizerConfig t;
    t.d = static_cast<int>(cfg.get_int("tok.d"));
    t.hidden = cfg.get_int("tok.hidden");
    t.layers = static_cast<int>(cfg.get_int("tok.layers"));
    t.heads = static_cast<int>(cfg.get_int("tok.heads"));
    t.local_window = static_cast<int>(cfg.get_int("tok.local_window"));
    t.mask_mode = parse_mask_mode(cfg.get_string("tok.mask_mode"));
    t.loss_mode = parse_tokenizer_loss(cfg.get_string("tok.loss_mode"));
    t.fsq = cfg.fsq_config();
    t.horizon = static_cast<int>(cfg.get_int("env.horizon"));
    t.num_points = cfg.num_points();
    t.dropout = cfg.get_real("tok.dropout");
    return t;
  }
};

// One window's discrete motion summary.
struct LatentSequence {
  Tensor<float> continuous;   // [d, b] pre-quantization latents
  std::vector<Code> codes;    // d codes
  std::vector<i64> indices;   // d packed indices
};

// Motion autoencoder: causal transformer encoder, FSQ bottleneck, and a
// cross-attending decoder that classifies each point's next-step displacement
// inside a local window.
template <typename T>
class MotionTokenizer {
 public:
  MotionTokenizer(TokenizerConfig cfg, u64 seed) : cfg_(cfg) {
    cfg_.fsq.validate();
    Rng rng(mix_seed(seed, 0xA001));
    const i64 h = cfg_.hidden;
    const int b = cfg_.fsq.dims();
    const T s = static_cast<T>(0.02);

    embed_w_ = ps_.add("enc.embed.w", Tensor<T>::randn({cfg_.num_points * 2, h}, rng, s));
    embed_b_ = ps_.add("enc.embed.b", Tensor<T>::zeros({h}));
    time_pos_ = ps_.add("enc.time_pos", Tensor<T>::randn({cfg_.steps(), h}, rng, s));
    for (int l = 0; l < cfg_.layers; ++l) {
      enc_layers_.push_back(EncoderLayer<T>::create(ps_, strcat_all("enc.l", l), h, cfg_.heads, rng));
    }
    enc_ln_ = LayerNormParams<T>::create(ps_, "enc.ln_f", h);
    pool_queries_ = ps_.add("enc.pool.queries", Tensor<T>::randn({cfg_.d, h}, rng, s));
    pool_attn_ = AttentionBlock<T>::create(ps_, "enc.pool.attn", h, cfg_.heads, rng);
    pool_ln_ = LayerNormParams<T>::create(ps_, "enc.pool.ln", h);
    pool_ff_ = FeedForwardBlock<T>::create(ps_, "enc.pool.ff", h, rng);
    to_latent_w_ = ps_.add("enc.to_latent.w", Tensor<T>::randn({h, b}, rng, s));
    to_latent_b_ = ps_.add("enc.to_latent.b", Tensor<T>::zeros({b}));

    code_embed_w_ = ps_.add("dec.code_embed.w", Tensor<T>::randn({b, h}, rng, s));
    code_embed_b_ = ps_.add("dec.code_embed.b", Tensor<T>::zeros({h}));
    code_pos_ = ps_.add("dec.code_pos", Tensor<T>::randn({cfg_.d, h}, rng, s));
    point_queries_ = ps_.add("dec.point_queries", Tensor<T>::randn({cfg_.num_points, h}, rng, s));
    for (int l = 0; l < cfg_.layers; ++l) {
      dec_layers_.push_back(DecoderLayer<T>::create(ps_, strcat_all("dec.l", l), h, cfg_.heads, rng));
    }
    dec_ln_ = LayerNormParams<T>::create(ps_, "dec.ln_f", h);
    head_mid_w_ = ps_.add("dec.head.mid.w", Tensor<T>::randn({h, 2 * h}, rng, s));
    head_mid_b_ = ps_.add("dec.head.mid.b", Tensor<T>::zeros({2 * h}));
    head_w_ = ps_.add("dec.head.w", Tensor<T>::randn({2 * h, cfg_.head_width()}, rng, s));
    head_b_ = ps_.add("dec.head.b", Tensor<T>::zeros({cfg_.head_width()}));
  }

  const TokenizerConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return ps_; }
  const ParamStore<T>& params() const { return ps_; }

  // Encoder timestep each latent position is allowed to see up to.
  i64 pool_step(int i) const {
    const i64 s = cfg_.steps();
    return std::min<i64>(s - 1, ((static_cast<i64>(i) + 1) * s) / cfg_.d);
  }

  // Velocity batch [B, T-1, N*2] in pixels -> scaled embedding input.
  Tensor<T> pack_velocities(const std::vector<const VelocityField<float>*>& batch) const {
    const i64 bsz = static_cast<i64>(batch.size());
    const i64 s = cfg_.steps(), n = cfg_.num_points;
    Tensor<T> out({bsz, s, n * 2});
    const double scale = 2.0 / (cfg_.local_window - 1);
    for (i64 i = 0; i < bsz; ++i) {
      AMPLIFY_CHECK(batch[static_cast<size_t>(i)]->steps() == s &&
                        batch[static_cast<size_t>(i)]->num_points() == n,
                    "velocity field shape mismatch");
      for (i64 j = 0; j < s * n * 2; ++j) {
        out.data[static_cast<size_t>(i * s * n * 2 + j)] =
            static_cast<T>(batch[static_cast<size_t>(i)]->velocities.data[static_cast<size_t>(j)] * scale);
      }
    }
    return out;
  }

  struct EncodeBuild {
    int latent = -1;     // [B, d, b]
    int quantized = -1;  // [B, d, b] exact centers, straight-through backward
    std::vector<Code> codes;  // B*d codes, batch-major
  };

  // Multi-view inputs concatenate along the timestep-token axis before
  // pooling; the default scene provides a single view.
  EncodeBuild build_encode(Graph<T>& g, const std::vector<int>& p,
                           const std::vector<int>& velocity_inputs, Rng* drop_rng = nullptr) const {
    AMPLIFY_CHECK(!velocity_inputs.empty(), "encoder needs at least one view");
    std::vector<int> view_tokens;
    for (int u : velocity_inputs) {
      int x = g.linear(u, p[static_cast<size_t>(embed_w_)], p[static_cast<size_t>(embed_b_)]);
      x = g.add_bcast0(x, p[static_cast<size_t>(time_pos_)]);
      view_tokens.push_back(x);
    }
    int x = view_tokens.size() == 1 ? view_tokens[0] : g.concat_dim1(view_tokens);
    const i64 views = static_cast<i64>(view_tokens.size());
    const i64 s = cfg_.steps() * views;

    // Masks restrict by timestep, not token position, so multi-view tokens of
    // the same step can always see each other.
    Tensor<T> mask;
    const Tensor<T>* mask_ptr = nullptr;
    if (cfg_.mask_mode != MaskMode::kFull) {
      mask = Tensor<T>::full({s, s}, static_cast<T>(kMaskBlocked));
      for (i64 i = 0; i < s; ++i) {
        for (i64 j = 0; j < s; ++j) {
          const i64 ti = i % cfg_.steps(), tj = j % cfg_.steps();
          const bool ok = cfg_.mask_mode == MaskMode::kCausal ? tj <= ti : tj == ti;
          if (ok) mask.at({i, j}) = T(0);
        }
      }
      mask_ptr = &mask;
    }
    for (const auto& layer : enc_layers_) {
      x = layer.build(g, p, x, mask_ptr, cfg_.dropout, drop_rng);
    }
    x = enc_ln_.build(g, p, x);

    // Strided learned queries pool the per-step tokens into d latent slots;
    // query i only reaches steps up to pool_step(i) unless the mask is full.
    const i64 bsz = g.val(x).dim(0);
    const int queries =
        g.add_bcast0(g.constant(Tensor<T>::zeros({bsz, cfg_.d, cfg_.hidden})),
                     p[static_cast<size_t>(pool_queries_)]);
    Tensor<T> pool_mask;
    const Tensor<T>* pool_mask_ptr = nullptr;
    if (cfg_.mask_mode != MaskMode::kFull) {
      pool_mask = Tensor<T>::full({cfg_.d, s}, static_cast<T>(kMaskBlocked));
      for (int i = 0; i < cfg_.d; ++i) {
        for (i64 v = 0; v < views; ++v) {
          for (i64 j = 0; j <= pool_step(i); ++j) pool_mask.at({i, v * cfg_.steps() + j}) = T(0);
        }
      }
      pool_mask_ptr = &pool_mask;
    }
    int pooled = pool_attn_.build(g, p, queries, x, pool_mask_ptr);
    pooled = g.add(pooled, pool_ff_.build(g, p, pool_ln_.build(g, p, pooled)));

    EncodeBuild out;
    out.latent = g.linear(pooled, p[static_cast<size_t>(to_latent_w_)], p[static_cast<size_t>(to_latent_b_)]);
    out.quantized = g.fsq_ste(out.latent, cfg_.fsq, &out.codes);
    return out;
  }

  // quantized: [B, d, b] -> window logits [B, N, (T-1)*W^2] (or [B, N, (T-1)*2]
  // under the regression loss).
  int build_decode(Graph<T>& g, const std::vector<int>& p, int quantized,
                   Rng* drop_rng = nullptr) const {
    int ctx = g.linear(quantized, p[static_cast<size_t>(code_embed_w_)], p[static_cast<size_t>(code_embed_b_)]);
    ctx = g.add_bcast0(ctx, p[static_cast<size_t>(code_pos_)]);
    const i64 bsz = g.val(ctx).dim(0);
    int x = g.add_bcast0(g.constant(Tensor<T>::zeros({bsz, cfg_.num_points, cfg_.hidden})),
                         p[static_cast<size_t>(point_queries_)]);
    for (const auto& layer : dec_layers_) {
      x = layer.build(g, p, x, ctx, nullptr, nullptr, cfg_.dropout, drop_rng);
    }
    x = dec_ln_.build(g, p, x);
    x = g.gelu(g.linear(x, p[static_cast<size_t>(head_mid_w_)], p[static_cast<size_t>(head_mid_b_)]));
    return g.linear(x, p[static_cast<size_t>(head_w_)], p[static_cast<size_t>(head_b_)]);
  }

  // Labels for one window in the decoder's (point-major, then step) order.
  std::vector<i64> window_labels(const VelocityField<float>& u) const {
    const WindowLabels w = omega(u, cfg_.local_window);
    const i64 s = cfg_.steps(), n = cfg_.num_points;
    std::vector<i64> out(static_cast<size_t>(s * n));
    for (i64 p = 0; p < n; ++p) {
      for (i64 t = 0; t < s; ++t) {
        out[static_cast<size_t>(p * s + t)] = w.classes.data[static_cast<size_t>(t * n + p)];
      }
    }
    return out;
  }

  // Regression targets in the same (point, step, coord) order, raw pixels.
  Tensor<T> mse_targets(const std::vector<const VelocityField<float>*>& batch) const {
    const i64 bsz = static_cast<i64>(batch.size()), s = cfg_.steps(), n = cfg_.num_points;
    Tensor<T> out({bsz, n, s * 2});
    for (i64 i = 0; i < bsz; ++i) {
      for (i64 p = 0; p < n; ++p) {
        for (i64 t = 0; t < s; ++t) {
          out.at({i, p, 2 * t}) = static_cast<T>(batch[static_cast<size_t>(i)]->velocities.at({t, p, 0}));
          out.at({i, p, 2 * t + 1}) =
              static_cast<T>(batch[static_cast<size_t>(i)]->velocities.at({t, p, 1}));
        }
      }
    }
    return out;
  }

  // Mean loss over the batch of windows; classification or regression.
  int build_loss(Graph<T>& g, const std::vector<int>& p,
                 const std::vector<const VelocityField<float>*>& batch, Rng* drop_rng = nullptr,
                 EncodeBuild* encode_out = nullptr) const {
    const int u = g.constant(pack_velocities(batch));
    EncodeBuild enc = build_encode(g, p, {u}, drop_rng);
    const int logits = build_decode(g, p, enc.quantized, drop_rng);
    if (encode_out != nullptr) *encode_out = enc;
    if (cfg_.loss_mode == TokenizerLoss::kWindowClassification) {
      std::vector<i64> labels;
      labels.reserve(batch.size() * static_cast<size_t>(cfg_.num_points * cfg_.steps()));
      for (const auto* uf : batch) {
        auto l = window_labels(*uf);
        labels.insert(labels.end(), l.begin(), l.end());
      }
      return g.cross_entropy_mean(logits, cfg_.classes(), labels);
    }
    return g.mse_mean(logits, mse_targets(batch));
  }

  // ---- inference ------------------------------------------------------------

  LatentSequence encode(const VelocityField<float>& u) const {
    ++encode_calls_;
    Graph<T> g;
    auto p = const_cast<ParamStore<T>&>(ps_).bind(g, false);
    auto enc = build_encode(g, p, {g.constant(pack_velocities({&u}))});
    LatentSequence seq;
    const Tensor<T>& lat = g.val(enc.latent);
    seq.continuous = Tensor<float>({cfg_.d, cfg_.fsq.dims()});
    for (i64 i = 0; i < lat.numel(); ++i) seq.continuous.data[static_cast<size_t>(i)] = static_cast<float>(lat.data[static_cast<size_t>(i)]);
    seq.codes = enc.codes;
    for (const auto& c : seq.codes) seq.indices.push_back(code_to_index(c, cfg_.fsq));
    return seq;
  }

  // Batched ground-truth tokenization; one row of d indices per window.
  std::vector<std::vector<i64>> encode_indices(
      const std::vector<const VelocityField<float>*>& batch) const {
    encode_calls_ += static_cast<i64>(batch.size());
    Graph<T> g;
    auto p = const_cast<ParamStore<T>&>(ps_).bind(g, false);
    auto enc = build_encode(g, p, {g.constant(pack_velocities(batch))});
    std::vector<std::vector<i64>> out(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) {
      for (int k = 0; k < cfg_.d; ++k) {
        out[i].push_back(code_to_index(enc.codes[i * static_cast<size_t>(cfg_.d) + static_cast<size_t>(k)], cfg_.fsq));
      }
    }
    return out;
  }

  // Ground-truth-encoder call counter; the prediction-finetuning stage must
  // leave this untouched.
  i64 encode_calls() const { return encode_calls_; }

  // Decoder logits for explicit code indices: [N, (T-1)*W^2] for one window.
  Tensor<T> decode_logits(const std::vector<i64>& indices) const {
    AMPLIFY_CHECK(static_cast<int>(indices.size()) == cfg_.d, "need exactly d indices");
    Graph<T> g;
    auto p = const_cast<ParamStore<T>&>(ps_).bind(g, false);
    Tensor<T> centers({1, cfg_.d, cfg_.fsq.dims()});
    for (int i = 0; i < cfg_.d; ++i) {
      const auto c = fsq_centers<T>(cfg_.fsq, index_to_code(indices[static_cast<size_t>(i)], cfg_.fsq));
      std::copy(c.begin(), c.end(), centers.data.begin() + static_cast<i64>(i) * cfg_.fsq.dims());
    }
    const int logits = build_decode(g, p, g.constant(centers));
    return g.val(logits).reshaped({cfg_.num_points, cfg_.head_width()});
  }

  // Arg-max decode of code indices into an integer velocity field.
  VelocityField<float> decode_velocities(const std::vector<i64>& indices) const {
    AMPLIFY_CHECK(cfg_.loss_mode == TokenizerLoss::kWindowClassification,
                  "velocity decode needs the classification head");
    const Tensor<T> logits = decode_logits(indices);
    const i64 s = cfg_.steps(), n = cfg_.num_points, c = cfg_.classes();
    VelocityField<float> out{Tensor<float>({s, n, 2})};
    for (i64 p = 0; p < n; ++p) {
      for (i64 t = 0; t < s; ++t) {
        const T* row = logits.data.data() + (p * s + t) * c;
        i64 best = 0;
        for (i64 j = 1; j < c; ++j) {
          if (row[j] > row[best]) best = j;
        }
        float dx = 0, dy = 0;
        omega_inv_class(best, cfg_.local_window, &dx, &dy);
        out.velocities.at({t, p, 0}) = dx;
        out.velocities.at({t, p, 1}) = dy;
      }
    }
    return out;
  }

  // encode -> quantize -> decode -> argmax -> window-inverse.
  VelocityField<float> reconstruct(const VelocityField<float>& u) const {
    return decode_velocities(encode(u).indices);
  }

 private:
  TokenizerConfig cfg_;
  ParamStore<T> ps_;
  mutable i64 encode_calls_ = 0;

  int embed_w_ = -1, embed_b_ = -1, time_pos_ = -1;
  std::vector<EncoderLayer<T>> enc_layers_;
  LayerNormParams<T> enc_ln_;
  int pool_queries_ = -1;
  AttentionBlock<T> pool_attn_;
  LayerNormParams<T> pool_ln_;
  FeedForwardBlock<T> pool_ff_;
  int to_latent_w_ = -1, to_latent_b_ = -1;

  int code_embed_w_ = -1, code_embed_b_ = -1, code_pos_ = -1, point_queries_ = -1;
  std::vector<DecoderLayer<T>> dec_layers_;
  LayerNormParams<T> dec_ln_;
  int head_mid_w_ = -1, head_mid_b_ = -1;
  int head_w_ = -1, head_b_ = -1;
};

}  // namespace amplify
