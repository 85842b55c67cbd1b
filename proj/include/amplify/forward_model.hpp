#pragma once

#include <string>
#include <vector>

#include "amplify/config.hpp"
#include "amplify/graph.hpp"
#include "amplify/nn.hpp"
#include "amplify/vision.hpp"

namespace amplify {

struct ForwardConfig {
  i64 hidden = 128;
  int layers = 4;
  int heads = 8;
  i64 vocab = 2048;
  int d = 16;
  std::vector<int> vision_channels{16, 32, 64};
  int vision_side = 7;
  int resolution = 64;
  i64 goal_vocab = 20;
  bool frozen_vision = false;
  double dropout = 0.0;

  i64 cond_len() const { return static_cast<i64>(vision_side) * vision_side + 1; }
  i64 seq_len() const { return cond_len() + d; }

  static ForwardConfig from(const ExperimentConfig& cfg) {
    ForwardConfig f;
    f.hidden = cfg.get_int("fwd.hidden");
    f.layers = static_cast<int>(cfg.get_int("fwd.layers"));
    f.heads = static_cast<int>(cfg.get_int("fwd.heads"));
    f.vocab = cfg.codebook_size();
    f.d = static_cast<int>(cfg.get_int("tok.d"));
    f.vision_channels = cfg.get_int_list("fwd.vision_channels");
    f.vision_side = static_cast<int>(cfg.get_int("fwd.vision_side"));
    f.resolution = static_cast<int>(cfg.get_int("env.resolution"));
    f.goal_vocab = cfg.num_tasks();
    f.frozen_vision = cfg.get_bool("fwd.frozen_vision");
    f.dropout = cfg.get_real("fwd.dropout");
    return f;
  }
};

// Actionless motion prior: block-causal autoregressive transformer over
// [vision tokens, goal token, SOS, motion tokens], predicting the d code
// indices for the window starting at the observed frame.
template <typename T>
class ForwardModel {
 public:
  ForwardModel(ForwardConfig cfg, u64 seed) : cfg_(cfg) {
    Rng rng(mix_seed(seed, 0xF0D1));
    const i64 h = cfg_.hidden;
    const T s = static_cast<T>(0.02);
    vision_ = VisionEncoder<T>::create(ps_, "vision", cfg_.resolution, cfg_.vision_channels, h,
                                       cfg_.vision_side, rng);
    goal_table_ = ps_.add("goal.table", Tensor<T>::randn({cfg_.goal_vocab, h}, rng, s));
    token_table_ = ps_.add("motion.table", Tensor<T>::randn({cfg_.vocab, h}, rng, s));
    sos_ = ps_.add("motion.sos", Tensor<T>::randn({1, h}, rng, s));
    motion_pos_ = ps_.add("motion.pos", Tensor<T>::randn({cfg_.d, h}, rng, s));
    for (int l = 0; l < cfg_.layers; ++l) {
      layers_.push_back(EncoderLayer<T>::create(ps_, strcat_all("trunk.l", l), h, cfg_.heads, rng));
    }
    ln_f_ = LayerNormParams<T>::create(ps_, "trunk.ln_f", h);
    head_w_ = ps_.add("head.w", Tensor<T>::randn({h, cfg_.vocab}, rng, s));
    head_b_ = ps_.add("head.b", Tensor<T>::zeros({cfg_.vocab}));
    mask_ = block_causal_mask<T>(cfg_.cond_len(), cfg_.d);
  }

  const ForwardConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return ps_; }
  const ParamStore<T>& params() const { return ps_; }

  std::vector<bool> trainable_mask() const {
    std::vector<bool> m(static_cast<size_t>(ps_.count()), true);
    if (cfg_.frozen_vision) vision_.mark(m, false);
    return m;
  }

  // Teacher-forced logits [B, d, vocab]. `teacher` holds the d target indices
  // per sample; inputs are the shifted sequence [SOS, z0 .. z_{d-2}].
  int build_logits(Graph<T>& g, const std::vector<int>& p, int images,
                   const std::vector<i64>& goals, const std::vector<std::vector<i64>>& teacher,
                   Rng* drop_rng = nullptr) const {
    const i64 bsz = g.val(images).dim(0);
    AMPLIFY_CHECK(static_cast<i64>(goals.size()) == bsz, "goal batch size mismatch");
    AMPLIFY_CHECK(static_cast<i64>(teacher.size()) == bsz, "teacher batch size mismatch");

    const int img_tokens = vision_.build(g, p, images);
    const int goal_tok = g.embedding(p[static_cast<size_t>(goal_table_)], goals, {bsz, 1});

    const int sos = g.add_bcast0(g.constant(Tensor<T>::zeros({bsz, 1, cfg_.hidden})),
                                 p[static_cast<size_t>(sos_)]);
    int motion = sos;
    if (cfg_.d > 1) {
      std::vector<i64> input_ids;
      input_ids.reserve(static_cast<size_t>(bsz * (cfg_.d - 1)));
      for (const auto& row : teacher) {
        AMPLIFY_CHECK(static_cast<int>(row.size()) == cfg_.d, "teacher row must have d tokens");
        for (int k = 0; k + 1 < cfg_.d; ++k) input_ids.push_back(row[static_cast<size_t>(k)]);
      }
      const int shifted =
          g.embedding(p[static_cast<size_t>(token_table_)], input_ids, {bsz, cfg_.d - 1});
      motion = g.concat_dim1({sos, shifted});
    }
    motion = g.add_bcast0(motion, p[static_cast<size_t>(motion_pos_)]);

    int x = g.concat_dim1({img_tokens, goal_tok, motion});
    for (const auto& layer : layers_) {
      x = layer.build(g, p, x, &mask_, cfg_.dropout, drop_rng);
    }
    x = ln_f_.build(g, p, x);
    x = g.slice_dim1(x, cfg_.cond_len(), cfg_.cond_len() + cfg_.d);
    return g.linear(x, p[static_cast<size_t>(head_w_)], p[static_cast<size_t>(head_b_)]);
  }

  // Teacher-forced mean cross-entropy against the frozen tokenizer's indices.
  int build_loss(Graph<T>& g, const std::vector<int>& p, int images, const std::vector<i64>& goals,
                 const std::vector<std::vector<i64>>& targets, Rng* drop_rng = nullptr) const {
    const int logits = build_logits(g, p, images, goals, targets, drop_rng);
    std::vector<i64> labels;
    labels.reserve(targets.size() * static_cast<size_t>(cfg_.d));
    for (const auto& row : targets) labels.insert(labels.end(), row.begin(), row.end());
    return g.cross_entropy_mean(logits, cfg_.vocab, labels);
  }

  // Tape-path logits for position k = prefix length (reference path, batch 1).
  Tensor<T> predict_logits(const Tensor<u8>& obs, i64 goal,
                           const std::vector<i64>& prefix) const {
    AMPLIFY_CHECK(static_cast<int>(prefix.size()) < cfg_.d, "prefix too long");
    Graph<T> g;
    auto p = const_cast<ParamStore<T>&>(ps_).bind(g, false);
    std::vector<std::vector<i64>> teacher(1, std::vector<i64>(static_cast<size_t>(cfg_.d), 0));
    for (size_t i = 0; i < prefix.size(); ++i) teacher[0][i] = prefix[i];
    const int images = g.constant(frames_to_batch<T>({&obs}));
    const int logits = build_logits(g, p, images, {goal}, teacher);
    Tensor<T> row({cfg_.vocab});
    const i64 k = static_cast<i64>(prefix.size());
    std::copy(g.val(logits).data.begin() + k * cfg_.vocab,
              g.val(logits).data.begin() + (k + 1) * cfg_.vocab, row.data.begin());
    return row;
  }

  // ---- fast autoregressive inference with per-layer KV caches --------------

  struct Rollout {
    std::vector<i64> indices;
    double mean_top_logit = 0.0;
  };

  // Greedy decode is a pure function of (parameters, obs, goal); sampling
  // draws from the temperature-scaled softmax with the caller's generator.
  Rollout rollout_tokens(const Tensor<u8>& obs, i64 goal, bool greedy = true,
                         double temperature = 1.0, Rng* sampler = nullptr) const {
    AMPLIFY_CHECK(greedy || sampler != nullptr, "sampled decode needs a generator");
    const i64 h = cfg_.hidden, c = cfg_.cond_len();

    // Vision tokens via the tape (no gradients); identical math to training.
    Tensor<T> cond({c + 1, h});
    {
      Graph<T> g;
      auto p = const_cast<ParamStore<T>&>(ps_).bind(g, false);
      const int tokens = vision_.build(g, p, g.constant(frames_to_batch<T>({&obs})));
      std::copy(g.val(tokens).data.begin(), g.val(tokens).data.end(), cond.data.begin());
    }
    AMPLIFY_CHECK(goal >= 0 && goal < cfg_.goal_vocab, "unknown task id: ", goal);
    const Tensor<T>& goal_tab = ps_.entry(goal_table_).value;
    std::copy(goal_tab.data.begin() + goal * h, goal_tab.data.begin() + (goal + 1) * h,
              cond.data.begin() + (c - 1) * h);
    const Tensor<T>& sos = ps_.entry(sos_).value;
    const Tensor<T>& mpos = ps_.entry(motion_pos_).value;
    for (i64 j = 0; j < h; ++j) {
      cond.data[static_cast<size_t>(c * h + j)] = sos.data[static_cast<size_t>(j)] + mpos.data[static_cast<size_t>(j)];
    }

    Kv kv;
    kv.k.assign(layers_.size(), Tensor<T>({cfg_.seq_len(), h}));
    kv.v.assign(layers_.size(), Tensor<T>({cfg_.seq_len(), h}));
    Tensor<T> x = prefill(cond, kv);  // [c+1, h]; row c is the SOS output

    Rollout out;
    Tensor<T> logits({cfg_.vocab});
    Tensor<T> row({1, h});
    std::copy(x.data.begin() + c * h, x.data.begin() + (c + 1) * h, row.data.begin());
    for (int k = 0; k < cfg_.d; ++k) {
      head_logits(row, logits);
      const i64 pick = choose(logits, greedy, temperature, sampler);
      out.indices.push_back(pick);
      out.mean_top_logit += static_cast<double>(logits.data[static_cast<size_t>(pick)]) / cfg_.d;
      if (k + 1 == cfg_.d) break;
      const Tensor<T>& table = ps_.entry(token_table_).value;
      for (i64 j = 0; j < h; ++j) {
        row.data[static_cast<size_t>(j)] = table.data[static_cast<size_t>(pick * h + j)] +
                                           mpos.data[static_cast<size_t>((k + 1) * h + j)];
      }
      incremental(row, kv);
    }
    return out;
  }

 private:
  struct Kv {
    std::vector<Tensor<T>> k, v;
    i64 len = 0;
  };

  const Tensor<T>& P(int idx) const { return ps_.entry(idx).value; }

  static void ln_rows(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                      Tensor<T>& y) {
    const i64 m = x.rows2d(), h = x.cols2d();
    y = Tensor<T>({m, h});
    for (i64 r = 0; r < m; ++r) {
      double mean = 0;
      for (i64 j = 0; j < h; ++j) mean += static_cast<double>(x.data[static_cast<size_t>(r * h + j)]);
      mean /= static_cast<double>(h);
      double var = 0;
      for (i64 j = 0; j < h; ++j) {
        const double d = static_cast<double>(x.data[static_cast<size_t>(r * h + j)]) - mean;
        var += d * d;
      }
      const double istd = 1.0 / std::sqrt(var / static_cast<double>(h) + 1e-5);
      for (i64 j = 0; j < h; ++j) {
        y.data[static_cast<size_t>(r * h + j)] =
            static_cast<T>((static_cast<double>(x.data[static_cast<size_t>(r * h + j)]) - mean) * istd *
                               static_cast<double>(gain.data[static_cast<size_t>(j)]) +
                           static_cast<double>(bias.data[static_cast<size_t>(j)]));
      }
    }
  }

  void affine_rows(const Tensor<T>& x, int w_idx, int b_idx, Tensor<T>& y) const {
    const Tensor<T>& w = P(w_idx);
    const Tensor<T>& b = P(b_idx);
    const i64 m = x.rows2d(), k = w.dim(0), n = w.dim(1);
    y = Tensor<T>({m, n});
    gemm_nn(x.data.data(), w.data.data(), y.data.data(), m, k, n, false);
    for (i64 r = 0; r < m; ++r) {
      for (i64 j = 0; j < n; ++j) y.data[static_cast<size_t>(r * n + j)] += b.data[static_cast<size_t>(j)];
    }
  }

  static void gelu_rows(Tensor<T>& x) {
    constexpr double kC = 0.7978845608028654;
    for (auto& v : x.data) {
      const double xv = static_cast<double>(v);
      v = static_cast<T>(0.5 * xv * (1.0 + std::tanh(kC * (xv + 0.044715 * xv * xv * xv))));
    }
  }

  // Attention of query rows q (positions pos0..pos0+m) against cached K/V of
  // one layer; row i attends keys [0, limit(pos0 + i)).
  void attend(const Tensor<T>& q, const Tensor<T>& ck, const Tensor<T>& cv, i64 kv_len, i64 pos0,
              Tensor<T>& out) const {
    const i64 m = q.rows2d(), h = q.cols2d();
    const int heads = cfg_.heads;
    const i64 dh = h / heads;
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    out = Tensor<T>({m, h});
    std::vector<double> scores;
    for (i64 r = 0; r < m; ++r) {
      const i64 pos = pos0 + r;
      const i64 limit = pos < cfg_.cond_len() ? cfg_.cond_len() : pos + 1;
      AMPLIFY_CHECK(limit <= kv_len, "kv cache underfilled");
      scores.resize(static_cast<size_t>(limit));
      for (int hd = 0; hd < heads; ++hd) {
        const i64 off = hd * dh;
        double mx = -1e300;
        for (i64 j = 0; j < limit; ++j) {
          double s = 0;
          for (i64 cdim = 0; cdim < dh; ++cdim) {
            s += static_cast<double>(q.data[static_cast<size_t>(r * h + off + cdim)]) *
                 static_cast<double>(ck.data[static_cast<size_t>(j * h + off + cdim)]);
          }
          s *= inv;
          scores[static_cast<size_t>(j)] = s;
          mx = std::max(mx, s);
        }
        double denom = 0;
        for (i64 j = 0; j < limit; ++j) {
          scores[static_cast<size_t>(j)] = std::exp(scores[static_cast<size_t>(j)] - mx);
          denom += scores[static_cast<size_t>(j)];
        }
        const double norm = 1.0 / denom;
        for (i64 cdim = 0; cdim < dh; ++cdim) {
          double acc = 0;
          for (i64 j = 0; j < limit; ++j) {
            acc += scores[static_cast<size_t>(j)] * norm *
                   static_cast<double>(cv.data[static_cast<size_t>(j * h + off + cdim)]);
          }
          out.data[static_cast<size_t>(r * h + off + cdim)] = static_cast<T>(acc);
        }
      }
    }
  }

  // Runs rows through one transformer layer, appending K/V to the cache.
  void layer_pass(const EncoderLayer<T>& layer, Tensor<T>& x, Kv& kv, size_t li, i64 pos0) const {
    Tensor<T> xn, q, k, v, att, proj, ff;
    ln_rows(x, P(layer.ln1.gain), P(layer.ln1.bias), xn);
    affine_rows(xn, layer.attn.wq, layer.attn.bq, q);
    affine_rows(xn, layer.attn.wk, layer.attn.bk, k);
    affine_rows(xn, layer.attn.wv, layer.attn.bv, v);
    const i64 m = x.rows2d(), h = x.cols2d();
    Tensor<T>& ck = kv.k[li];
    Tensor<T>& cv = kv.v[li];
    for (i64 r = 0; r < m; ++r) {
      std::copy(k.data.begin() + r * h, k.data.begin() + (r + 1) * h,
                ck.data.begin() + (pos0 + r) * h);
      std::copy(v.data.begin() + r * h, v.data.begin() + (r + 1) * h,
                cv.data.begin() + (pos0 + r) * h);
    }
    attend(q, ck, cv, pos0 + m, pos0, att);
    affine_rows(att, layer.attn.wo, layer.attn.bo, proj);
    for (i64 i = 0; i < x.numel(); ++i) x.data[static_cast<size_t>(i)] += proj.data[static_cast<size_t>(i)];
    ln_rows(x, P(layer.ln2.gain), P(layer.ln2.bias), xn);
    affine_rows(xn, layer.ff.w1, layer.ff.b1, ff);
    gelu_rows(ff);
    affine_rows(ff, layer.ff.w2, layer.ff.b2, proj);
    for (i64 i = 0; i < x.numel(); ++i) x.data[static_cast<size_t>(i)] += proj.data[static_cast<size_t>(i)];
  }

  Tensor<T> prefill(const Tensor<T>& cond, Kv& kv) const {
    Tensor<T> x = cond;
    for (size_t li = 0; li < layers_.size(); ++li) layer_pass(layers_[li], x, kv, li, 0);
    kv.len = cond.rows2d();
    Tensor<T> y;
    ln_rows(x, P(ln_f_.gain), P(ln_f_.bias), y);
    return y;
  }

  void incremental(Tensor<T>& row, Kv& kv) const {
    for (size_t li = 0; li < layers_.size(); ++li) layer_pass(layers_[li], row, kv, li, kv.len);
    kv.len += 1;
    Tensor<T> y;
    ln_rows(row, P(ln_f_.gain), P(ln_f_.bias), y);
    row = y;
  }

  void head_logits(const Tensor<T>& row, Tensor<T>& logits) const {
    const Tensor<T>& w = P(head_w_);
    const Tensor<T>& b = P(head_b_);
    gemm_nn(row.data.data(), w.data.data(), logits.data.data(), 1, w.dim(0), w.dim(1), false);
    for (i64 j = 0; j < cfg_.vocab; ++j) logits.data[static_cast<size_t>(j)] += b.data[static_cast<size_t>(j)];
  }

  i64 choose(const Tensor<T>& logits, bool greedy, double temperature, Rng* sampler) const {
    if (greedy || temperature <= 1e-9) {
      i64 best = 0;  // ties break to the lowest index
      for (i64 j = 1; j < cfg_.vocab; ++j) {
        if (logits.data[static_cast<size_t>(j)] > logits.data[static_cast<size_t>(best)]) best = j;
      }
      return best;
    }
    double mx = -1e300;
    for (i64 j = 0; j < cfg_.vocab; ++j) mx = std::max(mx, static_cast<double>(logits.data[static_cast<size_t>(j)]));
    std::vector<double> probs(static_cast<size_t>(cfg_.vocab));
    double denom = 0;
    for (i64 j = 0; j < cfg_.vocab; ++j) {
      probs[static_cast<size_t>(j)] = std::exp((static_cast<double>(logits.data[static_cast<size_t>(j)]) - mx) / temperature);
      denom += probs[static_cast<size_t>(j)];
    }
    double u = sampler->uniform() * denom;
    for (i64 j = 0; j < cfg_.vocab; ++j) {
      u -= probs[static_cast<size_t>(j)];
      if (u <= 0) return j;
    }
    return cfg_.vocab - 1;
  }

  ForwardConfig cfg_;
  ParamStore<T> ps_;
  VisionEncoder<T> vision_;
  int goal_table_ = -1, token_table_ = -1, sos_ = -1, motion_pos_ = -1;
  std::vector<EncoderLayer<T>> layers_;
  LayerNormParams<T> ln_f_;
  int head_w_ = -1, head_b_ = -1;
  Tensor<T> mask_;
};

}  // namespace amplify
