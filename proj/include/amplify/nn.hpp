#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "amplify/graph.hpp"
#include "amplify/rng.hpp"
#include "amplify/tensor.hpp"

namespace amplify {

// Named parameter table with AdamW state. Registration order is the
// serialization order, so checkpoints are stable across runs.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    Tensor<T> m, v;  // AdamW moments
  };

  int add(const std::string& name, Tensor<T> init) {
    AMPLIFY_CHECK(index_.count(name) == 0, "duplicate parameter: ", name);
    index_[name] = static_cast<int>(entries_.size());
    Entry e;
    e.name = name;
    e.m = Tensor<T>::zeros(init.shape);
    e.v = Tensor<T>::zeros(init.shape);
    e.value = std::move(init);
    entries_.push_back(std::move(e));
    return static_cast<int>(entries_.size()) - 1;
  }

  i64 count() const { return static_cast<i64>(entries_.size()); }
  Entry& entry(int i) { return entries_[static_cast<size_t>(i)]; }
  const Entry& entry(int i) const { return entries_[static_cast<size_t>(i)]; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  int find(const std::string& name) const {
    auto it = index_.find(name);
    AMPLIFY_CHECK(it != index_.end(), "unknown parameter: ", name);
    return it->second;
  }

  i64 total_scalars() const {
    i64 n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
  }

  // Registers every parameter as a leaf on the tape; returns graph ids
  // parallel to entry indices.
  std::vector<int> bind(Graph<T>& g, bool trainable) {
    std::vector<int> ids(entries_.size());
    for (size_t i = 0; i < entries_.size(); ++i) ids[i] = g.leaf(entries_[i].value, trainable);
    return ids;
  }

  std::vector<int> bind(Graph<T>& g, const std::vector<bool>& trainable) {
    AMPLIFY_CHECK(trainable.size() == entries_.size(), "trainable mask size mismatch");
    std::vector<int> ids(entries_.size());
    for (size_t i = 0; i < entries_.size(); ++i) ids[i] = g.leaf(entries_[i].value, trainable[i]);
    return ids;
  }

  // Decoupled-weight-decay Adam over gradients accumulated on the tape.
  void adamw_step(Graph<T>& g, const std::vector<int>& bound, double lr, double weight_decay,
                  double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    ++adam_steps_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam_steps_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam_steps_));
    for (size_t i = 0; i < entries_.size(); ++i) {
      if (!g.has_grad(bound[i])) continue;
      Entry& e = entries_[i];
      const Tensor<T>& gr = g.grad(bound[i]);
      for (i64 j = 0; j < e.value.numel(); ++j) {
        const size_t k = static_cast<size_t>(j);
        const double gj = static_cast<double>(gr.data[k]);
        const double mj = beta1 * static_cast<double>(e.m.data[k]) + (1.0 - beta1) * gj;
        const double vj = beta2 * static_cast<double>(e.v.data[k]) + (1.0 - beta2) * gj * gj;
        e.m.data[k] = static_cast<T>(mj);
        e.v.data[k] = static_cast<T>(vj);
        const double update = (mj / bc1) / (std::sqrt(vj / bc2) + eps) +
                              weight_decay * static_cast<double>(e.value.data[k]);
        e.value.data[k] = static_cast<T>(static_cast<double>(e.value.data[k]) - lr * update);
      }
    }
  }

  void reset_optimizer() {
    adam_steps_ = 0;
    for (auto& e : entries_) {
      e.m.fill(T(0));
      e.v.fill(T(0));
    }
  }

  i64 adam_steps() const { return adam_steps_; }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, int> index_;
  i64 adam_steps_ = 0;
};

// ---------------------------------------------------------------------------
// Attention masks (additive; 0 allowed, large negative blocked).

constexpr double kMaskBlocked = -1e9;

template <typename T>
Tensor<T> causal_mask(i64 s) {
  Tensor<T> m({s, s});
  for (i64 i = 0; i < s; ++i) {
    for (i64 j = 0; j < s; ++j) m.at({i, j}) = j <= i ? T(0) : static_cast<T>(kMaskBlocked);
  }
  return m;
}

template <typename T>
Tensor<T> diagonal_mask(i64 s) {
  Tensor<T> m = Tensor<T>::full({s, s}, static_cast<T>(kMaskBlocked));
  for (i64 i = 0; i < s; ++i) m.at({i, i}) = T(0);
  return m;
}

// Conditioning block [0, c) attends within itself; sequence positions >= c
// attend to the conditioning and to earlier (or own) sequence positions.
template <typename T>
Tensor<T> block_causal_mask(i64 c, i64 d) {
  const i64 s = c + d;
  Tensor<T> m = Tensor<T>::full({s, s}, static_cast<T>(kMaskBlocked));
  for (i64 i = 0; i < s; ++i) {
    const i64 limit = i < c ? c : i + 1;
    for (i64 j = 0; j < limit; ++j) m.at({i, j}) = T(0);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Transformer pieces. Every block registers its parameters under a prefix at
// construction and emits tape ops at build time.

template <typename T>
struct AttentionBlock {
  int wq = -1, bq = -1, wk = -1, bk = -1, wv = -1, bv = -1, wo = -1, bo = -1;
  int heads = 1;
  i64 hidden = 0;

  static AttentionBlock create(ParamStore<T>& ps, const std::string& prefix, i64 hidden,
                               int heads, Rng& rng) {
    AttentionBlock b;
    b.heads = heads;
    b.hidden = hidden;
    const T s = static_cast<T>(0.02);
    b.wq = ps.add(prefix + ".wq", Tensor<T>::randn({hidden, hidden}, rng, s));
    b.bq = ps.add(prefix + ".bq", Tensor<T>::zeros({hidden}));
    b.wk = ps.add(prefix + ".wk", Tensor<T>::randn({hidden, hidden}, rng, s));
    b.bk = ps.add(prefix + ".bk", Tensor<T>::zeros({hidden}));
    b.wv = ps.add(prefix + ".wv", Tensor<T>::randn({hidden, hidden}, rng, s));
    b.bv = ps.add(prefix + ".bv", Tensor<T>::zeros({hidden}));
    b.wo = ps.add(prefix + ".wo", Tensor<T>::randn({hidden, hidden}, rng, s));
    b.bo = ps.add(prefix + ".bo", Tensor<T>::zeros({hidden}));
    return b;
  }

  // q_in: [B, Sq, H], kv_in: [B, Skv, H], mask: [Sq, Skv] or nullptr.
  int build(Graph<T>& g, const std::vector<int>& p, int q_in, int kv_in,
            const Tensor<T>* mask) const {
    const i64 dh = hidden / heads;
    const int q = g.linear(q_in, p[static_cast<size_t>(wq)], p[static_cast<size_t>(bq)]);
    const int k = g.linear(kv_in, p[static_cast<size_t>(wk)], p[static_cast<size_t>(bk)]);
    const int v = g.linear(kv_in, p[static_cast<size_t>(wv)], p[static_cast<size_t>(bv)]);
    int mask_id = -1;
    if (mask != nullptr) mask_id = g.constant(*mask);
    std::vector<int> heads_out;
    heads_out.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      const int qh = g.slice_last(q, h * dh, (h + 1) * dh);
      const int kh = g.slice_last(k, h * dh, (h + 1) * dh);
      const int vh = g.slice_last(v, h * dh, (h + 1) * dh);
      int scores = g.scale(g.bmm_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
      if (mask_id >= 0) scores = g.add_bcast0(scores, mask_id);
      heads_out.push_back(g.bmm_nn(g.softmax_last(scores), vh));
    }
    return g.linear(g.concat_last(heads_out), p[static_cast<size_t>(wo)], p[static_cast<size_t>(bo)]);
  }
};

template <typename T>
struct LayerNormParams {
  int gain = -1, bias = -1;

  static LayerNormParams create(ParamStore<T>& ps, const std::string& prefix, i64 hidden) {
    LayerNormParams l;
    l.gain = ps.add(prefix + ".gain", Tensor<T>::full({hidden}, T(1)));
    l.bias = ps.add(prefix + ".bias", Tensor<T>::zeros({hidden}));
    return l;
  }

  int build(Graph<T>& g, const std::vector<int>& p, int x) const {
    return g.layer_norm(x, p[static_cast<size_t>(gain)], p[static_cast<size_t>(bias)]);
  }
};

template <typename T>
struct FeedForwardBlock {
  int w1 = -1, b1 = -1, w2 = -1, b2 = -1;

  static FeedForwardBlock create(ParamStore<T>& ps, const std::string& prefix, i64 hidden,
                                 Rng& rng) {
    FeedForwardBlock f;
    const T s = static_cast<T>(0.02);
    f.w1 = ps.add(prefix + ".w1", Tensor<T>::randn({hidden, 4 * hidden}, rng, s));
    f.b1 = ps.add(prefix + ".b1", Tensor<T>::zeros({4 * hidden}));
    f.w2 = ps.add(prefix + ".w2", Tensor<T>::randn({4 * hidden, hidden}, rng, s));
    f.b2 = ps.add(prefix + ".b2", Tensor<T>::zeros({hidden}));
    return f;
  }

  int build(Graph<T>& g, const std::vector<int>& p, int x) const {
    const int h = g.gelu(g.linear(x, p[static_cast<size_t>(w1)], p[static_cast<size_t>(b1)]));
    return g.linear(h, p[static_cast<size_t>(w2)], p[static_cast<size_t>(b2)]);
  }
};

// Pre-norm self-attention block: x + Attn(LN(x)), then x + FF(LN(x)).
template <typename T>
struct EncoderLayer {
  LayerNormParams<T> ln1, ln2;
  AttentionBlock<T> attn;
  FeedForwardBlock<T> ff;

  static EncoderLayer create(ParamStore<T>& ps, const std::string& prefix, i64 hidden, int heads,
                             Rng& rng) {
    EncoderLayer l;
    l.ln1 = LayerNormParams<T>::create(ps, prefix + ".ln1", hidden);
    l.attn = AttentionBlock<T>::create(ps, prefix + ".attn", hidden, heads, rng);
    l.ln2 = LayerNormParams<T>::create(ps, prefix + ".ln2", hidden);
    l.ff = FeedForwardBlock<T>::create(ps, prefix + ".ff", hidden, rng);
    return l;
  }

  int build(Graph<T>& g, const std::vector<int>& p, int x, const Tensor<T>* mask, double dropout,
            Rng* drop_rng) const {
    const int n1 = ln1.build(g, p, x);
    int a = attn.build(g, p, n1, n1, mask);
    if (dropout > 0.0) a = g.dropout(a, dropout, *drop_rng);
    x = g.add(x, a);
    int f = ff.build(g, p, ln2.build(g, p, x));
    if (dropout > 0.0) f = g.dropout(f, dropout, *drop_rng);
    return g.add(x, f);
  }
};

// Pre-norm decoder block with self-attention over queries then cross-attention
// into a context sequence.
template <typename T>
struct DecoderLayer {
  LayerNormParams<T> ln1, ln2, ln3;
  AttentionBlock<T> self_attn, cross_attn;
  FeedForwardBlock<T> ff;

  static DecoderLayer create(ParamStore<T>& ps, const std::string& prefix, i64 hidden, int heads,
                             Rng& rng) {
    DecoderLayer l;
    l.ln1 = LayerNormParams<T>::create(ps, prefix + ".ln1", hidden);
    l.self_attn = AttentionBlock<T>::create(ps, prefix + ".self", hidden, heads, rng);
    l.ln2 = LayerNormParams<T>::create(ps, prefix + ".ln2", hidden);
    l.cross_attn = AttentionBlock<T>::create(ps, prefix + ".cross", hidden, heads, rng);
    l.ln3 = LayerNormParams<T>::create(ps, prefix + ".ln3", hidden);
    l.ff = FeedForwardBlock<T>::create(ps, prefix + ".ff", hidden, rng);
    return l;
  }

  int build(Graph<T>& g, const std::vector<int>& p, int x, int context,
            const Tensor<T>* self_mask, const Tensor<T>* cross_mask, double dropout,
            Rng* drop_rng) const {
    const int n1 = ln1.build(g, p, x);
    int a = self_attn.build(g, p, n1, n1, self_mask);
    if (dropout > 0.0) a = g.dropout(a, dropout, *drop_rng);
    x = g.add(x, a);
    int c = cross_attn.build(g, p, ln2.build(g, p, x), context, cross_mask);
    if (dropout > 0.0) c = g.dropout(c, dropout, *drop_rng);
    x = g.add(x, c);
    int f = ff.build(g, p, ln3.build(g, p, x));
    if (dropout > 0.0) f = g.dropout(f, dropout, *drop_rng);
    return g.add(x, f);
  }
};

}  // namespace amplify
