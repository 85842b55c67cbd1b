#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "amplify/common.hpp"
#include "amplify/fsq.hpp"
#include "amplify/rng.hpp"
#include "amplify/tensor.hpp"

namespace amplify {

// Reverse-mode tape. Nodes are created in topological order; backward walks
// them in reverse. Single-threaded and deterministic: every op touches its
// buffers in a fixed order.
template <typename T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  int leaf(const Tensor<T>& v, bool requires_grad) {
    return push(v, requires_grad, nullptr);
  }
  int constant(Tensor<T> v) { return push(std::move(v), false, nullptr); }

  Tensor<T>& val(int id) { return nodes_[static_cast<size_t>(id)].val; }
  const Tensor<T>& val(int id) const { return nodes_[static_cast<size_t>(id)].val; }
  bool requires_grad(int id) const { return nodes_[static_cast<size_t>(id)].rg; }

  // Gradient of a node; empty tensor means "never touched" (i.e. zero).
  Tensor<T>& grad(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.data.empty()) n.grad = Tensor<T>::zeros(n.val.shape);
    return n.grad;
  }
  bool has_grad(int id) const { return !nodes_[static_cast<size_t>(id)].grad.data.empty(); }

  void backward(int root) {
    AMPLIFY_CHECK(val(root).numel() == 1, "backward root must be scalar");
    grad(root).fill(T(1));
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.back && !n.grad.data.empty()) n.back();
    }
  }

  size_t size() const { return nodes_.size(); }

  // ---- elementwise -------------------------------------------------------

  int add(int a, int b) {
    AMPLIFY_CHECK(val(a).shape == val(b).shape, "add shape mismatch");
    Tensor<T> out = val(a);
    const Tensor<T>& vb = val(b);
    for (i64 i = 0; i < out.numel(); ++i) out.data[static_cast<size_t>(i)] += vb.data[static_cast<size_t>(i)];
    const int id = push(std::move(out), rg(a) || rg(b), nullptr);
    set_back(id, [this, id, a, b] {
      const Tensor<T>& g = grad(id);
      if (rg(a)) axpy(g, grad(a));
      if (rg(b)) axpy(g, grad(b));
    });
    return id;
  }

  int scale(int a, double s) {
    Tensor<T> out = val(a);
    for (auto& v : out.data) v = static_cast<T>(v * s);
    const int id = push(std::move(out), rg(a), nullptr);
    set_back(id, [this, id, a, s] {
      if (!rg(a)) return;
      const Tensor<T>& g = grad(id);
      Tensor<T>& ga = grad(a);
      for (i64 i = 0; i < g.numel(); ++i) ga.data[static_cast<size_t>(i)] += static_cast<T>(g.data[static_cast<size_t>(i)] * s);
    });
    return id;
  }

  int hadamard(int a, int b) {
    AMPLIFY_CHECK(val(a).shape == val(b).shape, "hadamard shape mismatch");
    Tensor<T> out = val(a);
    const Tensor<T>& vb = val(b);
    for (i64 i = 0; i < out.numel(); ++i) out.data[static_cast<size_t>(i)] *= vb.data[static_cast<size_t>(i)];
    const int id = push(std::move(out), rg(a) || rg(b), nullptr);
    set_back(id, [this, id, a, b] {
      const Tensor<T>& g = grad(id);
      if (rg(a)) {
        Tensor<T>& ga = grad(a);
        const Tensor<T>& vb = val(b);
        for (i64 i = 0; i < g.numel(); ++i) ga.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)] * vb.data[static_cast<size_t>(i)];
      }
      if (rg(b)) {
        Tensor<T>& gb = grad(b);
        const Tensor<T>& va = val(a);
        for (i64 i = 0; i < g.numel(); ++i) gb.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)] * va.data[static_cast<size_t>(i)];
      }
    });
    return id;
  }

  int gelu(int a) {
    constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    Tensor<T> out = val(a);
    for (auto& v : out.data) {
      const double x = static_cast<double>(v);
      v = static_cast<T>(0.5 * x * (1.0 + std::tanh(kC * (x + 0.044715 * x * x * x))));
    }
    const int id = push(std::move(out), rg(a), nullptr);
    set_back(id, [this, id, a] {
      if (!rg(a)) return;
      const Tensor<T>& g = grad(id);
      const Tensor<T>& va = val(a);
      Tensor<T>& ga = grad(a);
      for (i64 i = 0; i < g.numel(); ++i) {
        const double x = static_cast<double>(va.data[static_cast<size_t>(i)]);
        const double u = kC * (x + 0.044715 * x * x * x);
        const double t = std::tanh(u);
        const double du = kC * (1.0 + 3.0 * 0.044715 * x * x);
        const double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
        ga.data[static_cast<size_t>(i)] += static_cast<T>(static_cast<double>(g.data[static_cast<size_t>(i)]) * d);
      }
    });
    return id;
  }

  // Inverted dropout with an explicit generator; identity when p == 0.
  int dropout(int a, double p, Rng& rng) {
    if (p <= 0.0) return a;
    AMPLIFY_CHECK(p < 1.0, "dropout rate must be < 1");
    auto mask = std::make_shared<std::vector<T>>(val(a).data.size());
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    Tensor<T> out = val(a);
    for (size_t i = 0; i < out.data.size(); ++i) {
      const bool keep = rng.uniform() >= p;
      (*mask)[i] = keep ? keep_scale : T(0);
      out.data[i] *= (*mask)[i];
    }
    const int id = push(std::move(out), rg(a), nullptr);
    set_back(id, [this, id, a, mask] {
      if (!rg(a)) return;
      const Tensor<T>& g = grad(id);
      Tensor<T>& ga = grad(a);
      for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * (*mask)[i];
    });
    return id;
  }

  // ---- broadcast adds ----------------------------------------------------

  // x: [..., N] + b: [N], broadcast over rows.
  int add_rows(int x, int b) {
    const i64 n = val(x).cols2d();
    AMPLIFY_CHECK(val(b).numel() == n, "add_rows bias size mismatch");
    Tensor<T> out = val(x);
    const Tensor<T>& vb = val(b);
    const i64 m = out.numel() / n;
    for (i64 r = 0; r < m; ++r) {
      for (i64 c = 0; c < n; ++c) out.data[static_cast<size_t>(r * n + c)] += vb.data[static_cast<size_t>(c)];
    }
    const int id = push(std::move(out), rg(x) || rg(b), nullptr);
    set_back(id, [this, id, x, b, m, n] {
      const Tensor<T>& g = grad(id);
      if (rg(x)) axpy(g, grad(x));
      if (rg(b)) {
        Tensor<T>& gb = grad(b);
        for (i64 r = 0; r < m; ++r) {
          for (i64 c = 0; c < n; ++c) gb.data[static_cast<size_t>(c)] += g.data[static_cast<size_t>(r * n + c)];
        }
      }
    });
    return id;
  }

  // x: [B, rest...] + p: [rest...], broadcast over the leading dim.
  int add_bcast0(int x, int p) {
    const i64 rest = val(p).numel();
    AMPLIFY_CHECK(val(x).numel() % rest == 0 && val(x).dim(0) == val(x).numel() / rest,
                  "add_bcast0 shape mismatch");
    const i64 batch = val(x).dim(0);
    Tensor<T> out = val(x);
    const Tensor<T>& vp = val(p);
    for (i64 b = 0; b < batch; ++b) {
      for (i64 i = 0; i < rest; ++i) out.data[static_cast<size_t>(b * rest + i)] += vp.data[static_cast<size_t>(i)];
    }
    const int id = push(std::move(out), rg(x) || rg(p), nullptr);
    set_back(id, [this, id, x, p, batch, rest] {
      const Tensor<T>& g = grad(id);
      if (rg(x)) axpy(g, grad(x));
      if (rg(p)) {
        Tensor<T>& gp = grad(p);
        for (i64 b = 0; b < batch; ++b) {
          for (i64 i = 0; i < rest; ++i) gp.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(b * rest + i)];
        }
      }
    });
    return id;
  }

  // ---- matmuls -----------------------------------------------------------

  // x: [..., K] @ w: [K, N] (+ bias [N]); leading dims flow through.
  int linear(int x, int w, int bias = -1) {
    const i64 k = val(w).dim(0), n = val(w).dim(1);
    AMPLIFY_CHECK(val(x).cols2d() == k, "linear input width mismatch");
    const i64 m = val(x).rows2d();
    std::vector<i64> out_shape = val(x).shape;
    out_shape.back() = n;
    Tensor<T> out(out_shape);
    gemm_nn(val(x).data.data(), val(w).data.data(), out.data.data(), m, k, n, false);
    if (bias >= 0) {
      const Tensor<T>& vb = val(bias);
      AMPLIFY_CHECK(vb.numel() == n, "linear bias size mismatch");
      for (i64 r = 0; r < m; ++r) {
        for (i64 c = 0; c < n; ++c) out.data[static_cast<size_t>(r * n + c)] += vb.data[static_cast<size_t>(c)];
      }
    }
    const bool needs = rg(x) || rg(w) || (bias >= 0 && rg(bias));
    const int id = push(std::move(out), needs, nullptr);
    set_back(id, [this, id, x, w, bias, m, k, n] {
      const Tensor<T>& g = grad(id);
      if (rg(x)) gemm_nt(g.data.data(), val(w).data.data(), grad(x).data.data(), m, n, k, true);
      if (rg(w)) gemm_tn(val(x).data.data(), g.data.data(), grad(w).data.data(), k, m, n, true);
      if (bias >= 0 && rg(bias)) {
        Tensor<T>& gb = grad(bias);
        for (i64 r = 0; r < m; ++r) {
          for (i64 c = 0; c < n; ++c) gb.data[static_cast<size_t>(c)] += g.data[static_cast<size_t>(r * n + c)];
        }
      }
    });
    return id;
  }

  // a: [B, M, K] @ b: [B, K, N] -> [B, M, N]
  int bmm_nn(int a, int b) {
    const i64 nb = val(a).dim(0), m = val(a).dim(1), k = val(a).dim(2), n = val(b).dim(2);
    AMPLIFY_CHECK(val(b).dim(0) == nb && val(b).dim(1) == k, "bmm_nn shape mismatch");
    Tensor<T> out({nb, m, n});
    for (i64 i = 0; i < nb; ++i) {
      gemm_nn(val(a).data.data() + i * m * k, val(b).data.data() + i * k * n,
              out.data.data() + i * m * n, m, k, n, false);
    }
    const int id = push(std::move(out), rg(a) || rg(b), nullptr);
    set_back(id, [this, id, a, b, nb, m, k, n] {
      const Tensor<T>& g = grad(id);
      for (i64 i = 0; i < nb; ++i) {
        if (rg(a)) {
          gemm_nt(g.data.data() + i * m * n, val(b).data.data() + i * k * n,
                  grad(a).data.data() + i * m * k, m, n, k, true);
        }
        if (rg(b)) {
          gemm_tn(val(a).data.data() + i * m * k, g.data.data() + i * m * n,
                  grad(b).data.data() + i * k * n, k, m, n, true);
        }
      }
    });
    return id;
  }

  // a: [B, M, K] @ b^T: [B, N, K] -> [B, M, N]
  int bmm_nt(int a, int b) {
    const i64 nb = val(a).dim(0), m = val(a).dim(1), k = val(a).dim(2), n = val(b).dim(1);
    AMPLIFY_CHECK(val(b).dim(0) == nb && val(b).dim(2) == k, "bmm_nt shape mismatch");
    Tensor<T> out({nb, m, n});
    for (i64 i = 0; i < nb; ++i) {
      gemm_nt(val(a).data.data() + i * m * k, val(b).data.data() + i * n * k,
              out.data.data() + i * m * n, m, k, n, false);
    }
    const int id = push(std::move(out), rg(a) || rg(b), nullptr);
    set_back(id, [this, id, a, b, nb, m, k, n] {
      const Tensor<T>& g = grad(id);
      for (i64 i = 0; i < nb; ++i) {
        if (rg(a)) {
          gemm_nn(g.data.data() + i * m * n, val(b).data.data() + i * n * k,
                  grad(a).data.data() + i * m * k, m, n, k, true);
        }
        if (rg(b)) {
          gemm_tn(g.data.data() + i * m * n, val(a).data.data() + i * m * k,
                  grad(b).data.data() + i * n * k, n, m, k, true);
        }
      }
    });
    return id;
  }

  // ---- slicing / concatenation -------------------------------------------

  // Columns [c0, c1) of the last dimension.
  int slice_last(int x, i64 c0, i64 c1) {
    const i64 cols = val(x).cols2d();
    AMPLIFY_CHECK(c0 >= 0 && c0 < c1 && c1 <= cols, "slice_last out of range");
    const i64 rows = val(x).rows2d(), width = c1 - c0;
    std::vector<i64> shape = val(x).shape;
    shape.back() = width;
    Tensor<T> out(shape);
    for (i64 r = 0; r < rows; ++r) {
      std::copy(val(x).data.begin() + r * cols + c0, val(x).data.begin() + r * cols + c1,
                out.data.begin() + r * width);
    }
    const int id = push(std::move(out), rg(x), nullptr);
    set_back(id, [this, id, x, c0, cols, rows, width] {
      if (!rg(x)) return;
      const Tensor<T>& g = grad(id);
      Tensor<T>& gx = grad(x);
      for (i64 r = 0; r < rows; ++r) {
        for (i64 c = 0; c < width; ++c) {
          gx.data[static_cast<size_t>(r * cols + c0 + c)] += g.data[static_cast<size_t>(r * width + c)];
        }
      }
    });
    return id;
  }

  int concat_last(const std::vector<int>& parts) {
    AMPLIFY_CHECK(!parts.empty(), "concat_last needs inputs");
    const i64 rows = val(parts[0]).rows2d();
    i64 total = 0;
    bool needs = false;
    for (int p : parts) {
      AMPLIFY_CHECK(val(p).rows2d() == rows, "concat_last row mismatch");
      total += val(p).cols2d();
      needs = needs || rg(p);
    }
    std::vector<i64> shape = val(parts[0]).shape;
    shape.back() = total;
    Tensor<T> out(shape);
    i64 off = 0;
    for (int p : parts) {
      const i64 w = val(p).cols2d();
      for (i64 r = 0; r < rows; ++r) {
        std::copy(val(p).data.begin() + r * w, val(p).data.begin() + (r + 1) * w,
                  out.data.begin() + r * total + off);
      }
      off += w;
    }
    const int id = push(std::move(out), needs, nullptr);
    set_back(id, [this, id, parts, rows, total] {
      const Tensor<T>& g = grad(id);
      i64 off = 0;
      for (int p : parts) {
        const i64 w = val(p).cols2d();
        if (rg(p)) {
          Tensor<T>& gp = grad(p);
          for (i64 r = 0; r < rows; ++r) {
            for (i64 c = 0; c < w; ++c) gp.data[static_cast<size_t>(r * w + c)] += g.data[static_cast<size_t>(r * total + off + c)];
          }
        }
        off += w;
      }
    });
    return id;
  }

  // Rows [s0, s1) of dim 1 for a [B, S, H] tensor.
  int slice_dim1(int x, i64 s0, i64 s1) {
    AMPLIFY_CHECK(val(x).ndim() == 3, "slice_dim1 expects [B,S,H]");
    const i64 b = val(x).dim(0), s = val(x).dim(1), h = val(x).dim(2);
    AMPLIFY_CHECK(s0 >= 0 && s0 < s1 && s1 <= s, "slice_dim1 out of range");
    const i64 w = s1 - s0;
    Tensor<T> out({b, w, h});
    for (i64 i = 0; i < b; ++i) {
      std::copy(val(x).data.begin() + (i * s + s0) * h, val(x).data.begin() + (i * s + s1) * h,
                out.data.begin() + i * w * h);
    }
    const int id = push(std::move(out), rg(x), nullptr);
    set_back(id, [this, id, x, s0, b, s, h, w] {
      if (!rg(x)) return;
      const Tensor<T>& g = grad(id);
      Tensor<T>& gx = grad(x);
      for (i64 i = 0; i < b; ++i) {
        for (i64 j = 0; j < w * h; ++j) {
          gx.data[static_cast<size_t>((i * s + s0) * h + j)] += g.data[static_cast<size_t>(i * w * h + j)];
        }
      }
    });
    return id;
  }

  int concat_dim1(const std::vector<int>& parts) {
    AMPLIFY_CHECK(!parts.empty(), "concat_dim1 needs inputs");
    const i64 b = val(parts[0]).dim(0), h = val(parts[0]).dim(2);
    i64 total = 0;
    bool needs = false;
    for (int p : parts) {
      AMPLIFY_CHECK(val(p).ndim() == 3 && val(p).dim(0) == b && val(p).dim(2) == h,
                    "concat_dim1 shape mismatch");
      total += val(p).dim(1);
      needs = needs || rg(p);
    }
    Tensor<T> out({b, total, h});
    i64 off = 0;
    for (int p : parts) {
      const i64 s = val(p).dim(1);
      for (i64 i = 0; i < b; ++i) {
        std::copy(val(p).data.begin() + i * s * h, val(p).data.begin() + (i + 1) * s * h,
                  out.data.begin() + (i * total + off) * h);
      }
      off += s;
    }
    const int id = push(std::move(out), needs, nullptr);
    set_back(id, [this, id, parts, b, h, total] {
      const Tensor<T>& g = grad(id);
      i64 off = 0;
      for (int p : parts) {
        const i64 s = val(p).dim(1);
        if (rg(p)) {
          Tensor<T>& gp = grad(p);
          for (i64 i = 0; i < b; ++i) {
            for (i64 j = 0; j < s * h; ++j) {
              gp.data[static_cast<size_t>(i * s * h + j)] += g.data[static_cast<size_t>((i * total + off) * h + j)];
            }
          }
        }
        off += s;
      }
    });
    return id;
  }

  // ---- normalization / attention pieces ------------------------------------

  int layer_norm(int x, int gain, int bias, double eps = 1e-5) {
    const i64 h = val(x).cols2d(), m = val(x).rows2d();
    AMPLIFY_CHECK(val(gain).numel() == h && val(bias).numel() == h, "layer_norm gain/bias size");
    auto xhat = std::make_shared<Tensor<T>>(val(x).shape);
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(m));
    Tensor<T> out(val(x).shape);
    const Tensor<T>& vx = val(x);
    const Tensor<T>& vg = val(gain);
    const Tensor<T>& vb = val(bias);
    for (i64 r = 0; r < m; ++r) {
      double mean = 0;
      for (i64 c = 0; c < h; ++c) mean += static_cast<double>(vx.data[static_cast<size_t>(r * h + c)]);
      mean /= static_cast<double>(h);
      double var = 0;
      for (i64 c = 0; c < h; ++c) {
        const double d = static_cast<double>(vx.data[static_cast<size_t>(r * h + c)]) - mean;
        var += d * d;
      }
      var /= static_cast<double>(h);
      const double istd = 1.0 / std::sqrt(var + eps);
      (*inv_std)[static_cast<size_t>(r)] = static_cast<T>(istd);
      for (i64 c = 0; c < h; ++c) {
        const T xh = static_cast<T>((static_cast<double>(vx.data[static_cast<size_t>(r * h + c)]) - mean) * istd);
        xhat->data[static_cast<size_t>(r * h + c)] = xh;
        out.data[static_cast<size_t>(r * h + c)] = xh * vg.data[static_cast<size_t>(c)] + vb.data[static_cast<size_t>(c)];
      }
    }
    const int id = push(std::move(out), rg(x) || rg(gain) || rg(bias), nullptr);
    set_back(id, [this, id, x, gain, bias, m, h, xhat, inv_std] {
      const Tensor<T>& g = grad(id);
      if (rg(gain)) {
        Tensor<T>& gg = grad(gain);
        for (i64 r = 0; r < m; ++r) {
          for (i64 c = 0; c < h; ++c) {
            gg.data[static_cast<size_t>(c)] += g.data[static_cast<size_t>(r * h + c)] * xhat->data[static_cast<size_t>(r * h + c)];
          }
        }
      }
      if (rg(bias)) {
        Tensor<T>& gb = grad(bias);
        for (i64 r = 0; r < m; ++r) {
          for (i64 c = 0; c < h; ++c) gb.data[static_cast<size_t>(c)] += g.data[static_cast<size_t>(r * h + c)];
        }
      }
      if (rg(x)) {
        Tensor<T>& gx = grad(x);
        const Tensor<T>& vg = val(gain);
        for (i64 r = 0; r < m; ++r) {
          double sum_q = 0, sum_qx = 0;
          for (i64 c = 0; c < h; ++c) {
            const double q = static_cast<double>(g.data[static_cast<size_t>(r * h + c)]) *
                             static_cast<double>(vg.data[static_cast<size_t>(c)]);
            sum_q += q;
            sum_qx += q * static_cast<double>(xhat->data[static_cast<size_t>(r * h + c)]);
          }
          const double mean_q = sum_q / static_cast<double>(h);
          const double mean_qx = sum_qx / static_cast<double>(h);
          const double istd = static_cast<double>((*inv_std)[static_cast<size_t>(r)]);
          for (i64 c = 0; c < h; ++c) {
            const double q = static_cast<double>(g.data[static_cast<size_t>(r * h + c)]) *
                             static_cast<double>(vg.data[static_cast<size_t>(c)]);
            const double xh = static_cast<double>(xhat->data[static_cast<size_t>(r * h + c)]);
            gx.data[static_cast<size_t>(r * h + c)] += static_cast<T>((q - mean_q - xh * mean_qx) * istd);
          }
        }
      }
    });
    return id;
  }

  int softmax_last(int x) {
    const i64 c = val(x).cols2d(), m = val(x).rows2d();
    Tensor<T> out(val(x).shape);
    const Tensor<T>& vx = val(x);
    for (i64 r = 0; r < m; ++r) {
      double mx = -1e300;
      for (i64 j = 0; j < c; ++j) mx = std::max(mx, static_cast<double>(vx.data[static_cast<size_t>(r * c + j)]));
      double sum = 0;
      for (i64 j = 0; j < c; ++j) {
        const double e = std::exp(static_cast<double>(vx.data[static_cast<size_t>(r * c + j)]) - mx);
        out.data[static_cast<size_t>(r * c + j)] = static_cast<T>(e);
        sum += e;
      }
      const double inv = 1.0 / sum;
      for (i64 j = 0; j < c; ++j) out.data[static_cast<size_t>(r * c + j)] = static_cast<T>(static_cast<double>(out.data[static_cast<size_t>(r * c + j)]) * inv);
    }
    const int id = push(std::move(out), rg(x), nullptr);
    set_back(id, [this, id, x, m, c] {
      if (!rg(x)) return;
      const Tensor<T>& g = grad(id);
      const Tensor<T>& y = val(id);
      Tensor<T>& gx = grad(x);
      for (i64 r = 0; r < m; ++r) {
        double dot = 0;
        for (i64 j = 0; j < c; ++j) {
          dot += static_cast<double>(g.data[static_cast<size_t>(r * c + j)]) * static_cast<double>(y.data[static_cast<size_t>(r * c + j)]);
        }
        for (i64 j = 0; j < c; ++j) {
          gx.data[static_cast<size_t>(r * c + j)] += static_cast<T>(
              (static_cast<double>(g.data[static_cast<size_t>(r * c + j)]) - dot) * static_cast<double>(y.data[static_cast<size_t>(r * c + j)]));
        }
      }
    });
    return id;
  }

  // ---- lookups -------------------------------------------------------------

  // Gather rows of a [V, H] table; output [lead..., H] with lead dims given.
  int embedding(int table, const std::vector<i64>& ids, std::vector<i64> lead_shape) {
    const i64 v = val(table).dim(0), h = val(table).dim(1);
    std::vector<i64> shape = std::move(lead_shape);
    shape.push_back(h);
    Tensor<T> out(shape);
    AMPLIFY_CHECK(out.numel() == static_cast<i64>(ids.size()) * h, "embedding lead shape mismatch");
    for (size_t i = 0; i < ids.size(); ++i) {
      AMPLIFY_CHECK(ids[i] >= 0 && ids[i] < v, "embedding id out of range: ", ids[i]);
      std::copy(val(table).data.begin() + ids[i] * h, val(table).data.begin() + (ids[i] + 1) * h,
                out.data.begin() + static_cast<i64>(i) * h);
    }
    const int id = push(std::move(out), rg(table), nullptr);
    auto ids_copy = std::make_shared<std::vector<i64>>(ids);
    set_back(id, [this, id, table, ids_copy, h] {
      if (!rg(table)) return;
      const Tensor<T>& g = grad(id);
      Tensor<T>& gt = grad(table);
      for (size_t i = 0; i < ids_copy->size(); ++i) {
        for (i64 c = 0; c < h; ++c) {
          gt.data[static_cast<size_t>((*ids_copy)[i] * h + c)] += g.data[static_cast<size_t>(static_cast<i64>(i) * h + c)];
        }
      }
    });
    return id;
  }

  // ---- losses ----------------------------------------------------------------

  // Mean cross-entropy over rows of size `classes` against integer labels.
  int cross_entropy_mean(int logits, i64 classes, const std::vector<i64>& labels) {
    const i64 m = val(logits).numel() / classes;
    AMPLIFY_CHECK(static_cast<i64>(labels.size()) == m, "label count mismatch");
    auto probs = std::make_shared<Tensor<T>>(std::vector<i64>{m, classes});
    const Tensor<T>& vx = val(logits);
    double loss = 0;
    for (i64 r = 0; r < m; ++r) {
      AMPLIFY_CHECK(labels[static_cast<size_t>(r)] >= 0 && labels[static_cast<size_t>(r)] < classes,
                    "label out of range");
      double mx = -1e300;
      for (i64 j = 0; j < classes; ++j) mx = std::max(mx, static_cast<double>(vx.data[static_cast<size_t>(r * classes + j)]));
      double sum = 0;
      for (i64 j = 0; j < classes; ++j) {
        const double e = std::exp(static_cast<double>(vx.data[static_cast<size_t>(r * classes + j)]) - mx);
        probs->data[static_cast<size_t>(r * classes + j)] = static_cast<T>(e);
        sum += e;
      }
      const double inv = 1.0 / sum;
      for (i64 j = 0; j < classes; ++j) probs->data[static_cast<size_t>(r * classes + j)] = static_cast<T>(static_cast<double>(probs->data[static_cast<size_t>(r * classes + j)]) * inv);
      loss += std::log(sum) + mx - static_cast<double>(vx.data[static_cast<size_t>(r * classes + labels[static_cast<size_t>(r)])]);
    }
    Tensor<T> out({1});
    out.data[0] = static_cast<T>(loss / static_cast<double>(m));
    const int id = push(std::move(out), rg(logits), nullptr);
    auto labels_copy = std::make_shared<std::vector<i64>>(labels);
    set_back(id, [this, id, logits, probs, labels_copy, m, classes] {
      if (!rg(logits)) return;
      const T gscale = grad(id).data[0];
      Tensor<T>& gx = grad(logits);
      const double inv_m = 1.0 / static_cast<double>(m);
      for (i64 r = 0; r < m; ++r) {
        for (i64 j = 0; j < classes; ++j) {
          double d = static_cast<double>(probs->data[static_cast<size_t>(r * classes + j)]);
          if (j == (*labels_copy)[static_cast<size_t>(r)]) d -= 1.0;
          gx.data[static_cast<size_t>(r * classes + j)] += static_cast<T>(static_cast<double>(gscale) * d * inv_m);
        }
      }
    });
    return id;
  }

  // Mean squared error against a constant target, averaged over all entries.
  int mse_mean(int pred, const Tensor<T>& target) {
    AMPLIFY_CHECK(val(pred).shape == target.shape, "mse target shape mismatch");
    const Tensor<T>& vp = val(pred);
    double loss = 0;
    for (i64 i = 0; i < vp.numel(); ++i) {
      const double d = static_cast<double>(vp.data[static_cast<size_t>(i)]) - static_cast<double>(target.data[static_cast<size_t>(i)]);
      loss += d * d;
    }
    Tensor<T> out({1});
    out.data[0] = static_cast<T>(loss / static_cast<double>(vp.numel()));
    const int id = push(std::move(out), rg(pred), nullptr);
    auto tgt = std::make_shared<Tensor<T>>(target);
    set_back(id, [this, id, pred, tgt] {
      if (!rg(pred)) return;
      const T gscale = grad(id).data[0];
      const Tensor<T>& vp = val(pred);
      Tensor<T>& gp = grad(pred);
      const double inv = 2.0 / static_cast<double>(vp.numel());
      for (i64 i = 0; i < vp.numel(); ++i) {
        gp.data[static_cast<size_t>(i)] += static_cast<T>(static_cast<double>(gscale) * inv *
                                    (static_cast<double>(vp.data[static_cast<size_t>(i)]) - static_cast<double>(tgt->data[static_cast<size_t>(i)])));
      }
    });
    return id;
  }

  // Discounted Gaussian negative log-likelihood for action chunks.
  // head: [B, S*A*2] rows laid out ((s*A)+a)*2 + {mu, log_sigma};
  // target: [B, S, A]; per sample: sum_s gamma^s sum_a -log N(x | mu, sigma),
  // averaged over the batch.
  int gaussian_nll(int head, const Tensor<T>& target, double gamma) {
    AMPLIFY_CHECK(target.ndim() == 3, "gaussian_nll target must be [B,S,A]");
    const i64 b = target.dim(0), s = target.dim(1), a = target.dim(2);
    AMPLIFY_CHECK(val(head).numel() == b * s * a * 2, "gaussian_nll head size mismatch");
    constexpr double kHalfLog2Pi = 0.9189385332046727;
    const Tensor<T>& vh = val(head);
    double loss = 0;
    for (i64 i = 0; i < b; ++i) {
      double disc = 1.0;
      for (i64 t = 0; t < s; ++t) {
        for (i64 j = 0; j < a; ++j) {
          const size_t o = static_cast<size_t>(((i * s + t) * a + j) * 2);
          const double mu = static_cast<double>(vh.data[o]);
          const double log_sigma = static_cast<double>(vh.data[o + 1]);
          const double z = (static_cast<double>(target.data[static_cast<size_t>((i * s + t) * a + j)]) - mu) *
                           std::exp(-log_sigma);
          loss += disc * (0.5 * z * z + log_sigma + kHalfLog2Pi);
        }
        disc *= gamma;
      }
    }
    Tensor<T> out({1});
    out.data[0] = static_cast<T>(loss / static_cast<double>(b));
    const int id = push(std::move(out), rg(head), nullptr);
    auto tgt = std::make_shared<Tensor<T>>(target);
    set_back(id, [this, id, head, tgt, b, s, a, gamma] {
      if (!rg(head)) return;
      const double gscale = static_cast<double>(grad(id).data[0]) / static_cast<double>(b);
      const Tensor<T>& vh = val(head);
      Tensor<T>& gh = grad(head);
      for (i64 i = 0; i < b; ++i) {
        double disc = 1.0;
        for (i64 t = 0; t < s; ++t) {
          for (i64 j = 0; j < a; ++j) {
            const size_t o = static_cast<size_t>(((i * s + t) * a + j) * 2);
            const double mu = static_cast<double>(vh.data[o]);
            const double log_sigma = static_cast<double>(vh.data[o + 1]);
            const double x = static_cast<double>(tgt->data[static_cast<size_t>((i * s + t) * a + j)]);
            const double inv_var = std::exp(-2.0 * log_sigma);
            const double z2 = (x - mu) * (x - mu) * inv_var;
            gh.data[o] += static_cast<T>(gscale * disc * (mu - x) * inv_var);
            gh.data[o + 1] += static_cast<T>(gscale * disc * (1.0 - z2));
          }
          disc *= gamma;
        }
      }
    });
    return id;
  }

  // Same data, new shape (copies; numel must match).
  int reshape(int a, std::vector<i64> shape) {
    AMPLIFY_CHECK(Tensor<T>::numel_of(shape) == val(a).numel(), "reshape numel mismatch");
    Tensor<T> out(std::move(shape), val(a).data);
    const int id = push(std::move(out), rg(a), nullptr);
    set_back(id, [this, id, a] {
      if (!rg(a)) return;
      const Tensor<T>& g = grad(id);
      Tensor<T>& ga = grad(a);
      for (i64 i = 0; i < g.numel(); ++i) ga.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)];
    });
    return id;
  }

  int sum_all(int a) {
    double s = 0;
    for (const T& v : val(a).data) s += static_cast<double>(v);
    Tensor<T> out({1});
    out.data[0] = static_cast<T>(s);
    const int id = push(std::move(out), rg(a), nullptr);
    set_back(id, [this, id, a] {
      if (!rg(a)) return;
      const T g = grad(id).data[0];
      Tensor<T>& ga = grad(a);
      for (auto& v : ga.data) v += g;
    });
    return id;
  }

  // ---- quantization ---------------------------------------------------------

  // Straight-through FSQ over the last dimension (must equal cfg.dims()).
  // Value: exact normalized level centers. Backward: the squash jacobian.
  int fsq_ste(int x, const FsqConfig& cfg, std::vector<Code>* codes_out = nullptr) {
    const int b = cfg.dims();
    AMPLIFY_CHECK(val(x).cols2d() == b, "fsq_ste width must equal level count");
    const i64 m = val(x).rows2d();
    Tensor<T> out(val(x).shape);
    const Tensor<T>& vx = val(x);
    if (codes_out != nullptr) codes_out->clear();
    for (i64 r = 0; r < m; ++r) {
      Code code = fsq_quantize(cfg, vx.data.data() + r * b, out.data.data() + r * b);
      if (codes_out != nullptr) codes_out->push_back(std::move(code));
    }
    const int id = push(std::move(out), rg(x), nullptr);
    set_back(id, [this, id, x, cfg, m, b] {
      if (!rg(x)) return;
      const Tensor<T>& g = grad(id);
      const Tensor<T>& vx = val(x);
      Tensor<T>& gx = grad(x);
      for (i64 r = 0; r < m; ++r) {
        for (int i = 0; i < b; ++i) {
          const double t = std::tanh(static_cast<double>(vx.data[static_cast<size_t>(r * b + i)]));
          const double d = (1.0 - t * t) * cfg.half(i) / cfg.center_scale(i);
          gx.data[static_cast<size_t>(r * b + i)] += static_cast<T>(static_cast<double>(g.data[static_cast<size_t>(r * b + i)]) * d);
        }
      }
    });
    return id;
  }

  // ---- convolution ----------------------------------------------------------

  // Channel-last conv: x [B, H, W, Ci], w [kh*kw*Ci, Co], bias [Co].
  // Zero padding `pad`, square stride. Output [B, Ho, Wo, Co].
  int conv2d(int x, int w, int bias, int kh, int kw, int stride, int pad) {
    AMPLIFY_CHECK(val(x).ndim() == 4, "conv2d expects [B,H,W,C]");
    const i64 b = val(x).dim(0), h = val(x).dim(1), wd = val(x).dim(2), ci = val(x).dim(3);
    const i64 co = val(w).dim(1);
    AMPLIFY_CHECK(val(w).dim(0) == static_cast<i64>(kh) * kw * ci, "conv2d kernel shape mismatch");
    const i64 ho = (h + 2 * pad - kh) / stride + 1;
    const i64 wo = (wd + 2 * pad - kw) / stride + 1;
    auto col = std::make_shared<Tensor<T>>(std::vector<i64>{b * ho * wo, static_cast<i64>(kh) * kw * ci});
    im2col(val(x), kh, kw, stride, pad, ho, wo, *col);
    Tensor<T> out({b, ho, wo, co});
    gemm_nn(col->data.data(), val(w).data.data(), out.data.data(), b * ho * wo,
            static_cast<i64>(kh) * kw * ci, co, false);
    if (bias >= 0) {
      const Tensor<T>& vb = val(bias);
      for (i64 r = 0; r < b * ho * wo; ++r) {
        for (i64 c = 0; c < co; ++c) out.data[static_cast<size_t>(r * co + c)] += vb.data[static_cast<size_t>(c)];
      }
    }
    const bool needs = rg(x) || rg(w) || (bias >= 0 && rg(bias));
    const int id = push(std::move(out), needs, nullptr);
    set_back(id, [this, id, x, w, bias, kh, kw, stride, pad, b, h, wd, ci, co, ho, wo, col] {
      const Tensor<T>& g = grad(id);
      const i64 rows = b * ho * wo, k = static_cast<i64>(kh) * kw * ci;
      if (rg(w)) gemm_tn(col->data.data(), g.data.data(), grad(w).data.data(), k, rows, co, true);
      if (bias >= 0 && rg(bias)) {
        Tensor<T>& gb = grad(bias);
        for (i64 r = 0; r < rows; ++r) {
          for (i64 c = 0; c < co; ++c) gb.data[static_cast<size_t>(c)] += g.data[static_cast<size_t>(r * co + c)];
        }
      }
      if (rg(x)) {
        Tensor<T> dcol({rows, k});
        gemm_nt(g.data.data(), val(w).data.data(), dcol.data.data(), rows, co, k, false);
        col2im_add(dcol, kh, kw, stride, pad, b, h, wd, ci, ho, wo, grad(x));
      }
    });
    return id;
  }

 private:
  struct Node {
    Tensor<T> val;
    Tensor<T> grad;
    bool rg = false;
    std::function<void()> back;
  };

  static void im2col(const Tensor<T>& x, int kh, int kw, int stride, int pad, i64 ho, i64 wo,
                     Tensor<T>& col) {
    const i64 b = x.dim(0), h = x.dim(1), w = x.dim(2), ci = x.dim(3);
    i64 row = 0;
    for (i64 i = 0; i < b; ++i) {
      for (i64 oy = 0; oy < ho; ++oy) {
        for (i64 ox = 0; ox < wo; ++ox, ++row) {
          T* dst = col.data.data() + row * kh * kw * ci;
          for (int ky = 0; ky < kh; ++ky) {
            const i64 sy = oy * stride - pad + ky;
            for (int kx = 0; kx < kw; ++kx) {
              const i64 sx = ox * stride - pad + kx;
              if (sy >= 0 && sy < h && sx >= 0 && sx < w) {
                const T* src = x.data.data() + ((i * h + sy) * w + sx) * ci;
                std::copy(src, src + ci, dst);
              } else {
                std::fill(dst, dst + ci, T(0));
              }
              dst += ci;
            }
          }
        }
      }
    }
  }

  static void col2im_add(const Tensor<T>& dcol, int kh, int kw, int stride, int pad, i64 b, i64 h,
                         i64 w, i64 ci, i64 ho, i64 wo, Tensor<T>& dx) {
    i64 row = 0;
    for (i64 i = 0; i < b; ++i) {
      for (i64 oy = 0; oy < ho; ++oy) {
        for (i64 ox = 0; ox < wo; ++ox, ++row) {
          const T* src = dcol.data.data() + row * kh * kw * ci;
          for (int ky = 0; ky < kh; ++ky) {
            const i64 sy = oy * stride - pad + ky;
            for (int kx = 0; kx < kw; ++kx) {
              const i64 sx = ox * stride - pad + kx;
              if (sy >= 0 && sy < h && sx >= 0 && sx < w) {
                T* dst = dx.data.data() + ((i * h + sy) * w + sx) * ci;
                for (i64 c = 0; c < ci; ++c) dst[c] += src[c];
              }
              src += ci;
            }
          }
        }
      }
    }
  }

  bool rg(int id) const { return nodes_[static_cast<size_t>(id)].rg; }

  int push(Tensor<T> v, bool requires_grad, std::function<void()> back) {
    nodes_.push_back(Node{std::move(v), Tensor<T>(), requires_grad, std::move(back)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  void set_back(int id, std::function<void()> fn) {
    if (nodes_[static_cast<size_t>(id)].rg) nodes_[static_cast<size_t>(id)].back = std::move(fn);
  }

  static void axpy(const Tensor<T>& src, Tensor<T>& dst) {
    for (i64 i = 0; i < src.numel(); ++i) dst.data[static_cast<size_t>(i)] += src.data[static_cast<size_t>(i)];
  }

  std::vector<Node> nodes_;
};

}  // namespace amplify
