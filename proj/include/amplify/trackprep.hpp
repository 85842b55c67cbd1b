#pragma once

#include <cmath>
#include <vector>

#include "amplify/common.hpp"
#include "amplify/tensor.hpp"

namespace amplify {

// Keypoint positions over one window: [T, N, 2], pixel coordinates, (x, y).
template <typename T>
struct TrackWindow {
  Tensor<T> positions;
  int resolution = 0;

  i64 horizon() const { return positions.dim(0); }
  i64 num_points() const { return positions.dim(1); }
};

// Per-step displacements: [T-1, N, 2], pixels/step, (dx, dy).
template <typename T>
struct VelocityField {
  Tensor<T> velocities;

  i64 steps() const { return velocities.dim(0); }
  i64 num_points() const { return velocities.dim(1); }
};

// Local-window class ids: [T-1, N], each in [0, W*W).
struct WindowLabels {
  Tensor<i64> classes;
  int window = 0;
};

// Ties-to-even rounding, the platform-stable choice for label generation.
template <typename T>
i64 round_even(T x) {
  return static_cast<i64>(std::nearbyint(static_cast<double>(x)));
}

// Cell centers of a uniform n_side x n_side partition, row-major (y-major),
// position = ((ix + 0.5) * res / n, (iy + 0.5) * res / n).
template <typename T>
Tensor<T> init_grid(int n_side, int resolution) {
  AMPLIFY_CHECK(n_side >= 2, "grid needs n_side >= 2, got ", n_side);
  const i64 n = static_cast<i64>(n_side) * n_side;
  Tensor<T> grid({n, 2});
  const double step = static_cast<double>(resolution) / n_side;
  for (int iy = 0; iy < n_side; ++iy) {
    for (int ix = 0; ix < n_side; ++ix) {
      const i64 p = static_cast<i64>(iy) * n_side + ix;
      grid.data[static_cast<size_t>(2 * p)] = static_cast<T>((ix + 0.5) * step);
      grid.data[static_cast<size_t>(2 * p + 1)] = static_cast<T>((iy + 0.5) * step);
    }
  }
  return grid;
}

template <typename T>
VelocityField<T> velocities(const TrackWindow<T>& w) {
  AMPLIFY_CHECK(w.horizon() >= 2, "velocity needs >= 2 frames");
  const i64 steps = w.horizon() - 1, n = w.num_points();
  VelocityField<T> u{Tensor<T>({steps, n, 2})};
  const T* p = w.positions.data.data();
  T* v = u.velocities.data.data();
  for (i64 i = 0; i < steps * n * 2; ++i) v[i] = p[i + n * 2] - p[i];
  return u;
}

// positions[0] = grid, positions[t+1] = positions[t] + u[t].
template <typename T>
TrackWindow<T> integrate(const VelocityField<T>& u, const Tensor<T>& grid, int resolution) {
  const i64 steps = u.steps(), n = u.num_points();
  AMPLIFY_CHECK(grid.dim(0) == n && grid.dim(1) == 2, "grid shape mismatch");
  TrackWindow<T> w{Tensor<T>({steps + 1, n, 2}), resolution};
  T* p = w.positions.data.data();
  const T* v = u.velocities.data.data();
  std::copy(grid.data.begin(), grid.data.end(), p);
  for (i64 i = 0; i < steps * n * 2; ++i) p[i + n * 2] = p[i] + v[i];
  return w;
}

// Affine map of [0, res-1] onto [-1, 1]; both image corners land exactly on +-1.
template <typename T>
T normalize_coord(T x, int resolution) {
  return static_cast<T>(2.0 * static_cast<double>(x) / (resolution - 1) - 1.0);
}

template <typename T>
T denormalize_coord(T x, int resolution) {
  return static_cast<T>((static_cast<double>(x) + 1.0) * (resolution - 1) / 2.0);
}

template <typename T>
Tensor<T> normalize_positions(const Tensor<T>& px, int resolution) {
  AMPLIFY_CHECK(resolution >= 2, "resolution must be >= 2");
  Tensor<T> out = px;
  for (auto& v : out.data) v = normalize_coord(v, resolution);
  return out;
}

template <typename T>
Tensor<T> denormalize_positions(const Tensor<T>& nm, int resolution) {
  AMPLIFY_CHECK(resolution >= 2, "resolution must be >= 2");
  Tensor<T> out = nm;
  for (auto& v : out.data) v = denormalize_coord(v, resolution);
  return out;
}

inline void check_window_size(int w) {
  AMPLIFY_CHECK(w >= 3 && (w % 2) == 1, "window size must be odd and >= 3, got ", w);
}

// Velocity -> class id in the W x W local window. Components round to the
// nearest integer (ties to even) and clamp into [-(W-1)/2, (W-1)/2];
// class = (dy + r) * W + (dx + r). Out-of-window inputs are counted, not
// rejected, so imported tracks from real trackers degrade gracefully.
template <typename T>
WindowLabels omega(const VelocityField<T>& u, int w, i64* clamp_events = nullptr) {
  check_window_size(w);
  const i64 r = (w - 1) / 2;
  const i64 steps = u.steps(), n = u.num_points();
  WindowLabels labels{Tensor<i64>({steps, n}), w};
  i64 clamped = 0;
  for (i64 i = 0; i < steps * n; ++i) {
    i64 dx = round_even(u.velocities.data[static_cast<size_t>(2 * i)]);
    i64 dy = round_even(u.velocities.data[static_cast<size_t>(2 * i + 1)]);
    if (dx < -r || dx > r || dy < -r || dy > r) ++clamped;
    dx = std::clamp<i64>(dx, -r, r);
    dy = std::clamp<i64>(dy, -r, r);
    labels.classes.data[static_cast<size_t>(i)] = (dy + r) * w + (dx + r);
  }
  if (clamp_events != nullptr) *clamp_events = clamped;
  return labels;
}

template <typename T>
void omega_inv_class(i64 cls, int w, T* dx, T* dy) {
  check_window_size(w);
  AMPLIFY_CHECK(cls >= 0 && cls < static_cast<i64>(w) * w, "class out of range: ", cls);
  const i64 r = (w - 1) / 2;
  *dx = static_cast<T>(cls % w - r);
  *dy = static_cast<T>(cls / w - r);
}

template <typename T>
VelocityField<T> omega_inv(const WindowLabels& labels) {
  const i64 steps = labels.classes.dim(0), n = labels.classes.dim(1);
  VelocityField<T> u{Tensor<T>({steps, n, 2})};
  for (i64 i = 0; i < steps * n; ++i) {
    omega_inv_class(labels.classes.data[static_cast<size_t>(i)], labels.window,
                    &u.velocities.data[static_cast<size_t>(2 * i)],
                    &u.velocities.data[static_cast<size_t>(2 * i + 1)]);
  }
  return u;
}

namespace detail {

// Natural cubic spline through (t_i, y_i) with uniform t_i = i/(n-1).
// Returns second derivatives m_i; standard tridiagonal solve.
inline void natural_spline_m(const std::vector<double>& y, std::vector<double>& m,
                             std::vector<double>& scratch) {
  const size_t n = y.size();
  m.assign(n, 0.0);
  if (n < 3) return;
  const double h = 1.0 / static_cast<double>(n - 1);
  scratch.assign(n, 0.0);
  // Forward sweep on the interior rows: m[0] = m[n-1] = 0.
  std::vector<double>& cp = scratch;
  double b = 2.0 * (h + h);
  m[1] = 6.0 * ((y[2] - y[1]) / h - (y[1] - y[0]) / h) / b;
  cp[1] = h / b;
  for (size_t i = 2; i + 1 < n; ++i) {
    const double rhs = 6.0 * ((y[i + 1] - y[i]) / h - (y[i] - y[i - 1]) / h);
    b = 2.0 * (h + h) - h * cp[i - 1];
    m[i] = (rhs - h * m[i - 1]) / b;
    cp[i] = h / b;
  }
  for (size_t i = n - 2; i >= 2; --i) m[i - 1] -= cp[i - 1] * m[i];
}

inline double spline_eval(const std::vector<double>& y, const std::vector<double>& m, double t) {
  const size_t n = y.size();
  const double h = 1.0 / static_cast<double>(n - 1);
  i64 seg = static_cast<i64>(std::floor(t / h));
  seg = std::clamp<i64>(seg, 0, static_cast<i64>(n) - 2);
  const double t0 = static_cast<double>(seg) * h;
  const double a = (t - t0) / h, om = 1.0 - a;
  const size_t i = static_cast<size_t>(seg);
  return om * y[i] + a * y[i + 1] +
         ((om * om * om - om) * m[i] + (a * a * a - a) * m[i + 1]) * h * h / 6.0;
}

}  // namespace detail

// Per-point, per-coordinate natural cubic spline over uniform parameters,
// re-evaluated at t_out uniform parameters. Endpoints reproduce exactly.
template <typename T>
TrackWindow<T> resample_horizon(const TrackWindow<T>& w, i64 t_out) {
  const i64 t_in = w.horizon(), n = w.num_points();
  AMPLIFY_CHECK(t_in >= 2 && t_out >= 2, "resample needs horizons >= 2");
  if (t_out == t_in) return w;
  TrackWindow<T> out{Tensor<T>({t_out, n, 2}), w.resolution};
  std::vector<double> y(static_cast<size_t>(t_in)), m, scratch;
  for (i64 p = 0; p < n; ++p) {
    for (i64 c = 0; c < 2; ++c) {
      for (i64 t = 0; t < t_in; ++t) {
        y[static_cast<size_t>(t)] =
            static_cast<double>(w.positions.data[static_cast<size_t>((t * n + p) * 2 + c)]);
      }
      detail::natural_spline_m(y, m, scratch);
      for (i64 t = 0; t < t_out; ++t) {
        double v;
        if (t == 0) {
          v = y.front();
        } else if (t == t_out - 1) {
          v = y.back();
        } else {
          v = detail::spline_eval(y, m, static_cast<double>(t) / static_cast<double>(t_out - 1));
        }
        out.positions.data[static_cast<size_t>((t * n + p) * 2 + c)] = static_cast<T>(v);
      }
    }
  }
  return out;
}

}  // namespace amplify
