#pragma once

#include <cmath>

#include "amplify/common.hpp"
#include "amplify/trackprep.hpp"

namespace amplify {

struct TrackEvalResult {
  double mse = 0.0;            // normalized coordinates
  double pixel_accuracy = 0.0; // fraction of exact integer-pixel matches
  double delta_auc = 0.0;      // thresholds 1..10 px averaged over the horizon
  i64 frames_evaluated = 0;

  void accumulate(const TrackEvalResult& r) {
    mse += r.mse;
    pixel_accuracy += r.pixel_accuracy;
    delta_auc += r.delta_auc;
    frames_evaluated += r.frames_evaluated;
  }
  void finalize() {
    if (frames_evaluated > 0) {
      mse /= static_cast<double>(frames_evaluated);
      pixel_accuracy /= static_cast<double>(frames_evaluated);
      delta_auc /= static_cast<double>(frames_evaluated);
    }
  }
};

template <typename T>
void check_same_shape(const TrackWindow<T>& a, const TrackWindow<T>& b) {
  AMPLIFY_CHECK(a.positions.shape == b.positions.shape, "track shape mismatch");
}

// Mean over all (t, n, coordinate) squared differences; inputs must already be
// in normalized [-1, 1] coordinates.
template <typename T>
double track_mse(const TrackWindow<T>& pred, const TrackWindow<T>& gt) {
  check_same_shape(pred, gt);
  double acc = 0.0;
  for (size_t i = 0; i < pred.positions.data.size(); ++i) {
    const double d = static_cast<double>(pred.positions.data[i]) -
                     static_cast<double>(gt.positions.data[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(pred.positions.data.size());
}

// Fraction of (t, n) entries whose denormalized coordinates round (ties to
// even) to the same integer pixel in both x and y. Inputs in pixels.
template <typename T>
double pixel_accuracy(const TrackWindow<T>& pred, const TrackWindow<T>& gt) {
  check_same_shape(pred, gt);
  const i64 entries = pred.horizon() * pred.num_points();
  i64 hits = 0;
  for (i64 i = 0; i < entries; ++i) {
    const size_t o = static_cast<size_t>(2 * i);
    if (round_even(pred.positions.data[o]) == round_even(gt.positions.data[o]) &&
        round_even(pred.positions.data[o + 1]) == round_even(gt.positions.data[o + 1])) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(entries);
}

// For each timestep t and threshold x in {1..10}, the fraction of points with
// Euclidean error <= x; averaged over thresholds and the horizon. Pixels.
template <typename T>
double delta_auc(const TrackWindow<T>& pred, const TrackWindow<T>& gt) {
  check_same_shape(pred, gt);
  constexpr int kThresholds = 10;
  const i64 horizon = pred.horizon(), n = pred.num_points();
  double acc = 0.0;
  for (i64 t = 0; t < horizon; ++t) {
    for (i64 p = 0; p < n; ++p) {
      const size_t o = static_cast<size_t>((t * n + p) * 2);
      const double dx = static_cast<double>(pred.positions.data[o]) -
                        static_cast<double>(gt.positions.data[o]);
      const double dy = static_cast<double>(pred.positions.data[o + 1]) -
                        static_cast<double>(gt.positions.data[o + 1]);
      const double err = std::sqrt(dx * dx + dy * dy);
      for (int x = 1; x <= kThresholds; ++x) {
        if (err <= static_cast<double>(x)) acc += 1.0;
      }
    }
  }
  return acc / static_cast<double>(horizon * n * kThresholds);
}

// All three metrics for one window pair given in pixel coordinates.
template <typename T>
TrackEvalResult eval_window(const TrackWindow<T>& pred_px, const TrackWindow<T>& gt_px) {
  TrackEvalResult r;
  TrackWindow<T> pred_n{normalize_positions(pred_px.positions, pred_px.resolution),
                        pred_px.resolution};
  TrackWindow<T> gt_n{normalize_positions(gt_px.positions, gt_px.resolution), gt_px.resolution};
  r.mse = track_mse(pred_n, gt_n);
  r.pixel_accuracy = pixel_accuracy(pred_px, gt_px);
  r.delta_auc = delta_auc(pred_px, gt_px);
  r.frames_evaluated = 1;
  return r;
}

}  // namespace amplify
