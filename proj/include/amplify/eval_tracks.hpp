#pragma once

#include <vector>

#include "amplify/dataset.hpp"
#include "amplify/forward_model.hpp"
#include "amplify/metrics.hpp"
#include "amplify/tokenizer.hpp"
#include "amplify/trainers.hpp"

namespace amplify {

// Track-prediction evaluation on held-out frames. Three methods share every
// frame: the forward model's greedy rollout decoded through the tokenizer,
// the tokenizer's own reconstruction from ground-truth codes (the quality
// ceiling of the shared decoder path), and the frozen-grid baseline.
struct TrackEvalReport {
  TrackEvalResult forward;
  TrackEvalResult tokenizer_path;
  TrackEvalResult zero_motion;
  double token_accuracy = 0.0;  // greedy tokens vs ground-truth codes
  i64 distinct_codes = 0;       // codebook utilization over the split
};

namespace detail {

// Rows 1..T-1 of a window; row 0 is the query grid for every method and
// would only dilute the comparison.
template <typename T>
TrackWindow<T> drop_first_frame(const TrackWindow<T>& w) {
  const i64 t = w.horizon(), n = w.num_points();
  TrackWindow<T> out{Tensor<T>({t - 1, n, 2}), w.resolution};
  std::copy(w.positions.data.begin() + n * 2, w.positions.data.end(),
            out.positions.data.begin());
  return out;
}

}  // namespace detail

inline TrackEvalReport eval_tracks(const ForwardModel<float>& fwd,
                                   const MotionTokenizer<float>& tok, const Dataset& ds,
                                   FramePool::Member split, i64 frame_stride) {
  FramePool pool = FramePool::build(ds, split);
  const Tensor<float> grid = init_grid<float>(ds.n_side, ds.resolution);
  const i64 n = grid.dim(0);

  TrackEvalReport report;
  std::vector<bool> seen(static_cast<size_t>(fwd.config().vocab), false);
  i64 token_hits = 0, token_total = 0;

  TrackWindow<float> frozen{Tensor<float>({ds.horizon - 1, n, 2}), ds.resolution};
  for (i64 t = 0; t + 1 < ds.horizon; ++t) {
    std::copy(grid.data.begin(), grid.data.end(), frozen.positions.data.begin() + t * n * 2);
  }

  for (size_t j = 0; j < pool.frames.size(); j += static_cast<size_t>(frame_stride)) {
    const auto [e, f] = pool.frames[j];
    const Episode& ep = ds.episodes[static_cast<size_t>(e)];
    const TrackWindow<float> gt = ds.window(ep, f);
    const TrackWindow<float> gt_tail = detail::drop_first_frame(gt);
    const VelocityField<float> u = velocities(gt);

    const auto gt_codes = tok.encode(u).indices;
    const auto rollout = fwd.rollout_tokens(pool.frame_image(e, f), ep.task_id);
    for (int k = 0; k < fwd.config().d; ++k) {
      token_total += 1;
      token_hits += rollout.indices[static_cast<size_t>(k)] == gt_codes[static_cast<size_t>(k)] ? 1 : 0;
      seen[static_cast<size_t>(rollout.indices[static_cast<size_t>(k)])] = true;
    }

    const auto pred_fwd =
        detail::drop_first_frame(integrate(tok.decode_velocities(rollout.indices), grid, ds.resolution));
    const auto pred_tok =
        detail::drop_first_frame(integrate(tok.decode_velocities(gt_codes), grid, ds.resolution));

    report.forward.accumulate(eval_window(pred_fwd, gt_tail));
    report.tokenizer_path.accumulate(eval_window(pred_tok, gt_tail));
    report.zero_motion.accumulate(eval_window(frozen, gt_tail));
  }
  report.forward.finalize();
  report.tokenizer_path.finalize();
  report.zero_motion.finalize();
  report.token_accuracy =
      token_total ? static_cast<double>(token_hits) / static_cast<double>(token_total) : 0.0;
  for (bool b : seen) report.distinct_codes += b ? 1 : 0;
  return report;
}

// Reconstruction-only variant (no forward model in the loop).
inline TrackEvalResult eval_reconstruction(const MotionTokenizer<float>& tok, const Dataset& ds,
                                           FramePool::Member split, i64 frame_stride,
                                           i64* distinct_codes = nullptr) {
  FramePool pool = FramePool::build(ds, split);
  const Tensor<float> grid = init_grid<float>(ds.n_side, ds.resolution);
  TrackEvalResult agg;
  std::vector<bool> seen(static_cast<size_t>(tok.config().fsq.codebook_size()), false);
  for (size_t j = 0; j < pool.frames.size(); j += static_cast<size_t>(frame_stride)) {
    const auto [e, f] = pool.frames[j];
    const TrackWindow<float> gt = ds.window(ds.episodes[static_cast<size_t>(e)], f);
    const VelocityField<float> u = velocities(gt);
    const auto indices = tok.encode(u).indices;
    for (i64 idx : indices) seen[static_cast<size_t>(idx)] = true;
    const auto pred = detail::drop_first_frame(integrate(tok.decode_velocities(indices), grid, ds.resolution));
    agg.accumulate(eval_window(pred, detail::drop_first_frame(gt)));
  }
  agg.finalize();
  if (distinct_codes != nullptr) {
    *distinct_codes = 0;
    for (bool b : seen) *distinct_codes += b ? 1 : 0;
  }
  return agg;
}

}  // namespace amplify
