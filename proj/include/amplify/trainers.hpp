#pragma once

#include <cstdio>
#include <map>
#include <vector>

#include "amplify/dataset.hpp"
#include "amplify/forward_model.hpp"
#include "amplify/inverse_model.hpp"
#include "amplify/tokenizer.hpp"

namespace amplify {

struct TrainLog {
  std::vector<double> losses;
  double first_block_mean = 0.0;
  double last_block_mean = 0.0;

  void finish() {
    if (losses.empty()) return;
    const size_t block = std::max<size_t>(1, losses.size() / 10);
    double a = 0, b = 0;
    for (size_t i = 0; i < block; ++i) a += losses[i];
    for (size_t i = losses.size() - block; i < losses.size(); ++i) b += losses[i];
    first_block_mean = a / static_cast<double>(block);
    last_block_mean = b / static_cast<double>(block);
  }
};

// Flat list of trainable (episode, frame) pairs matching a membership flag.
struct FramePool {
  const Dataset* ds = nullptr;
  std::vector<std::pair<int, i64>> frames;

  enum class Member { kV, kR, kHoldout };

  static FramePool build(const Dataset& ds, Member member, i64 fewshot_k = 0) {
    FramePool pool;
    pool.ds = &ds;
    // Few-shot restriction keeps the k lowest R episode indices per task.
    std::map<int, std::vector<int>> keep;
    if (fewshot_k > 0) {
      for (size_t e = 0; e < ds.episodes.size(); ++e) {
        const Episode& ep = ds.episodes[e];
        if (!ep.in_r) continue;
        auto& v = keep[ep.task_id];
        v.push_back(ep.episode_index);
      }
      for (auto& [task, v] : keep) {
        std::sort(v.begin(), v.end());
        if (static_cast<i64>(v.size()) > fewshot_k) v.resize(static_cast<size_t>(fewshot_k));
      }
    }
    for (size_t e = 0; e < ds.episodes.size(); ++e) {
      const Episode& ep = ds.episodes[e];
      const bool in = member == Member::kV ? ep.in_v
                      : member == Member::kR
                          ? (ep.in_r && (fewshot_k <= 0 ||
                                         std::binary_search(keep[ep.task_id].begin(),
                                                            keep[ep.task_id].end(),
                                                            ep.episode_index)))
                          : ep.holdout;
      if (!in) continue;
      for (i64 f = 0; f < ep.frames; ++f) pool.frames.emplace_back(static_cast<int>(e), f);
    }
    AMPLIFY_CHECK(!pool.frames.empty(), "empty training pool for the requested split");
    return pool;
  }

  std::pair<int, i64> sample(Rng& rng) const {
    return frames[static_cast<size_t>(rng.below(static_cast<i64>(frames.size())))];
  }

  VelocityField<float> window_velocities(int e, i64 f) const {
    return velocities(ds->window(ds->episodes[static_cast<size_t>(e)], f));
  }

  Tensor<u8> frame_image(int e, i64 f) const {
    const Episode& ep = ds->episodes[static_cast<size_t>(e)];
    const i64 r = ep.observations.dim(1);
    Tensor<u8> img({r, r, 3});
    std::copy(ep.observations.data.begin() + f * r * r * 3,
              ep.observations.data.begin() + (f + 1) * r * r * 3, img.data.begin());
    return img;
  }

  std::array<float, 3> frame_proprio(int e, i64 f) const {
    const Episode& ep = ds->episodes[static_cast<size_t>(e)];
    return {ep.proprio.at({f, 0}), ep.proprio.at({f, 1}), ep.proprio.at({f, 2})};
  }

  // Target action chunk [T, A], zero-padded past the episode end.
  Tensor<float> action_chunk(int e, i64 f, int horizon) const {
    const Episode& ep = ds->episodes[static_cast<size_t>(e)];
    Tensor<float> out({horizon, 3});
    for (int t = 0; t < horizon; ++t) {
      const i64 src = f + t;
      if (src < ep.frames) {
        for (int a = 0; a < 3; ++a) out.at({t, a}) = ep.actions.at({src, a});
      }
    }
    return out;
  }
};

// Per-episode cache of the frozen tokenizer's code indices.
class CodeCache {
 public:
  CodeCache(const MotionTokenizer<float>& tok, const Dataset& ds) : tok_(&tok), ds_(&ds) {
    cache_.resize(ds.episodes.size());
  }

  const std::vector<i64>& codes(int e, i64 f) {
    auto& ep_cache = cache_[static_cast<size_t>(e)];
    if (ep_cache.empty()) {
      const Episode& ep = ds_->episodes[static_cast<size_t>(e)];
      ep_cache.resize(static_cast<size_t>(ep.frames));
      std::vector<VelocityField<float>> fields;
      fields.reserve(static_cast<size_t>(ep.frames));
      for (i64 t = 0; t < ep.frames; ++t) fields.push_back(velocities(ds_->window(ep, t)));
      constexpr i64 kChunk = 32;
      for (i64 start = 0; start < ep.frames; start += kChunk) {
        const i64 stop = std::min(ep.frames, start + kChunk);
        std::vector<const VelocityField<float>*> batch;
        for (i64 t = start; t < stop; ++t) batch.push_back(&fields[static_cast<size_t>(t)]);
        auto rows = tok_->encode_indices(batch);
        for (i64 t = start; t < stop; ++t) ep_cache[static_cast<size_t>(t)] = std::move(rows[static_cast<size_t>(t - start)]);
      }
    }
    return ep_cache[static_cast<size_t>(f)];
  }

 private:
  const MotionTokenizer<float>* tok_;
  const Dataset* ds_;
  std::vector<std::vector<std::vector<i64>>> cache_;
};

// Cosine decay to 10% of the base rate over the run; constant otherwise.
inline double scheduled_lr(const std::string& schedule, double base, i64 step, i64 total) {
  if (schedule != "cosine" || total <= 1) return base;
  const double t = static_cast<double>(step) / static_cast<double>(total - 1);
  return base * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(3.141592653589793 * t)));
}

inline void log_step(const char* stage, i64 step, i64 total, double loss) {
  if (step % 100 == 0 || step + 1 == total) {
    std::fprintf(stderr, "[%s] step %lld/%lld loss %.5f\n", stage, static_cast<long long>(step + 1),
                 static_cast<long long>(total), loss);
  }
}

// Stage one: motion autoencoder on V.
inline TrainLog train_tokenizer(MotionTokenizer<float>& tok, const Dataset& ds,
                                const ExperimentConfig& cfg, u64 seed) {
  const i64 steps = cfg.get_int("tok.steps");
  const i64 batch = cfg.get_int("tok.batch");
  const double lr = cfg.get_real("tok.lr");
  const std::string lr_schedule = cfg.get_string("tok.lr_schedule");
  const double wd = cfg.get_real("tok.weight_decay");
  const double dropout = cfg.get_real("tok.dropout");
  FramePool pool = FramePool::build(ds, FramePool::Member::kV);
  Rng sample_rng(mix_seed(seed, 0xD5A1));
  Rng drop_rng(mix_seed(seed, 0xD5A2));

  TrainLog log;
  for (i64 step = 0; step < steps; ++step) {
    std::vector<VelocityField<float>> fields;
    fields.reserve(static_cast<size_t>(batch));
    for (i64 i = 0; i < batch; ++i) {
      auto [e, f] = pool.sample(sample_rng);
      fields.push_back(pool.window_velocities(e, f));
    }
    std::vector<const VelocityField<float>*> ptrs;
    for (const auto& f : fields) ptrs.push_back(&f);

    Graph<float> g;
    auto p = tok.params().bind(g, true);
    const int loss = tok.build_loss(g, p, ptrs, dropout > 0 ? &drop_rng : nullptr);
    const double lv = g.val(loss).data[0];
    AMPLIFY_CHECK(std::isfinite(lv), "non-finite tokenizer loss at step ", step);
    g.backward(loss);
    tok.params().adamw_step(g, p, scheduled_lr(lr_schedule, lr, step, steps), wd);
    log.losses.push_back(lv);
    log_step("tokenizer", step, steps, lv);
  }
  log.finish();
  return log;
}

// Stage two: actionless motion prior on V. The tokenizer stays frozen; only
// its encode path runs, to produce targets.
inline TrainLog train_forward(ForwardModel<float>& model, const MotionTokenizer<float>& tok,
                              const Dataset& ds, const ExperimentConfig& cfg, u64 seed) {
  const i64 steps = cfg.get_int("fwd.steps");
  const i64 batch = cfg.get_int("fwd.batch");
  const double lr = cfg.get_real("fwd.lr");
  const std::string lr_schedule = cfg.get_string("fwd.lr_schedule");
  const double wd = cfg.get_real("fwd.weight_decay");
  const double dropout = cfg.get_real("fwd.dropout");
  FramePool pool = FramePool::build(ds, FramePool::Member::kV);
  CodeCache codes(tok, ds);
  Rng sample_rng(mix_seed(seed, 0xF0A1));
  Rng drop_rng(mix_seed(seed, 0xF0A2));
  const auto trainable = model.trainable_mask();

  TrainLog log;
  for (i64 step = 0; step < steps; ++step) {
    std::vector<Tensor<u8>> images;
    std::vector<i64> goals;
    std::vector<std::vector<i64>> targets;
    for (i64 i = 0; i < batch; ++i) {
      auto [e, f] = pool.sample(sample_rng);
      images.push_back(pool.frame_image(e, f));
      goals.push_back(ds.episodes[static_cast<size_t>(e)].task_id);
      targets.push_back(codes.codes(e, f));
    }
    std::vector<const Tensor<u8>*> img_ptrs;
    for (const auto& im : images) img_ptrs.push_back(&im);

    Graph<float> g;
    auto p = model.params().bind(g, trainable);
    const int images_id = g.constant(frames_to_batch<float>(img_ptrs));
    const int loss = model.build_loss(g, p, images_id, goals, targets,
                                      dropout > 0 ? &drop_rng : nullptr);
    const double lv = g.val(loss).data[0];
    AMPLIFY_CHECK(std::isfinite(lv), "non-finite forward loss at step ", step);
    g.backward(loss);
    model.params().adamw_step(g, p, scheduled_lr(lr_schedule, lr, step, steps), wd);
    log.losses.push_back(lv);
    log_step("forward", step, steps, lv);
  }
  log.finish();
  return log;
}

// Stage three: inverse dynamics on R with ground-truth codes from the frozen
// tokenizer. `fewshot_k` > 0 restricts R to the k lowest episode indices per
// task.
inline TrainLog train_inverse(InverseModel<float>& model, const MotionTokenizer<float>& tok,
                              const Dataset& ds, const ExperimentConfig& cfg, u64 seed) {
  const i64 steps = cfg.get_int("inv.steps");
  const i64 batch = cfg.get_int("inv.batch");
  const double lr = cfg.get_real("inv.lr");
  const std::string lr_schedule = cfg.get_string("inv.lr_schedule");
  const double wd = cfg.get_real("inv.weight_decay");
  const double dropout = cfg.get_real("inv.dropout");
  const i64 fewshot_k = cfg.get_int("inv.fewshot_k");
  FramePool pool = FramePool::build(ds, FramePool::Member::kR, fewshot_k);
  CodeCache codes(tok, ds);
  Rng sample_rng(mix_seed(seed, 0x14A1));
  Rng drop_rng(mix_seed(seed, 0x14A2));
  const int horizon = model.config().horizon;

  TrainLog log;
  for (i64 step = 0; step < steps; ++step) {
    std::vector<Tensor<u8>> images;
    std::vector<std::array<float, 3>> proprios;
    std::vector<std::vector<i64>> code_rows;
    Tensor<float> targets({batch, horizon, 3});
    for (i64 i = 0; i < batch; ++i) {
      auto [e, f] = pool.sample(sample_rng);
      images.push_back(pool.frame_image(e, f));
      proprios.push_back(pool.frame_proprio(e, f));
      code_rows.push_back(codes.codes(e, f));
      const Tensor<float> chunk = pool.action_chunk(e, f, horizon);
      std::copy(chunk.data.begin(), chunk.data.end(),
                targets.data.begin() + i * horizon * 3);
    }
    std::vector<const Tensor<u8>*> img_ptrs;
    for (const auto& im : images) img_ptrs.push_back(&im);

    Graph<float> g;
    auto p = model.params().bind(g, true);
    const int images_id = g.constant(frames_to_batch<float>(img_ptrs));
    const int prop_id = g.constant(model.pack_proprio(proprios));
    const int codes_id = g.constant(model.pack_codes(code_rows));
    const int loss = model.build_loss(g, p, images_id, prop_id, codes_id, targets, false,
                                      dropout > 0 ? &drop_rng : nullptr);
    const double lv = g.val(loss).data[0];
    AMPLIFY_CHECK(std::isfinite(lv), "non-finite inverse loss at step ", step);
    g.backward(loss);
    model.params().adamw_step(g, p, scheduled_lr(lr_schedule, lr, step, steps), wd);
    log.losses.push_back(lv);
    log_step("inverse", step, steps, lv);
  }
  log.finish();
  return log;
}

// Prediction fine-tuning: continue the inverse objective with codes replaced
// by the forward model's greedy rollouts. The tokenizer's ground-truth
// encoder must not run here; rollout codes come from pixels alone.
inline TrainLog finetune_inverse(InverseModel<float>& model, const ForwardModel<float>& fwd,
                                 const Dataset& ds, const ExperimentConfig& cfg, u64 seed) {
  const i64 steps = cfg.get_int("inv.finetune_steps");
  const i64 batch = cfg.get_int("inv.batch");
  const double lr = cfg.get_real("inv.lr") * cfg.get_real("inv.finetune_lr_scale");
  const std::string lr_schedule = cfg.get_string("inv.lr_schedule");
  const double wd = cfg.get_real("inv.weight_decay");
  const double dropout = cfg.get_real("inv.dropout");
  const i64 fewshot_k = cfg.get_int("inv.fewshot_k");
  FramePool pool = FramePool::build(ds, FramePool::Member::kR, fewshot_k);
  Rng sample_rng(mix_seed(seed, 0xFE71));
  Rng drop_rng(mix_seed(seed, 0xFE72));
  const int horizon = model.config().horizon;

  std::map<std::pair<int, i64>, std::vector<i64>> rollout_cache;
  TrainLog log;
  for (i64 step = 0; step < steps; ++step) {
    std::vector<Tensor<u8>> images;
    std::vector<std::array<float, 3>> proprios;
    std::vector<std::vector<i64>> code_rows;
    Tensor<float> targets({batch, horizon, 3});
    for (i64 i = 0; i < batch; ++i) {
      auto [e, f] = pool.sample(sample_rng);
      images.push_back(pool.frame_image(e, f));
      proprios.push_back(pool.frame_proprio(e, f));
      auto it = rollout_cache.find({e, f});
      if (it == rollout_cache.end()) {
        const auto ro = fwd.rollout_tokens(images.back(),
                                           ds.episodes[static_cast<size_t>(e)].task_id);
        it = rollout_cache.emplace(std::make_pair(e, f), ro.indices).first;
      }
      code_rows.push_back(it->second);
      const Tensor<float> chunk = pool.action_chunk(e, f, horizon);
      std::copy(chunk.data.begin(), chunk.data.end(), targets.data.begin() + i * horizon * 3);
    }
    std::vector<const Tensor<u8>*> img_ptrs;
    for (const auto& im : images) img_ptrs.push_back(&im);

    Graph<float> g;
    auto p = model.params().bind(g, true);
    const int images_id = g.constant(frames_to_batch<float>(img_ptrs));
    const int prop_id = g.constant(model.pack_proprio(proprios));
    const int codes_id = g.constant(model.pack_codes(code_rows));
    const int loss = model.build_loss(g, p, images_id, prop_id, codes_id, targets, false,
                                      dropout > 0 ? &drop_rng : nullptr);
    const double lv = g.val(loss).data[0];
    AMPLIFY_CHECK(std::isfinite(lv), "non-finite finetune loss at step ", step);
    g.backward(loss);
    model.params().adamw_step(g, p, scheduled_lr(lr_schedule, lr, step, steps), wd);
    log.losses.push_back(lv);
    log_step("finetune", step, steps, lv);
  }
  log.finish();
  return log;
}

}  // namespace amplify
