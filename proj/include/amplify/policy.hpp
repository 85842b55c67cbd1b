#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <thread>
#include <vector>

#include "amplify/env.hpp"
#include "amplify/forward_model.hpp"
#include "amplify/inverse_model.hpp"

namespace amplify {

// Overlapping action chunks from successive replans, indexed by birth step.
struct ChunkBuffer {
  struct Entry {
    i64 birth_step = 0;
    Tensor<float> mu;  // [T, A]
  };
  std::vector<Entry> entries;
  int horizon = 0;

  void push(i64 now, Tensor<float> mu) {
    entries.push_back(Entry{now, std::move(mu)});
  }

  // Drops entries whose horizon no longer covers `now`.
  void evict(i64 now) {
    std::erase_if(entries, [&](const Entry& e) { return now - e.birth_step >= horizon; });
  }
};

// Convex combination of the buffered per-step means with weights
// proportional to gamma^age, normalized to sum to one.
inline std::array<float, 3> temporal_ensemble(const ChunkBuffer& buffer, i64 now, double gamma) {
  AMPLIFY_CHECK(!buffer.entries.empty(), "temporal ensemble needs a non-empty buffer");
  double wsum = 0;
  std::array<double, 3> acc{0, 0, 0};
  for (const auto& e : buffer.entries) {
    const i64 age = now - e.birth_step;
    AMPLIFY_CHECK(age >= 0 && age < buffer.horizon, "buffer entry does not cover now");
    const double w = std::pow(gamma, static_cast<double>(age));
    wsum += w;
    for (int a = 0; a < 3; ++a) acc[static_cast<size_t>(a)] += w * static_cast<double>(e.mu.at({age, a}));
  }
  return {static_cast<float>(acc[0] / wsum), static_cast<float>(acc[1] / wsum),
          static_cast<float>(acc[2] / wsum)};
}

// Per-rollout policy interface; instances are single-rollout state machines.
class RolloutPolicy {
 public:
  virtual ~RolloutPolicy() = default;
  virtual void reset(u64 seed) = 0;
  virtual std::array<float, 3> act(const Tensor<u8>& obs, const std::array<float, 3>& proprio,
                                   const Task& task, const EnvState& state, i64 now) = 0;
};

using PolicyFactory = std::function<std::unique_ptr<RolloutPolicy>()>;

// The learned controller: per step, roll motion tokens forward, decode an
// action chunk, and ensemble across the chunk history.
class ModelPolicy : public RolloutPolicy {
 public:
  ModelPolicy(const ForwardModel<float>* fwd, const InverseModel<float>* inv, double gamma,
              bool without_tracks, bool greedy = true, double temperature = 1.0)
      : fwd_(fwd), inv_(inv), gamma_(gamma), without_tracks_(without_tracks), greedy_(greedy),
        temperature_(temperature), sampler_(0) {
    buffer_.horizon = inv_->config().horizon;
  }

  void reset(u64 seed) override {
    buffer_.entries.clear();
    sampler_ = Rng(mix_seed(seed, 0x5A37));
  }

  std::array<float, 3> act(const Tensor<u8>& obs, const std::array<float, 3>& proprio,
                           const Task& task, const EnvState&, i64 now) override {
    const auto rollout = fwd_->rollout_tokens(obs, task.task_id, greedy_, temperature_,
                                              greedy_ ? nullptr : &sampler_);
    ActionDistribution dist = inv_->decode_actions(obs, proprio, rollout.indices, without_tracks_);
    buffer_.push(now, std::move(dist.mu));
    buffer_.evict(now);
    return temporal_ensemble(buffer_, now, gamma_);
  }

 private:
  const ForwardModel<float>* fwd_;
  const InverseModel<float>* inv_;
  double gamma_;
  bool without_tracks_;
  bool greedy_;
  double temperature_;
  Rng sampler_;
  ChunkBuffer buffer_;
};

class ExpertPolicy : public RolloutPolicy {
 public:
  explicit ExpertPolicy(const EnvConfig& cfg) : cfg_(cfg) {}
  void reset(u64) override {}
  std::array<float, 3> act(const Tensor<u8>&, const std::array<float, 3>&, const Task& task,
                           const EnvState& state, i64) override {
    return scripted_expert(task, state, cfg_);
  }

 private:
  EnvConfig cfg_;
};

class RandomPolicy : public RolloutPolicy {
 public:
  RandomPolicy() : rng_(0) {}
  void reset(u64 seed) override { rng_ = Rng(mix_seed(seed, 0xAAAA)); }
  std::array<float, 3> act(const Tensor<u8>&, const std::array<float, 3>&, const Task&,
                           const EnvState&, i64) override {
    return {static_cast<float>(rng_.uniform(-1, 1)), static_cast<float>(rng_.uniform(-1, 1)),
            static_cast<float>(rng_.uniform(-1, 1))};
  }

 private:
  Rng rng_;
};

struct RolloutReport {
  int task_id = 0;
  u64 seed = 0;
  bool success = false;
  i64 steps_used = 0;
  std::vector<std::array<float, 3>> action_log;
};

struct EvalOptions {
  i64 seeds = 10;
  i64 episodes_per_task = 1;
  i64 budget = 200;
  int threads = 2;
  u64 base_seed = 0;
};

struct SuccessTable {
  struct Row {
    int task_id = 0;
    char family = 'A';
    i64 successes = 0;
    i64 episodes = 0;
    double rate() const { return episodes ? static_cast<double>(successes) / static_cast<double>(episodes) : 0.0; }
  };
  std::vector<Row> rows;
  i64 successes = 0;
  i64 episodes = 0;
  double rate() const { return episodes ? static_cast<double>(successes) / static_cast<double>(episodes) : 0.0; }
};

struct EvalResult {
  std::vector<RolloutReport> reports;
  SuccessTable table;
};

inline RolloutReport run_rollout(RolloutPolicy& policy, const Task& task, const EnvConfig& env,
                                 u64 seed, i64 budget) {
  RolloutReport report;
  report.task_id = task.task_id;
  report.seed = seed;
  Rng reset_rng(seed);
  EnvState state = reset_env(task, env, reset_rng);
  policy.reset(seed);
  for (i64 t = 0; t < budget; ++t) {
    if (task_success(task, state)) break;
    const Tensor<u8> obs = render(state, env);
    const std::array<float, 3> proprio{state.gripper.x, state.gripper.y,
                                       state.grasp ? 1.0f : 0.0f};
    const auto action = policy.act(obs, proprio, task, state, t);
    report.action_log.push_back(action);
    state = step(state, action, env);
    report.steps_used = t + 1;
  }
  report.success = task_success(task, state);
  return report;
}

// Deterministic per seed set: every rollout derives its randomness from its
// own (task, repetition) seed, so thread scheduling cannot reorder results.
inline EvalResult evaluate_policy(const PolicyFactory& factory, const std::vector<Task>& tasks,
                                  const EnvConfig& env, const EvalOptions& opt) {
  struct Job {
    const Task* task;
    u64 seed;
  };
  std::vector<Job> jobs;
  for (const auto& task : tasks) {
    for (i64 s = 0; s < opt.seeds; ++s) {
      for (i64 e = 0; e < opt.episodes_per_task; ++e) {
        jobs.push_back(Job{&task, mix_seed(opt.base_seed, 0xE7A1, static_cast<u64>(task.task_id),
                                           static_cast<u64>(s * 1000 + e))});
      }
    }
  }

  EvalResult result;
  result.reports.resize(jobs.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    auto policy = factory();
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= jobs.size()) break;
      result.reports[i] = run_rollout(*policy, *jobs[i].task, env, jobs[i].seed, opt.budget);
    }
  };
  const int threads = std::max(1, opt.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (const auto& task : tasks) {
    SuccessTable::Row row;
    row.task_id = task.task_id;
    row.family = task.family;
    result.table.rows.push_back(row);
  }
  for (const auto& r : result.reports) {
    for (auto& row : result.table.rows) {
      if (row.task_id == r.task_id) {
        row.episodes += 1;
        row.successes += r.success ? 1 : 0;
      }
    }
    result.table.episodes += 1;
    result.table.successes += r.success ? 1 : 0;
  }
  return result;
}

}  // namespace amplify
