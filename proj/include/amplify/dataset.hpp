#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "amplify/common.hpp"
#include "amplify/config.hpp"
#include "amplify/env.hpp"
#include "amplify/io.hpp"
#include "amplify/rng.hpp"
#include "amplify/trackprep.hpp"

namespace amplify {

using Json = nlohmann::ordered_json;

// One rolled-out episode held in memory.
struct Episode {
  int task_id = 0;
  char family = 'A';
  int episode_index = 0;
  u64 seed = 0;
  i64 frames = 0;
  bool in_v = false;
  bool in_r = false;
  bool holdout = false;

  Tensor<u8> observations;   // [F, H, W, 3]
  Tensor<float> proprio;     // [F, 3] gripper x, y (pixels), grasp in {0,1}
  Tensor<float> actions;     // [F, 3] in [-1, 1]
  Tensor<float> tracks;      // [F, T, N, 2] pixel coordinates
};

inline u64 episode_seed(u64 dataset_seed, int task_id, int episode_index) {
  return mix_seed(dataset_seed, static_cast<u64>(task_id), static_cast<u64>(episode_index));
}

// Rolls the scripted expert and assembles all per-frame arrays, including the
// exact per-frame track windows (final windows pad by freezing the last frame).
inline Episode generate_episode(const Task& task, const ExperimentConfig& cfg, u64 seed) {
  const EnvConfig env = cfg.env_config();
  const int horizon = static_cast<int>(cfg.get_int("env.horizon"));
  const int n_side = static_cast<int>(cfg.get_int("env.n_side"));
  const int idle_tail = static_cast<int>(cfg.get_int("env.idle_tail"));
  Rng rng(seed);

  std::vector<EnvState> states;
  std::vector<std::array<float, 3>> actions;
  states.push_back(reset_env(task, env, rng));
  bool solved = task_success(task, states.back());
  for (int t = 0; t < env.max_episode_steps && !solved; ++t) {
    const auto a = scripted_expert(task, states.back(), env);
    actions.push_back(a);
    states.push_back(step(states.back(), a, env));
    solved = task_success(task, states.back());
  }
  AMPLIFY_CHECK(solved, "scripted expert failed task ", task.task_id, " with seed ", seed);
  for (int t = 0; t < idle_tail; ++t) {
    const std::array<float, 3> a{0.0f, 0.0f, 0.0f};
    actions.push_back(a);
    states.push_back(step(states.back(), a, env));
  }
  actions.push_back({0.0f, 0.0f, 0.0f});  // align lengths: one action per frame

  const i64 frames = static_cast<i64>(states.size());
  Episode ep;
  ep.task_id = task.task_id;
  ep.family = task.family;
  ep.seed = seed;
  ep.frames = frames;

  ep.observations = Tensor<u8>({frames, env.resolution, env.resolution, 3});
  ep.proprio = Tensor<float>({frames, 3});
  ep.actions = Tensor<float>({frames, 3});
  const Tensor<float> grid = init_grid<float>(n_side, env.resolution);
  const i64 n = grid.dim(0);
  ep.tracks = Tensor<float>({frames, horizon, n, 2});

  std::vector<EnvState> window(static_cast<size_t>(horizon));
  for (i64 t = 0; t < frames; ++t) {
    const EnvState& s = states[static_cast<size_t>(t)];
    Tensor<u8> img = render(s, env);
    std::copy(img.data.begin(), img.data.end(),
              ep.observations.data.begin() + t * img.numel());
    ep.proprio.at({t, 0}) = s.gripper.x;
    ep.proprio.at({t, 1}) = s.gripper.y;
    ep.proprio.at({t, 2}) = s.grasp ? 1.0f : 0.0f;
    for (int c = 0; c < 3; ++c) ep.actions.at({t, c}) = actions[static_cast<size_t>(t)][c];
    for (int k = 0; k < horizon; ++k) {
      const i64 src = std::min<i64>(t + k, frames - 1);
      window[static_cast<size_t>(k)] = states[static_cast<size_t>(src)];
    }
    TrackWindow<float> tw = analytic_tracks(window, grid, env);
    std::copy(tw.positions.data.begin(), tw.positions.data.end(),
              ep.tracks.data.begin() + t * tw.positions.numel());
  }
  return ep;
}

inline void apply_split_tags(Episode& ep, const ExperimentConfig& cfg) {
  const std::string split = cfg.get_string("data.split");
  const i64 total = cfg.get_int("data.episodes_per_task");
  const i64 holdout = cfg.get_int("data.holdout_per_task");
  ep.holdout = ep.episode_index >= total - holdout;
  ep.in_v = !ep.holdout;
  if (split == "in_distribution") {
    ep.in_r = ep.in_v;
  } else if (split == "fewshot") {
    ep.in_r = ep.episode_index < cfg.get_int("data.fewshot_k");
  } else if (split == "zeroshot") {
    ep.in_r = ep.in_v && ep.family == 'A';
  } else if (split == "video_only") {
    ep.in_r = false;
  } else {
    fail("unknown split: ", split);
  }
  AMPLIFY_CHECK(!ep.in_r || ep.in_v, "split produced an R episode outside V");
}

inline std::string episode_stem(int task_id, int episode_index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "t%02d_e%03d", task_id, episode_index);
  return buf;
}

// Writes one manifest plus one raw little-endian file per array per episode.
// Byte-identical output for identical (config, seed).
inline void generate_dataset(const ExperimentConfig& cfg, u64 seed, const fs::path& out_dir) {
  cfg.validate();
  const EnvConfig env = cfg.env_config();
  const auto tasks = make_task_catalog(env, static_cast<int>(cfg.get_int("env.tasks_family_a")),
                                       static_cast<int>(cfg.get_int("env.tasks_family_b")));
  AMPLIFY_CHECK(!tasks.empty(), "empty task catalog");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  AMPLIFY_CHECK(!ec && fs::is_directory(out_dir), "unwritable output path: ", out_dir.string());

  Json manifest;
  manifest["format"] = "amplify-dataset-v1";
  manifest["config_hash"] = cfg.hash();
  manifest["seed"] = seed;
  manifest["resolution"] = env.resolution;
  manifest["n_side"] = cfg.get_int("env.n_side");
  manifest["horizon"] = cfg.get_int("env.horizon");
  manifest["split"] = cfg.get_string("data.split");
  manifest["tasks"] = Json::array();
  for (const auto& t : tasks) {
    manifest["tasks"].push_back(Json{{"task_id", t.task_id},
                                     {"family", std::string(1, t.family)},
                                     {"text", t.text}});
  }

  const i64 per_task = cfg.get_int("data.episodes_per_task");
  manifest["episodes"] = Json::array();
  for (const auto& task : tasks) {
    for (i64 e = 0; e < per_task; ++e) {
      Episode ep = generate_episode(task, cfg, episode_seed(seed, task.task_id, static_cast<int>(e)));
      ep.episode_index = static_cast<int>(e);
      apply_split_tags(ep, cfg);

      const std::string stem = episode_stem(task.task_id, ep.episode_index);
      write_array(out_dir / (stem + "_obs.bin"), ep.observations);
      write_array(out_dir / (stem + "_proprio.bin"), ep.proprio);
      write_array(out_dir / (stem + "_actions.bin"), ep.actions);
      write_array(out_dir / (stem + "_tracks.bin"), ep.tracks);

      auto file_entry = [&](const char* suffix, const char* dtype,
                            const std::vector<i64>& shape) {
        return Json{{"path", stem + suffix}, {"dtype", dtype}, {"shape", shape}};
      };
      manifest["episodes"].push_back(
          Json{{"task_id", ep.task_id},
               {"family", std::string(1, ep.family)},
               {"episode_index", ep.episode_index},
               {"seed", ep.seed},
               {"frames", ep.frames},
               {"in_v", ep.in_v},
               {"in_r", ep.in_r},
               {"holdout", ep.holdout},
               {"files",
                Json{{"observations", file_entry("_obs.bin", "u8", ep.observations.shape)},
                     {"proprio", file_entry("_proprio.bin", "f32", ep.proprio.shape)},
                     {"actions", file_entry("_actions.bin", "f32", ep.actions.shape)},
                     {"tracks", file_entry("_tracks.bin", "f32", ep.tracks.shape)}}}});
    }
  }
  write_file_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

// In-memory dataset view. Arrays load eagerly; the default dataset fits in a
// few hundred MB.
struct Dataset {
  fs::path dir;
  Json manifest;
  std::vector<Episode> episodes;
  int resolution = 0;
  int n_side = 0;
  int horizon = 0;

  static std::vector<i64> shape_of(const Json& file_entry) {
    std::vector<i64> s;
    for (const auto& d : file_entry["shape"]) s.push_back(d.get<i64>());
    return s;
  }

  static Dataset load(const fs::path& dir, bool with_observations = true) {
    Dataset ds;
    ds.dir = dir;
    ds.manifest = Json::parse(read_file_text(dir / "manifest.json"));
    AMPLIFY_CHECK(ds.manifest["format"] == "amplify-dataset-v1", "unrecognized dataset format");
    ds.resolution = ds.manifest["resolution"].get<int>();
    ds.n_side = ds.manifest["n_side"].get<int>();
    ds.horizon = ds.manifest["horizon"].get<int>();
    for (const auto& em : ds.manifest["episodes"]) {
      Episode ep;
      ep.task_id = em["task_id"].get<int>();
      ep.family = em["family"].get<std::string>()[0];
      ep.episode_index = em["episode_index"].get<int>();
      ep.seed = em["seed"].get<u64>();
      ep.frames = em["frames"].get<i64>();
      ep.in_v = em["in_v"].get<bool>();
      ep.in_r = em["in_r"].get<bool>();
      ep.holdout = em["holdout"].get<bool>();
      const auto& files = em["files"];
      if (with_observations) {
        ep.observations =
            read_array<u8>(dir / files["observations"]["path"].get<std::string>(),
                           shape_of(files["observations"]));
      }
      ep.proprio = read_array<float>(dir / files["proprio"]["path"].get<std::string>(),
                                     shape_of(files["proprio"]));
      ep.actions = read_array<float>(dir / files["actions"]["path"].get<std::string>(),
                                     shape_of(files["actions"]));
      ep.tracks = read_array<float>(dir / files["tracks"]["path"].get<std::string>(),
                                    shape_of(files["tracks"]));
      ds.episodes.push_back(std::move(ep));
    }
    return ds;
  }

  std::string manifest_hash() const { return sha256_hex(manifest.dump()); }

  // Concatenates episode lists from datasets with identical geometry, e.g.
  // robot data plus video-only episodes from a second embodiment.
  static Dataset merge(Dataset a, Dataset b) {
    AMPLIFY_CHECK(a.resolution == b.resolution && a.n_side == b.n_side && a.horizon == b.horizon,
                  "cannot merge datasets with different geometry");
    Json merged;
    merged["format"] = "amplify-dataset-merged";
    merged["parts"] = Json::array({a.manifest_hash(), b.manifest_hash()});
    for (auto& ep : b.episodes) a.episodes.push_back(std::move(ep));
    a.manifest = std::move(merged);
    return a;
  }

  // Extracts the track window starting at `frame` as a [T, N, 2] view.
  TrackWindow<float> window(const Episode& ep, i64 frame) const {
    const i64 t = horizon, n = static_cast<i64>(n_side) * n_side;
    TrackWindow<float> w{Tensor<float>({t, n, 2}), resolution};
    const i64 sz = t * n * 2;
    std::copy(ep.tracks.data.begin() + frame * sz, ep.tracks.data.begin() + (frame + 1) * sz,
              w.positions.data.begin());
    return w;
  }
};

}  // namespace amplify
