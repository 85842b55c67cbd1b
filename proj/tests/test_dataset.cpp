#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "amplify/dataset.hpp"
#include "amplify/hash.hpp"

using namespace amplify;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.set("env.tasks_family_a", "2");
  cfg.set("env.tasks_family_b", "1");
  cfg.set("data.episodes_per_task", "4");
  cfg.set("data.holdout_per_task", "1");
  cfg.set("env.horizon", "4");
  cfg.set("env.n_side", "4");
  cfg.set("env.idle_tail", "2");
  return cfg;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "amplify_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string dir_fingerprint(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir));
  }
  std::sort(files.begin(), files.end());
  Sha256 h;
  for (const auto& f : files) {
    h.update(f.string());
    const auto bytes = read_file_bytes(dir / f);
    h.update(bytes.data(), bytes.size());
  }
  return h.hex();
}

}  // namespace

TEST_CASE("dataset generation is byte-deterministic") {
  const auto cfg = tiny_config();
  const auto d1 = fresh_dir("det1"), d2 = fresh_dir("det2");
  generate_dataset(cfg, 7, d1);
  generate_dataset(cfg, 7, d2);
  CHECK(dir_fingerprint(d1) == dir_fingerprint(d2));

  const auto d3 = fresh_dir("det3");
  generate_dataset(cfg, 8, d3);
  CHECK(dir_fingerprint(d1) != dir_fingerprint(d3));
}

TEST_CASE("split tags follow the split policy") {
  auto cfg = tiny_config();

  SECTION("in distribution: R equals V") {
    const auto dir = fresh_dir("split_id");
    generate_dataset(cfg, 3, dir);
    auto ds = Dataset::load(dir, false);
    REQUIRE(ds.episodes.size() == 12);
    for (const auto& ep : ds.episodes) {
      CHECK(ep.in_v == !ep.holdout);
      CHECK(ep.in_r == ep.in_v);
      CHECK(ep.holdout == (ep.episode_index == 3));
    }
  }

  SECTION("zero shot: family B is video-only") {
    cfg.set("data.split", "zeroshot");
    const auto dir = fresh_dir("split_zs");
    generate_dataset(cfg, 3, dir);
    auto ds = Dataset::load(dir, false);
    for (const auto& ep : ds.episodes) {
      if (ep.family == 'B') {
        CHECK_FALSE(ep.in_r);
        CHECK(ep.in_v == !ep.holdout);
      } else if (!ep.holdout) {
        CHECK(ep.in_r);
      }
      if (ep.in_r) CHECK(ep.in_v);  // R subset of V
    }
  }

  SECTION("few shot: exactly k lowest-index episodes carry R") {
    cfg.set("data.split", "fewshot");
    cfg.set("data.fewshot_k", "2");
    const auto dir = fresh_dir("split_fs");
    generate_dataset(cfg, 3, dir);
    auto ds = Dataset::load(dir, false);
    std::map<int, std::vector<int>> r_indices;
    for (const auto& ep : ds.episodes) {
      if (ep.in_r) r_indices[ep.task_id].push_back(ep.episode_index);
      if (ep.in_r) CHECK(ep.in_v);
    }
    REQUIRE(r_indices.size() == 3);
    for (auto& [task, idx] : r_indices) {
      std::sort(idx.begin(), idx.end());
      CHECK(idx == std::vector<int>{0, 1});
    }
  }

  SECTION("video only: R empty") {
    cfg.set("data.split", "video_only");
    const auto dir = fresh_dir("split_vo");
    generate_dataset(cfg, 3, dir);
    auto ds = Dataset::load(dir, false);
    for (const auto& ep : ds.episodes) CHECK_FALSE(ep.in_r);
  }
}

TEST_CASE("episode arrays are consistent and tracks never clamp") {
  auto cfg = tiny_config();
  const auto dir = fresh_dir("arrays");
  generate_dataset(cfg, 11, dir);
  auto ds = Dataset::load(dir, true);
  const i64 n = ds.n_side * static_cast<i64>(ds.n_side);

  i64 total_clamped = 0;
  for (const auto& ep : ds.episodes) {
    REQUIRE(ep.observations.dim(0) == ep.frames);
    REQUIRE(ep.proprio.dim(0) == ep.frames);
    REQUIRE(ep.actions.dim(0) == ep.frames);
    REQUIRE(ep.tracks.shape == std::vector<i64>({ep.frames, ds.horizon, n, 2}));
    for (float a : ep.actions.data) {
      CHECK(a >= -1.0f);
      CHECK(a <= 1.0f);
    }
    for (i64 f = 0; f < ep.frames; ++f) {
      auto w = ds.window(ep, f);
      i64 clamped = 0;
      omega(velocities(w), 15, &clamped);
      total_clamped += clamped;
    }
    CHECK(ep.seed == episode_seed(11, ep.task_id, ep.episode_index));
  }
  CHECK(total_clamped == 0);

  // Final windows freeze the last frame: the velocity of the last window's
  // tail is zero for non-kinematic owners; just check the very last window is
  // fully frozen relative to itself.
  const auto& ep = ds.episodes.front();
  auto last = ds.window(ep, ep.frames - 1);
  auto u = velocities(last);
  for (float v : u.velocities.data) CHECK(v == 0.0f);
}

TEST_CASE("oracle velocities match the rigid motion of step exactly") {
  auto cfg = tiny_config();
  const auto dir = fresh_dir("oracle_exact");
  generate_dataset(cfg, 5, dir);
  auto ds = Dataset::load(dir, true);

  // Re-simulate one episode and compare the stored window against a freshly
  // computed oracle on the replayed states.
  const EnvConfig env = cfg.env_config();
  const auto tasks = make_task_catalog(env, 2, 1);
  const auto& ep = ds.episodes[1];
  Episode regen = generate_episode(tasks[static_cast<size_t>(ep.task_id)], cfg, ep.seed);
  REQUIRE(regen.frames == ep.frames);
  CHECK(regen.tracks.data == ep.tracks.data);
  CHECK(regen.observations.data == ep.observations.data);
}

TEST_CASE("generation rejects unusable inputs") {
  auto cfg = tiny_config();
  CHECK_THROWS(generate_dataset(cfg, 1, fs::path("/proc/definitely_unwritable/x")));

  auto empty = tiny_config();
  empty.set("env.tasks_family_a", "0");
  empty.set("env.tasks_family_b", "0");
  CHECK_THROWS(generate_dataset(empty, 1, fresh_dir("emptycat")));
}

TEST_CASE("external track arrays replace the oracle through the same format") {
  // A hand-written dataset directory in the documented binary format: the
  // loader and everything downstream consume whatever track files the
  // manifest names, so real tracker outputs can stand in for the oracle.
  const auto dir = fresh_dir("external");
  const i64 frames = 3, horizon = 4, n = 16;
  Tensor<u8> obs({frames, 64, 64, 3});
  Tensor<float> proprio({frames, 3});
  Tensor<float> actions({frames, 3});
  Tensor<float> tracks({frames, horizon, n, 2});
  Rng rng(4);
  for (auto& v : tracks.data) v = static_cast<float>(rng.uniform(1.0, 62.0));
  write_array(dir / "t00_e000_obs.bin", obs);
  write_array(dir / "t00_e000_proprio.bin", proprio);
  write_array(dir / "t00_e000_actions.bin", actions);
  write_array(dir / "t00_e000_tracks.bin", tracks);

  Json manifest;
  manifest["format"] = "amplify-dataset-v1";
  manifest["config_hash"] = "external";
  manifest["seed"] = 0;
  manifest["resolution"] = 64;
  manifest["n_side"] = 4;
  manifest["horizon"] = horizon;
  manifest["split"] = "in_distribution";
  manifest["tasks"] = Json::array({Json{{"task_id", 0}, {"family", "A"}, {"text", "external"}}});
  auto fe = [&](const char* p, const char* d, const std::vector<i64>& s) {
    return Json{{"path", p}, {"dtype", d}, {"shape", s}};
  };
  manifest["episodes"] = Json::array(
      {Json{{"task_id", 0},
            {"family", "A"},
            {"episode_index", 0},
            {"seed", 7},
            {"frames", frames},
            {"in_v", true},
            {"in_r", true},
            {"holdout", false},
            {"files",
             Json{{"observations", fe("t00_e000_obs.bin", "u8", obs.shape)},
                  {"proprio", fe("t00_e000_proprio.bin", "f32", proprio.shape)},
                  {"actions", fe("t00_e000_actions.bin", "f32", actions.shape)},
                  {"tracks", fe("t00_e000_tracks.bin", "f32", tracks.shape)}}}}});
  write_file_text(dir / "manifest.json", manifest.dump(2) + "\n");

  auto ds = Dataset::load(dir);
  REQUIRE(ds.episodes.size() == 1);
  CHECK(ds.episodes[0].tracks.data == tracks.data);
  auto w = ds.window(ds.episodes[0], 1);
  CHECK(w.positions.at({0, 0, 0}) == tracks.at({1, 0, 0, 0}));
  // Imported tracks flow through the velocity/label machinery unchanged.
  auto u = velocities(w);
  CHECK(u.steps() == horizon - 1);
  i64 clamped = 0;
  omega(u, 15, &clamped);  // counted, not rejected
}
