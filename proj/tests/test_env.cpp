#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "amplify/env.hpp"
#include "amplify/rng.hpp"

using namespace amplify;

namespace {

EnvConfig cfg128() {
  EnvConfig c;
  c.resolution = 128;
  c.max_speed = 4.0f;
  return c;
}

SceneObject make_square(int id, float x, float y, float half) {
  SceneObject o;
  o.id = id;
  o.shape = Shape::kSquare;
  o.center = {x, y};
  o.extent = half;
  o.color = {220, 50, 47};
  return o;
}

}  // namespace

TEST_CASE("step kinematics") {
  const EnvConfig cfg = cfg128();
  EnvState s;
  s.gripper = {10, 10};

  auto same = step(s, {0, 0, 0}, cfg);
  CHECK(same.gripper.x == 10.0f);
  CHECK(same.gripper.y == 10.0f);
  CHECK(same.step_count == 1);

  auto moved = step(s, {1, 0, 0}, cfg);
  CHECK(moved.gripper.x == 14.0f);
  CHECK(moved.gripper.y == 10.0f);

  // Out-of-range inputs clamp, not reject.
  auto big = step(s, {5.0f, -9.0f, 0}, cfg);
  CHECK(big.gripper.x == 14.0f);
  CHECK(big.gripper.y == 6.0f);

  // Grasp at the pre-move position, then carry: object follows the gripper.
  EnvState g;
  g.gripper = {30, 30};
  g.objects.push_back(make_square(100, 30, 30, 8));
  auto held = step(g, {0, 0, 1}, cfg);
  CHECK(held.grasp);
  CHECK(held.held_object == 100);
  auto dragged = step(held, {1, 0, 1}, cfg);
  CHECK(dragged.find(100)->center.x == 34.0f);
  CHECK(dragged.find(100)->center.y == 30.0f);

  auto released = step(dragged, {0, 0, -1}, cfg);
  CHECK_FALSE(released.grasp);
  CHECK(released.held_object == -1);
  // Released object stays while the gripper moves on.
  auto after = step(released, {1, 1, 0}, cfg);
  CHECK(after.find(100)->center.x == 34.0f);

  // Determinism: identical inputs, identical outputs.
  auto again = step(g, {0.3f, -0.2f, 1}, cfg);
  auto again2 = step(g, {0.3f, -0.2f, 1}, cfg);
  CHECK(again.gripper.x == again2.gripper.x);
  CHECK(again.gripper.y == again2.gripper.y);
}

TEST_CASE("orbiting objects are scripted by step count") {
  EnvConfig cfg;
  EnvState s;
  SceneObject d;
  d.id = 0;
  d.shape = Shape::kSquare;
  d.extent = 10;
  d.kinematic = true;
  d.orbit_center = {32, 32};
  d.orbit_radius = 18;
  d.orbit_omega = 0.11f;
  d.orbit_phase = 0.7f;
  d.center = orbit_position(d, 0);
  s.objects.push_back(d);

  EnvState cur = s;
  for (int t = 1; t <= 5; ++t) {
    cur = step(cur, {0, 0, 0}, cfg);
    const Vec2 want = orbit_position(d, t);
    CHECK(cur.objects[0].center.x == want.x);
    CHECK(cur.objects[0].center.y == want.y);
    // Per-step speed stays within the no-clamp budget.
    const Vec2 prev = orbit_position(d, t - 1);
    CHECK(std::fabs(want.x - prev.x) <= 4.0f);
    CHECK(std::fabs(want.y - prev.y) <= 4.0f);
  }
}

TEST_CASE("render rasterizes objects and is pure") {
  EnvConfig cfg;
  cfg.resolution = 64;
  EnvState empty;
  empty.gripper = {-100, -100};  // marker off-screen
  auto img = render(empty, cfg);
  REQUIRE(img.shape == std::vector<i64>({64, 64, 3}));
  for (i64 i = 0; i < img.numel(); i += 3) {
    CHECK(img.data[static_cast<size_t>(i)] == 40);
  }

  EnvState s;
  s.gripper = {-100, -100};
  SceneObject c;
  c.id = 5;
  c.shape = Shape::kCircle;
  c.center = {32, 32};
  c.extent = 8;
  c.color = {10, 200, 30};
  s.objects.push_back(c);
  auto img2 = render(s, cfg);
  CHECK(img2.at({32, 32, 1}) == 200);  // row=y, col=x
  CHECK(img2.at({0, 0, 1}) == 40);

  auto img3 = render(s, cfg);
  CHECK(img2.data == img3.data);

  EnvConfig bad;
  bad.resolution = 100;
  CHECK_THROWS(render(s, bad));
}

TEST_CASE("analytic tracks follow rigid owners") {
  EnvConfig cfg;
  cfg.resolution = 64;
  const auto grid = init_grid<float>(8, 64);

  // Static scene: every frame equals the grid.
  EnvState still;
  still.gripper = {-50, -50};
  std::vector<EnvState> states(5, still);
  auto w = analytic_tracks(states, grid, cfg);
  for (i64 t = 0; t < 5; ++t) {
    for (i64 p = 0; p < grid.dim(0); ++p) {
      CHECK(w.positions.at({t, p, 0}) == grid.at({p, 0}));
      CHECK(w.positions.at({t, p, 1}) == grid.at({p, 1}));
    }
  }

  // Object translating (2, 0): interior points carry velocity (2, 0).
  EnvState s0;
  s0.gripper = {-50, -50};
  s0.objects.push_back(make_square(100, 20, 20, 6));
  std::vector<EnvState> moving;
  for (int t = 0; t < 4; ++t) {
    EnvState st = s0;
    st.objects[0].center.x += static_cast<float>(2 * t);
    moving.push_back(st);
  }
  auto wm = analytic_tracks(moving, grid, cfg);
  auto u = velocities(wm);
  for (i64 p = 0; p < grid.dim(0); ++p) {
    const bool inside = s0.objects[0].contains(grid.at({p, 0}), grid.at({p, 1}));
    for (i64 t = 0; t < 3; ++t) {
      CHECK(u.velocities.at({t, p, 0}) == (inside ? 2.0f : 0.0f));
      CHECK(u.velocities.at({t, p, 1}) == 0.0f);
    }
  }

  // Held object dragged along an L-shaped path matches the closed form.
  EnvConfig c2;
  c2.resolution = 64;
  c2.max_speed = 2.0f;
  EnvState hs;
  hs.gripper = {30, 30};
  hs.objects.push_back(make_square(100, 30, 30, 6));
  hs = step(hs, {0, 0, 1}, c2);
  std::vector<EnvState> path{hs};
  for (int t = 0; t < 3; ++t) path.push_back(step(path.back(), {1, 0, 1}, c2));
  for (int t = 0; t < 3; ++t) path.push_back(step(path.back(), {0, 1, 1}, c2));
  auto wl = analytic_tracks(path, grid, c2);
  for (i64 p = 0; p < grid.dim(0); ++p) {
    const float gx = grid.at({p, 0}), gy = grid.at({p, 1});
    const int owner = topmost_owner(path[0], c2, gx, gy);
    for (size_t t = 0; t < path.size(); ++t) {
      float ox = 0, oy = 0;
      if (owner != kOwnerNone) {
        const i64 k = static_cast<i64>(t);
        ox = static_cast<float>(std::min<i64>(k, 3)) * 2.0f;
        oy = static_cast<float>(std::max<i64>(0, k - 3)) * 2.0f;
      }
      CHECK(wl.positions.at({static_cast<i64>(t), p, 0}) == gx + ox);
      CHECK(wl.positions.at({static_cast<i64>(t), p, 1}) == gy + oy);
    }
  }

  Tensor<float> bad_grid({1, 2});
  bad_grid.data = {-5.0f, 10.0f};
  CHECK_THROWS(analytic_tracks(states, bad_grid, cfg));
}

TEST_CASE("gripper occludes objects for ownership") {
  EnvConfig cfg;
  cfg.resolution = 64;
  EnvState s;
  s.gripper = {50, 20};
  s.objects.push_back(make_square(0, 20, 20, 10));
  s.objects.push_back(make_square(3, 20, 20, 4));
  CHECK(topmost_owner(s, cfg, 50, 20) == kOwnerGripper);
  CHECK(topmost_owner(s, cfg, 22, 22) == 3);   // inside both squares, higher id wins
  CHECK(topmost_owner(s, cfg, 20, 29.5f) == 0);
  CHECK(topmost_owner(s, cfg, 50, 50) == kOwnerNone);
  // Gripper on top of both squares.
  s.gripper = {20, 20};
  CHECK(topmost_owner(s, cfg, 22, 22) == kOwnerGripper);
}

TEST_CASE("scripted expert phases") {
  EnvConfig cfg;
  cfg.resolution = 64;
  const auto tasks = make_task_catalog(cfg, 2, 0);
  const Task& task = tasks[0];

  EnvState s;
  SceneObject target = make_square(task.target_object, 40, 40, 8);
  s.objects.push_back(target);
  s.gripper = {40, 40};
  auto a = scripted_expert(task, s, cfg);
  CHECK(std::fabs(a[0]) < 1e-5f);
  CHECK(std::fabs(a[1]) < 1e-5f);
  CHECK(a[2] == 1.0f);

  // Held at the goal center: release.
  EnvState h;
  SceneObject at_goal = make_square(task.target_object, task.goal_region.center().x,
                                    task.goal_region.center().y, 8);
  h.objects.push_back(at_goal);
  h.gripper = at_goal.center;
  h.grasp = true;
  h.held_object = task.target_object;
  auto r = scripted_expert(task, h, cfg);
  CHECK(r[0] == 0.0f);
  CHECK(r[1] == 0.0f);
  CHECK(r[2] == -1.0f);

  EnvState missing;
  missing.gripper = {5, 5};
  CHECK_THROWS(scripted_expert(task, missing, cfg));
}

TEST_CASE("expert succeeds on the whole catalog within the step budget") {
  EnvConfig cfg;
  cfg.resolution = 64;
  cfg.max_speed = 2.0f;
  const auto tasks = make_task_catalog(cfg, 12, 8);
  REQUIRE(tasks.size() == 20);
  int runs = 0, solved = 0;
  for (const auto& task : tasks) {
    for (u64 seed : {11ull, 222ull, 3333ull}) {
      Rng rng(mix_seed(seed, static_cast<u64>(task.task_id)));
      EnvState s = reset_env(task, cfg, rng);
      bool ok = task_success(task, s);
      for (int t = 0; t < 200 && !ok; ++t) {
        s = step(s, scripted_expert(task, s, cfg), cfg);
        ok = task_success(task, s);
      }
      ++runs;
      solved += ok ? 1 : 0;
    }
  }
  CHECK(solved == runs);
}
