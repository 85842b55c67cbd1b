#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "amplify/common.hpp"
#include "amplify/rng.hpp"
#include "amplify/tensor.hpp"
#include "amplify/trackprep.hpp"

namespace amplify {

enum class Shape { kCircle, kSquare };

struct Vec2 {
  float x = 0, y = 0;
  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
};

struct Rect {
  float x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool contains(float x, float y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  Vec2 center() const { return {(x0 + x1) * 0.5f, (y0 + y1) * 0.5f}; }
};

struct SceneObject {
  int id = 0;
  Shape shape = Shape::kCircle;
  Vec2 center;
  float extent = 0;  // radius or half-side, pixels
  std::array<u8, 3> color{};

  // Scripted orbital kinematics. Orbiting objects translate rigidly along a
  // fixed circle, so their per-step velocity is readable from their position
  // in a single frame. Radius 0 means the object only moves when carried.
  bool kinematic = false;
  Vec2 orbit_center;
  float orbit_radius = 0;
  float orbit_omega = 0;  // radians per step
  float orbit_phase = 0;

  bool contains(float x, float y) const {
    if (shape == Shape::kSquare) {
      return std::fabs(x - center.x) <= extent && std::fabs(y - center.y) <= extent;
    }
    const float dx = x - center.x, dy = y - center.y;
    return dx * dx + dy * dy <= extent * extent;
  }
};

struct EnvState {
  Vec2 gripper;
  bool grasp = false;
  int held_object = -1;  // -1 = nothing held
  std::vector<SceneObject> objects;
  i64 step_count = 0;

  const SceneObject* find(int id) const {
    for (const auto& o : objects) {
      if (o.id == id) return &o;
    }
    return nullptr;
  }
  SceneObject* find(int id) { return const_cast<SceneObject*>(std::as_const(*this).find(id)); }
};

struct Task {
  int task_id = 0;
  std::string text;
  int target_object = 0;
  Rect goal_region;
  char family = 'A';

  // Catalog extras used when spawning episodes.
  Shape target_shape = Shape::kSquare;
  std::array<u8, 3> target_color{};
  float target_extent = 0;
  Rect start_region;
};

struct EnvConfig {
  int resolution = 64;
  float max_speed = 2.0f;   // px/step; 4 at 128x128, scaled to resolution
  float marker_half = 8.0f; // gripper marker half-side
  float object_extent = 9.0f;
  int distractors = 3;
  float distractor_half = 18.0f;
  float orbit_radius = 15.0f;
  float orbit_omega = 0.12f;
  int max_episode_steps = 200;

  void validate() const {
    AMPLIFY_CHECK(resolution == 64 || resolution == 128, "unsupported resolution: ", resolution);
    AMPLIFY_CHECK(max_speed > 0, "max_speed must be positive");
  }

  float world(float at64) const { return at64 * static_cast<float>(resolution) / 64.0f; }
};

inline Vec2 orbit_position(const SceneObject& o, i64 step) {
  const double a = static_cast<double>(o.orbit_phase) +
                   static_cast<double>(o.orbit_omega) * static_cast<double>(step);
  return {static_cast<float>(o.orbit_center.x + o.orbit_radius * std::cos(a)),
          static_cast<float>(o.orbit_center.y + o.orbit_radius * std::sin(a))};
}

// Ownership used by both the renderer's z-order and the track oracle:
// gripper marker on top, then objects by descending id, background last.
constexpr int kOwnerGripper = -2;
constexpr int kOwnerNone = -1;

inline bool gripper_covers(const EnvState& s, float mhalf, float x, float y) {
  return std::fabs(x - s.gripper.x) <= mhalf && std::fabs(y - s.gripper.y) <= mhalf;
}

inline int topmost_owner(const EnvState& s, const EnvConfig& cfg, float x, float y) {
  if (gripper_covers(s, cfg.world(cfg.marker_half), x, y)) return kOwnerGripper;
  for (auto it = s.objects.rbegin(); it != s.objects.rend(); ++it) {
    if (it->contains(x, y)) return it->id;
  }
  return kOwnerNone;
}

inline float clampf(float v, float lo, float hi) { return std::min(std::max(v, lo), hi); }

// One deterministic environment transition. Inputs are clamped, never
// rejected. Grasp updates at the pre-move position, then the gripper moves
// and a held object translates rigidly by the same displacement.
inline EnvState step(const EnvState& state, const std::array<float, 3>& action,
                     const EnvConfig& cfg) {
  EnvState next = state;
  next.step_count = state.step_count + 1;

  const float cmd = clampf(action[2], -1.0f, 1.0f);
  if (cmd > 0.5f && !next.grasp) {
    next.grasp = true;
    next.held_object = -1;
    for (auto it = next.objects.rbegin(); it != next.objects.rend(); ++it) {
      if (!it->kinematic && it->contains(next.gripper.x, next.gripper.y)) {
        next.held_object = it->id;
        break;
      }
    }
  } else if (cmd < -0.5f) {
    next.grasp = false;
    next.held_object = -1;
  }

  const float hi = static_cast<float>(cfg.resolution - 1);
  const Vec2 before = next.gripper;
  next.gripper.x = clampf(before.x + clampf(action[0], -1.0f, 1.0f) * cfg.max_speed, 0.0f, hi);
  next.gripper.y = clampf(before.y + clampf(action[1], -1.0f, 1.0f) * cfg.max_speed, 0.0f, hi);
  const Vec2 delta = next.gripper - before;

  for (auto& o : next.objects) {
    if (o.kinematic) {
      o.center = orbit_position(o, next.step_count);
    } else if (o.id == next.held_object) {
      o.center.x = clampf(o.center.x + delta.x, 0.0f, hi);
      o.center.y = clampf(o.center.y + delta.y, 0.0f, hi);
    }
  }
  return next;
}

// Rasterize back-to-front by object id; gripper marker drawn last. The marker
// brightens while grasping so the full dynamics stay visible in pixels.
inline Tensor<u8> render(const EnvState& state, const EnvConfig& cfg) {
  cfg.validate();
  const int res = cfg.resolution;
  Tensor<u8> img({res, res, 3});
  constexpr std::array<u8, 3> kBackground{40, 40, 44};
  for (i64 i = 0; i < img.numel(); i += 3) {
    img.data[static_cast<size_t>(i)] = kBackground[0];
    img.data[static_cast<size_t>(i + 1)] = kBackground[1];
    img.data[static_cast<size_t>(i + 2)] = kBackground[2];
  }
  auto put = [&](int x, int y, const std::array<u8, 3>& c) {
    if (x < 0 || y < 0 || x >= res || y >= res) return;
    const size_t o = static_cast<size_t>((static_cast<i64>(y) * res + x) * 3);
    img.data[o] = c[0];
    img.data[o + 1] = c[1];
    img.data[o + 2] = c[2];
  };
  auto fill_object = [&](const SceneObject& obj) {
    const int x0 = static_cast<int>(std::floor(obj.center.x - obj.extent));
    const int x1 = static_cast<int>(std::ceil(obj.center.x + obj.extent));
    const int y0 = static_cast<int>(std::floor(obj.center.y - obj.extent));
    const int y1 = static_cast<int>(std::ceil(obj.center.y + obj.extent));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (obj.contains(static_cast<float>(x), static_cast<float>(y))) put(x, y, obj.color);
      }
    }
  };
  for (const auto& obj : state.objects) fill_object(obj);

  const float mhalf = cfg.world(cfg.marker_half);
  const std::array<u8, 3> marker =
      state.grasp ? std::array<u8, 3>{255, 255, 255} : std::array<u8, 3>{200, 200, 210};
  const int x0 = static_cast<int>(std::floor(state.gripper.x - mhalf));
  const int x1 = static_cast<int>(std::ceil(state.gripper.x + mhalf));
  const int y0 = static_cast<int>(std::floor(state.gripper.y - mhalf));
  const int y1 = static_cast<int>(std::ceil(state.gripper.y + mhalf));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (gripper_covers(state, mhalf, static_cast<float>(x), static_cast<float>(y))) {
        put(x, y, marker);
      }
    }
  }
  return img;
}

// Exact track oracle over a state sequence. A grid point keeps the owner it
// has at the window's first frame and follows that owner's rigid translation;
// everything else stays put. Positions may exit the image.
template <typename T>
TrackWindow<T> analytic_tracks(const std::vector<EnvState>& states, const Tensor<T>& grid,
                               const EnvConfig& cfg) {
  AMPLIFY_CHECK(states.size() >= 2, "oracle needs at least 2 frames");
  const i64 horizon = static_cast<i64>(states.size());
  const i64 n = grid.dim(0);
  for (i64 p = 0; p < n; ++p) {
    const float x = static_cast<float>(grid.data[static_cast<size_t>(2 * p)]);
    const float y = static_cast<float>(grid.data[static_cast<size_t>(2 * p + 1)]);
    AMPLIFY_CHECK(x >= 0 && y >= 0 && x <= static_cast<float>(cfg.resolution - 1) &&
                      y <= static_cast<float>(cfg.resolution - 1),
                  "grid point out of bounds");
  }

  TrackWindow<T> w{Tensor<T>({horizon, n, 2}), cfg.resolution};
  for (i64 p = 0; p < n; ++p) {
    const float gx = static_cast<float>(grid.data[static_cast<size_t>(2 * p)]);
    const float gy = static_cast<float>(grid.data[static_cast<size_t>(2 * p + 1)]);
    const int owner = topmost_owner(states[0], cfg, gx, gy);
    for (i64 t = 0; t < horizon; ++t) {
      Vec2 offset{0, 0};
      if (owner == kOwnerGripper) {
        offset = states[static_cast<size_t>(t)].gripper - states[0].gripper;
      } else if (owner != kOwnerNone) {
        const SceneObject* now = states[static_cast<size_t>(t)].find(owner);
        const SceneObject* first = states[0].find(owner);
        AMPLIFY_CHECK(now != nullptr && first != nullptr, "object vanished mid-window");
        offset = now->center - first->center;
      }
      w.positions.data[static_cast<size_t>((t * n + p) * 2)] = static_cast<T>(gx + offset.x);
      w.positions.data[static_cast<size_t>((t * n + p) * 2 + 1)] = static_cast<T>(gy + offset.y);
    }
  }
  return w;
}

// Phase policy: approach the target, snap-grasp, carry to the goal center,
// release. Saturating proportional control clamped to [-1, 1].
inline std::array<float, 3> scripted_expert(const Task& task, const EnvState& state,
                                            const EnvConfig& cfg) {
  const SceneObject* target = state.find(task.target_object);
  AMPLIFY_CHECK(target != nullptr, "task references missing object ", task.target_object);
  auto toward = [&](Vec2 d) {
    return std::array<float, 3>{clampf(d.x / cfg.max_speed, -1.0f, 1.0f),
                                clampf(d.y / cfg.max_speed, -1.0f, 1.0f), 0.0f};
  };
  if (state.held_object == task.target_object) {
    const Vec2 d = task.goal_region.center() - target->center;
    if (std::fabs(d.x) <= 1.0f && std::fabs(d.y) <= 1.0f) return {0.0f, 0.0f, -1.0f};
    auto a = toward(d);
    a[2] = 1.0f;
    return a;
  }
  // Approach until centered on the target, then close. Centering first keeps
  // the carry offset small so edge-adjacent goals stay reachable.
  const Vec2 d = target->center - state.gripper;
  auto a = toward(d);
  if (std::fabs(d.x) <= 1.0f && std::fabs(d.y) <= 1.0f) {
    a[2] = 1.0f;
  } else {
    a[2] = -1.0f;
  }
  return a;
}

inline bool task_success(const Task& task, const EnvState& state) {
  const SceneObject* target = state.find(task.target_object);
  if (target == nullptr) return false;
  return state.held_object != task.target_object &&
         task.goal_region.contains(target->center.x, target->center.y);
}

// ---------------------------------------------------------------------------
// Task catalog. Family A and family B share the same dynamics and distractor
// choreography but differ in colors, shapes, and goal placement, so motions
// transfer while appearances do not.

namespace detail {

struct Palette {
  const char* name;
  std::array<u8, 3> rgb;
};

inline const std::vector<Palette>& palette_a() {
  static const std::vector<Palette> p = {
      {"red", {220, 50, 47}},    {"green", {64, 200, 70}},  {"blue", {60, 90, 235}},
      {"yellow", {235, 220, 50}}, {"magenta", {211, 54, 186}}, {"cyan", {42, 210, 215}},
  };
  return p;
}

inline const std::vector<Palette>& palette_b() {
  static const std::vector<Palette> p = {
      {"orange", {245, 146, 30}}, {"purple", {138, 43, 210}}, {"teal", {0, 140, 140}},
      {"olive", {150, 150, 40}},  {"pink", {245, 150, 185}},  {"brown", {150, 90, 40}},
      {"lime", {170, 240, 60}},   {"navy", {35, 45, 130}},
  };
  return p;
}

struct GoalSpot {
  const char* name;
  float cx, cy;  // in 64-resolution units
};

inline const std::vector<GoalSpot>& goals_a() {
  static const std::vector<GoalSpot> g = {
      {"top left", 13, 13},    {"top right", 51, 13}, {"bottom left", 13, 51},
      {"bottom right", 51, 51}, {"top middle", 32, 10}, {"bottom middle", 32, 54},
  };
  return g;
}

inline const std::vector<GoalSpot>& goals_b() {
  static const std::vector<GoalSpot> g = {
      {"left middle", 10, 32},  {"right middle", 54, 32}, {"upper left", 18, 18},
      {"lower right", 46, 46},
  };
  return g;
}

}  // namespace detail

inline std::vector<Task> make_task_catalog(const EnvConfig& cfg, int family_a, int family_b) {
  AMPLIFY_CHECK(family_a + family_b > 0, "empty task catalog");
  std::vector<Task> tasks;
  const float s = static_cast<float>(cfg.resolution) / 64.0f;
  const float ghalf = cfg.world(7.0f);
  const float lo = cfg.world(10.0f), hi = cfg.world(54.0f);
  auto build = [&](int id, char family, const detail::Palette& pal, Shape shape,
                   const detail::GoalSpot& goal) {
    Task t;
    t.task_id = id;
    t.family = family;
    t.target_object = 100;  // single manipulable object per scene
    t.target_shape = shape;
    t.target_color = pal.rgb;
    t.target_extent = cfg.world(cfg.object_extent);
    t.goal_region = {goal.cx * s - ghalf, goal.cy * s - ghalf, goal.cx * s + ghalf,
                     goal.cy * s + ghalf};
    // Spawn on the far side of the scene from the goal.
    const float mx = (goal.cx * s < cfg.resolution / 2.0f) ? hi : lo;
    const float my = (goal.cy * s < cfg.resolution / 2.0f) ? hi : lo;
    const float span = cfg.world(12.0f);
    t.start_region = {std::min(mx, mx > cfg.resolution / 2.0f ? mx - span : mx + span),
                      std::min(my, my > cfg.resolution / 2.0f ? my - span : my + span),
                      std::max(mx, mx > cfg.resolution / 2.0f ? mx - span : mx + span),
                      std::max(my, my > cfg.resolution / 2.0f ? my - span : my + span)};
    t.text = strcat_all("move the ", pal.name, shape == Shape::kCircle ? " circle" : " square",
                        " to the ", goal.name);
    return t;
  };
  const auto& pa = detail::palette_a();
  const auto& ga = detail::goals_a();
  for (int i = 0; i < family_a; ++i) {
    const auto& pal = pa[static_cast<size_t>(i) % pa.size()];
    const Shape shape = (i / static_cast<int>(pa.size())) % 2 == 0 ? Shape::kSquare : Shape::kCircle;
    tasks.push_back(build(i, 'A', pal, shape, ga[static_cast<size_t>(i) % ga.size()]));
  }
  const auto& pb = detail::palette_b();
  const auto& gb = detail::goals_b();
  for (int i = 0; i < family_b; ++i) {
    const auto& pal = pb[static_cast<size_t>(i) % pb.size()];
    const Shape shape = (i / static_cast<int>(pb.size())) % 2 == 0 ? Shape::kCircle : Shape::kSquare;
    tasks.push_back(build(family_a + i, 'B', pal, shape, gb[static_cast<size_t>(i) % gb.size()]));
  }
  return tasks;
}

// Fresh episode start. All randomness flows from the provided generator.
inline EnvState reset_env(const Task& task, const EnvConfig& cfg, Rng& rng) {
  EnvState s;
  const float hi = static_cast<float>(cfg.resolution - 1);

  const float base_phase = static_cast<float>(rng.uniform(0.0, 6.283185307179586));
  for (int k = 0; k < cfg.distractors; ++k) {
    SceneObject d;
    d.id = k;
    d.shape = Shape::kSquare;
    d.extent = cfg.world(cfg.distractor_half);
    static const std::array<std::array<u8, 3>, 3> kDistractorColors{
        std::array<u8, 3>{96, 96, 120}, {120, 96, 96}, {96, 120, 96}};
    d.color = kDistractorColors[static_cast<size_t>(k) % kDistractorColors.size()];
    d.kinematic = true;
    d.orbit_center = {static_cast<float>(cfg.resolution) / 2.0f,
                      static_cast<float>(cfg.resolution) / 2.0f};
    d.orbit_radius = cfg.world(cfg.orbit_radius);
    d.orbit_omega = cfg.orbit_omega;
    // Evenly spread phases keep the ring occupied all around.
    d.orbit_phase = base_phase + static_cast<float>(k) * 6.2831853f /
                                     static_cast<float>(std::max(cfg.distractors, 1));
    d.center = orbit_position(d, 0);
    s.objects.push_back(d);
  }

  SceneObject target;
  target.id = task.target_object;
  target.shape = task.target_shape;
  target.extent = task.target_extent;
  target.color = task.target_color;
  for (int attempt = 0; attempt < 100; ++attempt) {
    target.center.x = static_cast<float>(rng.uniform(task.start_region.x0, task.start_region.x1));
    target.center.y = static_cast<float>(rng.uniform(task.start_region.y0, task.start_region.y1));
    if (!task.goal_region.contains(target.center.x, target.center.y)) break;
  }
  s.objects.push_back(target);

  const float margin = cfg.world(8.0f);
  s.gripper.x = static_cast<float>(rng.uniform(margin, hi - margin));
  s.gripper.y = static_cast<float>(rng.uniform(margin, hi - margin));
  return s;
}

}  // namespace amplify
