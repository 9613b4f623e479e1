#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wmplanlab/errors.hpp"
#include "wmplanlab/rng.hpp"

namespace wmplan {

using Observation = std::vector<double>;

/// Environment action in world units: displacement (Wall2D) or force (PointMassMaze).
using EnvAction = std::array<double, 2>;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double dist(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

enum class EnvKind { wall2d, point_mass_maze };

inline const char* env_kind_name(EnvKind k) { return k == EnvKind::wall2d ? "wall2d" : "pointmass"; }

/// Axis-aligned wall segment; walls are thickened by `EnvSpec::wall_half_thickness`.
struct Segment {
  Vec2 p0, p1;
  bool vertical() const { return p0.x == p1.x; }
};

/// Opening of [lo, hi] along the segment's running coordinate.
struct DoorGap {
  std::size_t segment = 0;
  double lo = 0.0;
  double hi = 0.0;
};

struct EnvSpec {
  EnvKind kind = EnvKind::wall2d;
  double box = 1.0;
  std::vector<Segment> walls;
  std::vector<DoorGap> doors;
  double wall_half_thickness = 0.02;
  double a_max = 0.05;
  double damping = 0.0;      // PointMass only, per substep
  double force_gain = 0.0;   // PointMass only
  double velocity_obs_scale = 1.0;
  int frameskip = 5;
  double contact_eps = 1e-6;

  double success_radius() const { return 0.05 * box; }
  std::size_t obs_dim() const { return kind == EnvKind::wall2d ? 2 : 4; }
  std::size_t action_dim() const { return 2; }
};

inline EnvSpec wall2d_spec() {
  EnvSpec s;
  s.kind = EnvKind::wall2d;
  s.box = 1.0;
  s.walls = {Segment{{0.5, 0.0}, {0.5, 1.0}}};
  s.doors = {DoorGap{0, 0.4, 0.6}};
  s.a_max = 0.05;
  return s;
}

inline EnvSpec point_mass_maze_spec() {
  EnvSpec s;
  s.kind = EnvKind::point_mass_maze;
  s.box = 1.0;
  s.walls = {Segment{{0.5, 0.0}, {0.5, 1.0}}, Segment{{0.0, 0.5}, {1.0, 0.5}}};
  s.doors = {DoorGap{0, 0.15, 0.35}, DoorGap{0, 0.65, 0.85}, DoorGap{1, 0.15, 0.35}};
  s.a_max = 1.0;
  s.damping = 0.1;
  s.force_gain = 0.025;
  s.velocity_obs_scale = 10.0;
  return s;
}

inline void validate(const EnvSpec& s) {
  require(s.frameskip >= 1, "env: frameskip must be >= 1");
  require(s.box > 0.0 && s.a_max > 0.0, "env: box size and a_max must be positive");
  for (const auto& w : s.walls)
    require(w.p0.x == w.p1.x || w.p0.y == w.p1.y, "env: walls must be axis-aligned");
  for (const auto& d : s.doors) {
    require(d.segment < s.walls.size(), "env: door refers to a missing wall");
    const auto& w = s.walls[d.segment];
    const double a = w.vertical() ? std::min(w.p0.y, w.p1.y) : std::min(w.p0.x, w.p1.x);
    const double b = w.vertical() ? std::max(w.p0.y, w.p1.y) : std::max(w.p0.x, w.p1.x);
    require(a <= d.lo && d.lo < d.hi && d.hi <= b, "env: door gap must lie on its wall segment");
  }
}

struct EnvState {
  Vec2 pos;
  Vec2 vel;  // always zero for Wall2D
  friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct Rect {
  double x0, y0, x1, y1;
  bool contains(Vec2 p) const { return p.x > x0 && p.x < x1 && p.y > y0 && p.y < y1; }
};

/// Solid wall pieces (segments minus door gaps), thickened into rectangles.
inline std::vector<Rect> obstacles(const EnvSpec& s) {
  std::vector<Rect> out;
  const double h = s.wall_half_thickness;
  for (std::size_t i = 0; i < s.walls.size(); ++i) {
    const auto& w = s.walls[i];
    const bool vert = w.vertical();
    double lo = vert ? std::min(w.p0.y, w.p1.y) : std::min(w.p0.x, w.p1.x);
    const double hi = vert ? std::max(w.p0.y, w.p1.y) : std::max(w.p0.x, w.p1.x);
    std::vector<std::pair<double, double>> gaps;
    for (const auto& d : s.doors)
      if (d.segment == i) gaps.emplace_back(d.lo, d.hi);
    std::sort(gaps.begin(), gaps.end());
    auto emit = [&](double a, double b) {
      if (b <= a) return;
      if (vert)
        out.push_back(Rect{w.p0.x - h, a, w.p0.x + h, b});
      else
        out.push_back(Rect{a, w.p0.y - h, b, w.p0.y + h});
    };
    for (const auto& [glo, ghi] : gaps) {
      emit(lo, glo);
      lo = ghi;
    }
    emit(lo, hi);
  }
  return out;
}

inline bool in_wall(const EnvSpec& s, Vec2 p) {
  for (const auto& r : obstacles(s))
    if (r.contains(p)) return true;
  return false;
}

namespace detail {

// Move along one axis, stopping at the first obstacle face or box edge. Returns true if blocked.
inline bool move_axis(const std::vector<Rect>& obs, double box, double eps, Vec2& p, double delta, bool along_x) {
  double from = along_x ? p.x : p.y;
  double to = from + delta;
  const double other = along_x ? p.y : p.x;
  bool blocked = false;
  for (const auto& r : obs) {
    const double lo = along_x ? r.x0 : r.y0;
    const double hi = along_x ? r.x1 : r.y1;
    const double olo = along_x ? r.y0 : r.x0;
    const double ohi = along_x ? r.y1 : r.x1;
    if (!(other > olo && other < ohi)) continue;
    if (delta > 0.0 && from <= lo && to > lo - eps) {
      to = lo - eps;
      blocked = true;
    } else if (delta < 0.0 && from >= hi && to < hi + eps) {
      to = hi + eps;
      blocked = true;
    }
  }
  if (to < 0.0) {
    to = 0.0;
    blocked = true;
  } else if (to > box) {
    to = box;
    blocked = true;
  }
  // Never move backwards when already resting against a face.
  if ((delta > 0.0 && to < from) || (delta < 0.0 && to > from)) to = from;
  (along_x ? p.x : p.y) = to;
  return blocked;
}

}  // namespace detail

/// One logical environment step: `frameskip` substeps with the same (clamped) action.
inline EnvState step(const EnvSpec& spec, const EnvState& s, const EnvAction& a) {
  const auto obs = obstacles(spec);
  const double ax = std::clamp(a[0], -spec.a_max, spec.a_max);
  const double ay = std::clamp(a[1], -spec.a_max, spec.a_max);
  const double dt = 1.0 / static_cast<double>(spec.frameskip);
  EnvState out = s;
  for (int k = 0; k < spec.frameskip; ++k) {
    if (spec.kind == EnvKind::wall2d) {
      detail::move_axis(obs, spec.box, spec.contact_eps, out.pos, ax * dt, true);
      detail::move_axis(obs, spec.box, spec.contact_eps, out.pos, ay * dt, false);
    } else {
      out.vel.x = (1.0 - spec.damping) * out.vel.x + spec.force_gain * ax * dt;
      out.vel.y = (1.0 - spec.damping) * out.vel.y + spec.force_gain * ay * dt;
      if (detail::move_axis(obs, spec.box, spec.contact_eps, out.pos, out.vel.x * dt, true)) out.vel.x = 0.0;
      if (detail::move_axis(obs, spec.box, spec.contact_eps, out.pos, out.vel.y * dt, false)) out.vel.y = 0.0;
    }
  }
  return out;
}

/// States s_2..s_{H+1} reached by applying `actions` from `s1`.
inline std::vector<EnvState> rollout_env(const EnvSpec& spec, const EnvState& s1, const std::vector<EnvAction>& actions) {
  require(!actions.empty(), "rollout_env: need at least one action");
  std::vector<EnvState> out;
  out.reserve(actions.size());
  EnvState s = s1;
  for (const auto& a : actions) {
    s = step(spec, s, a);
    out.push_back(s);
  }
  return out;
}

inline Observation observe(const EnvSpec& spec, const EnvState& s) {
  if (spec.kind == EnvKind::wall2d) return {s.pos.x, s.pos.y};
  return {s.pos.x, s.pos.y, s.vel.x * spec.velocity_obs_scale, s.vel.y * spec.velocity_obs_scale};
}

inline EnvState state_from_obs(const EnvSpec& spec, const Observation& o) {
  require(o.size() == spec.obs_dim(), "observation dimension does not match env");
  EnvState s;
  s.pos = {o[0], o[1]};
  if (spec.kind == EnvKind::point_mass_maze) s.vel = {o[2] / spec.velocity_obs_scale, o[3] / spec.velocity_obs_scale};
  return s;
}

/// Rooms are the cells of the wall grid; used by the scripted data policy.
inline int room_of(const EnvSpec& spec, Vec2 p) {
  int room = 0;
  int bit = 1;
  for (const auto& w : spec.walls) {
    if (w.vertical() ? p.x > w.p0.x : p.y > w.p0.y) room |= bit;
    bit <<= 1;
  }
  return room;
}

// ---------------------------------------------------------------------------
// Dataset generation

enum class DataPolicy { random, goal_seeking_noisy };

inline const char* policy_name(DataPolicy p) { return p == DataPolicy::random ? "random" : "goal-seeking-noisy"; }

/// One stored trajectory: states s_1..s_{T+1} and env-unit actions a_1..a_T.
struct Episode {
  std::vector<EnvState> states;
  std::vector<EnvAction> actions;
};

inline EnvState sample_free_state(const EnvSpec& spec, CounterRng& rng) {
  const double margin = 0.02 * spec.box;
  for (;;) {
    Vec2 p{rng.uniform(margin, spec.box - margin), rng.uniform(margin, spec.box - margin)};
    bool clear = !in_wall(spec, p);
    for (const auto& r : obstacles(spec))
      if (p.x > r.x0 - margin && p.x < r.x1 + margin && p.y > r.y0 - margin && p.y < r.y1 + margin) clear = false;
    if (clear) return EnvState{p, {0.0, 0.0}};
  }
}

namespace detail {

// Approach point on `p`'s side of the nearest door leading out of its room toward `goal`'s room.
inline Vec2 next_target(const EnvSpec& spec, Vec2 p, Vec2 goal) {
  if (room_of(spec, p) == room_of(spec, goal)) return goal;
  const double off = 0.08 * spec.box;
  std::optional<Vec2> best;
  double best_cost = 1e300;
  for (const auto& d : spec.doors) {
    const auto& w = spec.walls[d.segment];
    const double mid = 0.5 * (d.lo + d.hi);
    const Vec2 c = w.vertical() ? Vec2{w.p0.x, mid} : Vec2{mid, w.p0.y};
    const bool p_low = w.vertical() ? p.x < c.x : p.y < c.y;
    const bool g_low = w.vertical() ? goal.x < c.x : goal.y < c.y;
    if (p_low == g_low) continue;  // door does not separate p from goal
    const double sgn = p_low ? -1.0 : 1.0;
    const Vec2 near = w.vertical() ? Vec2{c.x + sgn * off, c.y} : Vec2{c.x, c.y + sgn * off};
    const Vec2 far = w.vertical() ? Vec2{c.x - sgn * off, c.y} : Vec2{c.x, c.y - sgn * off};
    // Only doors reachable from the current room count.
    if (room_of(spec, near) != room_of(spec, p)) continue;
    const double cost = dist(p, near) + dist(far, goal);
    if (cost < best_cost) {
      best_cost = cost;
      // Aligned with the opening: head through it.
      const double lateral = w.vertical() ? std::abs(p.y - c.y) : std::abs(p.x - c.x);
      const double normal = w.vertical() ? std::abs(p.x - c.x) : std::abs(p.y - c.y);
      const double half = 0.5 * (d.hi - d.lo) - 0.03 * spec.box;
      best = (lateral < half && normal <= off + 0.02 * spec.box) ? far : near;
    }
  }
  return best.value_or(goal);
}

}  // namespace detail

inline std::vector<Episode> generate_dataset(const EnvSpec& spec, std::size_t n_traj, std::size_t traj_len,
                                             DataPolicy policy, std::uint64_t seed) {
  validate(spec);
  require(n_traj >= 1, "generate_dataset: n_traj must be >= 1");
  require(traj_len >= 2, "generate_dataset: traj_len must be >= 2");
  std::vector<Episode> out;
  out.reserve(n_traj);
  for (std::size_t i = 0; i < n_traj; ++i) {
    CounterRng rng(derive_seed(seed, i));
    Episode ep;
    EnvState s = sample_free_state(spec, rng);
    Vec2 waypoint = sample_free_state(spec, rng).pos;
    ep.states.push_back(s);
    for (std::size_t t = 0; t + 1 < traj_len; ++t) {
      EnvAction a{};
      if (policy == DataPolicy::random) {
        a = {rng.uniform(-spec.a_max, spec.a_max), rng.uniform(-spec.a_max, spec.a_max)};
      } else {
        if (dist(s.pos, waypoint) < 0.03 * spec.box) waypoint = sample_free_state(spec, rng).pos;
        const Vec2 target = detail::next_target(spec, s.pos, waypoint);
        const double ex = target.x - s.pos.x, ey = target.y - s.pos.y;
        if (spec.kind == EnvKind::wall2d) {
          a = {ex, ey};
        } else {
          a = {4.0 * ex - 10.0 * s.vel.x, 4.0 * ey - 10.0 * s.vel.y};
        }
        const double noise = 0.5 * spec.a_max;
        a[0] = std::clamp(std::clamp(a[0], -spec.a_max, spec.a_max) + rng.uniform(-noise, noise), -spec.a_max,
                          spec.a_max);
        a[1] = std::clamp(std::clamp(a[1], -spec.a_max, spec.a_max) + rng.uniform(-noise, noise), -spec.a_max,
                          spec.a_max);
      }
      s = step(spec, s, a);
      ep.actions.push_back(a);
      ep.states.push_back(s);
    }
    out.push_back(std::move(ep));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tasks

struct TaskInstance {
  EnvState start;
  Observation goal_obs;
  EnvState goal_state;  // used only by `success`
  std::size_t horizon_gap = 0;
  std::vector<EnvAction> expert_actions;  // stored actions from start to goal
  std::size_t source_traj = 0;
  std::size_t source_offset = 0;
};

inline TaskInstance sample_task(const EnvSpec& spec, const std::vector<Episode>& data, std::size_t horizon_gap,
                                std::uint64_t seed) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data[i].states.size() >= horizon_gap + 1) eligible.push_back(i);
  if (eligible.empty())
    throw DatasetError("dataset too short: no trajectory with " + std::to_string(horizon_gap + 1) + " states");
  CounterRng rng(seed);
  const auto idx = eligible[rng.below(eligible.size())];
  const auto& ep = data[idx];
  const auto offset = static_cast<std::size_t>(rng.below(ep.states.size() - horizon_gap));
  TaskInstance task;
  task.start = ep.states[offset];
  task.goal_state = ep.states[offset + horizon_gap];
  task.goal_obs = observe(spec, task.goal_state);
  task.horizon_gap = horizon_gap;
  task.expert_actions.assign(ep.actions.begin() + static_cast<std::ptrdiff_t>(offset),
                             ep.actions.begin() + static_cast<std::ptrdiff_t>(offset + horizon_gap));
  task.source_traj = idx;
  task.source_offset = offset;
  return task;
}

inline bool success(const EnvSpec& spec, const EnvState& s, const TaskInstance& task) {
  return dist(s.pos, task.goal_state.pos) <= spec.success_radius();
}

}  // namespace wmplan
