#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "wmplanlab/envs.hpp"
#include "wmplanlab/io.hpp"
#include "wmplanlab/rng.hpp"

using namespace wmplan;

namespace {

EnvState at(double x, double y) { return EnvState{{x, y}, {0.0, 0.0}}; }

}  // namespace

TEST(Wall2D, ZeroActionIsIdentity) {
  const auto spec = wall2d_spec();
  const auto s = at(0.2, 0.7);
  EXPECT_EQ(step(spec, s, {0.0, 0.0}), s);
}

TEST(Wall2D, FreeMotionMovesByAction) {
  const auto spec = wall2d_spec();
  const auto s = step(spec, at(0.2, 0.2), {0.03, -0.01});
  EXPECT_NEAR(s.pos.x, 0.23, 1e-12);
  EXPECT_NEAR(s.pos.y, 0.19, 1e-12);
}

TEST(Wall2D, ActionsAreClampedToAmax) {
  const auto spec = wall2d_spec();
  const auto s = step(spec, at(0.2, 0.2), {1.0, -7.0});
  EXPECT_NEAR(s.pos.x, 0.25, 1e-12);
  EXPECT_NEAR(s.pos.y, 0.15, 1e-12);
}

TEST(Wall2D, SolidWallStopsAtFaceAndSlides) {
  // Oracle: the wall's left face is x = 0.5 - half_thickness; y=0.2 is outside the door.
  const auto spec = wall2d_spec();
  const double face = 0.5 - spec.wall_half_thickness;
  const auto s = step(spec, at(face - 0.01, 0.2), {0.05, 0.02});
  EXPECT_NEAR(s.pos.x, face - spec.contact_eps, 1e-12);
  EXPECT_NEAR(s.pos.y, 0.22, 1e-12);
  EXPECT_FALSE(in_wall(spec, s.pos));
}

TEST(Wall2D, DoorLetsAgentThrough) {
  const auto spec = wall2d_spec();
  EnvState s = at(0.45, 0.5);
  for (int i = 0; i < 3; ++i) s = step(spec, s, {0.05, 0.0});
  EXPECT_NEAR(s.pos.x, 0.6, 1e-12);
}

TEST(Wall2D, BoxEdgesClamp) {
  const auto spec = wall2d_spec();
  const auto s = step(spec, at(0.01, 0.99), {-0.05, 0.05});
  EXPECT_EQ(s.pos.x, 0.0);
  EXPECT_EQ(s.pos.y, 1.0);
}

TEST(PointMass, ZeroForceMatchesDampedClosedForm) {
  const auto spec = point_mass_maze_spec();
  const double v0 = 0.02, g = spec.damping, dt = 1.0 / spec.frameskip;
  EnvState s{{0.2, 0.2}, {v0, 0.0}};
  const auto n = step(spec, s, {0.0, 0.0});
  // sum_{k=1..F} v0 (1-g)^k dt = v0 dt (1-g)(1-(1-g)^F)/g
  const double expected = 0.2 + v0 * dt * (1 - g) * (1 - std::pow(1 - g, spec.frameskip)) / g;
  EXPECT_NEAR(n.pos.x, expected, 1e-14);
  EXPECT_NEAR(n.vel.x, v0 * std::pow(1 - g, spec.frameskip), 1e-15);
  EXPECT_EQ(n.pos.y, 0.2);
}

TEST(PointMass, BlockedAxisZeroesVelocity) {
  const auto spec = point_mass_maze_spec();
  const double face = 0.5 - spec.wall_half_thickness;
  EnvState s{{face - 0.001, 0.05}, {0.05, 0.0}};
  const auto n = step(spec, s, {1.0, 0.0});
  EXPECT_LT(n.pos.x, face);
  EXPECT_EQ(n.vel.x, 0.0);
}

TEST(Envs, NeverInsideWalls) {
  for (const auto& spec : {wall2d_spec(), point_mass_maze_spec()}) {
    CounterRng rng(77);
    for (int i = 0; i < 100000; ++i) {
      EnvState s = sample_free_state(spec, rng);
      if (spec.kind == EnvKind::point_mass_maze) s.vel = {rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)};
      const double big = 3 * spec.a_max;
      const auto n = step(spec, s, {rng.uniform(-big, big), rng.uniform(-big, big)});
      ASSERT_FALSE(in_wall(spec, n.pos)) << "from (" << s.pos.x << ", " << s.pos.y << ")";
      ASSERT_GE(n.pos.x, 0.0);
      ASSERT_LE(n.pos.x, spec.box);
      ASSERT_GE(n.pos.y, 0.0);
      ASSERT_LE(n.pos.y, spec.box);
    }
  }
}

TEST(Envs, RolloutIsFoldOfSteps) {
  const auto spec = wall2d_spec();
  CounterRng rng(3);
  std::vector<EnvAction> acts(25);
  for (auto& a : acts) a = {rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)};
  EnvState s = at(0.3, 0.5);
  const auto traj = rollout_env(spec, s, acts);
  for (std::size_t t = 0; t < acts.size(); ++t) {
    s = step(spec, s, acts[t]);
    EXPECT_EQ(traj[t], s);
  }
  // Chunking invariance.
  const auto first = rollout_env(spec, at(0.3, 0.5), {acts.begin(), acts.begin() + 10});
  const auto rest = rollout_env(spec, first.back(), {acts.begin() + 10, acts.end()});
  EXPECT_EQ(rest.back(), traj.back());
  EXPECT_EQ(rollout_env(spec, at(0.3, 0.5), {acts[0]}).front(), step(spec, at(0.3, 0.5), acts[0]));
}

TEST(Envs, ZeroActionRolloutIsConstant) {
  const auto spec = wall2d_spec();
  for (const auto& s : rollout_env(spec, at(0.7, 0.1), std::vector<EnvAction>(5, {0.0, 0.0})))
    EXPECT_EQ(s, at(0.7, 0.1));
}

TEST(Dataset, MinimalAndDeterministic) {
  const auto spec = wall2d_spec();
  const auto one = generate_dataset(spec, 1, 2, DataPolicy::random, 5);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].states.size(), 2u);
  EXPECT_EQ(one[0].actions.size(), 1u);
  for (auto policy : {DataPolicy::random, DataPolicy::goal_seeking_noisy}) {
    const auto a = generate_dataset(spec, 20, 30, policy, 9);
    const auto b = generate_dataset(spec, 20, 30, policy, 9);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].states, b[i].states);
      EXPECT_EQ(a[i].actions, b[i].actions);
    }
  }
  EXPECT_THROW(generate_dataset(spec, 0, 5, DataPolicy::random, 0), ContractError);
  EXPECT_THROW(generate_dataset(spec, 1, 1, DataPolicy::random, 0), ContractError);
}

TEST(Dataset, ActionsWithinBounds) {
  for (const auto& spec : {wall2d_spec(), point_mass_maze_spec()})
    for (const auto& ep : generate_dataset(spec, 50, 50, DataPolicy::goal_seeking_noisy, 1))
      for (const auto& a : ep.actions) {
        EXPECT_LE(std::abs(a[0]), spec.a_max);
        EXPECT_LE(std::abs(a[1]), spec.a_max);
      }
}

TEST(Dataset, GoalSeekingCrossesRooms) {
  // Measured on 500 trajectories of length 50: about half visit both rooms.
  const auto spec = wall2d_spec();
  const auto eps = generate_dataset(spec, 500, 50, DataPolicy::goal_seeking_noisy, 0);
  std::size_t both = 0;
  for (const auto& ep : eps) {
    bool left = false, right = false;
    for (const auto& s : ep.states) (s.pos.x < 0.5 ? left : right) = true;
    both += (left && right) ? 1 : 0;
  }
  EXPECT_GE(static_cast<double>(both) / eps.size(), 0.30);
}

TEST(Tasks, ReplayReachesGoalAndSeedsRepeat) {
  const auto spec = wall2d_spec();
  const auto eps = generate_dataset(spec, 30, 50, DataPolicy::goal_seeking_noisy, 2);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto task = sample_task(spec, eps, 25, seed);
    EXPECT_EQ(task.expert_actions.size(), 25u);
    const auto end = rollout_env(spec, task.start, task.expert_actions).back();
    EXPECT_TRUE(success(spec, end, task));
    EXPECT_EQ(end, task.goal_state);
    const auto again = sample_task(spec, eps, 25, seed);
    EXPECT_EQ(again.start, task.start);
    EXPECT_EQ(again.goal_obs, task.goal_obs);
  }
}

TEST(Tasks, DegenerateAndTooShort) {
  const auto spec = wall2d_spec();
  const auto eps = generate_dataset(spec, 3, 10, DataPolicy::random, 2);
  const auto t0 = sample_task(spec, eps, 0, 1);
  EXPECT_EQ(t0.start, t0.goal_state);
  EXPECT_THROW(sample_task(spec, eps, 10, 1), DatasetError);
}

TEST(Success, ClosedBallAndSymmetry) {
  const auto spec = wall2d_spec();
  TaskInstance task;
  task.goal_state = at(0.0, 0.5);
  EXPECT_TRUE(success(spec, task.goal_state, task));
  EXPECT_TRUE(success(spec, at(spec.success_radius(), 0.5), task));
  EXPECT_FALSE(success(spec, at(spec.success_radius() + 1e-9, 0.5), task));
  TaskInstance swapped;
  swapped.goal_state = at(0.03, 0.54);
  EXPECT_EQ(success(spec, at(0.03, 0.54), task), success(spec, at(0.0, 0.5), swapped));
  swapped.goal_state = at(0.03, 0.53);
  EXPECT_EQ(success(spec, at(0.03, 0.53), task), success(spec, at(0.0, 0.5), swapped));
}

TEST(Spec, ValidationRejectsBadDoors) {
  auto spec = wall2d_spec();
  spec.doors[0].hi = 1.5;
  EXPECT_THROW(validate(spec), ContractError);
  spec = wall2d_spec();
  spec.frameskip = 0;
  EXPECT_THROW(validate(spec), ContractError);
}

TEST(DatasetIo, RoundTripThroughDirectory) {
  const auto dir = std::filesystem::temp_directory_path() / "wmplanlab_test_envs_io";
  std::filesystem::remove_all(dir);
  for (const auto& spec : {wall2d_spec(), point_mass_maze_spec()}) {
    const auto eps = generate_dataset(spec, 4, 12, DataPolicy::goal_seeking_noisy, 8);
    save_episodes(dir, spec, eps, {env_kind_name(spec.kind), 4, 12, "goal-seeking-noisy", 8});
    const auto back = load_episodes(dir, spec);
    ASSERT_EQ(back.size(), eps.size());
    for (std::size_t i = 0; i < eps.size(); ++i) {
      EXPECT_EQ(back[i].actions, eps[i].actions);
      for (std::size_t t = 0; t < eps[i].states.size(); ++t) {
        EXPECT_EQ(back[i].states[t].pos, eps[i].states[t].pos);
        EXPECT_NEAR(back[i].states[t].vel.x, eps[i].states[t].vel.x, 1e-15);
        EXPECT_NEAR(back[i].states[t].vel.y, eps[i].states[t].vel.y, 1e-15);
      }
    }
    const auto h1 = hash_directory(dir);
    std::filesystem::remove_all(dir);
    save_episodes(dir, spec, generate_dataset(spec, 4, 12, DataPolicy::goal_seeking_noisy, 8),
                  {env_kind_name(spec.kind), 4, 12, "goal-seeking-noisy", 8});
    EXPECT_EQ(hash_directory(dir), h1);
    std::filesystem::remove_all(dir);
  }
}
