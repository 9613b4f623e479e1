#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fd_oracle.hpp"
#include "wmplanlab/planners.hpp"

using namespace wmplan;

namespace {

// Residual model with no hidden layer: f(z, a) = z + B a, with B given row-major [dz, da].
WorldModel linear_model(std::size_t dz, std::size_t da, const std::vector<double>& B) {
  WorldModel f = WorldModel::make(dz, da, {}, true, 0, true);
  auto& W = f.net.params[0];  // [dz + da, dz]; x W with x = [z, a]
  std::vector<double> w(W.size(), 0.0);
  for (std::size_t i = 0; i < dz; ++i)
    for (std::size_t k = 0; k < da; ++k) w[(dz + k) * dz + i] = B[i * da + k];
  W = Tensor::raw(W.shape(), std::move(w));
  return f;
}

double min_over(const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); }

}  // namespace

TEST(GoalLoss, FinalAndWeighted) {
  Tape tape;
  const std::vector<Var> zs{tape.constant(Tensor::row(std::vector<double>{1.0, 0.0})),
                            tape.constant(Tensor::row(std::vector<double>{0.0, 2.0})),
                            tape.constant(Tensor::row(std::vector<double>{3.0, 3.0}))};
  const Var g = tape.constant(Tensor::row(std::vector<double>{0.0, 0.0}));
  EXPECT_DOUBLE_EQ(goal_loss(GoalLossSpec::final_state(), zs, g).value().item(), 18.0);
  // w = 2^2, 2^3, 2^4 = 4, 8, 16 -> normalized by 28, averaged over H=3.
  const auto w = GoalLossSpec::exponential(3, 2.0);
  EXPECT_EQ(w.weights, (std::vector<double>{4.0, 8.0, 16.0}));
  const double want = (4.0 / 28 * 1.0 + 8.0 / 28 * 4.0 + 16.0 / 28 * 18.0) / 3.0;
  EXPECT_NEAR(goal_loss(w, zs, g).value().item(), want, 1e-15);
  EXPECT_THROW(goal_loss(GoalLossSpec::exponential(2, 2.0), zs, g), ContractError);
}

TEST(Gbp, ReachesLeastSquaresOptimumOfLinearModel) {
  // z_{H+1} = z1 + B sum(a); the best reachable loss is the residual of projecting (zg - z1) onto range(B).
  const std::vector<double> B{0.3, 0.0, 0.1, 0.2, 0.0, 0.4};  // 3x2
  const auto f = linear_model(3, 2, B);
  const Latent z1{0.0, 0.0, 0.0}, zg{0.5, -0.3, 0.8};
  // Normal equations solved by hand (2x2).
  double a11 = 0, a12 = 0, a22 = 0, r1 = 0, r2 = 0;
  for (int i = 0; i < 3; ++i) {
    a11 += B[i * 2] * B[i * 2];
    a12 += B[i * 2] * B[i * 2 + 1];
    a22 += B[i * 2 + 1] * B[i * 2 + 1];
    r1 += B[i * 2] * zg[i];
    r2 += B[i * 2 + 1] * zg[i];
  }
  const double det = a11 * a22 - a12 * a12;
  const double s1 = (a22 * r1 - a12 * r2) / det, s2 = (a11 * r2 - a12 * r1) / det;
  double residual = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double d = B[i * 2] * s1 + B[i * 2 + 1] * s2 - zg[i];
    residual += d * d;
  }
  PlanConfig cfg;
  cfg.horizon = 5;
  cfg.iterations = 2000;
  cfg.lr = 0.05;
  cfg.clamp = false;
  cfg.seed = 3;
  const auto r = gbp(f, z1, zg, cfg);
  EXPECT_NEAR(r.final_loss, residual, 1e-8);
  double sum1 = 0, sum2 = 0;
  for (const auto& a : r.actions) {
    sum1 += a[0];
    sum2 += a[1];
  }
  EXPECT_NEAR(sum1, s1, 1e-3);
  EXPECT_NEAR(sum2, s2, 1e-3);
}

TEST(Gbp, SgdStepMatchesFiniteDifferenceGradient) {
  const auto f = WorldModel::make(3, 2, {5}, true, 8, false);
  const Latent z1{0.1, -0.2, 0.3}, zg{0.4, 0.0, -0.1};
  const std::vector<Action> init{{0.2, -0.1}, {0.0, 0.3}, {-0.4, 0.1}, {0.5, 0.5}};
  PlanConfig cfg;
  cfg.horizon = 4;
  cfg.iterations = 1;
  cfg.optimizer = OptimizerKind::sgd;
  cfg.lr = 0.1;
  cfg.clamp = false;
  cfg.best_iterate = false;
  const auto r = gbp(f, z1, zg, cfg, &init);
  std::vector<double> flat;
  for (const auto& a : init) flat.insert(flat.end(), a.begin(), a.end());
  const auto g = wmplan::testing::central_difference(
      [&](const std::vector<double>& x) { return final_state_cost(f, z1, zg, detail::unflatten(x, 4, 2)); }, flat);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(r.actions[t][k], flat[t * 2 + k] - 0.1 * g[t * 2 + k], 1e-9);
}

TEST(Gbp, ClampBestIterateAndDeterminism) {
  const auto f = WorldModel::make(4, 2, {8}, true, 1, false);
  const Latent z1{0.1, 0.2, 0.3, 0.4}, zg{-0.5, 0.5, 0.0, 1.0};
  PlanConfig cfg;
  cfg.horizon = 6;
  cfg.iterations = 40;
  cfg.lr = 0.5;
  cfg.seed = 11;
  const auto a = gbp(f, z1, zg, cfg);
  const auto b = gbp(f, z1, zg, cfg);
  EXPECT_EQ(a.actions, b.actions);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  for (const auto& act : a.actions)
    for (double x : act) EXPECT_LE(std::abs(x), 1.0);
  EXPECT_EQ(a.final_loss, min_over(a.loss_trace));
  EXPECT_NEAR(final_state_cost(f, z1, zg, a.actions), a.final_loss, 1e-12);
  EXPECT_EQ(a.iterations, 40u);
  EXPECT_EQ(a.initial_loss, a.loss_trace.front());
  cfg.seed = 12;
  EXPECT_NE(gbp(f, z1, zg, cfg).actions, a.actions);
}

TEST(Gbp, RejectsBadConfig) {
  const auto f = WorldModel::make(2, 2, {4}, true, 1);
  PlanConfig cfg;
  cfg.horizon = 3;
  cfg.lr = 0.0;
  EXPECT_THROW(gbp(f, {0, 0}, {1, 1}, cfg), ContractError);
  cfg.lr = 0.1;
  cfg.horizon = 0;
  EXPECT_THROW(gbp(f, {0, 0}, {1, 1}, cfg), ContractError);
  cfg.horizon = 3;
  const std::vector<Action> short_init{{0, 0}};
  EXPECT_THROW(gbp(f, {0, 0}, {1, 1}, cfg, &short_init), ContractError);
  EXPECT_THROW(gbp(f, {0, 0, 0}, {1, 1}, cfg), ContractError);
}

TEST(Gbp, InitNetInitialization) {
  const auto f = WorldModel::make(2, 2, {4}, true, 1);
  const auto g = InitNet::make(2, 2, 3, {8}, 5);
  const Latent z1{0.1, 0.2}, zg{0.6, -0.3};
  PlanConfig cfg;
  cfg.horizon = 3;
  cfg.iterations = 1;
  cfg.init = InitKind::initnet;
  // One iteration with best-iterate returns the (clamped) starting point.
  const auto r = plan(f, GbpPlanner{cfg, &g}, z1, zg, 0);
  EXPECT_EQ(r.actions, init_actions(g, z1, zg));
  EXPECT_THROW(plan(f, GbpPlanner{cfg, nullptr}, z1, zg, 0), ContractError);
}

TEST(Cem, SolvesReachableLinearGoalWithinBounds) {
  const auto f = linear_model(2, 2, {0.2, 0.0, 0.0, 0.2});
  const Latent z1{0.0, 0.0}, zg{0.3, -0.2};
  CemConfig cfg;
  cfg.population = 200;
  cfg.elites = 20;
  cfg.iterations = 25;
  const auto r = cem(f, z1, zg, cfg, 5, 4);
  EXPECT_LT(r.final_loss, 1e-3);
  for (const auto& a : r.actions)
    for (double x : a) EXPECT_LE(std::abs(x), 1.0);
  // Elite costs cannot get worse by more than sampling noise once converged.
  EXPECT_LT(r.loss_trace.back(), r.loss_trace.front());
}

TEST(Cem, ObserverSeesConsistentRefit) {
  const auto f = linear_model(2, 2, {0.2, 0.0, 0.0, 0.2});
  CemConfig cfg;
  cfg.population = 40;
  cfg.elites = 5;
  cfg.iterations = 3;
  std::vector<CemIteration> seen;
  cfg.observer = [&](const CemIteration& it) { seen.push_back(it); };
  cem(f, {0.0, 0.0}, {0.1, 0.1}, cfg, 2, 0);
  ASSERT_EQ(seen.size(), 3u);
  for (const auto& it : seen) {
    ASSERT_EQ(it.elites.size(), 5u);
    // Elites are the lowest costs.
    auto sorted = it.costs;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t e = 0; e < 5; ++e) EXPECT_EQ(it.costs[it.elites[e]], sorted[e]);
    const std::size_t D = 4;
    for (std::size_t r = 0; r < D; ++r) {
      EXPECT_GE(it.covariance[r * D + r], 0.0);
      for (std::size_t c = 0; c < D; ++c) EXPECT_NEAR(it.covariance[r * D + c], it.covariance[c * D + r], 1e-15);
    }
  }
}

TEST(Cem, GradCemWithoutRefinementIsCem) {
  const auto f = WorldModel::make(3, 2, {6}, true, 2, false);
  CemConfig cfg;
  cfg.population = 30;
  cfg.elites = 5;
  cfg.iterations = 4;
  const Latent z1{0.1, 0.0, -0.1}, zg{0.3, 0.2, 0.1};
  const auto a = cem(f, z1, zg, cfg, 4, 9);
  const auto b = gradcem(f, z1, zg, cfg, GradRefineConfig{0, 0.3}, 4, 9);
  EXPECT_EQ(a.actions, b.actions);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  const auto c = gradcem(f, z1, zg, cfg, GradRefineConfig{2, 0.3}, 4, 9);
  EXPECT_NE(a.actions, c.actions);
  EXPECT_LE(c.loss_trace.front(), a.loss_trace.front() + 1e-12);
}

TEST(Cem, RejectsBadConfig) {
  const auto f = WorldModel::make(2, 2, {4}, true, 1);
  CemConfig cfg;
  cfg.elites = 0;
  EXPECT_THROW(cem(f, {0, 0}, {1, 1}, cfg, 3, 0), ContractError);
  cfg.elites = 400;
  EXPECT_THROW(cem(f, {0, 0}, {1, 1}, cfg, 3, 0), ContractError);
}

TEST(Mppi, IncludingNominalWithColdTemperatureNeverWorsens) {
  const auto f = WorldModel::make(3, 2, {6}, true, 6, false);
  MppiConfig cfg;
  cfg.include_nominal = true;
  cfg.temperature = 1e-9;
  cfg.iterations = 30;
  const Latent z1{0.0, 0.1, 0.2}, zg{0.5, -0.5, 0.3};
  const auto r = mppi(f, z1, zg, cfg, 5, 1);
  double prev = r.initial_loss;
  for (double c : r.loss_trace) {
    EXPECT_LE(c, prev + 1e-12);
    prev = c;
  }
  EXPECT_EQ(r.final_loss, r.loss_trace.back());
}

TEST(Mppi, ZeroNoiseKeepsNominal) {
  const auto f = WorldModel::make(2, 2, {4}, true, 6, false);
  MppiConfig cfg;
  cfg.sigma = 0.0;
  cfg.iterations = 3;
  const std::vector<Action> nominal{{0.2, -0.3}, {0.1, 0.0}};
  const auto r = mppi(f, {0.0, 0.0}, {1.0, 1.0}, cfg, 2, 0, &nominal);
  EXPECT_EQ(r.actions, nominal);
}

TEST(Mpc, OneStepFullHorizonIsOpenLoopPlan) {
  const auto spec = wall2d_spec();
  const auto enc = Encoder::identity(2);
  const auto f = linear_model(2, 2, {spec.a_max, 0.0, 0.0, spec.a_max});
  TaskInstance task;
  task.start = EnvState{{0.1, 0.1}, {}};
  task.goal_state = EnvState{{0.3, 0.25}, {}};
  task.goal_obs = observe(spec, task.goal_state);
  PlanConfig cfg;
  cfg.horizon = 8;
  cfg.iterations = 200;
  cfg.lr = 0.1;
  const std::uint64_t seed = 21;
  const auto r = mpc(spec, f, enc, task, GbpPlanner{cfg, nullptr}, MpcConfig{1, 0, false}, seed);
  PlanConfig direct = cfg;
  direct.seed = mpc_step_seed(seed, 0);
  const auto open = gbp(f, enc.encode(observe(spec, task.start)), enc.encode(task.goal_obs), direct);
  ASSERT_EQ(r.plans.size(), 1u);
  EXPECT_EQ(r.plans[0].actions, open.actions);
  ASSERT_LE(r.executed.size(), open.actions.size());
  for (std::size_t t = 0; t < r.executed.size(); ++t) EXPECT_EQ(r.executed[t], open.actions[t]);
  // The model is exact in free space, so the plan reaches the goal.
  EXPECT_TRUE(r.success);
  EXPECT_EQ(r.visited.size(), r.executed.size() + 1);
}

TEST(Mpc, StartAtGoalSucceedsWithoutPlanning) {
  const auto spec = wall2d_spec();
  const auto enc = Encoder::identity(2);
  const auto f = linear_model(2, 2, {spec.a_max, 0.0, 0.0, spec.a_max});
  TaskInstance task;
  task.start = task.goal_state = EnvState{{0.3, 0.3}, {}};
  task.goal_obs = observe(spec, task.goal_state);
  const auto r = mpc(spec, f, enc, task, GbpPlanner{}, MpcConfig{}, 0);
  EXPECT_TRUE(r.success);
  EXPECT_TRUE(r.plans.empty());
}

TEST(Mpc, PartialExecutionReplansAndRespectsBudget) {
  const auto spec = wall2d_spec();
  const auto enc = Encoder::identity(2);
  const auto f = WorldModel::make(2, 2, {4}, true, 0, true);  // predicts no motion: never succeeds
  TaskInstance task;
  task.start = EnvState{{0.1, 0.1}, {}};
  task.goal_state = EnvState{{0.9, 0.9}, {}};
  task.goal_obs = observe(spec, task.goal_state);
  PlanConfig cfg;
  cfg.horizon = 5;
  cfg.iterations = 2;
  const auto r = mpc(spec, f, enc, task, GbpPlanner{cfg, nullptr}, MpcConfig{3, 2, true}, 0);
  EXPECT_EQ(r.plans.size(), 3u);
  EXPECT_EQ(r.executed.size(), 6u);
  EXPECT_THROW(mpc(spec, f, enc, task, GbpPlanner{cfg, nullptr}, MpcConfig{3, 6, false}, 0), ContractError);
}
