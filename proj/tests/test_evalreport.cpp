#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "wmplanlab/evalreport.hpp"

using namespace wmplan;

namespace {

// Exact latent dynamics of Wall2D away from walls under the identity encoder.
WorldModel free_space_model(const EnvSpec& spec) {
  WorldModel f = WorldModel::make(2, 2, {}, true, 0, true);
  std::vector<double> w(f.net.params[0].size(), 0.0);
  w[2 * 2 + 0] = spec.a_max;
  w[3 * 2 + 1] = spec.a_max;
  f.net.params[0] = Tensor::raw(f.net.params[0].shape(), std::move(w));
  return f;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

struct Bench {
  EnvSpec spec = wall2d_spec();
  Encoder enc = Encoder::identity(2);
  std::vector<Episode> data = generate_dataset(spec, 20, 20, DataPolicy::goal_seeking_noisy, 3);
  WorldModel exact = free_space_model(spec);
  WorldModel still = WorldModel::make(2, 2, {4}, true, 0, true);
  PlanConfig gbp_cfg = [] {
    PlanConfig p;
    p.horizon = 6;
    p.iterations = 60;
    p.lr = 0.2;
    return p;
  }();
};

}  // namespace

TEST(Wilson, KnownValues) {
  auto ci = wilson_interval(0, 10);
  EXPECT_EQ(ci.lo, 0.0);
  EXPECT_NEAR(ci.hi, 0.2775, 1e-4);
  ci = wilson_interval(5, 10);
  EXPECT_NEAR(ci.lo, 0.2366, 1e-4);
  EXPECT_NEAR(ci.hi, 0.7634, 1e-4);
  ci = wilson_interval(50, 100);
  EXPECT_NEAR(ci.lo, 0.4038, 1e-4);
  EXPECT_NEAR(ci.hi, 0.5962, 1e-4);
  EXPECT_EQ(wilson_interval(0, 0), (Interval{0.0, 1.0}));
}

TEST(Wilson, ContainsPointEstimate) {
  for (std::size_t n = 1; n <= 60; ++n)
    for (std::size_t s = 0; s <= n; ++s) {
      const auto ci = wilson_interval(s, n);
      const double p = static_cast<double>(s) / static_cast<double>(n);
      ASSERT_LE(ci.lo, p + 1e-15);
      ASSERT_GE(ci.hi, p - 1e-15);
      ASSERT_GE(ci.lo, 0.0);
      ASSERT_LE(ci.hi, 1.0);
    }
}

TEST(ParallelMap, OrderedAndRethrows) {
  const auto out = parallel_map<std::size_t>(50, 4, [](std::size_t i) { return i * i; });
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(out[i], i * i);
  EXPECT_THROW(parallel_map<int>(10, 3,
                                 [](std::size_t i) -> int {
                                   if (i == 7) throw DatasetError("boom");
                                   return 0;
                                 }),
               DatasetError);
}

TEST(Evaluate, PairedDeterministicAndWorkerInvariant) {
  Bench s;
  EvalConfig cfg;
  cfg.n_tasks = 12;
  cfg.horizon_gap = 6;
  cfg.mode = EvalMode::mpc;
  cfg.mpc = MpcConfig{3, 0, false};
  cfg.seed = 5;
  const std::vector<NamedModel> models{{"exact", &s.exact}, {"still", &s.still}};
  const std::vector<NamedPlanner> planners{{"gbp", GbpPlanner{s.gbp_cfg, nullptr}}};
  auto a = evaluate(s.spec, s.enc, s.data, models, planners, cfg);
  cfg.workers = 3;
  auto b = evaluate(s.spec, s.enc, s.data, models, planners, cfg);
  ASSERT_EQ(a.cells.size(), 2u);
  // Equal up to wall-clock fields.
  for (auto* r : {&a, &b})
    for (auto& c : r->cells) {
      c.mean_plan_seconds = 0.0;
      for (auto& row : c.rows) row.plan_seconds = 0.0;
    }
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.cells[0].n, 12u);
  // The exact model reaches most goals; the motionless model only those already within reach.
  EXPECT_GT(a.cells[0].successes, a.cells[1].successes);
  EXPECT_EQ(a.cells[0].success_rate, static_cast<double>(a.cells[0].successes) / 12.0);
  EXPECT_EQ(a.cells[0].ci, wilson_interval(a.cells[0].successes, 12));
}

TEST(Evaluate, OpenLoopIsSingleFullPlan) {
  Bench s;
  EvalConfig cfg;
  cfg.n_tasks = 6;
  cfg.horizon_gap = 6;
  cfg.mode = EvalMode::open_loop;
  cfg.mpc = MpcConfig{10, 1, true};  // ignored in open-loop mode
  const auto r = evaluate(s.spec, s.enc, s.data, {{"exact", &s.exact}}, {{"gbp", GbpPlanner{s.gbp_cfg, nullptr}}}, cfg);
  EXPECT_EQ(r.mode, "open-loop");
  for (const auto& row : r.cells[0].rows) EXPECT_LE(row.plan_calls, 1u);
}

TEST(Evaluate, TaskErrorsAreRecordedNotFatal) {
  Bench s;
  EvalConfig cfg;
  cfg.n_tasks = 4;
  cfg.horizon_gap = 6;
  PlanConfig broken = s.gbp_cfg;
  broken.init = InitKind::initnet;  // no init network supplied
  const auto r = evaluate(s.spec, s.enc, s.data, {{"exact", &s.exact}}, {{"broken", GbpPlanner{broken, nullptr}}}, cfg);
  std::size_t errors = 0;
  for (const auto& row : r.cells[0].rows) {
    errors += row.error.empty() ? 0 : 1;
    if (!row.error.empty()) {
      EXPECT_FALSE(row.success);
    }
  }
  EXPECT_GT(errors, 0u);
}

TEST(Report, RoundTripAndTimingSplit) {
  Bench s;
  EvalConfig cfg;
  cfg.n_tasks = 5;
  cfg.horizon_gap = 6;
  cfg.mpc = MpcConfig{2, 0, false};
  auto rep = evaluate(s.spec, s.enc, s.data, {{"exact", &s.exact}}, {{"gbp", GbpPlanner{s.gbp_cfg, nullptr}}}, cfg);
  rep.config_hashes["exact"] = "00000000deadbeef";
  const auto dir = std::filesystem::temp_directory_path() / "wmplanlab_test_report";
  std::filesystem::remove_all(dir);
  emit_report(rep, dir);
  EXPECT_EQ(parse_report(dir), rep);
  const auto body = read_text(dir / "report.json");
  EXPECT_EQ(body.find("seconds"), std::string::npos);
  EXPECT_EQ(count_lines(read_text(dir / "cells.csv")), 1u + 5u);
  // Without timing.json the rest still parses, with zeroed wall-clock fields.
  std::filesystem::remove(dir / "timing.json");
  const auto bare = parse_report(dir);
  EXPECT_EQ(bare.cells[0].successes, rep.cells[0].successes);
  EXPECT_EQ(bare.cells[0].mean_plan_seconds, 0.0);
  std::filesystem::remove_all(dir);

  EvalReport empty;
  EXPECT_EQ(report_from_json(to_json(empty)), empty);
  EXPECT_EQ(cells_csv(empty), "model,planner,mode,task_id,success,plan_seconds,final_loss\n");
}

TEST(Gap, IdenticalActionsGiveZeroDifference) {
  Bench s;
  const GapPlanner replay = [&](const Latent&, const Latent&, const TaskInstance& task, std::uint64_t) {
    std::vector<Action> out;
    for (const auto& a : task.expert_actions) out.push_back(to_model_action(s.spec, a));
    return out;
  };
  const auto g = train_test_gap(s.still, s.spec, s.enc, s.data, s.gbp_cfg, 8, 1, replay);
  EXPECT_EQ(g.difference, 0.0);
  EXPECT_EQ(g.per_task_expert, g.per_task_planned);
  EXPECT_GT(g.mean_expert, 0.0);
  EXPECT_EQ(gap_from_json(to_json(g)), g);
}

TEST(Gap, MotionlessModelErrorIsStepLength) {
  // Identity prediction: per-step error is the squared displacement actually made.
  Bench s;
  const auto g = train_test_gap(s.still, s.spec, s.enc, s.data, s.gbp_cfg, 4, 2);
  const auto tasks = sample_tasks(s.spec, s.data, 4, s.gbp_cfg.horizon, 2);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto states = rollout_env(s.spec, tasks[i].start, tasks[i].expert_actions);
    double e = 0.0;
    EnvState prev = tasks[i].start;
    for (const auto& st : states) {
      const double dx = st.pos.x - prev.pos.x, dy = st.pos.y - prev.pos.y;
      e += dx * dx + dy * dy;
      prev = st;
    }
    EXPECT_NEAR(g.per_task_expert[i], e / static_cast<double>(states.size()), 1e-15);
  }
}

TEST(Landscape, GridHitsAnchorsAndGroundTruth) {
  Bench s;
  const auto adv = free_space_model(s.spec);
  auto tasks = sample_tasks(s.spec, s.data, 1, 6, 4);
  LandscapeConfig cfg;
  cfg.resolution = 5;
  cfg.c_min = -1.0;
  cfg.c_max = 1.0;
  cfg.anchor.iterations = 30;
  cfg.anchor.lr = 0.05;
  const auto r = landscape(s.still, adv, s.spec, s.enc, tasks[0], cfg, 9);
  ASSERT_EQ(r.baseline.values.size(), 25u);
  EXPECT_EQ(r.baseline.alpha, r.adversarial.alpha);
  EXPECT_EQ(r.baseline.coefficient(2), 0.0);
  const auto gt = detail::flatten_actions(r.a_gt);
  const auto gt_loss = [&](const WorldModel& f, const std::vector<double>& x) {
    return batch_goal_losses(f, s.enc.encode(observe(s.spec, tasks[0].start)), s.enc.encode(tasks[0].goal_obs),
                             cfg.anchor.loss, x, 1, 6)[0];
  };
  EXPECT_NEAR(r.baseline.at(2, 2), gt_loss(s.still, gt), 1e-14);
  EXPECT_NEAR(r.adversarial.at(2, 2), gt_loss(adv, gt), 1e-14);
  // (u, v) = (1, 0) is the baseline anchor, (0, 1) the other model's.
  EXPECT_NEAR(r.baseline.at(4, 2), r.baseline.anchor_loss, 1e-12);
  EXPECT_NEAR(r.adversarial.at(2, 4), r.adversarial.anchor_loss, 1e-12);
  EXPECT_EQ(count_lines(grid_csv(r.baseline)), 26u);
  EXPECT_EQ(grid_from_json(to_json(r.adversarial)), r.adversarial);
}

TEST(Landscape, TotalVariation) {
  LandscapeGrid g;
  g.resolution = 3;
  g.values = std::vector<double>(9, 2.0);
  EXPECT_EQ(total_variation(g), 0.0);
  // v[i][j] = i + 2j: 6 vertical pairs of 1, 6 horizontal pairs of 2.
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) g.values[i * 3 + j] = static_cast<double>(i + 2 * j);
  EXPECT_EQ(total_variation(g), 18.0);
}

TEST(Probe, RecoversLinearMap) {
  const auto spec = wall2d_spec();
  const auto data = generate_dataset(spec, 5, 10, DataPolicy::random, 0);
  const auto p = train_probe_decoder(spec, Encoder::identity(2), data);
  EXPECT_FALSE(p.ridge);
  EXPECT_LT(p.rmse, 1e-12);
  const auto o = p.decode({0.3, 0.7});
  EXPECT_NEAR(o[0], 0.3, 1e-12);
  EXPECT_NEAR(o[1], 0.7, 1e-12);
  const auto csv = decoded_csv(p, {{0.1, 0.2}, {0.3, 0.4}});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,o0,o1");
  EXPECT_EQ(count_lines(csv), 3u);
}

TEST(Probe, RankDeficientFallsBackToRidge) {
  std::vector<Latent> zs;
  std::vector<Observation> obs;
  for (int i = 0; i < 10; ++i) {
    const double x = 0.1 * i;
    zs.push_back({x, 2 * x});  // collinear columns
    obs.push_back({x});
  }
  const auto p = train_probe_decoder(zs, obs);
  EXPECT_TRUE(p.ridge);
  EXPECT_LT(p.rmse, 1e-4);
}
