#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "ralu/cost.hpp"
#include "ralu/errors.hpp"
#include "ralu/pipeline.hpp"
#include "ralu/rng.hpp"

using namespace ralu;

namespace {

RunConfig small_config() {
  RunConfig cfg;
  cfg.base_height = 8;
  cfg.base_width = 8;
  cfg.channels = 2;
  cfg.stages = {{3, 0.3}, {3, 0.45}, {4, 1.0}};
  cfg.ratio = 0.25;
  cfg.h_ori = 3.0;
  cfg.seed = 42;
  return cfg;
}

SchedulePlan fixed_plan(const RunConfig& cfg) {
  const std::vector<double> shifts(cfg.stages.size(), 2.5);
  return make_plan(cfg.stages, shifts, 0.0251, cfg.h_ori);
}

GaussianBackend backend_for(const RunConfig& cfg) {
  return GaussianBackend({synthetic_mean_field(2 * cfg.base_height, 2 * cfg.base_width, cfg.channels), 0.5});
}

}  // namespace

TEST_CASE("three-stage run on the standard base") {
  RunConfig cfg;
  cfg.stages = {{5, 0.3}, {6, 0.45}, {7, 1.0}};
  cfg.ratio = 0.3;
  const SchedulePlan plan = make_plan(cfg.stages, std::vector<double>{5.02, 2.59, 2.23}, 0.0251, 3.0);
  const GaussianBackend be = backend_for(cfg);
  const RunResult r = run_ralu(cfg, plan, be);
  REQUIRE(r.report.stages.size() == 3);
  CHECK(r.report.stages[0].tokens == 1024);
  CHECK(r.report.stages[1].tokens == 1948);
  CHECK(r.report.stages[2].tokens == 4096);
  CHECK(r.report.selected.size() == 308);
  CHECK(r.output.level() == Level::High);
  CHECK(r.output.height() == 64);

  // timesteps are the plan's, transitions at e_k and restarts at s_{k+1}
  for (std::size_t k = 0; k < 3; ++k) CHECK(r.report.stages[k].timesteps == plan.stages[k].timesteps);
  CHECK(r.report.stages[0].timesteps.back() == 0.3);
  CHECK(r.report.stages[1].timesteps.front() == injection_coefficients(0.3, 0.0251).s_next);

  // accounting matches the cost module
  const std::vector<int> steps = {5, 6, 7};
  CHECK(r.report.token_steps == token_steps(steps, token_counts(1024, 0.3), 50, 1024).total);
  CHECK(r.report.selection_tokens == 1024);

  // selection favours edge patches: the selected set scores at least as high as any other
  REQUIRE(r.selection.has_value());
  const auto& scores = r.selection->scores.scores;
  double min_sel = 1e300;
  for (std::size_t p : r.report.selected) min_sel = std::min(min_sel, scores[p]);
  std::vector<bool> chosen(scores.size(), false);
  for (std::size_t p : r.report.selected) chosen[p] = true;
  for (std::size_t p = 0; p < scores.size(); ++p) {
    if (!chosen[p]) CHECK(scores[p] <= min_sel);
  }
}

TEST_CASE("runs are deterministic in the seed") {
  const RunConfig cfg = small_config();
  const SchedulePlan plan = fixed_plan(cfg);
  const GaussianBackend be = backend_for(cfg);
  const RunResult a = run_ralu(cfg, plan, be);
  const RunResult b = run_ralu(cfg, plan, be);
  CHECK(a.output == b.output);
  CHECK(a.report == b.report);
  RunConfig other = cfg;
  other.seed = 43;
  CHECK_FALSE(run_ralu(other, plan, be).output == a.output);
  CHECK(run_fullres_baseline(cfg, be).output == run_fullres_baseline(cfg, be).output);
}

TEST_CASE("full promotion in the middle stage") {
  RunConfig cfg = small_config();
  cfg.ratio = 1.0;
  const RunResult r = run_ralu(cfg, fixed_plan(cfg), backend_for(cfg));
  CHECK(r.report.stages[0].tokens == 64);
  CHECK(r.report.stages[1].tokens == 256);
  CHECK(r.report.stages[2].tokens == 256);
  CHECK(r.report.stages[1].high_tokens == 256);
}

TEST_CASE("two-stage runs upsample everything at once") {
  RunConfig cfg = small_config();
  cfg.stages = {{4, 0.4}, {5, 1.0}};
  const SchedulePlan plan = make_plan(cfg.stages, std::vector<double>{3.0, 2.0}, 0.05, 3.0);
  const RunResult r = run_ralu(cfg, plan, backend_for(cfg));
  CHECK(r.report.stages[0].tokens == 64);
  CHECK(r.report.stages[1].tokens == 256);
  CHECK(r.report.selected.empty());
  CHECK_FALSE(r.selection.has_value());
}

TEST_CASE("caching in the pipeline") {
  RunConfig cfg;
  cfg.stages = {{5, 0.3}, {6, 0.45}, {7, 1.0}};
  cfg.caching = CachePolicy{};
  const SchedulePlan plan = make_plan(cfg.stages, std::vector<double>{5.02, 2.59, 2.23}, 0.0251, 3.0);
  const RunResult r = run_ralu(cfg, plan, backend_for(cfg));
  CHECK(r.report.stages[0].computed_per_step == std::vector<std::size_t>(5, 1024));
  CHECK(r.report.stages[1].computed_per_step == std::vector<std::size_t>{1948, 1948, 1168, 1168, 1168, 1168});
  CHECK(r.report.stages[2].computed_per_step ==
        std::vector<std::size_t>{4096, 4096, 2457, 2457, 2457, 2457, 4096});
  const std::vector<int> steps = {5, 6, 7};
  CHECK(r.report.token_steps == token_steps(steps, token_counts(1024, 0.3, 3, 0.4), 50, 1024).total);

  RunConfig zero = cfg;
  zero.caching = CachePolicy{0.0, {2, 3}};
  RunConfig off = cfg;
  off.caching.reset();
  CHECK(run_ralu(zero, plan, backend_for(cfg)).output == run_ralu(off, plan, backend_for(cfg)).output);
}

TEST_CASE("skipping injection resumes at the stage end") {
  RunConfig cfg = small_config();
  cfg.skip_injection = true;
  const SchedulePlan plan = fixed_plan(cfg);
  const RunResult r = run_ralu(cfg, plan, backend_for(cfg));
  CHECK(r.report.injection_skipped);
  CHECK(r.report.stages[1].start == 0.3);
  CHECK(r.report.stages[2].start == 0.45);
}

TEST_CASE("baseline accounting") {
  RunConfig cfg;
  const RunResult r = run_fullres_baseline(cfg, backend_for(cfg));
  REQUIRE(r.report.stages.size() == 1);
  CHECK(r.report.token_steps == 204800);
  CHECK(r.report.stages[0].tokens == 4096);
  CHECK(r.report.stages[0].timesteps == discretize_timesteps(0.0, 1.0, cfg.h_ori, 50));
}

TEST_CASE("config validation") {
  RunConfig cfg = small_config();
  cfg.ratio = 1.5;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = small_config();
  cfg.stages = {{3, 0.5}, {3, 0.4}, {3, 1.0}};
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = small_config();
  const std::vector<StageConfig> single = {{5, 1.0}};
  cfg.stages = single;
  CHECK_THROWS_AS(run_ralu(cfg, make_plan(single, std::vector<double>{3.0}, 0.05, 3.0), backend_for(cfg)), ConfigError);
}

TEST_CASE("grid moments") {
  GridMoments m;
  LatentGrid g(2, 2, 1, Level::High);
  for (int i = 0; i < 4; ++i) {
    for (double& v : g.values()) v = i;
    m.add(g);
  }
  CHECK(m.count() == 4);
  CHECK(m.mean()[0] == doctest::Approx(1.5));
  CHECK(m.variance()[3] == doctest::Approx(5.0 / 3.0));
  CHECK(m.within_block_correlation() == doctest::Approx(1.0));
  CHECK_THROWS_AS(m.add(LatentGrid(4, 4, 1, Level::High)), ShapeError);
}

TEST_CASE("upsampling-time sweep") {
  RunConfig cfg = small_config();
  const GaussianBackend be = backend_for(cfg);
  TimingSweepOptions opt;
  opt.runs = 300;
  opt.low_steps = 4;
  opt.high_steps = 8;
  const TimingSweep sweep = run_timing_sweep(cfg, be, {0.0, 0.3, 0.7}, opt);
  REQUIRE(sweep.timings.size() == 3);
  const TimingReport& t0 = sweep.timings[0];
  CHECK(t0.resume == 0.0);
  CHECK(std::abs(t0.start_within_correlation) < 0.05);
  CHECK(t0.terminal_variance_ratio == doctest::Approx(1.0).epsilon(0.1));
  CHECK(std::abs(t0.terminal_within_correlation - sweep.baseline_within_correlation) < 0.05);
  CHECK(sweep.timings[2].start_within_correlation > sweep.timings[1].start_within_correlation);

  cfg.skip_injection = true;
  const TimingSweep skip = run_timing_sweep(cfg, be, {0.3}, opt);
  CHECK(skip.timings[0].start_within_correlation == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(skip.timings[0].resume == 0.3);
}
