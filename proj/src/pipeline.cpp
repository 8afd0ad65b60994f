#include "ralu/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ralu/errors.hpp"
#include "ralu/noise.hpp"
#include "ralu/rng.hpp"

namespace ralu {

void validate(const RunConfig& config) {
  if (config.base_height == 0 || config.base_width == 0) throw ConfigError("base shape must be nonempty");
  if (config.channels == 0) throw ConfigError("channels must be positive");
  if (!(config.ratio >= 0.0 && config.ratio <= 1.0)) throw ConfigError("ratio must lie in [0, 1]");
  if (!(config.h_ori > 0.0)) throw ConfigError("h_ori must be positive");
  if (config.c && !(*config.c > 0.0 && *config.c <= 0.25)) throw ConfigError("c must lie in (0, 0.25]");
  if (config.footprint == 0) throw ConfigError("decoder footprint must be positive");
  if (config.baseline_steps < 1) throw ConfigError("baseline needs at least one step");
  if (config.caching && !(config.caching->ratio >= 0.0 && config.caching->ratio < 1.0)) {
    throw ConfigError("caching ratio must lie in [0, 1)");
  }
  try {
    validate_stage_configs(config.stages);
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
}

SchedulePlan plan_for(const RunConfig& config, const NtdmOptions& options) {
  validate(config);
  NtdmOptions opt = options;
  if (config.c) opt.fixed_c = config.c;
  return solve_ntdm(config.stages, config.h_ori, opt);
}

std::unique_ptr<Decoder> make_decoder(const RunConfig& config) {
  if (config.decoder == DecoderKind::Mean) {
    return std::make_unique<AffineDecoder>(std::vector<double>(config.channels, 1.0 / static_cast<double>(config.channels)),
                                           0.0, config.footprint);
  }
  return std::make_unique<NormDecoder>(config.footprint);
}

namespace {

LatentGrid standard_normal_grid(std::size_t h, std::size_t w, std::size_t channels, Level level,
                                std::uint64_t seed) {
  LatentGrid grid(h, w, channels, level);
  NormalStream normals(seed);
  normals.fill(grid.values());
  return grid;
}

// Adds the transition noise in place. Tokens of `promoted` patches that are
// HIGH now but were LOW before get block-correlated noise; every other token
// keeps an isotropic residual and gets the matching isotropic draw.
void renoise(TokenSet& x, const std::vector<std::uint8_t>& promoted, const InjectionSpec& spec,
             NormalStream& normals) {
  const std::size_t C = x.channels();
  const std::size_t bw = x.base_width();
  std::vector<std::size_t> fresh_tokens;
  std::vector<std::size_t> other_tokens;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Token& t = x.token(i);
    if (t.level == Level::High && promoted[t.patch(bw)]) {
      fresh_tokens.push_back(i);
    } else {
      other_tokens.push_back(i);
    }
  }

  if (!fresh_tokens.empty()) {
    // Canonical order keeps each patch's four children adjacent.
    std::vector<double> vals;
    std::vector<std::uint32_t> group_of;
    vals.reserve(fresh_tokens.size() * C);
    group_of.reserve(fresh_tokens.size() * C);
    for (std::size_t n = 0; n < fresh_tokens.size(); ++n) {
      const auto v = x.values(fresh_tokens[n]);
      for (std::size_t ch = 0; ch < C; ++ch) {
        vals.push_back(v[ch]);
        group_of.push_back(static_cast<std::uint32_t>((n / 4) * C + ch));
      }
    }
    const BlockCovariance cov = BlockCovariance::from_groups(std::move(group_of), fresh_tokens.size() / 4 * C);
    inject_correlated(vals, spec, cov, normals);
    for (std::size_t n = 0; n < fresh_tokens.size(); ++n) {
      std::copy_n(vals.begin() + static_cast<long>(n * C), C, x.values(fresh_tokens[n]).begin());
    }
  }
  for (std::size_t i : other_tokens) inject_isotropic(x.values(i), spec, normals);
}

std::size_t high_count(const TokenSet& x) { return x.count(Level::High); }

void require_coverage(const TokenSet& x, int stage) {
  if (!x.has_exact_coverage()) {
    throw ConsistencyError("token coverage broken at the start of stage " + std::to_string(stage));
  }
}

StageReport run_stage(TokenSet& x, const MixedVelocityAdapter& adapter, const std::vector<double>& timesteps,
                      double cache_ratio, bool last) {
  CachedStage done = run_cached_stage(std::move(x), adapter, timesteps, cache_ratio, last);
  x = std::move(done.tokens);
  StageReport rep;
  rep.timesteps = timesteps;
  rep.steps = static_cast<int>(timesteps.size()) - 1;
  rep.start = timesteps.front();
  rep.end = timesteps.back();
  rep.tokens = done.report.tokens;
  rep.high_tokens = high_count(x);
  rep.computed_per_step = std::move(done.report.computed_per_step);
  rep.cached = done.report.enabled;
  rep.note = std::move(done.report.note);
  return rep;
}

double sum_computed(const RunReport& report) {
  double total = 0.0;
  for (const StageReport& s : report.stages) {
    total += static_cast<double>(std::accumulate(s.computed_per_step.begin(), s.computed_per_step.end(), std::size_t{0}));
  }
  return total;
}

}  // namespace

RunResult run_ralu(const RunConfig& config, const SchedulePlan& plan, const GridVelocityModel& model) {
  validate(config);
  const std::size_t K = plan.stages.size();
  if (K < 2) throw ConfigError("region-adaptive sampling needs at least two stages");
  if (plan.stages.size() != config.stages.size()) throw ConsistencyError("plan and config disagree on stage count");
  const std::size_t bh = config.base_height;
  const std::size_t bw = config.base_width;
  const std::size_t P = config.patches();
  const MixedVelocityAdapter adapter(model);

  RunResult result;
  RunReport& rep = result.report;
  rep.mode = "ralu";
  rep.seed = config.seed;
  rep.init_seed = derive_seed(config.seed, "init");
  rep.base_height = bh;
  rep.base_width = bw;
  rep.channels = config.channels;
  rep.ratio = config.ratio;
  rep.c = plan.c;
  rep.h_ori = plan.h_ori;
  rep.jsd = plan.jsd;
  rep.injection_skipped = config.skip_injection;
  rep.coefficients = plan.coefficients;

  TokenSet x = TokenSet::from_grid(standard_normal_grid(bh, bw, config.channels, Level::Low, rep.init_seed));
  std::vector<double> timesteps = plan.stages[0].timesteps;

  for (std::size_t k = 0; k < K; ++k) {
    const int stage = static_cast<int>(k) + 1;
    require_coverage(x, stage);
    const bool last = k + 1 == K;
    const double cache_ratio = config.caching && config.caching->enabled_for(stage) ? config.caching->ratio : 0.0;
    StageReport sr = run_stage(x, adapter, timesteps, cache_ratio, last);
    sr.shift = plan.stages[k].shift;
    if (k > 0) sr.noise_seed = derive_seed(config.seed, "noise", k);
    rep.stages.push_back(std::move(sr));
    result.stage_outputs.push_back(x.assemble());
    if (last) break;

    // Transition k -> k + 1 at t = e_k.
    const double e = plan.stages[k].end;
    std::vector<std::uint8_t> promoted(P, 0);
    std::vector<std::size_t> selection;
    if (k == 0 && K > 2) {
      const std::vector<double> v = adapter.predict(x, e);
      rep.selection_tokens = x.size();
      TokenSet estimate = x;
      const std::vector<double> x1 = tweedie_terminal(x.values(), e, v);
      std::copy(x1.begin(), x1.end(), estimate.values().begin());
      SelectionTrace trace;
      trace.decoded = make_decoder(config)->decode(estimate.to_low_grid());
      trace.edges = canny(trace.decoded, config.canny);
      trace.scores = patch_scores(trace.edges, bh, bw, config.footprint);
      selection = select_topk(trace.scores, config.ratio);
      trace.scores.selected = selection;
      trace.scores.ratio = config.ratio;
      rep.selected = selection;
      result.selection = std::move(trace);
    } else if (k + 2 == K) {
      // Last transition: everything still LOW is promoted.
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x.token(i).level == Level::Low) selection.push_back(x.token(i).patch(bw));
      }
    }
    for (std::size_t p : selection) promoted[p] = 1;
    x = upsample_selected(x, selection);

    const double next_start = plan.stages[k + 1].start;
    if (config.skip_injection) {
      timesteps = discretize_timesteps(e, plan.stages[k + 1].end, plan.stages[k + 1].shift, plan.stages[k + 1].steps);
    } else {
      const InjectionSpec spec{e, plan.c, plan.coefficients[k].a, plan.coefficients[k].b, next_start,
                               derive_seed(config.seed, "noise", k + 1)};
      NormalStream normals(spec.seed);
      renoise(x, promoted, spec, normals);
      timesteps = plan.stages[k + 1].timesteps;
    }
  }

  rep.token_steps = sum_computed(rep);
  result.output = x.assemble();
  return result;
}

RunResult run_ralu(const RunConfig& config, const GridVelocityModel& model) {
  return run_ralu(config, plan_for(config), model);
}

RunResult run_fullres_baseline(const RunConfig& config, const GridVelocityModel& model) {
  validate(config);
  const MixedVelocityAdapter adapter(model);
  RunResult result;
  RunReport& rep = result.report;
  rep.mode = "baseline";
  rep.seed = config.seed;
  rep.init_seed = derive_seed(config.seed, "init");
  rep.base_height = config.base_height;
  rep.base_width = config.base_width;
  rep.channels = config.channels;
  rep.h_ori = config.h_ori;

  TokenSet x = TokenSet::from_grid(standard_normal_grid(2 * config.base_height, 2 * config.base_width,
                                                        config.channels, Level::High, rep.init_seed));
  const std::vector<double> ts = discretize_timesteps(0.0, 1.0, config.h_ori, config.baseline_steps);
  StageReport sr = run_stage(x, adapter, ts, 0.0, true);
  sr.shift = config.h_ori;
  rep.stages.push_back(std::move(sr));
  rep.token_steps = sum_computed(rep);
  result.output = x.assemble();
  result.stage_outputs.push_back(result.output);
  return result;
}

void GridMoments::add(const LatentGrid& grid) {
  if (count_ == 0) {
    height_ = grid.height();
    width_ = grid.width();
    channels_ = grid.channels();
    sum_.assign(grid.size(), 0.0);
    sum_sq_.assign(grid.size(), 0.0);
    sibling_sum_.assign(grid.size() / 4 * 6, 0.0);
  } else if (grid.height() != height_ || grid.width() != width_ || grid.channels() != channels_) {
    throw ShapeError("GridMoments: grid shape changed between samples");
  }
  const auto v = grid.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    sum_[i] += v[i];
    sum_sq_[i] += v[i] * v[i];
  }
  std::size_t slot = 0;
  for (std::size_t ch = 0; ch < channels_; ++ch) {
    for (std::size_t r = 0; r + 1 < height_; r += 2) {
      for (std::size_t c = 0; c + 1 < width_; c += 2) {
        const double b[4] = {grid.at(ch, r, c), grid.at(ch, r, c + 1), grid.at(ch, r + 1, c), grid.at(ch, r + 1, c + 1)};
        for (int i = 0; i < 4; ++i) {
          for (int j = i + 1; j < 4; ++j) sibling_sum_[slot++] += b[i] * b[j];
        }
      }
    }
  }
  ++count_;
}

std::vector<double> GridMoments::mean() const {
  std::vector<double> m(sum_.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = sum_[i] / static_cast<double>(count_);
  return m;
}

std::vector<double> GridMoments::variance() const {
  if (count_ < 2) throw ContractError("GridMoments: variance needs at least two samples");
  const double n = static_cast<double>(count_);
  std::vector<double> var(sum_.size());
  for (std::size_t i = 0; i < var.size(); ++i) {
    const double m = sum_[i] / n;
    var[i] = std::max(0.0, (sum_sq_[i] - n * m * m) / (n - 1.0));
  }
  return var;
}

double GridMoments::within_block_correlation() const {
  if (count_ < 2) throw ContractError("GridMoments: correlation needs at least two samples");
  const double n = static_cast<double>(count_);
  const std::vector<double> m = mean();
  const std::vector<double> var = variance();
  auto idx = [&](std::size_t ch, std::size_t r, std::size_t c) { return (ch * height_ + r) * width_ + c; };
  double total = 0.0;
  std::size_t pairs = 0;
  std::size_t slot = 0;
  for (std::size_t ch = 0; ch < channels_; ++ch) {
    for (std::size_t r = 0; r + 1 < height_; r += 2) {
      for (std::size_t c = 0; c + 1 < width_; c += 2) {
        const std::size_t b[4] = {idx(ch, r, c), idx(ch, r, c + 1), idx(ch, r + 1, c), idx(ch, r + 1, c + 1)};
        for (int i = 0; i < 4; ++i) {
          for (int j = i + 1; j < 4; ++j) {
            const double cov = (sibling_sum_[slot++] - n * m[b[i]] * m[b[j]]) / (n - 1.0);
            const double denom = std::sqrt(var[b[i]] * var[b[j]]);
            total += denom > 0.0 ? cov / denom : 1.0;
            ++pairs;
          }
        }
      }
    }
  }
  return pairs ? total / static_cast<double>(pairs) : 0.0;
}

TimingSweep run_timing_sweep(const RunConfig& config, const GridVelocityModel& model,
                             const std::vector<double>& timings, const TimingSweepOptions& opt) {
  validate(config);
  if (opt.runs < 2) throw ConfigError("timing sweep needs at least two runs per timing");
  if (opt.low_steps < 1 || opt.high_steps < 1) throw ConfigError("timing sweep stages need at least one step");
  if (!(opt.c > 0.0 && opt.c <= 0.25)) throw ConfigError("timing sweep c must lie in (0, 0.25]");
  const MixedVelocityAdapter adapter(model);
  const std::size_t bh = config.base_height;
  const std::size_t bw = config.base_width;

  RunConfig base_cfg = config;
  base_cfg.baseline_steps = opt.low_steps + opt.high_steps;
  GridMoments baseline;
  for (std::size_t run = 0; run < opt.runs; ++run) {
    base_cfg.seed = derive_seed(config.seed, "sweep", run);
    baseline.add(run_fullres_baseline(base_cfg, model).output);
  }
  const std::vector<double> base_mean = baseline.mean();
  const std::vector<double> base_var = baseline.variance();
  const double base_var_avg = std::accumulate(base_var.begin(), base_var.end(), 0.0) / static_cast<double>(base_var.size());

  TimingSweep sweep;
  sweep.baseline_within_correlation = baseline.within_block_correlation();
  for (double tu : timings) {
    if (!(tu >= 0.0 && tu < 1.0)) throw ConfigError("upsampling timings must lie in [0, 1)");
    // e -> 0 limit of the coefficients: a = sqrt(c), b = 1, s = 0.
    const InjectionCoefficients coef = tu > 0.0 ? injection_coefficients(tu, opt.c)
                                                : InjectionCoefficients{0.0, std::sqrt(opt.c), 1.0};
    const double resume = config.skip_injection ? tu : coef.s_next;
    const std::vector<double> low_ts = tu > 0.0 ? discretize_timesteps(0.0, tu, config.h_ori, opt.low_steps)
                                                : std::vector<double>{};
    // Upsampling before any denoising hands the LOW step budget to the HIGH stage.
    const int high_steps = tu > 0.0 ? opt.high_steps : opt.low_steps + opt.high_steps;
    const std::vector<double> high_ts = discretize_timesteps(resume, 1.0, config.h_ori, high_steps);

    GridMoments start, terminal;
    for (std::size_t run = 0; run < opt.runs; ++run) {
      const std::uint64_t seed = derive_seed(config.seed, "sweep", run);
      TokenSet x = TokenSet::from_grid(standard_normal_grid(bh, bw, config.channels, Level::Low, derive_seed(seed, "init")));
      if (!low_ts.empty()) x = run_cached_stage(std::move(x), adapter, low_ts, 0.0, false).tokens;
      LatentGrid up = upsample_nn(x.to_low_grid());
      if (!config.skip_injection) {
        const InjectionSpec spec{tu, opt.c, coef.a, coef.b, coef.s_next, derive_seed(seed, "noise", 1)};
        NormalStream normals(spec.seed);
        inject_correlated(up.values(), spec, BlockCovariance::for_grid(up.height(), up.width(), up.channels()), normals);
      }
      start.add(up);
      TokenSet hi = run_cached_stage(TokenSet::from_grid(up), adapter, high_ts, 0.0, true).tokens;
      terminal.add(hi.assemble());
    }
    TimingReport tr;
    tr.timing = tu;
    tr.resume = resume;
    tr.start_within_correlation = start.within_block_correlation();
    const std::vector<double> m = terminal.mean();
    const std::vector<double> var = terminal.variance();
    double gap = 0.0, var_avg = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      gap += std::abs(m[i] - base_mean[i]);
      var_avg += var[i];
    }
    tr.terminal_mean_gap = gap / static_cast<double>(m.size());
    tr.terminal_variance_ratio = var_avg / static_cast<double>(var.size()) / base_var_avg;
    tr.terminal_within_correlation = terminal.within_block_correlation();
    sweep.timings.push_back(tr);
  }
  return sweep;
}

}  // namespace ralu
