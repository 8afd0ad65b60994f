#include "ralu/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace ralu {
namespace {

constexpr double kLogFloor = 1e-12;

void require_unit(double t, const char* what) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError(std::string(what) + " outside [0, 1]: " + std::to_string(t));
}

void require_shift(double h) {
  if (!(h > 0.0) || !std::isfinite(h)) throw DomainError("shift parameter must be positive: " + std::to_string(h));
}

// Adds weight * f_{h,s,e} sampled on the grid, rescaled to unit trapezoidal mass.
void accumulate_component(std::vector<double>& out, const TruncatedMixture::Component& comp) {
  const std::size_t M = out.size();
  const double scale = static_cast<double>(M - 1);
  const auto lo = static_cast<std::size_t>(std::ceil(comp.s * scale));
  const auto hi = std::min(M - 1, static_cast<std::size_t>(std::floor(comp.e * scale)));
  if (lo > hi) throw ConsistencyError("truncated density has no grid support on [" + std::to_string(comp.s) +
                                      ", " + std::to_string(comp.e) + "]");

  const double norm = cdf_shift(comp.e, comp.h) - cdf_shift(comp.s, comp.h);
  const double hm1 = comp.h - 1.0;
  thread_local std::vector<double> buf;
  buf.assign(hi - lo + 1, 0.0);
  for (std::size_t i = lo; i <= hi; ++i) {
    const double t = static_cast<double>(i) / scale;
    const double d = 1.0 + hm1 * t;
    buf[i - lo] = comp.h / (d * d) / norm;
  }
  // Trapezoidal mass; grid values outside [lo, hi] are zero.
  double mass = 0.0;
  for (std::size_t i = lo; i <= hi; ++i) {
    const bool edge = (i == 0 || i == M - 1);
    mass += buf[i - lo] * (edge ? 0.5 : 1.0);
  }
  mass /= scale;
  if (!(mass > 0.0)) throw ConsistencyError("truncated density has zero grid mass");

  const double k = comp.weight / mass;
  for (std::size_t i = lo; i <= hi; ++i) out[i] += k * buf[i - lo];
}

}  // namespace

double pdf_shift(double t, double h) {
  require_shift(h);
  require_unit(t, "timestep");
  const double d = 1.0 + (h - 1.0) * t;
  return h / (d * d);
}

double cdf_shift(double t, double h) {
  require_shift(h);
  require_unit(t, "timestep");
  return h * t / (1.0 + (h - 1.0) * t);
}

double inv_cdf_shift(double u, double h) {
  require_shift(h);
  require_unit(u, "probability");
  return u / (h - (h - 1.0) * u);
}

double pdf_truncated(double t, double h, double s, double e) {
  if (!(s < e)) throw DomainError("truncated density needs s < e");
  require_unit(s, "interval start");
  require_unit(e, "interval end");
  if (t < s || t > e) return 0.0;
  return pdf_shift(t, h) / (cdf_shift(e, h) - cdf_shift(s, h));
}

InjectionCoefficients injection_coefficients(double e, double c) {
  if (!(e > 0.0 && e <= 1.0)) throw DomainError("stage end must lie in (0, 1]: " + std::to_string(e));
  if (!(c > 0.0 && c <= 0.25)) {
    throw DomainError("noise strength c must lie in (0, 1/4] for I - c Sigma to stay PSD: " + std::to_string(c));
  }
  const double r = (1.0 - e) / std::sqrt(c);
  const double denom = r + e;
  return {e / denom, 1.0 / denom, r / denom};
}

void validate_stage_configs(std::span<const StageConfig> configs) {
  if (configs.empty()) throw DomainError("at least one stage is required");
  double prev = 0.0;
  for (std::size_t k = 0; k < configs.size(); ++k) {
    const StageConfig& cfg = configs[k];
    if (cfg.steps < 1) throw DomainError("stage " + std::to_string(k + 1) + " needs at least one step");
    if (!(cfg.end > prev && cfg.end <= 1.0)) {
      throw DomainError("stage ends must strictly increase inside (0, 1]");
    }
    prev = cfg.end;
  }
  if (configs.back().end != 1.0) throw DomainError("the last stage must end at t = 1");
}

double Density::integral() const {
  if (values.size() < 2) return 0.0;
  double sum = 0.0;
  for (double v : values) sum += v;
  sum -= 0.5 * (values.front() + values.back());
  return sum / static_cast<double>(values.size() - 1);
}

double TruncatedMixture::operator()(double t) const {
  double sum = 0.0;
  for (const Component& comp : components) sum += comp.weight * pdf_truncated(t, comp.h, comp.s, comp.e);
  return sum;
}

Density TruncatedMixture::discretize(std::size_t points) const {
  if (points < 2) throw DomainError("density grid needs at least two points");
  Density d;
  d.values.assign(points, 0.0);
  for (const Component& comp : components) accumulate_component(d.values, comp);
  return d;
}

TruncatedMixture target_mixture(std::span<const StageConfig> configs, double c, double h_ori) {
  validate_stage_configs(configs);
  require_shift(h_ori);
  TruncatedMixture mix;
  mix.components.push_back({1.0, h_ori, 0.0, 1.0});
  double norm = 1.0;
  for (std::size_t k = 0; k + 1 < configs.size(); ++k) {
    const double e = configs[k].end;
    const double s_next = injection_coefficients(e, c).s_next;
    if (!(s_next < e)) throw ConsistencyError("injection does not move stage start below its end");
    mix.components.push_back({e - s_next, h_ori, s_next, e});
    norm += e - s_next;
  }
  for (auto& comp : mix.components) comp.weight /= norm;
  return mix;
}

Density target_distribution(std::span<const StageConfig> configs, double c, double h_ori, std::size_t points) {
  return target_mixture(configs, c, h_ori).discretize(points);
}

double jsd(const Density& p, const Density& q) {
  if (p.size() != q.size() || p.size() < 2) throw ShapeError("jsd: densities live on different grids");
  const std::size_t M = p.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < M; ++i) {
    const double a = p.values[i];
    const double b = q.values[i];
    if (a == 0.0 && b == 0.0) continue;
    const double m = std::max(0.5 * (a + b), kLogFloor);
    double term = 0.0;
    if (a > 0.0) term += a * std::log(std::max(a, kLogFloor) / m);
    if (b > 0.0) term += b * std::log(std::max(b, kLogFloor) / m);
    sum += (i == 0 || i == M - 1) ? 0.5 * term : term;
  }
  return std::max(0.0, 0.5 * sum / static_cast<double>(M - 1));
}

std::vector<StageConfig> SchedulePlan::configs() const {
  std::vector<StageConfig> out;
  out.reserve(stages.size());
  for (const StagePlan& st : stages) out.push_back({st.steps, st.end});
  return out;
}

TruncatedMixture realized_mixture(const SchedulePlan& plan) {
  if (plan.stages.empty()) throw ConsistencyError("schedule plan has no stages");
  double total = 0.0;
  for (const StagePlan& st : plan.stages) total += st.steps;
  TruncatedMixture mix;
  for (std::size_t k = 0; k < plan.stages.size(); ++k) {
    const StagePlan& st = plan.stages[k];
    if (!(st.start < st.end)) throw ConsistencyError("stage " + std::to_string(k + 1) + " has start >= end");
    if (k > 0 && st.start > plan.stages[k - 1].end) {
      throw ConsistencyError("stage " + std::to_string(k + 1) + " leaves a gap after the previous stage");
    }
    mix.components.push_back({st.steps / total, st.shift, st.start, st.end});
  }
  return mix;
}

Density realized_distribution(const SchedulePlan& plan, std::size_t points) {
  return realized_mixture(plan).discretize(points);
}

std::vector<double> discretize_timesteps(double s, double e, double h, int steps) {
  if (!(s < e)) throw DomainError("discretize_timesteps needs s < e");
  if (steps < 1) throw DomainError("discretize_timesteps needs at least one step");
  require_unit(s, "interval start");
  require_unit(e, "interval end");
  const double u0 = cdf_shift(s, h);
  const double u1 = cdf_shift(e, h);
  std::vector<double> ts(static_cast<std::size_t>(steps) + 1);
  ts.front() = s;
  ts.back() = e;
  for (int j = 1; j < steps; ++j) {
    ts[static_cast<std::size_t>(j)] = inv_cdf_shift(u0 + (static_cast<double>(j) / steps) * (u1 - u0), h);
  }
  return ts;
}

SchedulePlan make_plan(std::span<const StageConfig> configs, std::span<const double> shifts, double c,
                       double h_ori, std::size_t points) {
  validate_stage_configs(configs);
  if (shifts.size() != configs.size()) throw ShapeError("make_plan: one shift per stage is required");
  SchedulePlan plan;
  plan.c = c;
  plan.h_ori = h_ori;
  double start = 0.0;
  for (std::size_t k = 0; k < configs.size(); ++k) {
    require_shift(shifts[k]);
    StagePlan st;
    st.steps = configs[k].steps;
    st.start = start;
    st.end = configs[k].end;
    st.shift = shifts[k];
    st.timesteps = discretize_timesteps(st.start, st.end, st.shift, st.steps);
    plan.stages.push_back(std::move(st));
    if (k + 1 < configs.size()) {
      const InjectionCoefficients coef = injection_coefficients(configs[k].end, c);
      plan.coefficients.push_back(coef);
      start = coef.s_next;
    }
  }
  plan.jsd = jsd(target_distribution(configs, c, h_ori, points), realized_distribution(plan, points));
  return plan;
}

double flux_base_shift(std::size_t image_tokens) {
  constexpr double kBaseTokens = 256.0;
  constexpr double kMaxTokens = 4096.0;
  constexpr double kBaseMu = 0.5;
  constexpr double kMaxMu = 1.15;
  const double slope = (kMaxMu - kBaseMu) / (kMaxTokens - kBaseTokens);
  return std::exp(kBaseMu + slope * (static_cast<double>(image_tokens) - kBaseTokens));
}

namespace {

struct Candidate {
  std::vector<double> shifts;
  double c = 0.0;
  double value = std::numeric_limits<double>::infinity();
  bool converged = true;
};

// Deterministic order: JSD, then smaller c, then lexicographically smaller shifts.
bool better(const Candidate& a, const Candidate& b) {
  constexpr double kTie = 1e-12;
  if (std::abs(a.value - b.value) > kTie) return a.value < b.value;
  if (a.c != b.c) return a.c < b.c;
  return a.shifts < b.shifts;
}

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double f = n == 1 ? 0.5 : static_cast<double>(i) / (n - 1);
    out[static_cast<std::size_t>(i)] = std::exp(std::log(lo) + f * (std::log(hi) - std::log(lo)));
  }
  return out;
}

class NtdmObjective {
 public:
  NtdmObjective(std::span<const StageConfig> configs, double h_ori, std::size_t points)
      : configs_(configs.begin(), configs.end()), h_ori_(h_ori), points_(points) {
    double total = 0.0;
    for (const auto& cfg : configs_) total += cfg.steps;
    for (const auto& cfg : configs_) weights_.push_back(cfg.steps / total);
  }

  std::vector<double> starts(double c) const {
    std::vector<double> s(configs_.size(), 0.0);
    for (std::size_t k = 1; k < configs_.size(); ++k) s[k] = injection_coefficients(configs_[k - 1].end, c).s_next;
    return s;
  }

  Density target(double c) const { return target_distribution(configs_, c, h_ori_, points_); }

  Density component(std::size_t k, double h, double s) const {
    Density d;
    d.values.assign(points_, 0.0);
    accumulate_component(d.values, {weights_[k], h, s, configs_[k].end});
    return d;
  }

  double operator()(std::span<const double> shifts, double c) const {
    const Density tgt = target(c);
    const auto s = starts(c);
    Density real;
    real.values.assign(points_, 0.0);
    for (std::size_t k = 0; k < configs_.size(); ++k) accumulate_component(real.values, {weights_[k], shifts[k], s[k], configs_[k].end});
    return jsd(tgt, real);
  }

  std::size_t stages() const { return configs_.size(); }
  std::size_t points() const { return points_; }

 private:
  std::vector<StageConfig> configs_;
  double h_ori_;
  std::size_t points_;
  std::vector<double> weights_;
};

}  // namespace

SchedulePlan solve_ntdm(std::span<const StageConfig> configs, double h_ori, const NtdmOptions& opt) {
  validate_stage_configs(configs);
  if (configs.size() < 2) throw DomainError("nothing to reschedule: a single stage has no transitions");
  require_shift(h_ori);
  if (!(opt.h_min > 0.0 && opt.h_min < opt.h_max)) throw DomainError("invalid shift bounds");
  if (!(opt.c_min > 0.0 && opt.c_min < opt.c_max && opt.c_max <= 0.25)) throw DomainError("invalid c bounds");
  if (opt.fixed_c && !(*opt.fixed_c > 0.0 && *opt.fixed_c <= 0.25)) {
    throw DomainError("fixed c must lie in (0, 1/4]");
  }

  const std::size_t K = configs.size();
  const NtdmObjective objective(configs, h_ori, opt.points);
  const auto h_grid = log_grid(opt.h_min, opt.h_max, opt.grid_h);
  const auto c_grid = opt.fixed_c ? std::vector<double>{*opt.fixed_c} : log_grid(opt.c_min, opt.c_max, opt.grid_c);

  // Coarse grid. Components depend on (k, h, c) only, so they are built once
  // per c and combined across the shift grid.
  std::vector<Candidate> ranked;
  const std::size_t H = h_grid.size();
  for (double c : c_grid) {
    const Density tgt = objective.target(c);
    const auto s = objective.starts(c);
    std::vector<std::vector<Density>> comps(K);
    for (std::size_t k = 0; k < K; ++k) {
      for (double h : h_grid) comps[k].push_back(objective.component(k, h, s[k]));
    }
    std::vector<std::size_t> idx(K, 0);
    Density real;
    while (true) {
      real.values.assign(opt.points, 0.0);
      for (std::size_t k = 0; k < K; ++k) {
        const auto& v = comps[k][idx[k]].values;
        for (std::size_t i = 0; i < opt.points; ++i) real.values[i] += v[i];
      }
      Candidate cand;
      cand.c = c;
      for (std::size_t k = 0; k < K; ++k) cand.shifts.push_back(h_grid[idx[k]]);
      cand.value = jsd(tgt, real);
      ranked.push_back(std::move(cand));

      std::size_t k = 0;
      while (k < K && ++idx[k] == H) idx[k++] = 0;
      if (k == K) break;
    }
  }
  std::sort(ranked.begin(), ranked.end(), better);

  // Nelder-Mead in log coordinates, with a quadratic penalty outside the box.
  const double lo_h = std::log(opt.h_min), hi_h = std::log(opt.h_max);
  const double lo_c = std::log(opt.fixed_c ? *opt.fixed_c : opt.c_min);
  const double hi_c = std::log(opt.fixed_c ? *opt.fixed_c : opt.c_max);
  auto unpack = [&](const std::vector<double>& x, std::vector<double>& shifts, double& c) {
    double penalty = 0.0;
    shifts.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
      const double v = std::clamp(x[k], lo_h, hi_h);
      penalty += (x[k] - v) * (x[k] - v);
      shifts[k] = std::exp(v);
    }
    const double v = std::clamp(x[K], lo_c, hi_c);
    penalty += (x[K] - v) * (x[K] - v);
    c = std::exp(v);
    return penalty;
  };
  auto f = [&](const std::vector<double>& x) {
    std::vector<double> shifts;
    double c = 0.0;
    const double penalty = unpack(x, shifts, c);
    return objective(shifts, c) + penalty;
  };

  Candidate best;
  const std::size_t starts = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, opt.refine_starts)), ranked.size());
  for (std::size_t r = 0; r < starts; ++r) {
    std::vector<double> x;
    for (double h : ranked[r].shifts) x.push_back(std::log(h));
    x.push_back(std::log(ranked[r].c));
    const std::vector<double> step(K + 1, 0.15);
    NelderMeadResult nm = nelder_mead(f, x, step, opt.max_iterations, opt.f_tolerance);
    // One restart around the optimum guards against a collapsed simplex.
    const std::vector<double> small(K + 1, 0.02);
    const NelderMeadResult again = nelder_mead(f, nm.x, small, opt.max_iterations, opt.f_tolerance);
    if (again.value <= nm.value) nm = again;

    Candidate cand;
    unpack(nm.x, cand.shifts, cand.c);
    cand.value = objective(cand.shifts, cand.c);
    cand.converged = nm.converged;
    if (r == 0 || better(cand, best)) best = std::move(cand);
  }
  // The grid point itself can still win when the refinement makes no progress.
  if (better(ranked.front(), best)) best = ranked.front();

  SchedulePlan plan = make_plan(configs, best.shifts, best.c, h_ori, opt.points);
  if (!best.converged) {
    throw NtdmConvergenceError("NT-DM search did not converge within " + std::to_string(opt.max_iterations) +
                                   " iterations",
                               std::move(plan));
  }
  return plan;
}

}  // namespace ralu
