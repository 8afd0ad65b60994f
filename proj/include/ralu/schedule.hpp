#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ralu/errors.hpp"

namespace ralu {

// Timesteps follow the rectified-flow convention x_t = (1 - t) x0 + t x1:
// t = 0 is pure noise, t = 1 is data.

/// Shifted timestep density f_h(t) = h / (1 + (h - 1) t)^2 on [0, 1].
double pdf_shift(double t, double h);
/// F_h(t) = h t / (1 + (h - 1) t).
double cdf_shift(double t, double h);
/// F_h^{-1}(u) = u / (h - (h - 1) u).
double inv_cdf_shift(double u, double h);
/// f_h renormalised to [s, e]; zero outside.
double pdf_truncated(double t, double h, double s, double e);

/// Noise-injection coefficients at a stage boundary: the next stage starts at
/// s_next, and x <- a * Up(x) + b * z with z ~ N(0, I - c Sigma).
struct InjectionCoefficients {
  double s_next = 0.0;
  double a = 1.0;
  double b = 0.0;
};

/// Requires e in (0, 1] and c in (0, 1/4].
InjectionCoefficients injection_coefficients(double e, double c);

struct StageConfig {
  int steps = 1;     // N_k
  double end = 1.0;  // e_k

  bool operator==(const StageConfig&) const = default;
};

/// Throws DomainError unless steps >= 1, ends strictly increase inside (0, 1]
/// and the last end is 1.
void validate_stage_configs(std::span<const StageConfig> configs);

/// A grid-sampled density on M uniformly spaced points over [0, 1].
struct Density {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double t(std::size_t i) const { return static_cast<double>(i) / static_cast<double>(values.size() - 1); }
  /// Trapezoidal integral over [0, 1].
  double integral() const;
};

inline constexpr std::size_t kDefaultGridPoints = 4096;

/// Weighted sum of truncated shifted densities, evaluated pointwise or on a grid.
struct TruncatedMixture {
  struct Component {
    double weight = 0.0;
    double h = 1.0;
    double s = 0.0;
    double e = 1.0;
  };
  std::vector<Component> components;

  double operator()(double t) const;
  /// Each component is sampled on the grid and rescaled to unit trapezoidal
  /// mass before mixing, so the mixture weights survive discretisation.
  Density discretize(std::size_t points = kDefaultGridPoints) const;
};

/// Mixture form of the target timestep distribution: the original schedule
/// on [0, 1] plus one re-visit of each overlap [s_{k+1}, e_k], weighted by
/// its length.
TruncatedMixture target_mixture(std::span<const StageConfig> configs, double c, double h_ori);
Density target_distribution(std::span<const StageConfig> configs, double c, double h_ori,
                            std::size_t points = kDefaultGridPoints);

/// Jensen-Shannon divergence in nats with trapezoidal weights; densities
/// are floored at 1e-12 inside the logarithms.
double jsd(const Density& p, const Density& q);

struct StagePlan {
  int steps = 0;
  double start = 0.0;  // s_k
  double end = 1.0;    // e_k
  double shift = 1.0;  // h_k
  std::vector<double> timesteps;  // steps + 1 values from start to end

  bool operator==(const StagePlan&) const = default;
};

struct SchedulePlan {
  std::vector<StagePlan> stages;
  double c = 0.0;
  std::vector<InjectionCoefficients> coefficients;  // one per stage transition
  double jsd = 0.0;
  double h_ori = 1.0;

  std::vector<StageConfig> configs() const;
};

inline bool operator==(const InjectionCoefficients& l, const InjectionCoefficients& r) {
  return l.s_next == r.s_next && l.a == r.a && l.b == r.b;
}
inline bool operator==(const SchedulePlan& l, const SchedulePlan& r) {
  return l.stages == r.stages && l.c == r.c && l.coefficients == r.coefficients && l.jsd == r.jsd &&
         l.h_ori == r.h_ori;
}

TruncatedMixture realized_mixture(const SchedulePlan& plan);
Density realized_distribution(const SchedulePlan& plan, std::size_t points = kDefaultGridPoints);

/// t_j = F_h^{-1}(F_h(s) + j/N (F_h(e) - F_h(s))), with t_0 = s and t_N = e exact.
std::vector<double> discretize_timesteps(double s, double e, double h, int steps);

/// Builds a complete plan (starts, coefficients, timesteps, achieved JSD) for
/// given shifts and noise strength.
SchedulePlan make_plan(std::span<const StageConfig> configs, std::span<const double> shifts, double c,
                       double h_ori, std::size_t points = kDefaultGridPoints);

struct NtdmOptions {
  double h_min = 1.0;
  double h_max = 16.0;
  double c_min = 1e-4;
  double c_max = 0.25;
  int grid_h = 9;            // log-spaced shift candidates per stage
  int grid_c = 10;           // log-spaced noise-strength candidates
  int refine_starts = 4;     // best grid points refined with Nelder-Mead
  int max_iterations = 4000;
  double f_tolerance = 1e-13;
  std::size_t points = kDefaultGridPoints;
  std::optional<double> fixed_c;  // hold c here and search the shifts only
};

class NtdmConvergenceError : public Error {
 public:
  NtdmConvergenceError(const std::string& what, SchedulePlan best) : Error(what), best_(std::move(best)) {}
  const SchedulePlan& best() const { return best_; }

 private:
  SchedulePlan best_;
};

/// Jointly chooses per-stage shifts h_k in [h_min, h_max] and c in
/// (c_min, c_max] minimising jsd(target, realized). Requires >= 2 stages.
/// Ties on JSD resolve to the smaller c, then the lexicographically smaller h.
SchedulePlan solve_ntdm(std::span<const StageConfig> configs, double h_ori, const NtdmOptions& options = {});

/// Resolution-dependent base shift used by FLUX-style models: exp(mu) with
/// mu linear in token count from 0.5 at 256 tokens to 1.15 at 4096 tokens.
double flux_base_shift(std::size_t image_tokens);

/// Minimal Nelder-Mead minimiser; returns the best vertex and whether the
/// simplex spread fell below f_tolerance within max_iterations.
struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

template <class F>
NelderMeadResult nelder_mead(F&& f, std::vector<double> x0, std::vector<double> step, int max_iterations,
                             double f_tolerance);

}  // namespace ralu

#include "ralu/detail/nelder_mead.inl"
