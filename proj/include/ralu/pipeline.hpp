#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ralu/caching.hpp"
#include "ralu/flow.hpp"
#include "ralu/latent_grid.hpp"
#include "ralu/region_select.hpp"
#include "ralu/schedule.hpp"

namespace ralu {

enum class DecoderKind { Norm, Mean };

struct RunConfig {
  std::size_t base_height = 32;
  std::size_t base_width = 32;
  std::size_t channels = 4;
  std::vector<StageConfig> stages{{5, 0.3}, {6, 0.45}, {7, 1.0}};
  double ratio = 0.3;           // rho
  double h_ori = 3.0;
  std::optional<double> c;      // solved when absent
  std::uint64_t seed = 0;
  DecoderKind decoder = DecoderKind::Norm;
  std::size_t footprint = 8;
  CannyParams canny;
  std::optional<CachePolicy> caching;
  bool skip_injection = false;
  int baseline_steps = 50;

  std::size_t patches() const { return base_height * base_width; }
  bool operator==(const RunConfig&) const = default;
};

/// Throws ConfigError on shapes, ratios or stage lists that cannot run.
void validate(const RunConfig& config);

/// Solves the stage shifts (and c unless overridden) for the config.
SchedulePlan plan_for(const RunConfig& config, const NtdmOptions& options = {});

std::unique_ptr<Decoder> make_decoder(const RunConfig& config);

struct StageReport {
  int steps = 0;
  double start = 0.0;
  double end = 1.0;
  double shift = 1.0;
  std::vector<double> timesteps;
  std::size_t tokens = 0;
  std::size_t high_tokens = 0;
  std::vector<std::size_t> computed_per_step;
  bool cached = false;
  std::string note;
  std::uint64_t noise_seed = 0;  // sub-stream used by the injection entering this stage

  bool operator==(const StageReport&) const = default;
};

struct RunReport {
  std::string mode;  // "ralu" or "baseline"
  std::uint64_t seed = 0;
  std::uint64_t init_seed = 0;
  std::size_t base_height = 0;
  std::size_t base_width = 0;
  std::size_t channels = 0;
  double ratio = 0.0;
  double c = 0.0;
  double h_ori = 1.0;
  double jsd = 0.0;
  bool injection_skipped = false;
  std::vector<InjectionCoefficients> coefficients;
  std::vector<StageReport> stages;
  std::vector<std::size_t> selected;  // LOW patches promoted at the first transition, best first
  std::size_t selection_tokens = 0;   // tokens in the extra evaluation used for selection
  double token_steps = 0.0;           // model inputs summed over all Euler steps

  bool operator==(const RunReport&) const = default;
};

/// What the first transition looked at when choosing patches.
struct SelectionTrace {
  GrayImage decoded;
  EdgeMap edges;
  EdgeScoreMap scores;
};

struct RunResult {
  LatentGrid output;  // HIGH
  RunReport report;
  std::vector<LatentGrid> stage_outputs;  // assembled HIGH grid at the end of each stage
  std::optional<SelectionTrace> selection;
};

/// Multi-stage sampler: LOW stage, region-adaptive upsampling with noise
/// injection, mixed stage(s), full upsampling, HIGH stage. K == 2 upsamples
/// everything at the single transition.
RunResult run_ralu(const RunConfig& config, const SchedulePlan& plan, const GridVelocityModel& model);
RunResult run_ralu(const RunConfig& config, const GridVelocityModel& model);

/// Single HIGH stage of config.baseline_steps steps under shift h_ori.
RunResult run_fullres_baseline(const RunConfig& config, const GridVelocityModel& model);

/// Per-cell running mean and variance over replicated grids.
class GridMoments {
 public:
  void add(const LatentGrid& grid);
  std::size_t count() const { return count_; }
  std::vector<double> mean() const;
  std::vector<double> variance() const;  // unbiased
  /// Mean correlation between the 6 sibling pairs of every 2x2 block.
  double within_block_correlation() const;

 private:
  std::size_t count_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> sum_;
  std::vector<double> sum_sq_;
  std::vector<double> sibling_sum_;  // 6 products per block
};

struct TimingSweepOptions {
  int low_steps = 10;
  int high_steps = 20;
  std::size_t runs = 200;
  double c = 0.0251;
};

struct TimingReport {
  double timing = 0.0;                  // upsampling timestep
  double resume = 0.0;                  // where the HIGH stage starts
  double start_within_correlation = 0.0;
  double terminal_mean_gap = 0.0;       // mean |E x - E x_baseline| over cells
  double terminal_variance_ratio = 0.0; // mean Var x / mean Var x_baseline
  double terminal_within_correlation = 0.0;
};

struct TimingSweep {
  double baseline_within_correlation = 0.0;
  std::vector<TimingReport> timings;
};

/// Two-stage sampling (LOW on [0, t_u], everything upsampled at t_u, HIGH to 1)
/// for each timing, compared against the full-resolution baseline over the
/// same seeds. Both stages use shift h_ori.
TimingSweep run_timing_sweep(const RunConfig& config, const GridVelocityModel& model,
                             const std::vector<double>& timings, const TimingSweepOptions& options = {});

}  // namespace ralu
