#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ralu {

/// Tokens passed to the model per step, for each stage of a K-stage run over
/// a base of `patches` LOW patches: stage 1 sees P, intermediate stages
/// P + 3 ceil(rho P), the final stage 4P.
struct TokenCounts {
  std::vector<std::size_t> full;
  /// Tokens on a cached step, per stage; empty for stages that are not cached.
  std::vector<std::optional<std::size_t>> cached;
};

TokenCounts token_counts(std::size_t patches, double ratio, std::size_t stages = 3,
                         std::optional<double> cache_ratio = std::nullopt);

/// Per-stage step pattern under caching: two full steps, cached steps, and a
/// final full step on the last stage. Stages with < 3 steps are uncached.
struct StepSplit {
  int full = 0;
  int cached = 0;
};
StepSplit step_split(int steps, bool cached_stage, bool last_stage);

struct TokenSteps {
  double total = 0.0;
  double baseline = 0.0;  // baseline_steps * 4P
  double reduction = 0.0; // baseline / total
};

TokenSteps token_steps(std::span<const int> steps, const TokenCounts& counts, int baseline_steps,
                       std::size_t patches);

/// Per-step cost alpha T + beta (T + aux)^2, plus a one-off decoder cost.
struct CostModel {
  double alpha = 1.0;
  double beta = 0.0;
  double aux_tokens = 0.0;
  double decoder_cost = 0.0;
};

struct CostRow {
  std::string stage;
  int steps = 0;
  std::size_t tokens = 0;
  double cost = 0.0;
  double share = 0.0;
};

struct CostBreakdown {
  std::vector<CostRow> rows;  // one per stage, then "decoder" when nonzero
  double total = 0.0;
  double decoder_share() const;
};

double step_cost(const CostModel& model, std::size_t tokens);

CostBreakdown estimate_cost(std::span<const int> steps, const TokenCounts& counts, const CostModel& model);

/// alpha that makes a single-stage run of `steps` steps over `tokens` tokens
/// cost `total` under a purely linear model.
double calibrate_alpha(double total, int steps, std::size_t tokens);

}  // namespace ralu
