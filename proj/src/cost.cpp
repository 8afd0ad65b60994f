#include "ralu/cost.hpp"

#include <cmath>

#include "ralu/errors.hpp"
#include "ralu/region_select.hpp"

namespace ralu {

TokenCounts token_counts(std::size_t patches, double ratio, std::size_t stages, std::optional<double> cache_ratio) {
  if (stages < 1) throw DomainError("token_counts needs at least one stage");
  const std::size_t k = topk_count(ratio, patches);
  TokenCounts counts;
  for (std::size_t s = 0; s < stages; ++s) {
    std::size_t T = patches;
    if (stages > 1 && s + 1 == stages) {
      T = 4 * patches;
    } else if (s > 0) {
      T = patches + 3 * k;
    }
    counts.full.push_back(T);
    if (cache_ratio && s > 0) {
      if (!(*cache_ratio >= 0.0 && *cache_ratio < 1.0)) throw DomainError("caching ratio must lie in [0, 1)");
      const double x = (1.0 - *cache_ratio) * static_cast<double>(T);
      counts.cached.emplace_back(static_cast<std::size_t>(std::floor(x + 1e-9 * std::max(1.0, x))));
    } else {
      counts.cached.emplace_back(std::nullopt);
    }
  }
  return counts;
}

StepSplit step_split(int steps, bool cached_stage, bool last_stage) {
  if (!cached_stage || steps < 3) return {steps, 0};
  const int full = 2 + (last_stage ? 1 : 0);
  return {full, steps - full};
}

TokenSteps token_steps(std::span<const int> steps, const TokenCounts& counts, int baseline_steps,
                       std::size_t patches) {
  if (steps.size() != counts.full.size()) throw ShapeError("token_steps: one step count per stage is required");
  TokenSteps out;
  for (std::size_t s = 0; s < steps.size(); ++s) {
    const bool cached = counts.cached.size() > s && counts.cached[s].has_value();
    const StepSplit split = step_split(steps[s], cached, s + 1 == steps.size());
    out.total += static_cast<double>(split.full) * static_cast<double>(counts.full[s]);
    if (split.cached > 0) out.total += static_cast<double>(split.cached) * static_cast<double>(*counts.cached[s]);
  }
  out.baseline = static_cast<double>(baseline_steps) * 4.0 * static_cast<double>(patches);
  out.reduction = out.total > 0.0 ? out.baseline / out.total : 0.0;
  return out;
}

double step_cost(const CostModel& model, std::size_t tokens) {
  const double T = static_cast<double>(tokens);
  const double attn = T + model.aux_tokens;
  return model.alpha * T + model.beta * attn * attn;
}

double CostBreakdown::decoder_share() const {
  for (const CostRow& row : rows) {
    if (row.stage == "decoder") return row.share;
  }
  return 0.0;
}

CostBreakdown estimate_cost(std::span<const int> steps, const TokenCounts& counts, const CostModel& model) {
  if (model.alpha < 0.0 || model.beta < 0.0 || model.aux_tokens < 0.0 || model.decoder_cost < 0.0) {
    throw DomainError("cost model terms must be nonnegative");
  }
  if (steps.size() != counts.full.size()) throw ShapeError("estimate_cost: one step count per stage is required");
  CostBreakdown out;
  for (std::size_t s = 0; s < steps.size(); ++s) {
    const bool cached = counts.cached.size() > s && counts.cached[s].has_value();
    const StepSplit split = step_split(steps[s], cached, s + 1 == steps.size());
    CostRow row;
    row.stage = "stage" + std::to_string(s + 1);
    row.steps = steps[s];
    row.tokens = counts.full[s];
    row.cost = split.full * step_cost(model, counts.full[s]);
    if (split.cached > 0) row.cost += split.cached * step_cost(model, *counts.cached[s]);
    out.total += row.cost;
    out.rows.push_back(row);
  }
  if (model.decoder_cost > 0.0) {
    out.rows.push_back({"decoder", 1, 0, model.decoder_cost, 0.0});
    out.total += model.decoder_cost;
  }
  for (CostRow& row : out.rows) row.share = out.total > 0.0 ? row.cost / out.total : 0.0;
  return out;
}

double calibrate_alpha(double total, int steps, std::size_t tokens) {
  if (steps <= 0 || tokens == 0) throw DomainError("calibrate_alpha needs a nonempty run");
  return total / (static_cast<double>(steps) * static_cast<double>(tokens));
}

}  // namespace ralu
