#pragma once

#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ralu/flow.hpp"
#include "ralu/latent_grid.hpp"

namespace ralu {

/// Token caching inside a stage: after two full steps, tokens whose two
/// velocity predictions are most similar (cosine) hold their second velocity
/// for the rest of the stage and are not passed to the model.
struct CachePolicy {
  double ratio = 0.4;            // fraction of tokens frozen, in [0, 1)
  std::set<int> stages{2, 3};    // 1-based stage numbers; stage 1 is never cached

  bool enabled_for(int stage) const { return stage > 1 && stages.count(stage) > 0; }
  bool operator==(const CachePolicy&) const = default;
};

/// Per-token cosine similarity over each token's channel vector; a zero-norm
/// vector on either side gives -1.
std::vector<double> cosine_similarities(std::span<const double> v_first, std::span<const double> v_second,
                                        std::size_t channels);

/// Token indices by descending similarity, ties by ascending index.
std::vector<std::size_t> similarity_rank(std::span<const double> v_first, std::span<const double> v_second,
                                         std::size_t channels);

/// Tokens still passed to the model on a cached step: floor((1 - ratio) T).
std::size_t computed_token_count(double ratio, std::size_t tokens);

struct StageCacheReport {
  bool enabled = false;
  std::string note;
  std::size_t tokens = 0;
  std::size_t frozen = 0;
  std::vector<std::size_t> computed_per_step;  // model inputs at each Euler step
};

struct CachedStage {
  TokenSet tokens;
  StageCacheReport report;
};

/// Euler integration of one stage with optional caching (ratio 0 or a
/// disabled policy gives the plain integrator, bit for bit). The last step is
/// recomputed in full when `final_step_full` is set. Stages with fewer than
/// three steps run uncached and say so in the report.
CachedStage run_cached_stage(TokenSet x, const VelocityModel& model, std::span<const double> timesteps,
                             double ratio, bool final_step_full);

}  // namespace ralu
