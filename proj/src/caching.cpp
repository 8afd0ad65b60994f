#include "ralu/caching.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ralu/errors.hpp"

namespace ralu {

std::vector<double> cosine_similarities(std::span<const double> v_first, std::span<const double> v_second,
                                        std::size_t channels) {
  if (channels == 0 || v_first.size() != v_second.size() || v_first.size() % channels != 0) {
    throw ShapeError("cosine_similarities: predictions are not aligned to the same token set");
  }
  const std::size_t T = v_first.size() / channels;
  std::vector<double> sim(T);
  for (std::size_t i = 0; i < T; ++i) {
    double dot = 0.0, n1 = 0.0, n2 = 0.0;
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const double a = v_first[i * channels + ch];
      const double b = v_second[i * channels + ch];
      dot += a * b;
      n1 += a * a;
      n2 += b * b;
    }
    sim[i] = (n1 == 0.0 || n2 == 0.0) ? -1.0 : dot / std::sqrt(n1 * n2);
  }
  return sim;
}

std::vector<std::size_t> similarity_rank(std::span<const double> v_first, std::span<const double> v_second,
                                         std::size_t channels) {
  const std::vector<double> sim = cosine_similarities(v_first, v_second, channels);
  std::vector<std::size_t> order(sim.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });
  return order;
}

std::size_t computed_token_count(double ratio, std::size_t tokens) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw DomainError("caching ratio must lie in [0, 1)");
  const double x = (1.0 - ratio) * static_cast<double>(tokens);
  return std::min(tokens, static_cast<std::size_t>(std::floor(x + 1e-9 * std::max(1.0, x))));
}

CachedStage run_cached_stage(TokenSet x, const VelocityModel& model, std::span<const double> timesteps,
                             double ratio, bool final_step_full) {
  require_increasing(timesteps);
  const std::size_t steps = timesteps.empty() ? 0 : timesteps.size() - 1;
  const std::size_t T = x.size();
  const std::size_t C = x.channels();

  CachedStage out;
  out.report.tokens = T;
  const bool requested = ratio > 0.0;
  const std::size_t computed = computed_token_count(ratio, T);
  out.report.enabled = requested && steps >= 3 && computed < T;
  if (requested && steps < 3) out.report.note = "stage has fewer than 3 steps; caching disabled";

  std::vector<double> v_first, v_held;
  std::vector<std::size_t> active;
  std::vector<std::uint8_t> frozen;

  for (std::size_t j = 0; j < steps; ++j) {
    const double t = timesteps[j];
    const double dt = timesteps[j + 1] - t;
    const bool cached_step = out.report.enabled && j >= 2 && !(final_step_full && j + 1 == steps);
    auto xv = x.values();

    if (!cached_step) {
      std::vector<double> v = model.predict(x, t);
      if (v.size() != xv.size()) throw ShapeError("velocity model returned the wrong number of values");
      out.report.computed_per_step.push_back(T);
      for (std::size_t i = 0; i < xv.size(); ++i) xv[i] += dt * v[i];
      if (out.report.enabled && j == 0) v_first = v;
      if (out.report.enabled && j == 1) {
        // Freeze the most similar tokens; the set stays fixed for the stage.
        const std::vector<std::size_t> rank = similarity_rank(v_first, v, C);
        frozen.assign(T, 0);
        for (std::size_t r = 0; r < T - computed; ++r) frozen[rank[r]] = 1;
        for (std::size_t i = 0; i < T; ++i) {
          if (!frozen[i]) active.push_back(i);
        }
        out.report.frozen = T - computed;
        v_held = std::move(v);
      }
      continue;
    }

    const std::vector<double> fresh = model.predict_subset(x, t, active);
    out.report.computed_per_step.push_back(active.size());
    std::vector<double> v = v_held;
    for (std::size_t a = 0; a < active.size(); ++a) {
      std::copy_n(fresh.begin() + static_cast<long>(a * C), C, v.begin() + static_cast<long>(active[a] * C));
    }
    for (std::size_t i = 0; i < xv.size(); ++i) xv[i] += dt * v[i];
  }
  out.tokens = std::move(x);
  return out;
}

}  // namespace ralu
