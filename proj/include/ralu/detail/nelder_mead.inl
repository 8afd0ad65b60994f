#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

namespace ralu {

template <class F>
NelderMeadResult nelder_mead(F&& f, std::vector<double> x0, std::vector<double> step, int max_iterations,
                             double f_tolerance) {
  const std::size_t n = x0.size();
  constexpr double kReflect = 1.0;
  constexpr double kExpand = 2.0;
  constexpr double kContract = 0.5;
  constexpr double kShrink = 0.5;

  std::vector<std::vector<double>> simplex(n + 1, x0);
  for (std::size_t i = 0; i < n; ++i) simplex[i + 1][i] += step[i];
  std::vector<double> fx(n + 1);
  for (std::size_t i = 0; i <= n; ++i) fx[i] = f(simplex[i]);

  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), trial(n), trial2(n);
  NelderMeadResult result;

  auto along = [&](double coef, const std::vector<double>& from, std::vector<double>& out) {
    for (std::size_t j = 0; j < n; ++j) out[j] = centroid[j] + coef * (from[j] - centroid[j]);
  };

  int it = 0;
  for (; it < max_iterations; ++it) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fx[a] < fx[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[n - 1];
    if (std::abs(fx[worst] - fx[best]) <= f_tolerance) {
      result.converged = true;
      break;
    }

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) centroid[j] += simplex[order[i]][j];
    }
    for (double& v : centroid) v /= static_cast<double>(n);

    along(-kReflect, simplex[worst], trial);
    const double fr = f(trial);
    if (fr < fx[best]) {
      along(-kReflect * kExpand, simplex[worst], trial2);
      const double fe = f(trial2);
      if (fe < fr) {
        simplex[worst] = trial2;
        fx[worst] = fe;
      } else {
        simplex[worst] = trial;
        fx[worst] = fr;
      }
      continue;
    }
    if (fr < fx[second]) {
      simplex[worst] = trial;
      fx[worst] = fr;
      continue;
    }

    // contraction, outside when the reflection beat the worst vertex
    if (fr < fx[worst]) {
      along(-kContract, simplex[worst], trial2);
    } else {
      along(kContract, simplex[worst], trial2);
    }
    const double fc = f(trial2);
    if (fc < std::min(fr, fx[worst])) {
      simplex[worst] = trial2;
      fx[worst] = fc;
      continue;
    }

    for (std::size_t i = 1; i <= n; ++i) {
      auto& v = simplex[order[i]];
      for (std::size_t j = 0; j < n; ++j) v[j] = simplex[best][j] + kShrink * (v[j] - simplex[best][j]);
      fx[order[i]] = f(v);
    }
  }

  const auto best_it = std::min_element(fx.begin(), fx.end());
  result.x = simplex[static_cast<std::size_t>(best_it - fx.begin())];
  result.value = *best_it;
  result.iterations = it;
  return result;
}

}  // namespace ralu
