#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ralu/latent_grid.hpp"

namespace ralu {

/// Token-level velocity predictor v(x_t, t). Implementations must be
/// deterministic in (tokens, t) and accept LOW, HIGH and mixed sets.
class VelocityModel {
 public:
  virtual ~VelocityModel() = default;

  /// Velocities for every token, token-major like TokenSet::values().
  virtual std::vector<double> predict(const TokenSet& tokens, double t) const = 0;

  /// Velocities for the listed tokens only, in the listed order. The default
  /// evaluates everything and gathers.
  virtual std::vector<double> predict_subset(const TokenSet& tokens, double t,
                                             std::span<const std::size_t> active) const;
};

/// A velocity field defined on full HIGH grids.
class GridVelocityModel {
 public:
  virtual ~GridVelocityModel() = default;
  virtual LatentGrid predict(const LatentGrid& high, double t) const = 0;
};

/// Data law with independent cells x1 ~ N(mu, sigma^2) over a HIGH grid;
/// noise x0 ~ N(0, 1).
struct GaussianTarget {
  LatentGrid mu;
  double sigma = 0.5;
};

/// E[x1 - x0 | x_t = x] for x0 ~ N(0, 1), x1 ~ N(mu, sigma^2) independent:
///   mu + (t sigma^2 - (1 - t)) (x - t mu) / ((1 - t)^2 + t^2 sigma^2).
double gaussian_velocity(double x, double t, double mu, double sigma);

/// Cellwise gaussian_velocity; x must match the shape of target.mu.
LatentGrid gaussian_velocity(const LatentGrid& x, double t, const GaussianTarget& target);

/// Closed-form E[x1 | x_t = x] under the same law.
double gaussian_posterior_mean(double x, double t, double mu, double sigma);

/// x_t | x1 ~ N(t x1, (1 - t)^2 I).
struct ConditionalLaw {
  LatentGrid mean;
  double variance = 0.0;
};
ConditionalLaw gaussian_conditional_law(double t, const LatentGrid& x1);

class GaussianBackend final : public GridVelocityModel {
 public:
  explicit GaussianBackend(GaussianTarget target);
  LatentGrid predict(const LatentGrid& high, double t) const override;
  const GaussianTarget& target() const { return target_; }

 private:
  GaussianTarget target_;
};

/// Runs a HIGH-grid model on a mixed TokenSet: LOW tokens are replicated into
/// their footprint, the model is evaluated on the assembled grid, HIGH tokens
/// read their own cell and LOW tokens the mean of their four children.
class MixedVelocityAdapter final : public VelocityModel {
 public:
  explicit MixedVelocityAdapter(const GridVelocityModel& model) : model_(model) {}
  std::vector<double> predict(const TokenSet& tokens, double t) const override;
  std::vector<double> predict_subset(const TokenSet& tokens, double t,
                                     std::span<const std::size_t> active) const override;

 private:
  std::vector<double> token_velocity(const TokenSet& tokens, const LatentGrid& v, std::size_t i) const;

  const GridVelocityModel& model_;
};

/// Throws DomainError unless the sequence strictly increases.
void require_increasing(std::span<const double> timesteps);

/// Explicit Euler: x_{j+1} = x_j + (t_{j+1} - t_j) v(x_j, t_j).
TokenSet euler_integrate(TokenSet x, const VelocityModel& model, std::span<const double> timesteps);

/// Smooth mean field on a HIGH grid with values in [1.5, 2.5]: a soft-edged
/// disc over a low-frequency wave. Deterministic; channels differ in phase.
LatentGrid synthetic_mean_field(std::size_t high_height, std::size_t high_width, std::size_t channels);

}  // namespace ralu
