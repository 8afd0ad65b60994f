#include "ralu/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ralu/errors.hpp"

namespace ralu {

std::vector<double> VelocityModel::predict_subset(const TokenSet& tokens, double t,
                                                  std::span<const std::size_t> active) const {
  const std::vector<double> all = predict(tokens, t);
  const std::size_t C = tokens.channels();
  std::vector<double> out;
  out.reserve(active.size() * C);
  for (std::size_t i : active) out.insert(out.end(), all.begin() + static_cast<long>(i * C), all.begin() + static_cast<long>((i + 1) * C));
  return out;
}

double gaussian_velocity(double x, double t, double mu, double sigma) {
  const double s2 = sigma * sigma;
  const double denom = (1.0 - t) * (1.0 - t) + t * t * s2;
  return mu + (t * s2 - (1.0 - t)) * (x - t * mu) / denom;
}

double gaussian_posterior_mean(double x, double t, double mu, double sigma) {
  const double s2 = sigma * sigma;
  const double denom = (1.0 - t) * (1.0 - t) + t * t * s2;
  return mu + t * s2 * (x - t * mu) / denom;
}

LatentGrid gaussian_velocity(const LatentGrid& x, double t, const GaussianTarget& target) {
  const LatentGrid& mu = target.mu;
  if (x.height() != mu.height() || x.width() != mu.width() || x.channels() != mu.channels()) {
    throw ShapeError("gaussian_velocity: latent shape differs from the target mean field");
  }
  LatentGrid v(x.height(), x.width(), x.channels(), x.level());
  const auto xv = x.values();
  const auto mv = mu.values();
  auto out = v.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gaussian_velocity(xv[i], t, mv[i], target.sigma);
  return v;
}

ConditionalLaw gaussian_conditional_law(double t, const LatentGrid& x1) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("gaussian_conditional_law: t outside [0, 1]");
  LatentGrid mean = x1;
  for (double& v : mean.values()) v *= t;
  return {std::move(mean), (1.0 - t) * (1.0 - t)};
}

GaussianBackend::GaussianBackend(GaussianTarget target) : target_(std::move(target)) {
  if (!(target_.sigma > 0.0)) throw DomainError("Gaussian target needs sigma > 0");
  if (target_.mu.level() != Level::High) throw ContractError("Gaussian target mean must be a HIGH grid");
}

LatentGrid GaussianBackend::predict(const LatentGrid& high, double t) const {
  return gaussian_velocity(high, t, target_);
}

std::vector<double> MixedVelocityAdapter::token_velocity(const TokenSet& tokens, const LatentGrid& v,
                                                         std::size_t i) const {
  const Token& tok = tokens.token(i);
  const std::size_t C = tokens.channels();
  std::vector<double> out(C);
  for (std::size_t ch = 0; ch < C; ++ch) {
    if (tok.level == Level::High) {
      out[ch] = v.at(ch, tok.row, tok.col);
    } else {
      const std::size_t r = 2 * tok.row;
      const std::size_t c = 2 * tok.col;
      out[ch] = 0.25 * (v.at(ch, r, c) + v.at(ch, r, c + 1) + v.at(ch, r + 1, c) + v.at(ch, r + 1, c + 1));
    }
  }
  return out;
}

std::vector<double> MixedVelocityAdapter::predict(const TokenSet& tokens, double t) const {
  const LatentGrid v = model_.predict(tokens.assemble(), t);
  std::vector<double> out;
  out.reserve(tokens.values().size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto tv = token_velocity(tokens, v, i);
    out.insert(out.end(), tv.begin(), tv.end());
  }
  return out;
}

std::vector<double> MixedVelocityAdapter::predict_subset(const TokenSet& tokens, double t,
                                                         std::span<const std::size_t> active) const {
  const LatentGrid v = model_.predict(tokens.assemble(), t);
  std::vector<double> out;
  out.reserve(active.size() * tokens.channels());
  for (std::size_t i : active) {
    const auto tv = token_velocity(tokens, v, i);
    out.insert(out.end(), tv.begin(), tv.end());
  }
  return out;
}

void require_increasing(std::span<const double> timesteps) {
  for (std::size_t j = 1; j < timesteps.size(); ++j) {
    if (!(timesteps[j] > timesteps[j - 1])) {
      throw DomainError("timesteps must strictly increase (index " + std::to_string(j) + ")");
    }
  }
}

TokenSet euler_integrate(TokenSet x, const VelocityModel& model, std::span<const double> timesteps) {
  require_increasing(timesteps);
  for (std::size_t j = 0; j + 1 < timesteps.size(); ++j) {
    const double dt = timesteps[j + 1] - timesteps[j];
    const std::vector<double> v = model.predict(x, timesteps[j]);
    auto xv = x.values();
    if (v.size() != xv.size()) throw ShapeError("velocity model returned the wrong number of values");
    for (std::size_t i = 0; i < xv.size(); ++i) xv[i] += dt * v[i];
  }
  return x;
}

LatentGrid synthetic_mean_field(std::size_t high_height, std::size_t high_width, std::size_t channels) {
  LatentGrid mu(high_height, high_width, channels, Level::High);
  const double two_pi = 2.0 * std::numbers::pi;
  const double H = static_cast<double>(high_height);
  const double W = static_cast<double>(high_width);
  const double radius = 0.28 * std::min(H, W);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    const double phase = 0.7 * static_cast<double>(ch);
    for (std::size_t r = 0; r < high_height; ++r) {
      for (std::size_t c = 0; c < high_width; ++c) {
        const double y = (static_cast<double>(r) + 0.5) / H;
        const double x = (static_cast<double>(c) + 0.5) / W;
        const double wave = 0.2 * std::sin(two_pi * y + phase) * std::cos(two_pi * x - phase);
        const double dy = static_cast<double>(r) + 0.5 - 0.45 * H;
        const double dx = static_cast<double>(c) + 0.5 - 0.55 * W;
        const double dist = std::sqrt(dx * dx + dy * dy);
        const double disc = 0.5 * (1.0 + std::tanh((radius - dist) / 1.5));
        mu.at(ch, r, c) = 1.7 + wave + 0.55 * disc;
      }
    }
  }
  return mu;
}

}  // namespace ralu
