#include "ralu/region_select.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ralu/errors.hpp"

namespace ralu {

std::vector<double> tweedie_terminal(std::span<const double> x_t, double t, std::span<const double> velocity) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("tweedie_terminal: t outside [0, 1]");
  if (x_t.size() != velocity.size()) throw ShapeError("tweedie_terminal: latent and velocity sizes differ");
  std::vector<double> out(x_t.begin(), x_t.end());
  if (t == 1.0) return out;
  const double horizon = 1.0 - t;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += horizon * velocity[i];
  return out;
}

namespace {

GrayImage normalize_and_replicate(const LatentGrid& grid, const std::vector<double>& cell, std::size_t F) {
  const auto [lo_it, hi_it] = std::minmax_element(cell.begin(), cell.end());
  const double lo = cell.empty() ? 0.0 : *lo_it;
  const double span = cell.empty() ? 0.0 : *hi_it - lo;
  GrayImage img(grid.height() * F, grid.width() * F);
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) {
      const double v = cell[(r / F) * grid.width() + c / F];
      img.at(r, c) = span > 0.0 ? (v - lo) / span : 0.0;
    }
  }
  return img;
}

}  // namespace

NormDecoder::NormDecoder(std::size_t footprint) : footprint_(footprint) {
  if (footprint_ == 0) throw DomainError("decoder footprint must be positive");
}

GrayImage NormDecoder::decode(const LatentGrid& grid) const {
  std::vector<double> cell(grid.cells(), 0.0);
  for (std::size_t ch = 0; ch < grid.channels(); ++ch) {
    for (std::size_t r = 0; r < grid.height(); ++r) {
      for (std::size_t c = 0; c < grid.width(); ++c) {
        const double v = grid.at(ch, r, c);
        cell[r * grid.width() + c] += v * v;
      }
    }
  }
  for (double& v : cell) v = std::sqrt(v);
  return normalize_and_replicate(grid, cell, footprint_);
}

AffineDecoder::AffineDecoder(std::vector<double> weights, double bias, std::size_t footprint)
    : weights_(std::move(weights)), bias_(bias), footprint_(footprint) {
  if (footprint_ == 0) throw DomainError("decoder footprint must be positive");
  if (weights_.empty()) throw DomainError("affine decoder needs at least one channel weight");
}

GrayImage AffineDecoder::decode(const LatentGrid& grid) const {
  if (grid.channels() != weights_.size()) {
    throw ShapeError("affine decoder has " + std::to_string(weights_.size()) + " weights for " +
                     std::to_string(grid.channels()) + " channels");
  }
  std::vector<double> cell(grid.cells(), bias_);
  for (std::size_t ch = 0; ch < grid.channels(); ++ch) {
    for (std::size_t r = 0; r < grid.height(); ++r) {
      for (std::size_t c = 0; c < grid.width(); ++c) cell[r * grid.width() + c] += weights_[ch] * grid.at(ch, r, c);
    }
  }
  return normalize_and_replicate(grid, cell, footprint_);
}

std::size_t EdgeMap::count() const {
  return static_cast<std::size_t>(std::count(edges.begin(), edges.end(), std::uint8_t{1}));
}

GrayImage gaussian_blur(const GrayImage& image, double sigma) {
  if (!(sigma >= 0.0)) throw DomainError("blur sigma must be nonnegative");
  if (sigma == 0.0) return image;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  for (int i = -radius; i <= radius; ++i) kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
  const double total = std::accumulate(kernel.begin(), kernel.end(), 0.0);
  for (double& k : kernel) k /= total;

  const auto H = static_cast<long>(image.height);
  const auto W = static_cast<long>(image.width);
  auto clamp = [](long v, long n) { return std::clamp(v, 0L, n - 1); };
  GrayImage tmp(image.height, image.width);
  for (long r = 0; r < H; ++r) {
    for (long c = 0; c < W; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[static_cast<std::size_t>(i + radius)] * image.at(r, clamp(c + i, W));
      tmp.at(r, c) = acc;
    }
  }
  GrayImage out(image.height, image.width);
  for (long r = 0; r < H; ++r) {
    for (long c = 0; c < W; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[static_cast<std::size_t>(i + radius)] * tmp.at(clamp(r + i, H), c);
      out.at(r, c) = acc;
    }
  }
  return out;
}

Gradients sobel(const GrayImage& image) {
  const auto H = static_cast<long>(image.height);
  const auto W = static_cast<long>(image.width);
  auto px = [&](long r, long c) { return image.at(std::clamp(r, 0L, H - 1), std::clamp(c, 0L, W - 1)); };
  Gradients g{GrayImage(image.height, image.width), GrayImage(image.height, image.width),
              GrayImage(image.height, image.width)};
  for (long r = 0; r < H; ++r) {
    for (long c = 0; c < W; ++c) {
      const double gx = (px(r - 1, c + 1) + 2.0 * px(r, c + 1) + px(r + 1, c + 1)) -
                        (px(r - 1, c - 1) + 2.0 * px(r, c - 1) + px(r + 1, c - 1));
      const double gy = (px(r + 1, c - 1) + 2.0 * px(r + 1, c) + px(r + 1, c + 1)) -
                        (px(r - 1, c - 1) + 2.0 * px(r - 1, c) + px(r - 1, c + 1));
      g.gx.at(r, c) = gx / 8.0;
      g.gy.at(r, c) = gy / 8.0;
      g.magnitude.at(r, c) = std::hypot(gx, gy) / 8.0;
    }
  }
  return g;
}

EdgeMap canny(const GrayImage& image, const CannyParams& params) {
  if (!(params.low_threshold > 0.0 && params.low_threshold < params.high_threshold)) {
    throw DomainError("canny thresholds must satisfy 0 < low < high");
  }
  const GrayImage blurred = gaussian_blur(image, params.blur_sigma);
  const Gradients g = sobel(blurred);
  const auto H = static_cast<long>(image.height);
  const auto W = static_cast<long>(image.width);
  auto mag = [&](long r, long c) { return (r < 0 || c < 0 || r >= H || c >= W) ? 0.0 : g.magnitude.at(r, c); };

  // Non-maximum suppression along the quantised gradient direction.
  GrayImage thin(image.height, image.width);
  for (long r = 0; r < H; ++r) {
    for (long c = 0; c < W; ++c) {
      const double m = g.magnitude.at(r, c);
      if (m <= 0.0) continue;
      double angle = std::atan2(g.gy.at(r, c), g.gx.at(r, c)) * 180.0 / 3.14159265358979323846;
      if (angle < 0.0) angle += 180.0;
      long dr = 0, dc = 0;
      if (angle < 22.5 || angle >= 157.5) {
        dc = 1;
      } else if (angle < 67.5) {
        dr = 1;
        dc = 1;
      } else if (angle < 112.5) {
        dr = 1;
      } else {
        dr = 1;
        dc = -1;
      }
      // Strict on one side so a two-pixel plateau keeps exactly one pixel.
      if (m > mag(r - dr, c - dc) && m >= mag(r + dr, c + dc)) thin.at(r, c) = m;
    }
  }

  EdgeMap out{image.height, image.width, std::vector<std::uint8_t>(image.height * image.width, 0)};
  std::vector<std::size_t> stack;
  for (long r = 0; r < H; ++r) {
    for (long c = 0; c < W; ++c) {
      const std::size_t i = static_cast<std::size_t>(r * W + c);
      if (thin.pixels[i] >= params.high_threshold && !out.edges[i]) {
        out.edges[i] = 1;
        stack.push_back(i);
      }
    }
  }
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    const long r = static_cast<long>(i) / W;
    const long c = static_cast<long>(i) % W;
    for (long dr = -1; dr <= 1; ++dr) {
      for (long dc = -1; dc <= 1; ++dc) {
        const long rr = r + dr, cc = c + dc;
        if (rr < 0 || cc < 0 || rr >= H || cc >= W) continue;
        const std::size_t j = static_cast<std::size_t>(rr * W + cc);
        if (!out.edges[j] && thin.pixels[j] >= params.low_threshold) {
          out.edges[j] = 1;
          stack.push_back(j);
        }
      }
    }
  }
  return out;
}

EdgeScoreMap patch_scores(const EdgeMap& edges, std::size_t base_height, std::size_t base_width,
                          std::size_t footprint) {
  if (edges.height != base_height * footprint || edges.width != base_width * footprint) {
    throw ShapeError("patch_scores: edge map " + std::to_string(edges.height) + "x" + std::to_string(edges.width) +
                     " does not match base " + std::to_string(base_height) + "x" + std::to_string(base_width) +
                     " at footprint " + std::to_string(footprint));
  }
  EdgeScoreMap map;
  map.base_height = base_height;
  map.base_width = base_width;
  map.scores.assign(base_height * base_width, 0.0);
  for (std::size_t r = 0; r < edges.height; ++r) {
    for (std::size_t c = 0; c < edges.width; ++c) {
      if (edges.at(r, c)) map.scores[(r / footprint) * base_width + c / footprint] += 1.0;
    }
  }
  return map;
}

std::size_t topk_count(double ratio, std::size_t patches) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw DomainError("upsampling ratio must lie in [0, 1]");
  const double x = ratio * static_cast<double>(patches);
  const double k = std::ceil(x - 1e-9 * std::max(1.0, x));
  return std::min(patches, static_cast<std::size_t>(std::max(0.0, k)));
}

std::vector<std::size_t> select_topk(const EdgeScoreMap& scores, double ratio) {
  const std::size_t k = topk_count(ratio, scores.scores.size());
  std::vector<std::size_t> order(scores.scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores.scores[a] > scores.scores[b]; });
  order.resize(k);
  return order;
}

}  // namespace ralu
