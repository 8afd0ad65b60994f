#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "ralu/latent_grid.hpp"

namespace ralu {

/// Rectified-flow estimate of the data endpoint: x_t + (1 - t) v.
/// At t == 1 the input is returned unchanged. Requires t in [0, 1].
std::vector<double> tweedie_terminal(std::span<const double> x_t, double t, std::span<const double> velocity);

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;  // row-major

  GrayImage() = default;
  GrayImage(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}

  double at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  double& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
  bool operator==(const GrayImage&) const = default;
};

/// Latent -> grayscale image of shape (height * F, width * F), values in [0, 1].
class Decoder {
 public:
  virtual ~Decoder() = default;
  virtual GrayImage decode(const LatentGrid& grid) const = 0;
  virtual std::size_t footprint() const = 0;
};

/// Per-cell channel l2 norm, min-max normalised over the grid and replicated
/// into each cell's F x F footprint. A constant grid decodes to all zeros.
class NormDecoder final : public Decoder {
 public:
  explicit NormDecoder(std::size_t footprint = 8);
  GrayImage decode(const LatentGrid& grid) const override;
  std::size_t footprint() const override { return footprint_; }

 private:
  std::size_t footprint_;
};

/// bias + sum_c weight_c * x_c per cell, then min-max normalised and replicated.
class AffineDecoder final : public Decoder {
 public:
  AffineDecoder(std::vector<double> weights, double bias, std::size_t footprint = 8);
  GrayImage decode(const LatentGrid& grid) const override;
  std::size_t footprint() const override { return footprint_; }
  const std::vector<double>& weights() const { return weights_; }
  double bias() const { return bias_; }

 private:
  std::vector<double> weights_;
  double bias_;
  std::size_t footprint_;
};

struct CannyParams {
  double blur_sigma = 1.4;
  double low_threshold = 0.1;   // gradient magnitude, intensity units per pixel
  double high_threshold = 0.2;

  bool operator==(const CannyParams&) const = default;
};

struct EdgeMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> edges;  // 0 or 1, row-major

  std::size_t count() const;
  bool at(std::size_t r, std::size_t c) const { return edges[r * width + c] != 0; }
};

/// Separable Gaussian blur, kernel radius ceil(3 sigma), clamped borders.
/// sigma == 0 returns the input.
GrayImage gaussian_blur(const GrayImage& image, double sigma);

struct Gradients {
  GrayImage gx;
  GrayImage gy;
  GrayImage magnitude;
};

/// 3x3 Sobel derivatives scaled by 1/8 (per-pixel intensity slope), clamped borders.
Gradients sobel(const GrayImage& image);

/// Blur, Sobel, non-maximum suppression on four quantised directions, then
/// double-threshold hysteresis over 8-connected weak pixels.
/// Throws DomainError unless 0 < low < high and blur_sigma >= 0.
EdgeMap canny(const GrayImage& image, const CannyParams& params = {});

struct EdgeScoreMap {
  std::size_t base_height = 0;
  std::size_t base_width = 0;
  std::vector<double> scores;          // one per LOW patch, row-major
  std::vector<std::size_t> selected;   // best first
  double ratio = 0.0;

  std::size_t patches() const { return base_height * base_width; }
};

/// Edge-pixel count inside each patch's F x F image footprint.
EdgeScoreMap patch_scores(const EdgeMap& edges, std::size_t base_height, std::size_t base_width,
                          std::size_t footprint);

/// ceil(ratio * patches), guarded against representation error in the product.
std::size_t topk_count(double ratio, std::size_t patches);

/// The topk_count(ratio, P) highest-scoring patches, ties by ascending index.
std::vector<std::size_t> select_topk(const EdgeScoreMap& scores, double ratio);

}  // namespace ralu
