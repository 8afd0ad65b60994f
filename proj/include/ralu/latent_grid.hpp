#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ralu {

enum class Level : std::uint8_t { Low = 0, High = 1 };

/// A single-resolution latent. Values are channel-major, then row-major:
/// index(ch, r, c) = (ch * height + r) * width + c.
class LatentGrid {
 public:
  LatentGrid() = default;
  LatentGrid(std::size_t height, std::size_t width, std::size_t channels, Level level);
  LatentGrid(std::size_t height, std::size_t width, std::size_t channels, Level level,
             std::vector<double> values);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t channels() const { return channels_; }
  Level level() const { return level_; }
  std::size_t cells() const { return height_ * width_; }
  std::size_t size() const { return values_.size(); }

  std::size_t index(std::size_t ch, std::size_t r, std::size_t c) const {
    return (ch * height_ + r) * width_ + c;
  }
  double at(std::size_t ch, std::size_t r, std::size_t c) const { return values_[index(ch, r, c)]; }
  double& at(std::size_t ch, std::size_t r, std::size_t c) { return values_[index(ch, r, c)]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  bool operator==(const LatentGrid&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  Level level_ = Level::Low;
  std::vector<double> values_;
};

/// 2x nearest-neighbour upsampling; every LOW cell fills its 2x2 footprint.
LatentGrid upsample_nn(const LatentGrid& grid);

/// 2x2 block mean. Throws ShapeError on odd dimensions.
LatentGrid downsample_avg(const LatentGrid& grid);

/// One token of a mixed-resolution set. LOW tokens carry LOW-grid
/// coordinates, HIGH tokens carry HIGH-grid coordinates.
struct Token {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  Level level = Level::Low;

  /// Row-major index of the LOW patch this token belongs to.
  std::size_t patch(std::size_t base_width) const {
    return level == Level::Low ? static_cast<std::size_t>(row) * base_width + col
                               : static_cast<std::size_t>(row / 2) * base_width + col / 2;
  }

  bool operator==(const Token&) const = default;
};

/// Mixed-resolution token collection over a LOW base grid.
///
/// Tokens are kept in canonical order: by parent patch (row-major), and the
/// four HIGH children of a patch in row-major order inside the 2x2 footprint.
/// Values are token-major: values[i * channels + ch].
class TokenSet {
 public:
  TokenSet() = default;
  TokenSet(std::size_t base_height, std::size_t base_width, std::size_t channels,
           std::vector<Token> tokens, std::vector<double> values);

  /// All-LOW set from a LOW grid, or all-HIGH set from a HIGH grid.
  static TokenSet from_grid(const LatentGrid& grid);

  std::size_t base_height() const { return base_height_; }
  std::size_t base_width() const { return base_width_; }
  std::size_t patches() const { return base_height_ * base_width_; }
  std::size_t channels() const { return channels_; }
  std::size_t size() const { return tokens_.size(); }
  std::size_t count(Level level) const;

  const std::vector<Token>& tokens() const { return tokens_; }
  const Token& token(std::size_t i) const { return tokens_[i]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  std::span<const double> values(std::size_t i) const {
    return std::span<const double>(values_).subspan(i * channels_, channels_);
  }
  std::span<double> values(std::size_t i) {
    return std::span<double>(values_).subspan(i * channels_, channels_);
  }

  /// Full HIGH grid; LOW tokens are replicated into their 2x2 footprint.
  LatentGrid assemble() const;

  /// LOW grid; every token must be LOW.
  LatentGrid to_low_grid() const;

  /// True when every HIGH cell has exactly one writer and every patch is
  /// either one LOW token or four HIGH children.
  bool has_exact_coverage() const;

  bool operator==(const TokenSet&) const = default;

 private:
  std::size_t base_height_ = 0;
  std::size_t base_width_ = 0;
  std::size_t channels_ = 0;
  std::vector<Token> tokens_;
  std::vector<double> values_;
};

/// Replaces each selected LOW patch (row-major patch index) by four HIGH
/// children that copy the parent value. Throws ContractError when a selected
/// patch is already HIGH or out of range.
TokenSet upsample_selected(const TokenSet& tokens, std::span<const std::size_t> selection);

/// The nearest-neighbour upsampling covariance: 4x4 all-ones blocks over each
/// sibling group, zero elsewhere. Sigma acts independently per channel.
class BlockCovariance {
 public:
  static constexpr std::size_t kBlockSize = 4;

  /// Sibling groups of a HIGH grid in LatentGrid layout.
  static BlockCovariance for_grid(std::size_t high_height, std::size_t high_width,
                                  std::size_t channels);
  /// Consecutive runs of four elements form one block.
  static BlockCovariance contiguous(std::size_t length);
  /// Explicit element -> group map. Every group needs exactly four members.
  static BlockCovariance from_groups(std::vector<std::uint32_t> group_of, std::size_t groups);

  std::size_t size() const { return group_of_.size(); }
  std::size_t groups() const { return groups_; }
  std::uint32_t group(std::size_t i) const { return group_of_[i]; }

 private:
  BlockCovariance(std::vector<std::uint32_t> group_of, std::size_t groups);

  std::vector<std::uint32_t> group_of_;
  std::size_t groups_ = 0;
};

/// (Sigma x)_i = sum of x over i's sibling block.
std::vector<double> apply_sigma(std::span<const double> x, const BlockCovariance& cov);

/// Per-block sums of x, indexed by group id.
std::vector<double> block_sums(std::span<const double> x, const BlockCovariance& cov);

}  // namespace ralu
