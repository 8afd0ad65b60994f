#include "ralu/latent_grid.hpp"

#include <algorithm>
#include <string>

#include "ralu/errors.hpp"

namespace ralu {

LatentGrid::LatentGrid(std::size_t height, std::size_t width, std::size_t channels, Level level)
    : height_(height),
      width_(width),
      channels_(channels),
      level_(level),
      values_(height * width * channels, 0.0) {}

LatentGrid::LatentGrid(std::size_t height, std::size_t width, std::size_t channels, Level level,
                       std::vector<double> values)
    : height_(height), width_(width), channels_(channels), level_(level), values_(std::move(values)) {
  if (values_.size() != height * width * channels) {
    throw ShapeError("LatentGrid: " + std::to_string(values_.size()) + " values for shape " +
                     std::to_string(height) + "x" + std::to_string(width) + "x" +
                     std::to_string(channels));
  }
}

LatentGrid upsample_nn(const LatentGrid& grid) {
  if (grid.level() != Level::Low) throw ContractError("upsample_nn: input grid is not LOW");
  LatentGrid out(grid.height() * 2, grid.width() * 2, grid.channels(), Level::High);
  for (std::size_t ch = 0; ch < grid.channels(); ++ch) {
    for (std::size_t r = 0; r < out.height(); ++r) {
      for (std::size_t c = 0; c < out.width(); ++c) out.at(ch, r, c) = grid.at(ch, r / 2, c / 2);
    }
  }
  return out;
}

LatentGrid downsample_avg(const LatentGrid& grid) {
  if (grid.height() % 2 != 0 || grid.width() % 2 != 0) {
    throw ShapeError("downsample_avg: odd grid " + std::to_string(grid.height()) + "x" +
                     std::to_string(grid.width()));
  }
  LatentGrid out(grid.height() / 2, grid.width() / 2, grid.channels(), Level::Low);
  for (std::size_t ch = 0; ch < grid.channels(); ++ch) {
    for (std::size_t r = 0; r < out.height(); ++r) {
      for (std::size_t c = 0; c < out.width(); ++c) {
        const double sum = grid.at(ch, 2 * r, 2 * c) + grid.at(ch, 2 * r, 2 * c + 1) +
                           grid.at(ch, 2 * r + 1, 2 * c) + grid.at(ch, 2 * r + 1, 2 * c + 1);
        out.at(ch, r, c) = 0.25 * sum;
      }
    }
  }
  return out;
}

TokenSet::TokenSet(std::size_t base_height, std::size_t base_width, std::size_t channels,
                   std::vector<Token> tokens, std::vector<double> values)
    : base_height_(base_height),
      base_width_(base_width),
      channels_(channels),
      tokens_(std::move(tokens)),
      values_(std::move(values)) {
  if (values_.size() != tokens_.size() * channels_) {
    throw ShapeError("TokenSet: value count does not match tokens x channels");
  }
}

TokenSet TokenSet::from_grid(const LatentGrid& grid) {
  const std::size_t C = grid.channels();
  std::vector<Token> tokens;
  std::vector<double> values;
  tokens.reserve(grid.cells());
  values.reserve(grid.size());
  if (grid.level() == Level::Low) {
    for (std::size_t r = 0; r < grid.height(); ++r) {
      for (std::size_t c = 0; c < grid.width(); ++c) {
        tokens.push_back({static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c), Level::Low});
        for (std::size_t ch = 0; ch < C; ++ch) values.push_back(grid.at(ch, r, c));
      }
    }
    return TokenSet(grid.height(), grid.width(), C, std::move(tokens), std::move(values));
  }
  if (grid.height() % 2 != 0 || grid.width() % 2 != 0) {
    throw ShapeError("TokenSet::from_grid: HIGH grid must have even dimensions");
  }
  const std::size_t bh = grid.height() / 2;
  const std::size_t bw = grid.width() / 2;
  for (std::size_t pr = 0; pr < bh; ++pr) {
    for (std::size_t pc = 0; pc < bw; ++pc) {
      for (std::size_t k = 0; k < 4; ++k) {
        const std::size_t r = 2 * pr + k / 2;
        const std::size_t c = 2 * pc + k % 2;
        tokens.push_back({static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c), Level::High});
        for (std::size_t ch = 0; ch < C; ++ch) values.push_back(grid.at(ch, r, c));
      }
    }
  }
  return TokenSet(bh, bw, C, std::move(tokens), std::move(values));
}

std::size_t TokenSet::count(Level level) const {
  return static_cast<std::size_t>(
      std::count_if(tokens_.begin(), tokens_.end(), [level](const Token& t) { return t.level == level; }));
}

LatentGrid TokenSet::assemble() const {
  LatentGrid out(base_height_ * 2, base_width_ * 2, channels_, Level::High);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const Token& t = tokens_[i];
    const auto v = values(i);
    if (t.level == Level::High) {
      for (std::size_t ch = 0; ch < channels_; ++ch) out.at(ch, t.row, t.col) = v[ch];
    } else {
      for (std::size_t ch = 0; ch < channels_; ++ch) {
        for (std::size_t k = 0; k < 4; ++k) out.at(ch, 2 * t.row + k / 2, 2 * t.col + k % 2) = v[ch];
      }
    }
  }
  return out;
}

LatentGrid TokenSet::to_low_grid() const {
  LatentGrid out(base_height_, base_width_, channels_, Level::Low);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const Token& t = tokens_[i];
    if (t.level != Level::Low) throw ContractError("TokenSet::to_low_grid: set contains HIGH tokens");
    const auto v = values(i);
    for (std::size_t ch = 0; ch < channels_; ++ch) out.at(ch, t.row, t.col) = v[ch];
  }
  return out;
}

bool TokenSet::has_exact_coverage() const {
  const std::size_t hw = base_width_ * 2;
  std::vector<std::uint8_t> writers(base_height_ * 2 * hw, 0);
  std::vector<std::uint8_t> low_seen(patches(), 0);
  std::vector<std::uint8_t> children(patches(), 0);
  for (const Token& t : tokens_) {
    if (t.level == Level::Low) {
      if (t.row >= base_height_ || t.col >= base_width_) return false;
      low_seen[t.patch(base_width_)]++;
      for (std::size_t k = 0; k < 4; ++k) writers[(2 * t.row + k / 2) * hw + 2 * t.col + k % 2]++;
    } else {
      if (t.row >= base_height_ * 2 || t.col >= hw) return false;
      children[t.patch(base_width_)]++;
      writers[static_cast<std::size_t>(t.row) * hw + t.col]++;
    }
  }
  for (std::size_t p = 0; p < patches(); ++p) {
    const bool one_low = low_seen[p] == 1 && children[p] == 0;
    const bool four_high = low_seen[p] == 0 && children[p] == 4;
    if (!one_low && !four_high) return false;
  }
  return std::all_of(writers.begin(), writers.end(), [](std::uint8_t w) { return w == 1; });
}

TokenSet upsample_selected(const TokenSet& tokens, std::span<const std::size_t> selection) {
  const std::size_t C = tokens.channels();
  std::vector<std::uint8_t> selected(tokens.patches(), 0);
  for (std::size_t p : selection) {
    if (p >= tokens.patches()) {
      throw ContractError("upsample_selected: patch index " + std::to_string(p) + " out of range");
    }
    selected[p] = 1;
  }

  std::vector<Token> out_tokens;
  std::vector<double> out_values;
  out_tokens.reserve(tokens.size() + 3 * selection.size());
  out_values.reserve((tokens.size() + 3 * selection.size()) * C);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Token& t = tokens.token(i);
    const auto v = tokens.values(i);
    const std::size_t p = t.patch(tokens.base_width());
    if (!selected[p]) {
      out_tokens.push_back(t);
      out_values.insert(out_values.end(), v.begin(), v.end());
      continue;
    }
    if (t.level == Level::High) {
      throw ContractError("upsample_selected: patch " + std::to_string(p) + " is already HIGH");
    }
    for (std::uint32_t k = 0; k < 4; ++k) {
      out_tokens.push_back({2 * t.row + k / 2, 2 * t.col + k % 2, Level::High});
      out_values.insert(out_values.end(), v.begin(), v.end());
    }
  }
  return TokenSet(tokens.base_height(), tokens.base_width(), C, std::move(out_tokens),
                  std::move(out_values));
}

BlockCovariance::BlockCovariance(std::vector<std::uint32_t> group_of, std::size_t groups)
    : group_of_(std::move(group_of)), groups_(groups) {
  std::vector<std::size_t> members(groups_, 0);
  for (std::uint32_t g : group_of_) {
    if (g >= groups_) throw ShapeError("BlockCovariance: group id out of range");
    members[g]++;
  }
  for (std::size_t m : members) {
    if (m != kBlockSize) throw ShapeError("BlockCovariance: every sibling block needs four members");
  }
}

BlockCovariance BlockCovariance::for_grid(std::size_t high_height, std::size_t high_width,
                                          std::size_t channels) {
  if (high_height % 2 != 0 || high_width % 2 != 0) {
    throw ShapeError("BlockCovariance::for_grid: HIGH grid must have even dimensions");
  }
  const std::size_t bw = high_width / 2;
  const std::size_t per_channel = (high_height / 2) * bw;
  std::vector<std::uint32_t> group_of(high_height * high_width * channels);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    for (std::size_t r = 0; r < high_height; ++r) {
      for (std::size_t c = 0; c < high_width; ++c) {
        group_of[(ch * high_height + r) * high_width + c] =
            static_cast<std::uint32_t>(ch * per_channel + (r / 2) * bw + c / 2);
      }
    }
  }
  return BlockCovariance(std::move(group_of), per_channel * channels);
}

BlockCovariance BlockCovariance::contiguous(std::size_t length) {
  if (length % kBlockSize != 0) throw ShapeError("BlockCovariance::contiguous: length not divisible by 4");
  std::vector<std::uint32_t> group_of(length);
  for (std::size_t i = 0; i < length; ++i) group_of[i] = static_cast<std::uint32_t>(i / kBlockSize);
  return BlockCovariance(std::move(group_of), length / kBlockSize);
}

BlockCovariance BlockCovariance::from_groups(std::vector<std::uint32_t> group_of, std::size_t groups) {
  return BlockCovariance(std::move(group_of), groups);
}

std::vector<double> block_sums(std::span<const double> x, const BlockCovariance& cov) {
  if (x.size() != cov.size()) {
    throw ShapeError("apply_sigma: vector length " + std::to_string(x.size()) +
                     " does not match block layout of " + std::to_string(cov.size()));
  }
  std::vector<double> sums(cov.groups(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) sums[cov.group(i)] += x[i];
  return sums;
}

std::vector<double> apply_sigma(std::span<const double> x, const BlockCovariance& cov) {
  const std::vector<double> sums = block_sums(x, cov);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = sums[cov.group(i)];
  return out;
}

}  // namespace ralu
