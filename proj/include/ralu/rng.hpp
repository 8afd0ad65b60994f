#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace ralu {

/// Derives an independent 64-bit seed for a named sub-stream ("init",
/// "noise", "verify", ...) of a run seed. Pure and platform independent.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0);

/// Standard normal variates from mt19937_64 through the polar-free Box-Muller
/// transform. The transform is written out here instead of using
/// std::normal_distribution so the bit stream is identical across standard
/// libraries.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

  double operator()();
  void fill(std::span<double> out);

 private:
  double uniform_open();

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ralu
