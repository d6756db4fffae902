#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ppgn {

struct Split {
  std::vector<std::size_t> labeled;    // ascending sample indices
  std::vector<std::size_t> unlabeled;  // ascending sample indices
};

/// Per class, round-half-up(beta * count) samples (at least 1) are labeled,
/// drawn uniformly with the seeded generator.
Split stratified_split(std::span<const std::size_t> labels, double beta, std::uint64_t seed);

}  // namespace ppgn
