#include "ppgn/split.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ppgn/diagnostics.hpp"
#include "ppgn/tensor.hpp"

namespace ppgn {

Split stratified_split(std::span<const std::size_t> labels, double beta, std::uint64_t seed) {
  if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("label rate must lie in (0, 1]");
  if (labels.empty()) throw ConfigError("stratified_split: no samples");
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  Rng rng(seed);
  std::vector<bool> chosen(labels.size(), false);
  for (auto& [cls, members] : by_class) {
    const auto want = static_cast<std::size_t>(std::floor(beta * static_cast<double>(members.size()) + 0.5));
    const std::size_t take = std::clamp<std::size_t>(want, 1, members.size());
    shuffle_indices(members, rng);
    for (std::size_t i = 0; i < take; ++i) chosen[members[i]] = true;
  }
  Split s;
  for (std::size_t i = 0; i < labels.size(); ++i) (chosen[i] ? s.labeled : s.unlabeled).push_back(i);
  return s;
}

}  // namespace ppgn
