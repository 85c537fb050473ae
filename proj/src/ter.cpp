#include "rnntd/ter.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace rnntd {

std::size_t edit_distance(std::span<const int> ref, std::span<const int> hyp) {
  std::vector<std::size_t> prev(hyp.size() + 1);
  std::vector<std::size_t> cur(hyp.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= hyp.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

void TerStats::add(std::span<const int> reference, std::span<const int> hypothesis) {
  errors += edit_distance(reference, hypothesis);
  reference_tokens += reference.size();
}

double TerStats::rate() const {
  return reference_tokens == 0 ? 0.0
                               : static_cast<double>(errors) / static_cast<double>(reference_tokens);
}

}  // namespace rnntd
