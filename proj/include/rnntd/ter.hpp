#pragma once

#include <cstddef>
#include <span>

namespace rnntd {

// Levenshtein distance with unit substitution, insertion and deletion costs.
std::size_t edit_distance(std::span<const int> reference, std::span<const int> hypothesis);

struct TerStats {
  std::size_t errors = 0;
  std::size_t reference_tokens = 0;

  void add(std::span<const int> reference, std::span<const int> hypothesis);
  // errors / reference_tokens; 0 for an empty reference set.
  double rate() const;
};

}  // namespace rnntd
