#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace panelreg {

/// Repeated randomized holdout: `iteration_count` independent test sets of
/// round(test_fraction * n_rows) rows each.
struct SplitPlan {
  std::size_t iteration_count = 0;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  std::size_t n_rows = 0;
  /// Sorted ascending within each iteration.
  std::vector<std::vector<std::size_t>> test_index_sets;
  /// True when every row lands in at least one test set. Only false when
  /// iteration_count * test size < n_rows, where full coverage is impossible.
  bool covers_all = false;

  std::vector<std::size_t> train_indices(std::size_t iteration) const;
};

/// Builds a seeded plan. After the random draws, rows never drawn are swapped
/// into test sets (last iteration first), each evicting the most-covered row
/// whose coverage stays at least one after the swap.
SplitPlan make_split_plan(std::size_t n_rows, std::size_t iterations = 30, double test_fraction = 0.2,
                          std::uint64_t seed = 0);

}  // namespace panelreg
