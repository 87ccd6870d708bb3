#include "panelreg/split.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "panelreg/error.hpp"
#include "panelreg/rng.hpp"

namespace panelreg {

std::vector<std::size_t> SplitPlan::train_indices(std::size_t iteration) const {
  const auto& test = test_index_sets.at(iteration);
  std::vector<std::size_t> train;
  train.reserve(n_rows - test.size());
  std::size_t t = 0;
  for (std::size_t r = 0; r < n_rows; ++r) {
    if (t < test.size() && test[t] == r) {
      ++t;
    } else {
      train.push_back(r);
    }
  }
  return train;
}

SplitPlan make_split_plan(std::size_t n_rows, std::size_t iterations, double test_fraction, std::uint64_t seed) {
  if (n_rows < 5) throw InputError(fmt::format("split plan needs at least 5 rows, got {}", n_rows));
  if (iterations == 0) throw InputError("split plan needs at least one iteration");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw InputError(fmt::format("test fraction {} outside (0,1)", test_fraction));
  }
  auto test_size = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n_rows)));
  if (test_size == 0 || test_size >= n_rows) {
    throw InputError(fmt::format("test fraction {} of {} rows leaves an empty train or test set", test_fraction, n_rows));
  }

  SplitPlan plan;
  plan.iteration_count = iterations;
  plan.test_fraction = test_fraction;
  plan.seed = seed;
  plan.n_rows = n_rows;

  std::vector<std::size_t> coverage(n_rows, 0);
  std::vector<std::size_t> perm(n_rows);
  for (std::size_t it = 0; it < iterations; ++it) {
    Rng rng(mix64(seed, it));
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    // Partial Fisher-Yates: the first test_size slots are a uniform sample.
    for (std::size_t i = 0; i < test_size; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n_rows - 1);
      std::swap(perm[i], perm[pick(rng)]);
    }
    std::vector<std::size_t> test(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(test_size));
    for (std::size_t r : test) ++coverage[r];
    plan.test_index_sets.push_back(std::move(test));
  }

  plan.covers_all = iterations * test_size >= n_rows;
  if (plan.covers_all) {
    for (std::size_t row = 0; row < n_rows; ++row) {
      if (coverage[row] > 0) continue;
      bool placed = false;
      for (std::size_t it = iterations; it-- > 0 && !placed;) {
        auto& test = plan.test_index_sets[it];
        auto victim = test.end();
        for (auto p = test.begin(); p != test.end(); ++p) {
          if (coverage[*p] >= 2 && (victim == test.end() || coverage[*p] > coverage[*victim])) victim = p;
        }
        if (victim == test.end()) continue;
        --coverage[*victim];
        *victim = row;
        ++coverage[row];
        placed = true;
      }
      if (!placed) plan.covers_all = false;
    }
  }
  for (auto& test : plan.test_index_sets) std::sort(test.begin(), test.end());
  return plan;
}

}  // namespace panelreg
