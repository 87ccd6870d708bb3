#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "panelreg/design.hpp"
#include "panelreg/rng.hpp"

namespace panelreg {

/// Flat binary-tree node. Internal nodes route x[feature] <= threshold to
/// `left`; every node keeps the mean training response of its samples.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;
  std::size_t n_samples = 0;

  bool is_leaf() const { return feature < 0; }
};

class Tree {
 public:
  Tree() = default;
  explicit Tree(std::vector<TreeNode> nodes);

  double predict(std::span<const double> x) const;
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::size_t internal_count() const;
  std::size_t depth() const;

 private:
  std::vector<TreeNode> nodes_;
};

struct TreeParams {
  /// Minimum samples per leaf; nodes with fewer than 2 * n_min samples stay leaves.
  std::size_t n_min = 5;
  /// Features drawn per node; 0 means all of them.
  std::size_t m_try = 0;
  /// 0 means unlimited.
  std::size_t max_depth = 0;
};

/// Presorted column-major copy of a feature matrix, reusable across many
/// trees grown on the same rows (bootstrap replicates, boosting stages).
class TreeGrower {
 public:
  explicit TreeGrower(const Matrix& x);

  /// Grows a tree on `y`. `multiplicity[r]` is how many times row r enters the
  /// sample (bootstrap counts); empty means every row once.
  Tree grow(std::span<const double> y, std::span<const std::uint32_t> multiplicity, const TreeParams& params,
            Rng& rng) const;

  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_features() const { return n_features_; }

 private:
  std::size_t n_rows_;
  std::size_t n_features_;
  std::vector<double> columns_;          // n_features x n_rows
  std::vector<std::uint32_t> sorted_;    // per feature: rows by ascending value
};

/// CART regression tree: at every node draw m_try features without
/// replacement and take the (feature, midpoint threshold) pair with the
/// smallest total child SSE. Ties go to the lower feature index, then the lower
/// threshold.
Tree fit_tree(const DesignMatrix& d, const TreeParams& params, std::uint64_t seed);

}  // namespace panelreg
