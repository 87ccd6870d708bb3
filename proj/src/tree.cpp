#include "panelreg/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "panelreg/error.hpp"

namespace panelreg {

Tree::Tree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw ModelError("tree has no nodes");
}

double Tree::predict(std::span<const double> x) const {
  std::int32_t i = 0;
  while (!nodes_[static_cast<std::size_t>(i)].is_leaf()) {
    const TreeNode& node = nodes_[static_cast<std::size_t>(i)];
    i = x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
  }
  return nodes_[static_cast<std::size_t>(i)].value;
}

std::size_t Tree::internal_count() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return !n.is_leaf(); }));
}

std::size_t Tree::depth() const {
  std::vector<std::size_t> level(nodes_.size(), 0);
  std::size_t deepest = 0;
  // Children are always stored after their parent.
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (!nodes_[i].is_leaf()) {
      level[static_cast<std::size_t>(nodes_[i].left)] = level[i] + 1;
      level[static_cast<std::size_t>(nodes_[i].right)] = level[i] + 1;
    }
  }
  return deepest;
}

TreeGrower::TreeGrower(const Matrix& x)
    : n_rows_(x.rows), n_features_(x.cols), columns_(x.rows * x.cols), sorted_(x.rows * x.cols) {
  for (std::size_t f = 0; f < n_features_; ++f) {
    double* col = columns_.data() + f * n_rows_;
    for (std::size_t r = 0; r < n_rows_; ++r) col[r] = x(r, f);
    auto first = sorted_.begin() + static_cast<std::ptrdiff_t>(f * n_rows_);
    std::iota(first, first + static_cast<std::ptrdiff_t>(n_rows_), 0U);
    std::stable_sort(first, first + static_cast<std::ptrdiff_t>(n_rows_),
                     [col](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
  }
}

namespace {

// Working state of one tree growth. Sample positions index the (possibly
// duplicated) bootstrap sample; every feature keeps its own ordering of the
// positions, and each node owns the same [begin, end) range in all of them.
class Growth {
 public:
  Growth(std::size_t n_features, std::size_t n_samples, const TreeParams& params, Rng& rng)
      : m_(n_features), n_(n_samples), params_(params), rng_(rng), pool_(n_features), mark_(n_samples),
        scratch_(n_samples) {
    std::iota(pool_.begin(), pool_.end(), std::size_t{0});
  }

  std::vector<double> x;             // m_ x n_, by position
  std::vector<double> y;             // by position
  std::vector<std::uint32_t> order;  // m_ x n_

  std::vector<TreeNode> run() {
    build(0, n_, 0);
    return std::move(nodes_);
  }

 private:
  std::uint32_t* order_of(std::size_t f) { return order.data() + f * n_; }

  std::int32_t build(std::size_t begin, std::size_t end, std::size_t depth) {
    const std::size_t count = end - begin;
    const std::uint32_t* rows = order_of(0);
    double sum = 0.0, lo = y[rows[begin]], hi = lo;
    for (std::size_t k = begin; k < end; ++k) {
      double v = y[rows[k]];
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double mean = sum / static_cast<double>(count);

    auto index = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(TreeNode{-1, 0.0, -1, -1, mean, count});

    bool too_small = count < 2 * params_.n_min;
    bool too_deep = params_.max_depth > 0 && depth >= params_.max_depth;
    if (too_small || too_deep || lo == hi) return index;

    double sse = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
      double d = y[rows[k]] - mean;
      sse += d * d;
    }

    const std::size_t m_try = (params_.m_try == 0 || params_.m_try >= m_) ? m_ : params_.m_try;
    std::vector<std::size_t> candidates;
    if (m_try == m_) {
      candidates = pool_;
      std::sort(candidates.begin(), candidates.end());
    } else {
      for (std::size_t i = 0; i < m_try; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, m_ - 1);
        std::swap(pool_[i], pool_[pick(rng_)]);
      }
      candidates.assign(pool_.begin(), pool_.begin() + static_cast<std::ptrdiff_t>(m_try));
      std::sort(candidates.begin(), candidates.end());
    }

    // Child SSE = parent SSE - gain, gain = sL^2 * n / (nL * nR) with sL the
    // centered left sum.
    const double n_total = static_cast<double>(count);
    // Identical partitions reached through different features can differ in
    // the last bits; anything within this margin counts as a tie.
    const double tie_margin = 1e-12 * sse;
    double best_gain = 0.0;
    std::size_t best_feature = 0, best_left = 0;
    double best_threshold = 0.0;
    bool found = false;
    for (std::size_t f : candidates) {
      const std::uint32_t* ord = order_of(f);
      const double* xf = x.data() + f * n_;
      double left_sum = 0.0;
      for (std::size_t k = begin; k + 1 < end; ++k) {
        left_sum += y[ord[k]] - mean;
        std::size_t n_left = k + 1 - begin;
        std::size_t n_right = count - n_left;
        if (n_right < params_.n_min) break;
        double here = xf[ord[k]], next = xf[ord[k + 1]];
        if (n_left < params_.n_min || here == next) continue;
        double gain = left_sum * left_sum * n_total / (static_cast<double>(n_left) * static_cast<double>(n_right));
        if (!found || gain > best_gain + tie_margin) {
          found = true;
          best_gain = gain;
          best_feature = f;
          best_left = n_left;
          double mid = here + (next - here) / 2.0;
          best_threshold = mid < next ? mid : here;
        }
      }
    }
    if (!found || !(best_gain > 1e-12 * sse)) return index;

    const std::uint32_t* chosen = order_of(best_feature);
    for (std::size_t k = begin; k < end; ++k) mark_[chosen[k]] = (k - begin) < best_left;
    for (std::size_t f = 0; f < m_; ++f) {
      if (f == best_feature) continue;
      std::uint32_t* ord = order_of(f);
      std::size_t l = begin, r = 0;
      for (std::size_t k = begin; k < end; ++k) {
        if (mark_[ord[k]]) {
          ord[l++] = ord[k];
        } else {
          scratch_[r++] = ord[k];
        }
      }
      std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(r), ord + l);
    }

    nodes_[static_cast<std::size_t>(index)].feature = static_cast<int>(best_feature);
    nodes_[static_cast<std::size_t>(index)].threshold = best_threshold;
    std::int32_t left = build(begin, begin + best_left, depth + 1);
    std::int32_t right = build(begin + best_left, end, depth + 1);
    nodes_[static_cast<std::size_t>(index)].left = left;
    nodes_[static_cast<std::size_t>(index)].right = right;
    return index;
  }

  std::size_t m_;
  std::size_t n_;
  const TreeParams& params_;
  Rng& rng_;
  std::vector<std::size_t> pool_;
  std::vector<char> mark_;
  std::vector<std::uint32_t> scratch_;
  std::vector<TreeNode> nodes_;
};

}  // namespace

Tree TreeGrower::grow(std::span<const double> y, std::span<const std::uint32_t> multiplicity, const TreeParams& params,
                      Rng& rng) const {
  if (y.size() != n_rows_) throw ModelError("response length does not match the presorted matrix");
  if (!multiplicity.empty() && multiplicity.size() != n_rows_) throw ModelError("multiplicity length mismatch");
  if (params.n_min < 1) throw ModelError("n_min must be at least 1");
  if (params.m_try > n_features_) {
    throw ModelError(fmt::format("m_try={} exceeds feature count {}", params.m_try, n_features_));
  }

  auto copies = [&](std::size_t r) -> std::size_t { return multiplicity.empty() ? 1 : multiplicity[r]; };
  std::vector<std::uint32_t> first_pos(n_rows_ + 1, 0);
  for (std::size_t r = 0; r < n_rows_; ++r) first_pos[r + 1] = first_pos[r] + static_cast<std::uint32_t>(copies(r));
  const std::size_t n = first_pos[n_rows_];
  if (n == 0) throw ModelError("cannot grow a tree on an empty sample");

  Growth g(n_features_, n, params, rng);
  g.y.resize(n);
  g.x.resize(n_features_ * n);
  g.order.resize(n_features_ * n);
  for (std::size_t r = 0; r < n_rows_; ++r) {
    for (std::uint32_t p = first_pos[r]; p < first_pos[r + 1]; ++p) {
      g.y[p] = y[r];
      for (std::size_t f = 0; f < n_features_; ++f) g.x[f * n + p] = columns_[f * n_rows_ + r];
    }
  }
  for (std::size_t f = 0; f < n_features_; ++f) {
    const std::uint32_t* sorted = sorted_.data() + f * n_rows_;
    std::uint32_t* out = g.order.data() + f * n;
    std::size_t k = 0;
    for (std::size_t i = 0; i < n_rows_; ++i) {
      std::uint32_t r = sorted[i];
      for (std::uint32_t p = first_pos[r]; p < first_pos[r + 1]; ++p) out[k++] = p;
    }
  }
  return Tree(g.run());
}

Tree fit_tree(const DesignMatrix& d, const TreeParams& params, std::uint64_t seed) {
  if (params.m_try > d.n_features()) {
    throw ModelError(fmt::format("m_try={} exceeds feature count {}", params.m_try, d.n_features()));
  }
  TreeGrower grower(d.features());
  Rng rng(seed);
  return grower.grow(d.response(), {}, params, rng);
}

}  // namespace panelreg
