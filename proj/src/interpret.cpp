#include "panelreg/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

#include <fmt/format.h>

#include "panelreg/error.hpp"
#include "panelreg/metrics.hpp"
#include "panelreg/parallel.hpp"

namespace panelreg {

namespace {

// Linear-interpolation quantile of sorted data (type 7).
double sorted_quantile(std::span<const double> sorted, double prob) {
  if (sorted.size() == 1) return sorted.front();
  double pos = prob * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::string fixed6(double v) { return fmt::format("{:.6f}", v); }

}  // namespace

ImportanceRanking variable_importance(const FittedModel& m, std::string model_id) {
  auto trees = m.trees();
  if (trees.empty()) throw ModelError("variable importance needs a tree-based model");
  const auto& names = m.feature_names();
  std::vector<std::size_t> counts(names.size(), 0);
  std::size_t total = 0;
  for (const Tree* t : trees) {
    for (const auto& node : t->nodes()) {
      if (node.is_leaf()) continue;
      ++counts[static_cast<std::size_t>(node.feature)];
      ++total;
    }
  }
  if (total == 0) throw ModelError("no splits to rank");

  ImportanceRanking ranking;
  ranking.model_id = std::move(model_id);
  for (std::size_t j = 0; j < names.size(); ++j) {
    ranking.entries.push_back({names[j], static_cast<double>(counts[j]) / static_cast<double>(total)});
  }
  std::sort(ranking.entries.begin(), ranking.entries.end(), [](const ImportanceEntry& a, const ImportanceEntry& b) {
    if (a.proportion != b.proportion) return a.proportion > b.proportion;
    return a.feature < b.feature;
  });
  return ranking;
}

ImportanceRanking top_k(const ImportanceRanking& r, std::size_t k) {
  if (k < 1) throw InputError("top_k needs k >= 1");
  ImportanceRanking out;
  out.model_id = r.model_id;
  out.entries.assign(r.entries.begin(), r.entries.begin() + static_cast<std::ptrdiff_t>(std::min(k, r.entries.size())));
  return out;
}

std::vector<double> quantile_grid(std::span<const double> values, std::size_t grid_size) {
  if (values.empty()) throw InputError("cannot build a grid from no values");
  if (grid_size < 2) throw InputError("grid needs at least 2 points");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> unique = sorted;
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  if (unique.size() <= grid_size) return unique;

  std::vector<double> grid;
  grid.reserve(grid_size);
  for (std::size_t g = 0; g < grid_size; ++g) {
    double prob = static_cast<double>(g) / static_cast<double>(grid_size - 1);
    grid.push_back(g + 1 == grid_size ? sorted.back() : sorted_quantile(sorted, prob));
  }
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

PDPCurve partial_dependence(const FittedModel& m, const DesignMatrix& d, const std::string& feature,
                            std::size_t grid_size, std::size_t threads) {
  if (d.feature_names() != m.feature_names()) throw InputError("model and data have different feature schemas");
  const std::size_t j = d.feature_index(feature);
  const Matrix& x = d.features();
  std::vector<double> column = x.column(j);

  PDPCurve curve;
  curve.feature = feature;
  curve.grid = quantile_grid(column, grid_size);
  if (curve.grid.size() < 2) throw InputError(fmt::format("feature '{}' is constant; no grid to vary over", feature));
  curve.rug = column;
  std::sort(curve.rug.begin(), curve.rug.end());

  const std::size_t n = d.n_rows(), g_count = curve.grid.size();
  const auto* forest = m.as<ForestModel>();
  curve.has_band = forest != nullptr;
  curve.mean_effect.assign(g_count, 0.0);
  curve.band_low.assign(g_count, 0.0);
  curve.band_high.assign(g_count, 0.0);

  parallel_for(g_count, threads, [&](std::size_t g) {
    std::vector<double> row(x.cols);
    if (forest) {
      const std::size_t b_count = forest->trees.size();
      std::vector<double> per_tree(b_count, 0.0);
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        auto src = x.row(i);
        std::copy(src.begin(), src.end(), row.begin());
        row[j] = curve.grid[g];
        // Same summation order as FittedModel::predict_row.
        double sum = 0.0;
        for (std::size_t b = 0; b < b_count; ++b) {
          double p = forest->trees[b].predict(row);
          per_tree[b] += p;
          sum += p;
        }
        total += sum / static_cast<double>(b_count);
      }
      double mean = total / static_cast<double>(n);
      for (double& v : per_tree) v /= static_cast<double>(n);
      std::sort(per_tree.begin(), per_tree.end());
      curve.mean_effect[g] = mean;
      curve.band_low[g] = std::min(sorted_quantile(per_tree, 0.025), mean);
      curve.band_high[g] = std::max(sorted_quantile(per_tree, 0.975), mean);
    } else {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        auto src = x.row(i);
        std::copy(src.begin(), src.end(), row.begin());
        row[j] = curve.grid[g];
        total += m.predict_row(row);
      }
      double mean = total / static_cast<double>(n);
      curve.mean_effect[g] = curve.band_low[g] = curve.band_high[g] = mean;
    }
  });
  return curve;
}

double QQDiagnostic::fraction_inside() const {
  if (sample.empty()) return 0.0;
  std::size_t inside = 0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    if (sample[i] >= band_low[i] && sample[i] <= band_high[i]) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(sample.size());
}

QQDiagnostic qq_from_residuals(std::span<const double> residuals) {
  const std::size_t n = residuals.size();
  if (n < 10) throw InputError(fmt::format("Q-Q diagnostics need at least 10 residuals, got {}", n));
  double mean = 0.0;
  for (double r : residuals) mean += r;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double r : residuals) ss += (r - mean) * (r - mean);
  double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) throw InputError("Q-Q diagnostics: residuals have zero variance");

  QQDiagnostic qq;
  qq.sample.reserve(n);
  for (double r : residuals) qq.sample.push_back((r - mean) / sd);
  std::sort(qq.sample.begin(), qq.sample.end());
  for (std::size_t i = 0; i < n; ++i) {
    double p = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    double q = normal_quantile(p);
    double half = 1.96 * std::sqrt(p * (1.0 - p) / static_cast<double>(n)) / normal_pdf(q);
    qq.theoretical.push_back(q);
    qq.band_low.push_back(q - half);
    qq.band_high.push_back(q + half);
  }
  return qq;
}

QQDiagnostic qq_residuals(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw InputError("qq_residuals: length mismatch");
  std::vector<double> residuals(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) residuals[i] = y[i] - yhat[i];
  return qq_from_residuals(residuals);
}

ActualVsFitted actual_vs_fitted(std::span<const double> y, std::span<const double> yhat) {
  ActualVsFitted out;
  out.pearson_rho = pearson(y, yhat);
  out.pairs.reserve(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out.pairs.emplace_back(y[i], yhat[i]);
  return out;
}

void write_importance_csv(const ImportanceRanking& r, std::ostream& out) {
  out << "rank,feature,proportion\n";
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    out << i + 1 << ',' << r.entries[i].feature << ',' << fixed6(r.entries[i].proportion) << '\n';
  }
}

void write_pdp_csv(const PDPCurve& c, std::ostream& out) {
  out << "grid,mean,lo,hi\n";
  for (std::size_t g = 0; g < c.grid.size(); ++g) {
    out << fixed6(c.grid[g]) << ',' << fixed6(c.mean_effect[g]) << ',' << fixed6(c.band_low[g]) << ','
        << fixed6(c.band_high[g]) << '\n';
  }
}

void write_qq_csv(const QQDiagnostic& q, std::ostream& out) {
  out << "theoretical,sample,lo,hi\n";
  for (std::size_t i = 0; i < q.sample.size(); ++i) {
    out << fixed6(q.theoretical[i]) << ',' << fixed6(q.sample[i]) << ',' << fixed6(q.band_low[i]) << ','
        << fixed6(q.band_high[i]) << '\n';
  }
}

void write_actual_vs_fitted_csv(const ActualVsFitted& a, std::ostream& out) {
  out << "actual,fitted\n";
  for (const auto& [actual, fitted] : a.pairs) out << fixed6(actual) << ',' << fixed6(fitted) << '\n';
}

}  // namespace panelreg
