#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "panelreg/design.hpp"
#include "panelreg/models.hpp"

namespace panelreg {

struct ImportanceEntry {
  std::string feature;
  double proportion = 0.0;
};

struct ImportanceRanking {
  std::string model_id;
  std::vector<ImportanceEntry> entries;  // descending; ties by feature name
};

/// Variable inclusion proportion: share of all internal split nodes, across
/// every tree of the model, that test each feature. Unused features appear
/// with proportion 0. Throws ModelError if the model has no splits or no trees.
ImportanceRanking variable_importance(const FittedModel& m, std::string model_id = "model");

/// Prefix of the ranking with min(k, size) entries.
ImportanceRanking top_k(const ImportanceRanking& r, std::size_t k = 15);

struct PDPCurve {
  std::string feature;
  std::vector<double> grid;
  std::vector<double> mean_effect;
  std::vector<double> band_low;
  std::vector<double> band_high;
  /// Whether the band comes from per-tree dispersion (forests only). For other
  /// models the band collapses onto the mean.
  bool has_band = false;
  std::vector<double> rug;
};

/// Quantile grid over the feature's observed values: percentiles 0, 100/(g-1),
/// ..., 100, deduplicated. Uses the unique values directly when there are at
/// most `grid_size` of them.
std::vector<double> quantile_grid(std::span<const double> values, std::size_t grid_size);

/// Average prediction over all rows of `d` with `feature` overwritten by each
/// grid value. For forests the band is the 2.5/97.5 percentile of the per-tree
/// curves, widened if needed to contain the mean.
PDPCurve partial_dependence(const FittedModel& m, const DesignMatrix& d, const std::string& feature,
                            std::size_t grid_size = 51, std::size_t threads = 1);

struct QQDiagnostic {
  std::vector<double> theoretical;
  std::vector<double> sample;
  std::vector<double> band_low;
  std::vector<double> band_high;

  /// Fraction of points with band_low <= sample <= band_high.
  double fraction_inside() const;
};

/// Normal Q-Q data for residuals y - yhat, standardized with their mean and
/// sample standard deviation. Plotting positions (i - 0.5) / n; band
/// q +/- 1.96 * sqrt(p (1 - p) / n) / phi(q).
QQDiagnostic qq_residuals(std::span<const double> y, std::span<const double> yhat);
/// Same, for a residual vector.
QQDiagnostic qq_from_residuals(std::span<const double> residuals);

struct ActualVsFitted {
  double pearson_rho = 0.0;
  std::vector<std::pair<double, double>> pairs;  // (actual, fitted)
};

ActualVsFitted actual_vs_fitted(std::span<const double> y, std::span<const double> yhat);

void write_importance_csv(const ImportanceRanking& r, std::ostream& out);
void write_pdp_csv(const PDPCurve& c, std::ostream& out);
void write_qq_csv(const QQDiagnostic& q, std::ostream& out);
void write_actual_vs_fitted_csv(const ActualVsFitted& a, std::ostream& out);

}  // namespace panelreg
