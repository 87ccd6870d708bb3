#pragma once

#include <optional>
#include <span>

namespace panelreg {

/// Fit statistics for one evaluation set. `r_squared` is absent where the
/// reporting convention suppresses it (the mean-only baseline).
struct MetricTriple {
  std::optional<double> r_squared;
  double rmse = 0.0;
  double mae = 0.0;
};

double mae(std::span<const double> y, std::span<const double> yhat);
double rmse(std::span<const double> y, std::span<const double> yhat);

/// 1 - SSE / SST, with the baseline mean taken over `y` itself.
double r_squared(std::span<const double> y, std::span<const double> yhat);

/// Sample Pearson correlation, clamped to [-1, 1].
double pearson(std::span<const double> x, std::span<const double> y);

/// Inverse of the standard normal CDF (Wichura's AS241, ~1e-16 relative error).
double normal_quantile(double p);
double normal_pdf(double x);

MetricTriple score(std::span<const double> y, std::span<const double> yhat);

}  // namespace panelreg
