#include "panelreg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "panelreg/error.hpp"

namespace panelreg {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b, std::size_t min_len) {
  if (a.size() != b.size()) throw InputError(fmt::format("length mismatch: {} vs {}", a.size(), b.size()));
  if (a.size() < min_len) throw InputError(fmt::format("need at least {} values, got {}", min_len, a.size()));
}

double mean_of(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

}  // namespace

double mae(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat, 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) sum += std::abs(y[i] - yhat[i]);
  return sum / static_cast<double>(y.size());
}

double rmse(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat, 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double e = y[i] - yhat[i];
    sum += e * e;
  }
  return std::sqrt(sum / static_cast<double>(y.size()));
}

double r_squared(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat, 2);
  double ybar = mean_of(y);
  double sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double e = y[i] - yhat[i];
    double d = y[i] - ybar;
    sse += e * e;
    sst += d * d;
  }
  if (sst <= 0.0) throw InputError("r_squared: observed values have zero variance");
  return 1.0 - sse / sst;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 2);
  double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw InputError("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InputError(fmt::format("normal_quantile: p={} outside (0,1)", p));

  double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    double r = 0.180625 - q * q;
    return q *
           (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r + 67265.770927008700853) * r +
                45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((r * 5226.495278852545925 + 28729.085735721942674) * r + 39307.89580009271061) * r +
                21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }

  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double x;
  if (r <= 5.0) {
    r -= 1.6;
    x = (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
             1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
          4.6303378461565452959) * r + 1.42343711074968357734) /
        (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
             0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
          2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    x = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
             0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
          5.4637849111641143699) * r + 6.6579046435011037772) /
        (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
             7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
          0.59983220655588793769) * r + 1.0);
  }
  return q < 0.0 ? -x : x;
}

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

MetricTriple score(std::span<const double> y, std::span<const double> yhat) {
  return MetricTriple{r_squared(y, yhat), rmse(y, yhat), mae(y, yhat)};
}

}  // namespace panelreg
