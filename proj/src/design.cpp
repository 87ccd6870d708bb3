#include "panelreg/design.hpp"

#include <algorithm>
#include <unordered_set>

#include <fmt/format.h>

#include "panelreg/dataset.hpp"
#include "panelreg/error.hpp"

namespace panelreg {

std::vector<double> Matrix::column(std::size_t j) const {
  std::vector<double> out(rows);
  for (std::size_t i = 0; i < rows; ++i) out[i] = (*this)(i, j);
  return out;
}

DesignMatrix::DesignMatrix(std::vector<std::string> feature_names, Matrix features, std::vector<double> response)
    : feature_names_(std::move(feature_names)), features_(std::move(features)), response_(std::move(response)) {
  if (feature_names_.size() != features_.cols) throw InputError("feature name count does not match matrix width");
  if (response_.size() != features_.rows) throw InputError("response length does not match matrix height");
  if (features_.rows < 2) throw InputError("design matrix needs at least 2 rows");
  std::unordered_set<std::string> seen;
  for (const auto& name : feature_names_) {
    if (!seen.insert(name).second) throw InputError(fmt::format("duplicate feature name '{}'", name));
  }
  auto bad = [](double v) { return is_missing(v) || !std::isfinite(v); };
  if (std::any_of(features_.data.begin(), features_.data.end(), bad) ||
      std::any_of(response_.begin(), response_.end(), bad)) {
    throw InputError("design matrix contains missing or non-finite values");
  }
}

DesignMatrix DesignMatrix::from_dataset(const Dataset& d) {
  auto responses = d.names_of_kind(ColumnKind::kResponse);
  if (responses.size() != 1) {
    throw InputError(fmt::format("expected exactly one response column, found {}", responses.size()));
  }
  auto names = d.feature_names();
  Matrix x(d.n_rows(), names.size());
  for (std::size_t j = 0; j < names.size(); ++j) {
    auto col = d.values(names[j]);
    for (std::size_t i = 0; i < d.n_rows(); ++i) x(i, j) = col[i];
  }
  auto y = d.values(responses.front());
  return DesignMatrix(std::move(names), std::move(x), std::vector<double>(y.begin(), y.end()));
}

std::size_t DesignMatrix::feature_index(const std::string& name) const {
  auto it = std::find(feature_names_.begin(), feature_names_.end(), name);
  if (it == feature_names_.end()) throw InputError(fmt::format("unknown feature '{}'", name));
  return static_cast<std::size_t>(it - feature_names_.begin());
}

DesignMatrix DesignMatrix::subset(std::span<const std::size_t> rows) const {
  Matrix x(rows.size(), n_features());
  std::vector<double> y(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    auto src = features_.row(rows[k]);
    std::copy(src.begin(), src.end(), x.row(k).begin());
    y[k] = response_.at(rows[k]);
  }
  return DesignMatrix(feature_names_, std::move(x), std::move(y));
}

}  // namespace panelreg
