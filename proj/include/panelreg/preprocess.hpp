#pragma once

#include <string>
#include <string_view>
#include <utility>

#include "panelreg/dataset.hpp"

namespace panelreg {

/// Inner join on (county, year, month). A right table without a month key is
/// treated as annual and its values are replicated across each county-year's
/// months. Output rows follow the left table's order.
Dataset join_on_keys(const Dataset& left, const Dataset& right);

/// Adds a response column holding count / population * per and removes the
/// count and population columns.
Dataset normalize_rate(const Dataset& d, double per = 100000.0, std::string response_name = "rate");

/// Removes feature columns whose missing fraction is strictly above
/// `max_missing_frac`, then fills the remaining gaps with the column median
/// (lower median for binary features, so they stay 0/1).
Dataset drop_sparse_columns(const Dataset& d, double max_missing_frac = 0.20);

/// Drops zero-variance features, then scans features in schema order and
/// removes each one whose |Pearson rho| with an already retained feature is at
/// least `threshold`. The earlier column of a correlated pair is kept.
Dataset prune_correlated(const Dataset& d, double threshold = 0.9);

/// Splits on the binary urbanization column: first = rows flagged 1 (large
/// central metro), second = rows flagged 0 (medium/small metro). The column
/// itself is removed from both halves.
std::pair<Dataset, Dataset> partition_by_urbanization(const Dataset& d, std::string_view column = "urbanization");

}  // namespace panelreg
