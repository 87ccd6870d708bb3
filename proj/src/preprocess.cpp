#include "panelreg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <fmt/format.h>

#include "panelreg/error.hpp"
#include "panelreg/metrics.hpp"

namespace panelreg {

namespace {

void require_key(const Dataset& d, std::string_view key, std::string_view role) {
  if (!d.has_column(key) || d.spec(key).kind != ColumnKind::kKey) {
    throw InputError(fmt::format("{} table lacks key column '{}'", role, key));
  }
}

std::string key_of(const Dataset& d, std::size_t row, bool with_month) {
  std::string key = d.labels(kCountyKey)[row];
  key += '\x1f';
  key += format_number(d.values(kYearKey)[row]);
  if (with_month) {
    key += '\x1f';
    key += format_number(d.values(kMonthKey)[row]);
  }
  return key;
}

std::string single_column(const Dataset& d, ColumnKind kind) {
  auto names = d.names_of_kind(kind);
  if (names.size() != 1) {
    throw InputError(fmt::format("expected exactly one {} column, found {}", to_string(kind), names.size()));
  }
  return names.front();
}

double median_of(std::vector<double> values, bool lower) {
  std::sort(values.begin(), values.end());
  std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return lower ? values[n / 2 - 1] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

Dataset join_on_keys(const Dataset& left, const Dataset& right) {
  for (auto key : {kCountyKey, kYearKey, kMonthKey}) require_key(left, key, "left");
  require_key(right, kCountyKey, "right");
  require_key(right, kYearKey, "right");
  if (!right.names_of_kind(ColumnKind::kResponse).empty()) {
    throw InputError("right table of a join must not carry a response column");
  }
  const bool monthly = right.has_column(kMonthKey);

  std::vector<std::string> right_columns, conflicts;
  for (const auto& spec : right.schema()) {
    if (spec.kind == ColumnKind::kKey) continue;
    if (left.has_column(spec.name)) conflicts.push_back(spec.name);
    right_columns.push_back(spec.name);
  }
  if (!conflicts.empty()) {
    std::string names;
    for (const auto& n : conflicts) names += (names.empty() ? "" : ", ") + n;
    throw InputError(fmt::format("join: columns present on both sides: {}", names));
  }

  std::unordered_map<std::string, std::size_t> right_rows;
  right_rows.reserve(right.n_rows());
  for (std::size_t r = 0; r < right.n_rows(); ++r) {
    if (!right_rows.emplace(key_of(right, r, monthly), r).second) {
      throw InputError(fmt::format("join: right table repeats key at row {}", r + 1));
    }
  }

  std::vector<std::size_t> left_match, right_match;
  for (std::size_t r = 0; r < left.n_rows(); ++r) {
    auto it = right_rows.find(key_of(left, r, monthly));
    if (it == right_rows.end()) continue;
    left_match.push_back(r);
    right_match.push_back(it->second);
  }

  Dataset out = left.select_rows(left_match);
  for (const auto& name : right_columns) {
    std::span<const double> src = right.values(name);
    std::vector<double> values;
    values.reserve(right_match.size());
    for (std::size_t r : right_match) values.push_back(src[r]);
    out.add_numeric_column(right.spec(name), std::move(values));
  }

  std::string source;
  if (!right.lineage().empty()) source = right.lineage().front().params.value("source", "");
  auto step = make_step("join_on_keys", {{"right_source", source},
                                         {"mode", monthly ? "county-year-month" : "county-year (replicated)"},
                                         {"left_rows", left.n_rows()},
                                         {"right_rows", right.n_rows()},
                                         {"joined_rows", out.n_rows()},
                                         {"added_columns", right_columns}});
  if (out.n_rows() == 0) step.warnings.push_back("join produced 0 rows: key sets do not intersect");
  out.record(std::move(step));
  return out;
}

Dataset normalize_rate(const Dataset& d, double per, std::string response_name) {
  if (!d.names_of_kind(ColumnKind::kResponse).empty()) throw InputError("dataset already has a response column");
  std::string count_name = single_column(d, ColumnKind::kCount);
  std::string pop_name = single_column(d, ColumnKind::kPopulation);
  std::span<const double> count = d.values(count_name);
  std::span<const double> pop = d.values(pop_name);

  std::vector<double> rate(d.n_rows());
  for (std::size_t r = 0; r < d.n_rows(); ++r) {
    if (is_missing(pop[r]) || pop[r] <= 0.0) {
      throw InputError(fmt::format("normalize_rate: population must be positive (row {}, value {})", r + 1,
                                   format_number(pop[r])));
    }
    if (is_missing(count[r])) throw InputError(fmt::format("normalize_rate: count missing at row {}", r + 1));
    rate[r] = count[r] / pop[r] * per;
  }

  Dataset out = d;
  out.drop_column(count_name);
  out.drop_column(pop_name);
  out.add_numeric_column({response_name, ColumnKind::kResponse, d.spec(count_name).periodicity}, std::move(rate));
  auto step = make_step("normalize_rate",
                        {{"per", per}, {"count", count_name}, {"population", pop_name}, {"response", response_name}});
  step.removed_columns = {count_name, pop_name};
  out.record(std::move(step));
  return out;
}

Dataset drop_sparse_columns(const Dataset& d, double max_missing_frac) {
  Dataset out = d;
  auto step = make_step("drop_sparse_columns", {{"max_missing_frac", max_missing_frac}});
  nlohmann::json imputed = nlohmann::json::object();
  const double n = static_cast<double>(d.n_rows());

  for (const auto& name : d.feature_names()) {
    std::size_t missing = d.missing_count(name);
    if (missing == 0) continue;
    if (static_cast<double>(missing) / n > max_missing_frac) {
      out.drop_column(name);
      step.removed_columns.push_back(name);
      continue;
    }
    std::vector<double> observed;
    for (double v : d.values(name)) {
      if (!is_missing(v)) observed.push_back(v);
    }
    double fill = median_of(std::move(observed), d.spec(name).kind == ColumnKind::kBinaryFeature);
    for (double& v : out.mutable_values(name)) {
      if (is_missing(v)) v = fill;
    }
    imputed[name] = {{"cells", missing}, {"median", fill}};
  }
  step.params["imputed"] = std::move(imputed);
  if (out.feature_names().empty() && !d.feature_names().empty()) {
    step.warnings.push_back("every feature column was removed");
  }
  out.record(std::move(step));
  return out;
}

Dataset prune_correlated(const Dataset& d, double threshold) {
  auto features = d.feature_names();
  for (const auto& name : features) {
    if (d.missing_count(name) > 0) {
      throw InputError(fmt::format("prune_correlated: feature '{}' has missing values", name));
    }
  }

  Dataset out = d;
  auto constant_step = make_step("drop_constant_columns");
  std::vector<std::string> candidates;
  for (const auto& name : features) {
    auto v = d.values(name);
    bool constant = std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
    if (constant) {
      out.drop_column(name);
      constant_step.removed_columns.push_back(name);
    } else {
      candidates.push_back(name);
    }
  }
  if (!constant_step.removed_columns.empty()) out.record(std::move(constant_step));

  auto step = make_step("prune_correlated", {{"threshold", threshold}});
  nlohmann::json removals = nlohmann::json::array();
  std::vector<std::string> retained;
  for (const auto& name : candidates) {
    auto v = d.values(name);
    bool drop = false;
    for (const auto& kept : retained) {
      double rho = pearson(d.values(kept), v);
      if (std::abs(rho) >= threshold) {
        removals.push_back({{"removed", name}, {"kept", kept}, {"rho", rho}});
        drop = true;
        break;
      }
    }
    if (drop) {
      out.drop_column(name);
      step.removed_columns.push_back(name);
    } else {
      retained.push_back(name);
    }
  }
  step.params["removals"] = std::move(removals);
  out.record(std::move(step));
  return out;
}

std::pair<Dataset, Dataset> partition_by_urbanization(const Dataset& d, std::string_view column) {
  if (!d.has_column(column)) throw InputError(fmt::format("no urbanization column '{}'", column));
  auto flag = d.values(column);
  std::vector<std::size_t> large, small;
  for (std::size_t r = 0; r < d.n_rows(); ++r) {
    if (flag[r] == 1.0) {
      large.push_back(r);
    } else if (flag[r] == 0.0) {
      small.push_back(r);
    } else {
      throw InputError(fmt::format("urbanization column '{}' has non-binary value {} at row {}", column,
                                   format_number(flag[r]), r + 1));
    }
  }

  auto finish = [&](std::vector<std::size_t>& rows, std::string_view level) {
    Dataset part = d.select_rows(rows);
    part.drop_column(column);
    auto step = make_step("partition_by_urbanization",
                          {{"column", std::string(column)}, {"level", std::string(level)}, {"rows", rows.size()}});
    step.removed_columns.emplace_back(column);
    if (rows.empty()) step.warnings.push_back(fmt::format("{} subset is empty", level));
    part.record(std::move(step));
    return part;
  };
  return {finish(large, "large-central-metro"), finish(small, "medium-small-metro")};
}

}  // namespace panelreg
