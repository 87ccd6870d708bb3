#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "panelreg/dataset.hpp"
#include "panelreg/design.hpp"
#include "panelreg/metrics.hpp"
#include "panelreg/models.hpp"
#include "panelreg/split.hpp"

namespace panelreg {

struct ModelSpec {
  std::string name;
  ModelKind kind = ModelKind::kNull;
  std::map<std::string, double> hyperparameters;
};

/// Reads `[{"name": ..., "kind": ..., "params": {...}}, ...]`.
std::vector<ModelSpec> parse_model_specs(const nlohmann::json& j);
std::vector<ModelSpec> read_model_specs(const std::filesystem::path& path);
nlohmann::json model_specs_to_json(const std::vector<ModelSpec>& specs);

/// The seven-model zoo: null, OLS, ridge, lasso, CART, random forest, boosting.
std::vector<ModelSpec> default_model_specs();

/// Fits one spec. `seed` drives every random choice of the fit; `threads`
/// only affects speed.
FittedModel fit_model(const ModelSpec& spec, const DesignMatrix& d, std::uint64_t seed, std::size_t threads = 1);

/// Seed used for `spec` in holdout iteration `iteration` (or for the final
/// full-data refit when iteration == SIZE_MAX).
std::uint64_t model_seed(std::uint64_t base_seed, const ModelSpec& spec, std::size_t iteration);

struct IterationMetrics {
  MetricTriple in_sample;
  MetricTriple out_of_sample;
};

struct ModelRow {
  ModelSpec spec;
  std::optional<std::string> error;
  /// Arithmetic means over iterations. R^2 is absent for the null model.
  MetricTriple in_sample;
  MetricTriple out_of_sample;
  std::vector<IterationMetrics> iterations;
};

struct RankedModel {
  std::string name;
  double score = 0.0;
  double in_sample_rmse = 0.0;
  double out_of_sample_rmse = 0.0;
};

struct Selection {
  std::string model;
  std::vector<RankedModel> ranking;
  std::string rationale;
};

struct ExperimentReport {
  std::string dataset_id;
  std::uint64_t split_seed = 0;
  std::size_t iteration_count = 0;
  double test_fraction = 0.0;
  std::vector<ModelRow> rows;
  std::optional<Selection> selection;

  const ModelRow& row(std::string_view name) const;
};

/// Stable content hash of a dataset (hex FNV-1a of its CSV rendering).
std::string dataset_id(const Dataset& d);

/// Fits every spec on each iteration's training rows and scores it on both the
/// training rows (goodness of fit) and the held-out rows (predictive
/// accuracy). A failing model gets an error row; the rest still run.
ExperimentReport run_experiment(const Dataset& d, const std::vector<ModelSpec>& specs, const SplitPlan& plan,
                                std::size_t threads = 1);
ExperimentReport run_experiment(const DesignMatrix& d, const std::vector<ModelSpec>& specs, const SplitPlan& plan,
                                std::size_t threads = 1, std::string dataset_id = "");

struct Improvement {
  double in_rmse_pct = 0.0;
  double in_mae_pct = 0.0;
  double out_rmse_pct = 0.0;
  double out_mae_pct = 0.0;
};

/// 100 * (null - model) / null for each averaged error metric.
Improvement improvement_vs_null(const ExperimentReport& r, std::string_view model);

inline constexpr double kDefaultFitWeight = 0.2;

/// Ranks the non-null, error-free models by
///   score = fit_weight * in-sample RMSE + (1 - fit_weight) * out-of-sample RMSE
/// (lower is better), breaking ties by in-sample RMSE and then by name.
/// Predictive accuracy dominates; goodness of fit separates models that
/// predict about equally well.
Selection select_final_model(const ExperimentReport& r, double fit_weight = kDefaultFitWeight);

enum class ReportFormat { kMarkdown, kCsv, kJson };
ReportFormat parse_report_format(std::string_view text);

/// Markdown shows 3 decimals, CSV 6, JSON full precision plus per-iteration
/// raw metrics.
std::string render_report(const ExperimentReport& r, ReportFormat format);
nlohmann::json report_to_json(const ExperimentReport& r);

}  // namespace panelreg
