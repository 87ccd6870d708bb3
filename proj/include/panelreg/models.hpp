#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "panelreg/design.hpp"
#include "panelreg/tree.hpp"

namespace panelreg {

enum class ModelKind { kNull, kOls, kRidge, kLasso, kTree, kForest, kGbm };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

struct NullModel {
  double mean = 0.0;
};

enum class Penalty { kNone, kRidge, kLasso };

struct LinearModel {
  double intercept = 0.0;
  std::vector<double> coefficients;  // original feature scale
  Penalty penalty = Penalty::kNone;
  double lambda = 0.0;
  std::vector<double> feature_means;
  std::vector<double> feature_sds;
  int sweeps = 0;  // coordinate-descent sweeps (lasso only)
};

struct TreeModel {
  Tree tree;
  TreeParams params;
  std::uint64_t seed = 0;
};

struct ForestModel {
  std::vector<Tree> trees;
  std::size_t m_try = 0;
  std::size_t n_min = 0;
  bool bootstrap = true;
  std::vector<std::uint64_t> tree_seeds;
  /// RMSE of out-of-bag predictions; NaN when no row was ever out of bag.
  double oob_error = 0.0;
};

struct BoostedModel {
  double initial = 0.0;
  double shrinkage = 0.1;
  std::size_t max_depth = 3;
  std::size_t n_min = 1;
  std::vector<Tree> stages;
};

/// Trained estimator. Immutable after construction; safe to share across
/// threads for prediction.
class FittedModel {
 public:
  using Variant = std::variant<NullModel, LinearModel, TreeModel, ForestModel, BoostedModel>;

  FittedModel(std::vector<std::string> feature_names, Variant model);

  ModelKind kind() const;
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const Variant& variant() const { return model_; }
  template <typename T>
  const T* as() const {
    return std::get_if<T>(&model_);
  }

  double predict_row(std::span<const double> x) const;
  /// Every tree of a tree-based model (one for a single tree, all stages of a
  /// boosted model); empty for the other kinds.
  std::vector<const Tree*> trees() const;

 private:
  std::vector<std::string> feature_names_;
  Variant model_;
};

/// Checks that `x` has the training feature count, then predicts row by row.
std::vector<double> predict(const FittedModel& m, const Matrix& x);

FittedModel fit_null(const DesignMatrix& d);
/// Least squares via column-pivoted QR on standardized features. Throws
/// ModelError naming the collinear columns when the design is rank deficient.
FittedModel fit_ols(const DesignMatrix& d);
/// Minimizes SSE + lambda * sum(beta_j^2) on standardized features with an
/// unpenalized intercept; coefficients are reported on the original scale.
FittedModel fit_ridge(const DesignMatrix& d, double lambda);

struct LassoOptions {
  double tolerance = 1e-7;
  int max_sweeps = 10000;
};

/// Minimizes (1/2n) * SSE + lambda * sum|beta_j| on standardized features by
/// cyclic coordinate descent with soft-thresholding.
FittedModel fit_lasso(const DesignMatrix& d, double lambda, const LassoOptions& options = {});

/// Smallest lambda at which every lasso coefficient is zero: max_j |z_j' y| / n
/// on standardized features and centered response.
double lasso_lambda_max(const DesignMatrix& d);

FittedModel fit_tree_model(const DesignMatrix& d, const TreeParams& params, std::uint64_t seed);

struct ForestParams {
  std::size_t n_trees = 500;
  /// 0 selects floor(M / 3), at least 1.
  std::size_t m_try = 0;
  std::size_t n_min = 5;
  /// 0 grows every tree until the n_min rule stops it.
  std::size_t max_depth = 0;
  /// Off trains every tree on the full sample.
  bool bootstrap = true;
  /// 0 reads PANEL_THREADS. Results do not depend on this value.
  std::size_t threads = 0;
};

/// Bagged CART ensemble. Tree b is grown from seed mix64(seed, b) on a
/// with-replacement sample of n rows; rows outside that sample feed the
/// out-of-bag error.
FittedModel fit_forest(const DesignMatrix& d, const ForestParams& params, std::uint64_t seed);

struct BoostParams {
  std::size_t n_trees = 500;
  std::size_t max_depth = 3;
  double shrinkage = 0.1;
  std::size_t n_min = 1;
};

/// Least-squares gradient boosting from the training mean.
FittedModel fit_gbm(const DesignMatrix& d, const BoostParams& params);

}  // namespace panelreg
