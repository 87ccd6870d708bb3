#include "panelreg/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "panelreg/error.hpp"
#include "panelreg/parallel.hpp"

namespace panelreg {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kNull: return "null";
    case ModelKind::kOls: return "ols";
    case ModelKind::kRidge: return "ridge";
    case ModelKind::kLasso: return "lasso";
    case ModelKind::kTree: return "tree";
    case ModelKind::kForest: return "forest";
    case ModelKind::kGbm: return "gbm";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view text) {
  for (auto kind : {ModelKind::kNull, ModelKind::kOls, ModelKind::kRidge, ModelKind::kLasso, ModelKind::kTree,
                    ModelKind::kForest, ModelKind::kGbm}) {
    if (to_string(kind) == text) return kind;
  }
  throw InputError(fmt::format("unknown model kind '{}'", text));
}

FittedModel::FittedModel(std::vector<std::string> feature_names, Variant model)
    : feature_names_(std::move(feature_names)), model_(std::move(model)) {}

ModelKind FittedModel::kind() const {
  struct Visitor {
    ModelKind operator()(const NullModel&) const { return ModelKind::kNull; }
    ModelKind operator()(const LinearModel& m) const {
      switch (m.penalty) {
        case Penalty::kNone: return ModelKind::kOls;
        case Penalty::kRidge: return ModelKind::kRidge;
        case Penalty::kLasso: return ModelKind::kLasso;
      }
      return ModelKind::kOls;
    }
    ModelKind operator()(const TreeModel&) const { return ModelKind::kTree; }
    ModelKind operator()(const ForestModel&) const { return ModelKind::kForest; }
    ModelKind operator()(const BoostedModel&) const { return ModelKind::kGbm; }
  };
  return std::visit(Visitor{}, model_);
}

double FittedModel::predict_row(std::span<const double> x) const {
  struct Visitor {
    std::span<const double> x;
    double operator()(const NullModel& m) const { return m.mean; }
    double operator()(const LinearModel& m) const {
      double out = m.intercept;
      for (std::size_t j = 0; j < m.coefficients.size(); ++j) out += m.coefficients[j] * x[j];
      return out;
    }
    double operator()(const TreeModel& m) const { return m.tree.predict(x); }
    double operator()(const ForestModel& m) const {
      double sum = 0.0;
      for (const auto& t : m.trees) sum += t.predict(x);
      return sum / static_cast<double>(m.trees.size());
    }
    double operator()(const BoostedModel& m) const {
      double sum = 0.0;
      for (const auto& t : m.stages) sum += t.predict(x);
      return m.initial + m.shrinkage * sum;
    }
  };
  return std::visit(Visitor{x}, model_);
}

std::vector<const Tree*> FittedModel::trees() const {
  std::vector<const Tree*> out;
  if (auto* t = as<TreeModel>()) out.push_back(&t->tree);
  if (auto* f = as<ForestModel>()) {
    for (const auto& t : f->trees) out.push_back(&t);
  }
  if (auto* b = as<BoostedModel>()) {
    for (const auto& t : b->stages) out.push_back(&t);
  }
  return out;
}

std::vector<double> predict(const FittedModel& m, const Matrix& x) {
  if (x.cols != m.feature_names().size()) {
    throw InputError(fmt::format("model expects {} features, got {}", m.feature_names().size(), x.cols));
  }
  std::vector<double> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) out[i] = m.predict_row(x.row(i));
  return out;
}

FittedModel fit_null(const DesignMatrix& d) {
  const auto& y = d.response();
  double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  return FittedModel(d.feature_names(), NullModel{mean});
}

namespace {

struct Standardized {
  Eigen::MatrixXd z;  // n x M, zero columns where sd == 0
  Eigen::VectorXd y;  // centered
  double y_mean = 0.0;
  std::vector<double> means, sds;
};

Standardized standardize(const DesignMatrix& d) {
  const std::size_t n = d.n_rows(), m = d.n_features();
  Standardized s;
  s.z.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  s.means.assign(m, 0.0);
  s.sds.assign(m, 0.0);
  const Matrix& x = d.features();
  for (std::size_t j = 0; j < m; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x(i, j);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (x(i, j) - mean) * (x(i, j) - mean);
    double sd = std::sqrt(ss / static_cast<double>(n));
    s.means[j] = mean;
    s.sds[j] = sd;
    for (std::size_t i = 0; i < n; ++i) {
      s.z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = sd > 0.0 ? (x(i, j) - mean) / sd : 0.0;
    }
  }
  const auto& y = d.response();
  s.y_mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  s.y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) s.y(static_cast<Eigen::Index>(i)) = y[i] - s.y_mean;
  return s;
}

LinearModel unstandardize(const Standardized& s, const Eigen::VectorXd& beta_z, Penalty penalty, double lambda) {
  LinearModel m;
  m.penalty = penalty;
  m.lambda = lambda;
  m.feature_means = s.means;
  m.feature_sds = s.sds;
  m.coefficients.assign(s.means.size(), 0.0);
  m.intercept = s.y_mean;
  for (std::size_t j = 0; j < s.means.size(); ++j) {
    if (s.sds[j] > 0.0) m.coefficients[j] = beta_z(static_cast<Eigen::Index>(j)) / s.sds[j];
    m.intercept -= m.coefficients[j] * s.means[j];
  }
  return m;
}

Eigen::VectorXd solve_least_squares(const DesignMatrix& d, const Standardized& s) {
  if (d.n_rows() <= d.n_features()) {
    throw ModelError(fmt::format("least squares needs more rows ({}) than features ({})", d.n_rows(), d.n_features()));
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(s.z);
  qr.setThreshold(1e-10);
  if (qr.rank() < s.z.cols()) {
    const auto& perm = qr.colsPermutation().indices();
    std::vector<std::string> collinear;
    for (Eigen::Index k = qr.rank(); k < s.z.cols(); ++k) {
      collinear.push_back(d.feature_names()[static_cast<std::size_t>(perm(k))]);
    }
    std::sort(collinear.begin(), collinear.end());
    std::string names;
    for (const auto& c : collinear) names += (names.empty() ? "" : ", ") + c;
    throw ModelError(fmt::format("design matrix is rank deficient (rank {} of {}); collinear columns: {}", qr.rank(),
                                 s.z.cols(), names));
  }
  return qr.solve(s.y);
}

double soft_threshold(double value, double lambda) {
  if (value > lambda) return value - lambda;
  if (value < -lambda) return value + lambda;
  return 0.0;
}

}  // namespace

FittedModel fit_ols(const DesignMatrix& d) {
  Standardized s = standardize(d);
  Eigen::VectorXd beta = solve_least_squares(d, s);
  return FittedModel(d.feature_names(), unstandardize(s, beta, Penalty::kNone, 0.0));
}

FittedModel fit_ridge(const DesignMatrix& d, double lambda) {
  if (!(lambda >= 0.0)) throw ModelError(fmt::format("ridge lambda must be nonnegative, got {}", lambda));
  Standardized s = standardize(d);
  Eigen::VectorXd beta;
  if (lambda == 0.0) {
    beta = solve_least_squares(d, s);
  } else {
    Eigen::MatrixXd gram = s.z.transpose() * s.z;
    gram.diagonal().array() += lambda;
    beta = gram.ldlt().solve(s.z.transpose() * s.y);
  }
  return FittedModel(d.feature_names(), unstandardize(s, beta, Penalty::kRidge, lambda));
}

double lasso_lambda_max(const DesignMatrix& d) {
  Standardized s = standardize(d);
  // Same expression as the first coordinate-descent update, so lambda_max
  // itself already zeroes every coefficient.
  const double inv_n = 1.0 / static_cast<double>(d.n_rows());
  double lmax = 0.0;
  for (Eigen::Index j = 0; j < s.z.cols(); ++j) lmax = std::max(lmax, std::fabs(s.z.col(j).dot(s.y) * inv_n + 0.0));
  return lmax;
}

FittedModel fit_lasso(const DesignMatrix& d, double lambda, const LassoOptions& options) {
  if (!(lambda >= 0.0)) throw ModelError(fmt::format("lasso lambda must be nonnegative, got {}", lambda));
  Standardized s = standardize(d);
  const Eigen::Index n = s.z.rows(), m = s.z.cols();
  const double inv_n = 1.0 / static_cast<double>(n);

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd residual = s.y;
  int sweep = 0;
  for (; sweep < options.max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (s.sds[static_cast<std::size_t>(j)] == 0.0) continue;
      auto zj = s.z.col(j);
      double rho = zj.dot(residual) * inv_n + beta(j);
      double updated = soft_threshold(rho, lambda);
      double change = updated - beta(j);
      if (change != 0.0) {
        residual.noalias() -= change * zj;
        beta(j) = updated;
        max_change = std::max(max_change, std::abs(change));
      }
    }
    if (max_change < options.tolerance) {
      LinearModel model = unstandardize(s, beta, Penalty::kLasso, lambda);
      model.sweeps = sweep + 1;
      return FittedModel(d.feature_names(), std::move(model));
    }
  }
  LinearModel last = unstandardize(s, beta, Penalty::kLasso, lambda);
  throw ConvergenceError(fmt::format("lasso did not converge within {} sweeps (lambda={})", sweep, lambda),
                         last.coefficients, sweep);
}

FittedModel fit_tree_model(const DesignMatrix& d, const TreeParams& params, std::uint64_t seed) {
  return FittedModel(d.feature_names(), TreeModel{fit_tree(d, params, seed), params, seed});
}

FittedModel fit_forest(const DesignMatrix& d, const ForestParams& params, std::uint64_t seed) {
  if (params.n_trees < 1) throw ModelError("forest needs at least one tree");
  const std::size_t n = d.n_rows(), m = d.n_features();
  ForestModel forest;
  forest.m_try = params.m_try == 0 ? std::max<std::size_t>(1, m / 3) : params.m_try;
  forest.n_min = params.n_min;
  forest.bootstrap = params.bootstrap;
  if (forest.m_try > m) throw ModelError(fmt::format("m_try={} exceeds feature count {}", forest.m_try, m));

  forest.tree_seeds.resize(params.n_trees);
  for (std::size_t b = 0; b < params.n_trees; ++b) forest.tree_seeds[b] = mix64(seed, b);

  TreeGrower grower(d.features());
  TreeParams tree_params{params.n_min, forest.m_try, params.max_depth};
  forest.trees.resize(params.n_trees);
  std::vector<std::vector<std::uint32_t>> counts(params.n_trees);
  std::size_t threads = params.threads == 0 ? worker_count() : params.threads;
  parallel_for(params.n_trees, threads, [&](std::size_t b) {
    Rng rng(forest.tree_seeds[b]);
    if (params.bootstrap) {
      counts[b].assign(n, 0);
      std::uniform_int_distribution<std::size_t> draw(0, n - 1);
      for (std::size_t i = 0; i < n; ++i) ++counts[b][draw(rng)];
    }
    forest.trees[b] = grower.grow(d.response(), counts[b], tree_params, rng);
  });

  forest.oob_error = std::numeric_limits<double>::quiet_NaN();
  if (params.bootstrap) {
    std::vector<double> sum(n, 0.0);
    std::vector<std::size_t> hits(n, 0);
    for (std::size_t b = 0; b < params.n_trees; ++b) {
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[b][i] != 0) continue;
        sum[i] += forest.trees[b].predict(d.features().row(i));
        ++hits[i];
      }
    }
    double sse = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (hits[i] == 0) continue;
      double e = d.response()[i] - sum[i] / static_cast<double>(hits[i]);
      sse += e * e;
      ++used;
    }
    if (used > 0) forest.oob_error = std::sqrt(sse / static_cast<double>(used));
  }
  return FittedModel(d.feature_names(), std::move(forest));
}

FittedModel fit_gbm(const DesignMatrix& d, const BoostParams& params) {
  if (params.n_trees < 1) throw ModelError("boosting needs at least one stage");
  if (!(params.shrinkage > 0.0 && params.shrinkage <= 1.0)) {
    throw ModelError(fmt::format("shrinkage must lie in (0, 1], got {}", params.shrinkage));
  }
  if (params.max_depth < 1) throw ModelError("boosting tree depth must be at least 1");
  const std::size_t n = d.n_rows();
  const auto& y = d.response();

  BoostedModel model;
  model.shrinkage = params.shrinkage;
  model.max_depth = params.max_depth;
  model.n_min = params.n_min;
  model.initial = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);

  TreeGrower grower(d.features());
  TreeParams tree_params{params.n_min, 0, params.max_depth};
  Rng unused(0);
  std::vector<double> fitted(n, model.initial), residual(n);
  model.stages.reserve(params.n_trees);
  for (std::size_t stage = 0; stage < params.n_trees; ++stage) {
    for (std::size_t i = 0; i < n; ++i) residual[i] = y[i] - fitted[i];
    Tree tree = grower.grow(residual, {}, tree_params, unused);
    for (std::size_t i = 0; i < n; ++i) fitted[i] += params.shrinkage * tree.predict(d.features().row(i));
    model.stages.push_back(std::move(tree));
  }
  return FittedModel(d.feature_names(), std::move(model));
}

}  // namespace panelreg
