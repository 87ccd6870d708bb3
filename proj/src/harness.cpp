#include "panelreg/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "panelreg/error.hpp"
#include "panelreg/parallel.hpp"
#include "panelreg/rng.hpp"

namespace panelreg {

namespace {

using json = nlohmann::json;

const std::map<ModelKind, std::set<std::string>> kKnownParams = {
    {ModelKind::kNull, {}},
    {ModelKind::kOls, {}},
    {ModelKind::kRidge, {"lambda"}},
    {ModelKind::kLasso, {"lambda", "max_sweeps", "tolerance"}},
    {ModelKind::kTree, {"n_min", "m_try", "max_depth"}},
    {ModelKind::kForest, {"trees", "m_try", "n_min", "max_depth", "bootstrap"}},
    {ModelKind::kGbm, {"trees", "depth", "shrinkage", "n_min"}},
};

double param(const ModelSpec& spec, const std::string& key, double fallback) {
  auto it = spec.hyperparameters.find(key);
  return it == spec.hyperparameters.end() ? fallback : it->second;
}

std::size_t count_param(const ModelSpec& spec, const std::string& key, std::size_t fallback) {
  double v = param(spec, key, static_cast<double>(fallback));
  if (!(v >= 0.0) || v != std::floor(v)) {
    throw InputError(fmt::format("model '{}': parameter {} must be a nonnegative integer, got {}", spec.name, key, v));
  }
  return static_cast<std::size_t>(v);
}

std::vector<double> column_mean(const std::vector<IterationMetrics>& its, bool in_sample, int which) {
  std::vector<double> values;
  for (const auto& it : its) {
    const MetricTriple& m = in_sample ? it.in_sample : it.out_of_sample;
    values.push_back(which == 0 ? m.r_squared.value_or(0.0) : which == 1 ? m.rmse : m.mae);
  }
  return values;
}

double mean_of(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

MetricTriple average(const std::vector<IterationMetrics>& its, bool in_sample, bool with_r2) {
  MetricTriple m;
  if (with_r2) m.r_squared = mean_of(column_mean(its, in_sample, 0));
  m.rmse = mean_of(column_mean(its, in_sample, 1));
  m.mae = mean_of(column_mean(its, in_sample, 2));
  return m;
}

json triple_to_json(const MetricTriple& m) {
  return {{"r_squared", m.r_squared ? json(*m.r_squared) : json(nullptr)}, {"rmse", m.rmse}, {"mae", m.mae}};
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string r2_text(const std::optional<double>& r2, int decimals) {
  return r2 ? fmt::format("{:.{}f}", *r2, decimals) : "NA";
}

}  // namespace

std::vector<ModelSpec> parse_model_specs(const json& j) {
  if (!j.is_array()) throw InputError("model config must be a JSON array");
  std::vector<ModelSpec> specs;
  std::set<std::string> names;
  for (const auto& item : j) {
    ModelSpec spec;
    try {
      spec.name = item.at("name").get<std::string>();
      spec.kind = parse_model_kind(item.at("kind").get<std::string>());
      if (item.contains("params")) {
        for (const auto& [key, value] : item.at("params").items()) {
          spec.hyperparameters[key] = value.is_boolean() ? (value.get<bool>() ? 1.0 : 0.0) : value.get<double>();
        }
      }
    } catch (const json::exception& e) {
      throw InputError(fmt::format("malformed model config entry: {}", e.what()));
    }
    if (spec.name.empty()) throw InputError("model name must not be empty");
    if (!names.insert(spec.name).second) throw InputError(fmt::format("duplicate model name '{}'", spec.name));
    const auto& known = kKnownParams.at(spec.kind);
    for (const auto& [key, value] : spec.hyperparameters) {
      if (!known.count(key)) {
        throw InputError(fmt::format("model '{}': unknown parameter '{}' for kind {}", spec.name, key,
                                     to_string(spec.kind)));
      }
    }
    specs.push_back(std::move(spec));
  }
  if (specs.empty()) throw InputError("model config lists no models");
  return specs;
}

std::vector<ModelSpec> read_model_specs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open model config {}", path.string()));
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return parse_model_specs(j);
}

json model_specs_to_json(const std::vector<ModelSpec>& specs) {
  json out = json::array();
  for (const auto& s : specs) {
    json params = json::object();
    for (const auto& [k, v] : s.hyperparameters) params[k] = v;
    out.push_back({{"name", s.name}, {"kind", std::string(to_string(s.kind))}, {"params", params}});
  }
  return out;
}

std::vector<ModelSpec> default_model_specs() {
  return {
      {"Generalized Linear Model", ModelKind::kOls, {}},
      {"Ridge Regression", ModelKind::kRidge, {{"lambda", 1.0}}},
      {"Lasso Regression", ModelKind::kLasso, {{"lambda", 0.01}}},
      {"Regression Tree", ModelKind::kTree, {{"n_min", 5}}},
      {"Random Forest", ModelKind::kForest, {{"trees", 500}, {"n_min", 5}}},
      {"Gradient Boosting Method", ModelKind::kGbm, {{"trees", 500}, {"depth", 3}, {"shrinkage", 0.1}}},
      {"Null Model (Mean-only)", ModelKind::kNull, {}},
  };
}

std::uint64_t model_seed(std::uint64_t base_seed, const ModelSpec& spec, std::size_t iteration) {
  return mix64(mix64(base_seed, fnv1a(spec.name)), iteration);
}

FittedModel fit_model(const ModelSpec& spec, const DesignMatrix& d, std::uint64_t seed, std::size_t threads) {
  switch (spec.kind) {
    case ModelKind::kNull:
      return fit_null(d);
    case ModelKind::kOls:
      return fit_ols(d);
    case ModelKind::kRidge:
      return fit_ridge(d, param(spec, "lambda", 1.0));
    case ModelKind::kLasso: {
      LassoOptions options;
      options.max_sweeps = static_cast<int>(count_param(spec, "max_sweeps", 10000));
      options.tolerance = param(spec, "tolerance", 1e-7);
      return fit_lasso(d, param(spec, "lambda", 0.01), options);
    }
    case ModelKind::kTree: {
      TreeParams p{count_param(spec, "n_min", 5), count_param(spec, "m_try", 0), count_param(spec, "max_depth", 0)};
      return fit_tree_model(d, p, seed);
    }
    case ModelKind::kForest: {
      ForestParams p;
      p.n_trees = count_param(spec, "trees", 500);
      p.m_try = count_param(spec, "m_try", 0);
      p.n_min = count_param(spec, "n_min", 5);
      p.max_depth = count_param(spec, "max_depth", 0);
      p.bootstrap = param(spec, "bootstrap", 1.0) != 0.0;
      p.threads = threads;
      return fit_forest(d, p, seed);
    }
    case ModelKind::kGbm: {
      BoostParams p;
      p.n_trees = count_param(spec, "trees", 500);
      p.max_depth = count_param(spec, "depth", 3);
      p.shrinkage = param(spec, "shrinkage", 0.1);
      p.n_min = count_param(spec, "n_min", 1);
      return fit_gbm(d, p);
    }
  }
  throw InputError("unknown model kind");
}

const ModelRow& ExperimentReport::row(std::string_view name) const {
  for (const auto& r : rows) {
    if (r.spec.name == name) return r;
  }
  throw InputError(fmt::format("report has no model named '{}'", name));
}

std::string dataset_id(const Dataset& d) {
  std::ostringstream out;
  write_csv(d, out);
  return fmt::format("{:016x}", fnv1a(out.str()));
}

ExperimentReport run_experiment(const Dataset& d, const std::vector<ModelSpec>& specs, const SplitPlan& plan,
                                std::size_t threads) {
  return run_experiment(DesignMatrix::from_dataset(d), specs, plan, threads, dataset_id(d));
}

ExperimentReport run_experiment(const DesignMatrix& d, const std::vector<ModelSpec>& specs, const SplitPlan& plan,
                                std::size_t threads, std::string id) {
  if (plan.n_rows != d.n_rows()) {
    throw InputError(fmt::format("split plan covers {} rows, data has {}", plan.n_rows, d.n_rows()));
  }
  std::set<std::string> names;
  for (const auto& s : specs) {
    if (!names.insert(s.name).second) throw InputError(fmt::format("duplicate model name '{}'", s.name));
  }

  const std::size_t n_models = specs.size(), n_iter = plan.iteration_count;
  std::vector<IterationMetrics> slots(n_models * n_iter);
  std::vector<std::optional<std::string>> errors(n_models * n_iter);

  std::vector<DesignMatrix> train_sets, test_sets;
  for (std::size_t it = 0; it < n_iter; ++it) {
    train_sets.push_back(d.subset(plan.train_indices(it)));
    test_sets.push_back(d.subset(plan.test_index_sets[it]));
  }

  parallel_for(n_models * n_iter, threads, [&](std::size_t k) {
    const std::size_t it = k / n_models, mi = k % n_models;
    const ModelSpec& spec = specs[mi];
    try {
      FittedModel model = fit_model(spec, train_sets[it], model_seed(plan.seed, spec, it), 1);
      auto fit = predict(model, train_sets[it].features());
      auto pred = predict(model, test_sets[it].features());
      slots[mi * n_iter + it] = {score(train_sets[it].response(), fit), score(test_sets[it].response(), pred)};
    } catch (const Error& e) {
      errors[mi * n_iter + it] = fmt::format("iteration {}: {}", it, e.what());
    }
  });

  ExperimentReport report;
  report.dataset_id = std::move(id);
  report.split_seed = plan.seed;
  report.iteration_count = n_iter;
  report.test_fraction = plan.test_fraction;
  for (std::size_t mi = 0; mi < n_models; ++mi) {
    ModelRow row;
    row.spec = specs[mi];
    for (std::size_t it = 0; it < n_iter && !row.error; ++it) row.error = errors[mi * n_iter + it];
    if (!row.error) {
      row.iterations.assign(slots.begin() + static_cast<std::ptrdiff_t>(mi * n_iter),
                            slots.begin() + static_cast<std::ptrdiff_t>((mi + 1) * n_iter));
      bool with_r2 = specs[mi].kind != ModelKind::kNull;
      row.in_sample = average(row.iterations, true, with_r2);
      row.out_of_sample = average(row.iterations, false, with_r2);
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

Improvement improvement_vs_null(const ExperimentReport& r, std::string_view model) {
  const ModelRow* null_row = nullptr;
  for (const auto& row : r.rows) {
    if (row.spec.kind == ModelKind::kNull && !row.error) {
      null_row = &row;
      break;
    }
  }
  if (!null_row) throw InputError("report has no usable null-model row");
  const ModelRow& m = r.row(model);
  if (m.error) throw InputError(fmt::format("model '{}' failed: {}", model, *m.error));
  auto pct = [](double base, double value) { return 100.0 * (base - value) / base; };
  return {pct(null_row->in_sample.rmse, m.in_sample.rmse), pct(null_row->in_sample.mae, m.in_sample.mae),
          pct(null_row->out_of_sample.rmse, m.out_of_sample.rmse), pct(null_row->out_of_sample.mae, m.out_of_sample.mae)};
}

Selection select_final_model(const ExperimentReport& r, double fit_weight) {
  if (!(fit_weight >= 0.0 && fit_weight <= 1.0)) throw InputError("fit weight must lie in [0, 1]");
  Selection sel;
  for (const auto& row : r.rows) {
    if (row.spec.kind == ModelKind::kNull || row.error) continue;
    double s = fit_weight * row.in_sample.rmse + (1.0 - fit_weight) * row.out_of_sample.rmse;
    sel.ranking.push_back({row.spec.name, s, row.in_sample.rmse, row.out_of_sample.rmse});
  }
  if (sel.ranking.empty()) throw InputError("no eligible (non-null, successfully fitted) model to select");
  std::sort(sel.ranking.begin(), sel.ranking.end(), [](const RankedModel& a, const RankedModel& b) {
    if (a.score != b.score) return a.score < b.score;
    if (a.in_sample_rmse != b.in_sample_rmse) return a.in_sample_rmse < b.in_sample_rmse;
    return a.name < b.name;
  });
  sel.model = sel.ranking.front().name;

  const RankedModel& best = sel.ranking.front();
  sel.rationale = fmt::format(
      "Selected '{}' with score {:.6f} = {:.2f} x in-sample RMSE {:.6f} + {:.2f} x out-of-sample RMSE {:.6f}.", best.name,
      best.score, fit_weight, best.in_sample_rmse, 1.0 - fit_weight, best.out_of_sample_rmse);
  auto best_out = std::min_element(sel.ranking.begin(), sel.ranking.end(), [](const auto& a, const auto& b) {
    return a.out_of_sample_rmse < b.out_of_sample_rmse;
  });
  auto best_in = std::min_element(sel.ranking.begin(), sel.ranking.end(), [](const auto& a, const auto& b) {
    return a.in_sample_rmse < b.in_sample_rmse;
  });
  if (best_in->name != best.name) {
    sel.rationale += fmt::format(" '{}' fits the training data more closely (in-sample RMSE {:.6f}) but predicts worse "
                                 "out of sample ({:.6f}), a sign of overfitting.",
                                 best_in->name, best_in->in_sample_rmse, best_in->out_of_sample_rmse);
  }
  if (best_out->name != best.name) {
    sel.rationale += fmt::format(" '{}' predicts slightly better out of sample ({:.6f}) but fits the training data "
                                 "much worse (in-sample RMSE {:.6f}).",
                                 best_out->name, best_out->out_of_sample_rmse, best_out->in_sample_rmse);
  }
  return sel;
}

ReportFormat parse_report_format(std::string_view text) {
  if (text == "markdown" || text == "md") return ReportFormat::kMarkdown;
  if (text == "csv") return ReportFormat::kCsv;
  if (text == "json") return ReportFormat::kJson;
  throw InputError(fmt::format("unknown report format '{}'", text));
}

json report_to_json(const ExperimentReport& r) {
  json models = json::array();
  for (const auto& row : r.rows) {
    json params = json::object();
    for (const auto& [k, v] : row.spec.hyperparameters) params[k] = v;
    json m = {{"name", row.spec.name}, {"kind", std::string(to_string(row.spec.kind))}, {"params", params}};
    if (row.error) {
      m["error"] = *row.error;
    } else {
      m["error"] = nullptr;
      m["in_sample"] = triple_to_json(row.in_sample);
      m["out_of_sample"] = triple_to_json(row.out_of_sample);
      json its = json::array();
      for (const auto& it : row.iterations) {
        its.push_back({{"in_sample", triple_to_json(it.in_sample)}, {"out_of_sample", triple_to_json(it.out_of_sample)}});
      }
      m["iterations"] = std::move(its);
    }
    models.push_back(std::move(m));
  }
  json j = {{"format", "panelreg-report"},
            {"version", 1},
            {"dataset_id", r.dataset_id},
            {"split_seed", r.split_seed},
            {"iterations", r.iteration_count},
            {"test_fraction", r.test_fraction},
            {"models", std::move(models)}};
  if (r.selection) {
    json ranking = json::array();
    for (const auto& rm : r.selection->ranking) {
      ranking.push_back({{"name", rm.name},
                         {"score", rm.score},
                         {"in_sample_rmse", rm.in_sample_rmse},
                         {"out_of_sample_rmse", rm.out_of_sample_rmse}});
    }
    j["selection"] = {{"model", r.selection->model}, {"ranking", ranking}, {"rationale", r.selection->rationale}};
  }
  return j;
}

std::string render_report(const ExperimentReport& r, ReportFormat format) {
  std::string out;
  switch (format) {
    case ReportFormat::kMarkdown: {
      out += fmt::format("Dataset {} | {} x {:.0f}/{:.0f} randomized holdout | split seed {}\n\n", r.dataset_id,
                         r.iteration_count, 100.0 * (1.0 - r.test_fraction), 100.0 * r.test_fraction, r.split_seed);
      out += "| # | Model | Fit R² | Fit RMSE | Fit MAE | Pred R² | Pred RMSE | Pred MAE |\n";
      out += "|---|---|---|---|---|---|---|---|\n";
      for (std::size_t i = 0; i < r.rows.size(); ++i) {
        const auto& row = r.rows[i];
        if (row.error) {
          out += fmt::format("| {} | {} | error: {} | | | | | |\n", i + 1, row.spec.name, *row.error);
          continue;
        }
        out += fmt::format("| {} | {} | {} | {:.3f} | {:.3f} | {} | {:.3f} | {:.3f} |\n", i + 1, row.spec.name,
                           r2_text(row.in_sample.r_squared, 3), row.in_sample.rmse, row.in_sample.mae,
                           r2_text(row.out_of_sample.r_squared, 3), row.out_of_sample.rmse, row.out_of_sample.mae);
      }
      if (r.selection) out += fmt::format("\nFinal model: **{}**. {}\n", r.selection->model, r.selection->rationale);
      return out;
    }
    case ReportFormat::kCsv: {
      out += "#,Model,fit_r2,fit_rmse,fit_mae,pred_r2,pred_rmse,pred_mae\n";
      for (std::size_t i = 0; i < r.rows.size(); ++i) {
        const auto& row = r.rows[i];
        if (row.error) {
          out += fmt::format("{},{},NA,NA,NA,NA,NA,NA\n", i + 1, csv_field(row.spec.name));
          continue;
        }
        out += fmt::format("{},{},{},{:.6f},{:.6f},{},{:.6f},{:.6f}\n", i + 1, csv_field(row.spec.name),
                           r2_text(row.in_sample.r_squared, 6), row.in_sample.rmse, row.in_sample.mae,
                           r2_text(row.out_of_sample.r_squared, 6), row.out_of_sample.rmse, row.out_of_sample.mae);
      }
      return out;
    }
    case ReportFormat::kJson:
      return report_to_json(r).dump(2) + "\n";
  }
  return out;
}

}  // namespace panelreg
