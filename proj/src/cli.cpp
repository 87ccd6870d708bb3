#include "panelreg/cli.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "panelreg/dataset.hpp"
#include "panelreg/design.hpp"
#include "panelreg/error.hpp"
#include "panelreg/harness.hpp"
#include "panelreg/interpret.hpp"
#include "panelreg/parallel.hpp"
#include "panelreg/preprocess.hpp"
#include "panelreg/serialize.hpp"
#include "panelreg/split.hpp"
#include "panelreg/synthgen.hpp"

#ifndef PANELREG_VERSION
#define PANELREG_VERSION "dev"
#endif

namespace panelreg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Everything needed to rerun a command, plus timing.
struct RunContext {
  std::string command;
  std::vector<std::string> args;
  fs::path out;
  json seeds = json::object();
  json configs = json::object();
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
};

void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw InputError(fmt::format("cannot write {}", tmp.string()));
    out << content;
    if (!out.flush()) throw InputError(fmt::format("failed writing {}", tmp.string()));
  }
  fs::rename(tmp, path);
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError(fmt::format("cannot write {}", path.string()));
  out << content;
}

void write_manifest(const RunContext& ctx) {
  double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - ctx.start).count();
  json m = {{"command", ctx.command},
            {"args", ctx.args},
            {"seeds", ctx.seeds},
            {"configs", ctx.configs},
            {"out", ctx.out.string()},
            {"version", PANELREG_VERSION},
            {"threads", worker_count()},
            {"duration_seconds", seconds}};
  write_file_atomic(ctx.out / "manifest.json", m.dump(2) + "\n");
}

fs::path default_schema(const fs::path& dataset, const std::string& schema) {
  return schema.empty() ? dataset.parent_path() / "schema.txt" : fs::path(schema);
}

std::vector<std::string> split_header(std::string line) {
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> names;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (cell.size() >= 2 && cell.front() == '"' && cell.back() == '"') cell = cell.substr(1, cell.size() - 2);
    names.push_back(cell);
  }
  return names;
}

/// Loads a CSV using the subset of `schema` named by its header. Columns the
/// schema does not describe are an input error.
Dataset load_with_schema_subset(const fs::path& path, const std::vector<ColumnSpec>& schema) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open {}", path.string()));
  std::string line;
  if (!std::getline(in, line)) throw InputError(fmt::format("{}: empty file", path.string()));
  std::vector<ColumnSpec> subset;
  std::vector<std::string> unknown;
  for (const auto& name : split_header(line)) {
    auto it = std::find_if(schema.begin(), schema.end(), [&](const ColumnSpec& s) { return s.name == name; });
    if (it == schema.end()) {
      unknown.push_back(name);
    } else {
      subset.push_back(*it);
    }
  }
  if (!unknown.empty()) {
    throw InputError(fmt::format("{}: columns not in schema: {}", path.string(), fmt::join(unknown, ", ")));
  }
  return load_csv(path, subset);
}

std::string slug(std::string_view name) {
  std::string s;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!s.empty() && s.back() != '-') {
      s += '-';
    }
  }
  while (!s.empty() && s.back() == '-') s.pop_back();
  return s.empty() ? "model" : s;
}

void print_new_warnings(const Dataset& d, std::size_t from, std::ostream& err) {
  for (std::size_t i = from; i < d.lineage().size(); ++i) {
    for (const auto& w : d.lineage()[i].warnings) err << "warning: " << d.lineage()[i].op << ": " << w << '\n';
  }
}

// ---- synth ---------------------------------------------------------------

struct SynthOptions {
  std::string config;
  PanelConfig panel;
  std::string law = "friedman";
  std::string out;
};

int cmd_synth(SynthOptions opt, RunContext& ctx, std::ostream& out) {
  PanelConfig cfg = opt.panel;
  if (!opt.config.empty()) {
    cfg = read_panel_config(opt.config);
    ctx.configs["panel"] = opt.config;
  } else {
    cfg.response_law = parse_response_law(opt.law);
    cfg = parse_panel_config(format_panel_config(cfg));
  }
  ctx.seeds["seed"] = cfg.seed;
  Dataset d = generate(cfg);
  fs::create_directories(ctx.out);
  write_panel_files(d, ctx.out);
  write_text(ctx.out / "config.txt", format_panel_config(cfg));
  write_manifest(ctx);
  out << fmt::format("wrote {} rows ({} counties, {}-{}) to {}\n", d.n_rows(), cfg.n_counties, cfg.year_first,
                     cfg.year_last, ctx.out.string());
  return kExitOk;
}

// ---- ingest --------------------------------------------------------------

struct IngestOptions {
  std::vector<std::string> inputs;
  std::string schema;
  double per = 1.0e5;
  double max_missing = 0.20;
  double rho = 0.9;
};

int cmd_ingest(const IngestOptions& opt, RunContext& ctx, std::ostream& out, std::ostream& err) {
  auto schema = read_schema_file(opt.schema);
  ctx.configs["schema"] = opt.schema;

  Dataset d = load_with_schema_subset(opt.inputs.front(), schema);
  for (std::size_t i = 1; i < opt.inputs.size(); ++i) {
    d = join_on_keys(d, load_with_schema_subset(opt.inputs[i], schema));
  }
  d = normalize_rate(d, opt.per);
  d = drop_sparse_columns(d, opt.max_missing);
  d = prune_correlated(d, opt.rho);
  print_new_warnings(d, 0, err);

  fs::create_directories(ctx.out);
  write_csv(d, ctx.out / "dataset.csv");
  write_text(ctx.out / "schema.txt", "# column,kind,periodicity\n" + format_schema(d.schema()));
  write_text(ctx.out / "lineage.json", lineage_to_json(d.lineage()).dump(2) + "\n");
  write_manifest(ctx);

  std::vector<std::string> removed;
  for (const auto& step : d.lineage()) removed.insert(removed.end(), step.removed_columns.begin(), step.removed_columns.end());
  out << fmt::format("dataset: {} rows, {} features; removed {} column(s){}{}\n", d.n_rows(), d.feature_names().size(),
                     removed.size(), removed.empty() ? "" : ": ", fmt::join(removed, ", "));
  return kExitOk;
}

// ---- split ---------------------------------------------------------------

struct SplitOptions {
  std::string dataset;
  std::string schema;
  std::string column = "urbanization";
};

int cmd_split(const SplitOptions& opt, RunContext& ctx, std::ostream& out, std::ostream& err) {
  fs::path schema_path = default_schema(opt.dataset, opt.schema);
  ctx.configs["schema"] = schema_path.string();
  Dataset d = load_csv(opt.dataset, read_schema_file(schema_path));
  if (!d.has_column(opt.column)) {
    throw InputError(fmt::format("dataset has no '{}' column to partition on", opt.column));
  }
  std::size_t before = d.lineage().size();
  auto [lcm, msm] = partition_by_urbanization(d, opt.column);
  print_new_warnings(lcm, before, err);
  print_new_warnings(msm, before, err);

  fs::create_directories(ctx.out);
  write_csv(lcm, ctx.out / "lcm.csv");
  write_csv(msm, ctx.out / "msm.csv");
  write_text(ctx.out / "schema.txt", "# column,kind,periodicity\n" + format_schema(lcm.schema()));
  write_manifest(ctx);
  out << fmt::format("lcm: {} rows, msm: {} rows\n", lcm.n_rows(), msm.n_rows());
  return kExitOk;
}

// ---- evaluate ------------------------------------------------------------

struct EvaluateOptions {
  std::string dataset;
  std::string schema;
  std::string models;
  std::size_t iterations = 30;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  double fit_weight = kDefaultFitWeight;
};

int cmd_evaluate(const EvaluateOptions& opt, RunContext& ctx, std::ostream& out, std::ostream& err) {
  fs::path schema_path = default_schema(opt.dataset, opt.schema);
  ctx.configs["schema"] = schema_path.string();
  ctx.seeds["seed"] = opt.seed;

  Dataset d = load_csv(opt.dataset, read_schema_file(schema_path));
  std::vector<ModelSpec> specs = default_model_specs();
  if (!opt.models.empty()) {
    specs = read_model_specs(opt.models);
    ctx.configs["models"] = opt.models;
  }
  DesignMatrix design = DesignMatrix::from_dataset(d);
  SplitPlan plan = make_split_plan(design.n_rows(), opt.iterations, opt.test_fraction, opt.seed);
  if (!plan.covers_all) err << "warning: split plan leaves some rows out of every test set\n";

  const std::size_t threads = worker_count();
  ExperimentReport report = run_experiment(design, specs, plan, threads, dataset_id(d));
  bool failed = false;
  for (const auto& row : report.rows) {
    if (row.error) {
      failed = true;
      err << fmt::format("error: model '{}' failed: {}\n", row.spec.name, *row.error);
    }
  }
  try {
    report.selection = select_final_model(report, opt.fit_weight);
  } catch (const InputError& e) {
    failed = true;
    err << "error: " << e.what() << '\n';
  }

  fs::create_directories(ctx.out);
  write_text(ctx.out / "report.md", render_report(report, ReportFormat::kMarkdown));
  write_text(ctx.out / "report.csv", render_report(report, ReportFormat::kCsv));
  write_text(ctx.out / "report.json", render_report(report, ReportFormat::kJson));

  fs::create_directories(ctx.out / "models");
  json artifacts = json::object();
  for (const auto& spec : specs) {
    if (report.row(spec.name).error) continue;
    try {
      FittedModel m = fit_model(spec, design, model_seed(opt.seed, spec, SIZE_MAX), threads);
      fs::path file = fs::path("models") / (slug(spec.name) + ".json");
      save_model(m, ctx.out / file);
      artifacts[spec.name] = file.string();
    } catch (const Error& e) {
      failed = true;
      err << fmt::format("error: full-data refit of '{}' failed: {}\n", spec.name, e.what());
    }
  }
  write_text(ctx.out / "models" / "index.json", artifacts.dump(2) + "\n");
  write_manifest(ctx);

  if (report.selection) out << "selected model: " << report.selection->model << '\n';
  return failed ? kExitModel : kExitOk;
}

// ---- interpret -----------------------------------------------------------

struct InterpretOptions {
  std::string model;
  std::string dataset;
  std::string schema;
  std::string features = "top15";
  std::size_t grid = 51;
};

/// Design matrix with the model's feature columns, in the model's order.
DesignMatrix design_for_model(const Dataset& d, const FittedModel& m) {
  auto responses = d.names_of_kind(ColumnKind::kResponse);
  if (responses.size() != 1) throw InputError("dataset needs exactly one response column");
  std::vector<std::string> missing;
  for (const auto& f : m.feature_names()) {
    if (!d.has_column(f)) missing.push_back(f);
  }
  if (!missing.empty()) throw InputError(fmt::format("dataset lacks model features: {}", fmt::join(missing, ", ")));
  const auto& names = m.feature_names();
  Matrix x(d.n_rows(), names.size());
  for (std::size_t j = 0; j < names.size(); ++j) {
    auto col = d.values(names[j]);
    for (std::size_t i = 0; i < d.n_rows(); ++i) x(i, j) = col[i];
  }
  auto y = d.values(responses.front());
  return DesignMatrix(names, std::move(x), std::vector<double>(y.begin(), y.end()));
}

std::vector<std::string> parse_feature_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_interpret(const InterpretOptions& opt, RunContext& ctx, std::ostream& out, std::ostream& err) {
  fs::path schema_path = default_schema(opt.dataset, opt.schema);
  ctx.configs["schema"] = schema_path.string();
  ctx.configs["model"] = opt.model;

  FittedModel model = load_model(opt.model);
  Dataset d = load_csv(opt.dataset, read_schema_file(schema_path));
  DesignMatrix design = design_for_model(d, model);

  const bool tree_based = !model.trees().empty();
  std::optional<ImportanceRanking> ranking;
  if (tree_based) ranking = variable_importance(model, fs::path(opt.model).stem().string());

  std::vector<std::string> features;
  std::size_t top = 0;
  if (opt.features.rfind("top", 0) == 0 && opt.features.size() > 3 &&
      std::all_of(opt.features.begin() + 3, opt.features.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    top = std::stoul(opt.features.substr(3));
    if (!ranking) throw InputError(fmt::format("'{}' needs a tree-based model to rank features", opt.features));
    for (const auto& e : top_k(*ranking, top).entries) features.push_back(e.feature);
  } else {
    features = parse_feature_list(opt.features);
    std::vector<std::string> unknown;
    for (const auto& f : features) {
      const auto& names = model.feature_names();
      if (std::find(names.begin(), names.end(), f) == names.end()) unknown.push_back(f);
    }
    if (!unknown.empty()) throw InputError(fmt::format("unknown feature(s): {}", fmt::join(unknown, ", ")));
    if (features.empty()) throw InputError("no features requested");
  }

  fs::create_directories(ctx.out);
  if (ranking) {
    std::ofstream f(ctx.out / "importance.csv");
    write_importance_csv(*ranking, f);
  } else {
    err << "warning: model has no trees; importance.csv not written\n";
  }

  // Metadata envelope for plotting tools: which file holds what.
  json meta = {{"model", opt.model},
               {"model_kind", std::string(to_string(model.kind()))},
               {"dataset", opt.dataset},
               {"rows", design.n_rows()},
               {"importance", ranking ? json("importance.csv") : json(nullptr)}};

  const std::size_t threads = worker_count();
  json pdp = json::array();
  for (const auto& feature : features) {
    PDPCurve curve = partial_dependence(model, design, feature, opt.grid, threads);
    std::string file = fmt::format("pdp_{}.csv", feature);
    std::ofstream f(ctx.out / file);
    write_pdp_csv(curve, f);
    pdp.push_back({{"feature", feature},
                   {"file", file},
                   {"columns", {"grid", "mean", "lo", "hi"}},
                   {"grid_points", curve.grid.size()},
                   {"band", curve.has_band ? "2.5-97.5 percentiles of per-tree curves" : "none"},
                   {"rug", curve.rug}});
  }
  meta["partial_dependence"] = std::move(pdp);

  auto fitted = predict(model, design.features());
  QQDiagnostic qq = qq_residuals(design.response(), fitted);
  {
    std::ofstream f(ctx.out / "qq.csv");
    write_qq_csv(qq, f);
  }
  meta["qq"] = {{"file", "qq.csv"},
                {"columns", {"theoretical", "sample", "lo", "hi"}},
                {"band", "pointwise 95% normal order-statistic envelope"},
                {"fraction_inside", qq.fraction_inside()}};
  ActualVsFitted avf = actual_vs_fitted(design.response(), fitted);
  {
    std::ofstream f(ctx.out / "actual_vs_fitted.csv");
    write_actual_vs_fitted_csv(avf, f);
  }
  meta["actual_vs_fitted"] = {{"file", "actual_vs_fitted.csv"}, {"pearson_rho", avf.pearson_rho}};
  write_text(ctx.out / "interpret.json", meta.dump(2) + "\n");
  write_manifest(ctx);
  out << fmt::format("wrote {} partial dependence file(s); actual vs fitted rho = {:.3f}\n", features.size(),
                     avf.pearson_rho);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Panel regression model comparison"};
  app.require_subcommand(1);
  app.set_version_flag("--version", PANELREG_VERSION);

  RunContext ctx;
  for (int i = 1; i < argc; ++i) ctx.args.emplace_back(argv[i]);
  std::string out_dir;

  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic county-month panel");
  s->add_option("--config", synth.config, "Panel config file (key = value lines)")->check(CLI::ExistingFile);
  s->add_option("--counties", synth.panel.n_counties, "Number of counties");
  s->add_option("--year-first", synth.panel.year_first, "First year");
  s->add_option("--year-last", synth.panel.year_last, "Last year (inclusive)");
  s->add_option("--features", synth.panel.n_features, "Feature count including urbanization");
  s->add_option("--law", synth.law, "linear | friedman | step-interaction");
  s->add_option("--noise", synth.panel.noise_sd, "Rate noise standard deviation");
  s->add_option("--urban-fraction", synth.panel.urban_fraction, "Share of urban counties");
  s->add_option("--seed", synth.panel.seed, "Random seed");
  s->add_option("--out", out_dir, "Output directory")->required();

  IngestOptions ingest;
  auto* g = app.add_subcommand("ingest", "Join, normalize and prune source tables");
  g->add_option("--inputs", ingest.inputs, "Source CSV files; the first is the mortality table")
      ->required()
      ->check(CLI::ExistingFile);
  g->add_option("--schema", ingest.schema, "Schema file")->required()->check(CLI::ExistingFile);
  g->add_option("--per", ingest.per, "Rate denominator");
  g->add_option("--max-missing", ingest.max_missing, "Drop features with a larger missing fraction");
  g->add_option("--rho", ingest.rho, "Correlation pruning threshold");
  g->add_option("--out", out_dir, "Output directory")->required();

  SplitOptions split;
  auto* p = app.add_subcommand("split", "Partition a dataset by urbanization");
  p->add_option("--dataset", split.dataset, "Preprocessed dataset CSV")->required()->check(CLI::ExistingFile);
  p->add_option("--schema", split.schema, "Schema file (default: schema.txt beside the dataset)");
  p->add_option("--column", split.column, "Binary partition column");
  p->add_option("--out", out_dir, "Output directory")->required();

  EvaluateOptions evaluate;
  auto* e = app.add_subcommand("evaluate", "Run the randomized holdout comparison");
  e->add_option("--dataset", evaluate.dataset, "Preprocessed dataset CSV")->required()->check(CLI::ExistingFile);
  e->add_option("--schema", evaluate.schema, "Schema file (default: schema.txt beside the dataset)");
  e->add_option("--models", evaluate.models, "Model list JSON (default: the seven-model zoo)")
      ->check(CLI::ExistingFile);
  e->add_option("--iterations", evaluate.iterations, "Holdout iterations");
  e->add_option("--test-fraction", evaluate.test_fraction, "Held-out share per iteration");
  e->add_option("--seed", evaluate.seed, "Random seed");
  e->add_option("--fit-weight", evaluate.fit_weight, "Weight of in-sample RMSE in the selection score");
  e->add_option("--out", out_dir, "Output directory")->required();

  InterpretOptions interpret;
  auto* t = app.add_subcommand("interpret", "Importance, partial dependence and residual diagnostics");
  t->add_option("--model", interpret.model, "Serialized model JSON")->required()->check(CLI::ExistingFile);
  t->add_option("--dataset", interpret.dataset, "Dataset CSV")->required()->check(CLI::ExistingFile);
  t->add_option("--schema", interpret.schema, "Schema file (default: schema.txt beside the dataset)");
  t->add_option("--features", interpret.features, "Comma-separated names, or topN (e.g. top15)");
  t->add_option("--grid", interpret.grid, "Partial dependence grid size");
  t->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& pe) {
    int code = app.exit(pe, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  ctx.out = out_dir;
  try {
    if (*s) {
      ctx.command = "synth";
      return cmd_synth(synth, ctx, out);
    }
    if (*g) {
      ctx.command = "ingest";
      return cmd_ingest(ingest, ctx, out, err);
    }
    if (*p) {
      ctx.command = "split";
      return cmd_split(split, ctx, out, err);
    }
    if (*e) {
      ctx.command = "evaluate";
      return cmd_evaluate(evaluate, ctx, out, err);
    }
    ctx.command = "interpret";
    return cmd_interpret(interpret, ctx, out, err);
  } catch (const ModelError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitModel;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitInput;
  } catch (const fs::filesystem_error& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitInput;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitModel;
  }
}

}  // namespace panelreg
