#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "panelreg/error.hpp"
#include "panelreg/harness.hpp"

using namespace panelreg;
using nlohmann::json;

namespace {

ModelRow row(std::string name, ModelKind kind, double in_rmse, double out_rmse, double in_mae = 1.0,
             double out_mae = 1.0) {
  ModelRow r;
  r.spec = {std::move(name), kind, {}};
  r.in_sample = {kind == ModelKind::kNull ? std::nullopt : std::optional<double>(0.5), in_rmse, in_mae};
  r.out_of_sample = {kind == ModelKind::kNull ? std::nullopt : std::optional<double>(0.4), out_rmse, out_mae};
  return r;
}

DesignMatrix small_problem(std::uint64_t seed, std::size_t n = 120) {
  std::mt19937_64 rng(seed);
  auto rows = fixture::uniform_rows(rng, n, 5);
  return fixture::design(rows, fixture::friedman(rng, rows, 1.0));
}

std::vector<std::string> csv_cells(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

TEST_CASE("model specs parse and reject bad entries") {
  auto specs = parse_model_specs(json::parse(R"([
    {"name": "f", "kind": "forest", "params": {"trees": 10, "bootstrap": false}},
    {"name": "o", "kind": "ols"}])"));
  REQUIRE(specs.size() == 2);
  CHECK(specs[0].kind == ModelKind::kForest);
  CHECK(specs[0].hyperparameters.at("trees") == 10);
  CHECK(specs[0].hyperparameters.at("bootstrap") == 0);
  CHECK(parse_model_specs(model_specs_to_json(specs))[0].hyperparameters == specs[0].hyperparameters);

  CHECK_THROWS_AS(parse_model_specs(json::object()), InputError);
  CHECK_THROWS_AS(parse_model_specs(json::array()), InputError);
  CHECK_THROWS_AS(parse_model_specs(json::parse(R"([{"name": "a", "kind": "svm"}])")), InputError);
  CHECK_THROWS_AS(parse_model_specs(json::parse(R"([{"kind": "ols"}])")), InputError);
  CHECK_THROWS_AS(parse_model_specs(json::parse(R"([{"name": "a", "kind": "ols"}, {"name": "a", "kind": "null"}])")),
                  InputError);
  CHECK_THROWS_AS(parse_model_specs(json::parse(R"([{"name": "a", "kind": "ridge", "params": {"alpha": 1}}])")),
                  InputError);
  auto bad_count = parse_model_specs(json::parse(R"([{"name": "a", "kind": "forest", "params": {"trees": 2.5}}])"));
  CHECK_THROWS_AS(fit_model(bad_count[0], small_problem(1), 0), InputError);
}

TEST_CASE("default zoo has seven models and one null") {
  auto specs = default_model_specs();
  CHECK(specs.size() == 7);
  CHECK(std::count_if(specs.begin(), specs.end(), [](const auto& s) { return s.kind == ModelKind::kNull; }) == 1);
  std::set<ModelKind> kinds;
  for (const auto& s : specs) kinds.insert(s.kind);
  CHECK(kinds.size() == 7);
}

TEST_CASE("null-only experiment") {
  auto d = small_problem(2);
  auto plan = make_split_plan(d.n_rows(), 10, 0.2, 3);
  auto r = run_experiment(d, {{"null", ModelKind::kNull, {}}}, plan);
  const auto& null_row = r.row("null");
  CHECK_FALSE(null_row.in_sample.r_squared.has_value());
  CHECK_FALSE(null_row.out_of_sample.r_squared.has_value());
  for (const auto& it : null_row.iterations) {
    // The training mean is a little off on the test rows, so raw R^2 is just below zero.
    REQUIRE(it.out_of_sample.r_squared.has_value());
    CHECK(*it.out_of_sample.r_squared <= 0.0);
    CHECK(*it.out_of_sample.r_squared > -0.2);
    CHECK(std::fabs(*it.in_sample.r_squared) < 1e-12);
  }
  auto md = render_report(r, ReportFormat::kMarkdown);
  CHECK(md.find("| 1 | null | NA |") != std::string::npos);
  CHECK_THROWS_AS(select_final_model(r), InputError);
}

TEST_CASE("single iteration matches a direct fit and score") {
  auto d = small_problem(3);
  auto plan = make_split_plan(d.n_rows(), 1, 0.25, 8);
  ModelSpec spec{"ols", ModelKind::kOls, {}};
  auto r = run_experiment(d, {spec}, plan);
  auto train = d.subset(plan.train_indices(0)), test = d.subset(plan.test_index_sets[0]);
  auto m = fit_ols(train);
  auto pred = predict(m, test.features());
  auto fit = predict(m, train.features());
  const auto& got = r.row("ols");
  CHECK(got.out_of_sample.rmse == doctest::Approx(oracle::rmse(test.response(), pred)).epsilon(1e-12));
  CHECK(got.out_of_sample.mae == doctest::Approx(oracle::mae(test.response(), pred)).epsilon(1e-12));
  CHECK(*got.out_of_sample.r_squared == doctest::Approx(oracle::r_squared(test.response(), pred)).epsilon(1e-12));
  CHECK(got.in_sample.rmse == doctest::Approx(oracle::rmse(train.response(), fit)).epsilon(1e-12));
}

TEST_CASE("averages are means of the iterations") {
  auto d = small_problem(4);
  auto plan = make_split_plan(d.n_rows(), 6, 0.2, 9);
  auto r = run_experiment(d, {{"ols", ModelKind::kOls, {}}, {"tree", ModelKind::kTree, {{"n_min", 4}}}}, plan);
  for (const auto& row : r.rows) {
    REQUIRE(row.iterations.size() == 6);
    double r2 = 0, rm = 0, ma = 0;
    for (const auto& it : row.iterations) {
      r2 += *it.out_of_sample.r_squared;
      rm += it.out_of_sample.rmse;
      ma += it.in_sample.mae;
    }
    CHECK(*row.out_of_sample.r_squared == doctest::Approx(r2 / 6).epsilon(1e-12));
    CHECK(row.out_of_sample.rmse == doctest::Approx(rm / 6).epsilon(1e-12));
    CHECK(row.in_sample.mae == doctest::Approx(ma / 6).epsilon(1e-12));
  }
}

TEST_CASE("results do not depend on the thread count") {
  auto d = small_problem(5, 150);
  auto plan = make_split_plan(d.n_rows(), 5, 0.2, 10);
  std::vector<ModelSpec> specs{{"forest", ModelKind::kForest, {{"trees", 20}}},
                               {"tree", ModelKind::kTree, {{"n_min", 3}, {"m_try", 2}}},
                               {"gbm", ModelKind::kGbm, {{"trees", 20}}},
                               {"null", ModelKind::kNull, {}}};
  auto one = report_to_json(run_experiment(d, specs, plan, 1)).dump();
  auto eight = report_to_json(run_experiment(d, specs, plan, 8)).dump();
  CHECK(one == eight);
}

TEST_CASE("improvement against the null model") {
  ExperimentReport r;
  r.rows = {row("null", ModelKind::kNull, 10, 10, 8, 8), row("m", ModelKind::kOls, 4, 7, 6, 2)};
  auto imp = improvement_vs_null(r, "m");
  CHECK(imp.in_rmse_pct == doctest::Approx(60.0));
  CHECK(imp.out_rmse_pct == doctest::Approx(30.0));
  CHECK(imp.in_mae_pct == doctest::Approx(25.0));
  CHECK(imp.out_mae_pct == doctest::Approx(75.0));
  CHECK(improvement_vs_null(r, "null").out_rmse_pct == 0.0);
  CHECK_THROWS_AS(improvement_vs_null(r, "missing"), InputError);
  ExperimentReport no_null;
  no_null.rows = {row("m", ModelKind::kOls, 1, 1)};
  CHECK_THROWS_AS(improvement_vs_null(no_null, "m"), InputError);
}

TEST_CASE("selection") {
  SUBCASE("a model better on both axes wins") {
    ExperimentReport r;
    r.rows = {row("a", ModelKind::kOls, 2, 3), row("b", ModelKind::kTree, 1, 2), row("n", ModelKind::kNull, 0.1, 0.1)};
    CHECK(select_final_model(r).model == "b");
    CHECK(select_final_model(r, 0.0).model == "b");
    CHECK(select_final_model(r, 1.0).model == "b");
  }
  SUBCASE("overfitting does not win") {
    ExperimentReport r;
    r.rows = {row("overfit", ModelKind::kGbm, 0.0, 3.0), row("steady", ModelKind::kForest, 1.0, 2.0)};
    auto s = select_final_model(r);
    CHECK(s.model == "steady");
    CHECK(s.ranking[0].score == doctest::Approx(0.2 * 1 + 0.8 * 2));
    CHECK(s.ranking[1].score == doctest::Approx(0.8 * 3));
    CHECK(s.rationale.find("overfitting") != std::string::npos);
  }
  SUBCASE("a much better fit breaks a near tie in prediction") {
    ExperimentReport r;
    r.rows = {row("loose", ModelKind::kOls, 3.0, 2.00), row("tight", ModelKind::kForest, 1.0, 2.05)};
    CHECK(select_final_model(r).model == "tight");
    CHECK(select_final_model(r, 0.0).model == "loose");
  }
  SUBCASE("exact ties go to the name") {
    ExperimentReport r;
    r.rows = {row("zeta", ModelKind::kOls, 1, 2), row("alpha", ModelKind::kRidge, 1, 2)};
    CHECK(select_final_model(r).model == "alpha");
  }
  SUBCASE("failed rows are skipped and order does not matter") {
    ExperimentReport r;
    r.rows = {row("a", ModelKind::kOls, 2, 3), row("b", ModelKind::kTree, 1, 2), row("c", ModelKind::kLasso, 0, 0)};
    r.rows[2].error = "did not converge";
    auto forward = select_final_model(r);
    std::reverse(r.rows.begin(), r.rows.end());
    auto backward = select_final_model(r);
    CHECK(forward.model == "b");
    CHECK(backward.model == "b");
    CHECK(forward.ranking.size() == 2);
  }
  ExperimentReport r;
  r.rows = {row("a", ModelKind::kOls, 1, 1)};
  CHECK_THROWS_AS(select_final_model(r, 1.5), InputError);
}

TEST_CASE("rendering") {
  ExperimentReport r;
  r.dataset_id = "abc";
  r.iteration_count = 30;
  r.test_fraction = 0.2;
  r.rows = {row("Random Forest", ModelKind::kForest, 0.1234567, 0.2), row("Odd, name", ModelKind::kOls, 1, 2),
            row("Null", ModelKind::kNull, 3, 3)};
  r.selection = select_final_model(r);

  auto md = render_report(r, ReportFormat::kMarkdown);
  CHECK(md.find("| 1 | Random Forest | 0.500 | 0.123 |") != std::string::npos);
  CHECK(md.find("| 3 | Null | NA |") != std::string::npos);
  CHECK(md.find("Final model: **Random Forest**") != std::string::npos);
  CHECK(md.find("30 x 80/20") != std::string::npos);

  auto csv = render_report(r, ReportFormat::kCsv);
  std::istringstream in(csv);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "#,Model,fit_r2,fit_rmse,fit_mae,pred_r2,pred_rmse,pred_mae");
  auto cells = csv_cells(lines[1]);
  REQUIRE(cells.size() == 8);
  CHECK(std::stod(cells[3]) == doctest::Approx(0.1234567).epsilon(1e-6));
  CHECK(cells[3] == "0.123457");
  CHECK(lines[2].rfind("2,\"Odd, name\",", 0) == 0);
  CHECK(csv_cells(lines[3])[2] == "NA");

  auto j = json::parse(render_report(r, ReportFormat::kJson));
  CHECK(j["models"][0]["in_sample"]["rmse"] == 0.1234567);
  CHECK(j["models"][2]["in_sample"]["r_squared"].is_null());
  CHECK(j["selection"]["model"] == "Random Forest");

  CHECK(parse_report_format("md") == ReportFormat::kMarkdown);
  CHECK_THROWS_AS(parse_report_format("xlsx"), InputError);
}

TEST_CASE("a failing model gets an error row and the rest still run") {
  auto d = small_problem(6);
  auto plan = make_split_plan(d.n_rows(), 3, 0.2, 1);
  std::vector<ModelSpec> specs{{"lasso", ModelKind::kLasso, {{"lambda", 1e-4}, {"max_sweeps", 1}, {"tolerance", 1e-15}}},
                               {"ols", ModelKind::kOls, {}},
                               {"null", ModelKind::kNull, {}}};
  auto r = run_experiment(d, specs, plan);
  REQUIRE(r.row("lasso").error.has_value());
  CHECK(r.row("lasso").error->find("iteration 0") == 0);
  CHECK_FALSE(r.row("ols").error.has_value());
  CHECK(select_final_model(r).model == "ols");
  CHECK(render_report(r, ReportFormat::kMarkdown).find("| 1 | lasso | error:") != std::string::npos);
  CHECK(render_report(r, ReportFormat::kCsv).find("1,lasso,NA,NA,NA,NA,NA,NA") != std::string::npos);
  CHECK_THROWS_AS(improvement_vs_null(r, "lasso"), InputError);

  CHECK_THROWS_AS(run_experiment(d, specs, make_split_plan(d.n_rows() + 1, 3, 0.2, 1)), InputError);
  CHECK_THROWS_AS(run_experiment(d, {specs[1], specs[1]}, plan), InputError);
}

TEST_CASE("model seeds differ per model and iteration") {
  ModelSpec a{"a", ModelKind::kForest, {}}, b{"b", ModelKind::kForest, {}};
  CHECK(model_seed(1, a, 0) != model_seed(1, a, 1));
  CHECK(model_seed(1, a, 0) != model_seed(1, b, 0));
  CHECK(model_seed(1, a, 0) != model_seed(2, a, 0));
  CHECK(model_seed(1, a, 0) == model_seed(1, a, 0));
}
