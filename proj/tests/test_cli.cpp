#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "panelreg/cli.hpp"
#include "panelreg/dataset.hpp"
#include "panelreg/harness.hpp"
#include "panelreg/interpret.hpp"
#include "panelreg/serialize.hpp"
#include "panelreg/split.hpp"

using namespace panelreg;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "panelreg");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// Scratch directory holding a small synthetic panel, removed on exit.
struct Workspace {
  fs::path root;

  explicit Workspace(const std::string& name) {
    root = fs::temp_directory_path() / fmt::format("panelreg_cli_{}_{}", name, ::getpid());
    fs::remove_all(root);
    auto r = run({"synth", "--counties", "4", "--year-first", "2001", "--year-last", "2003", "--features", "16", "--seed", "3", "--out",
                  (root / "raw").string()});
    REQUIRE(r.code == 0);
  }
  ~Workspace() { fs::remove_all(root); }

  fs::path raw(const std::string& f) const { return root / "raw" / f; }

  Result ingest(const std::string& out = "clean") const {
    return run({"ingest", "--inputs", raw("suicide.csv").string(), raw("socio.csv").string(),
                raw("climate.csv").string(), "--schema", raw("schema.txt").string(), "--out", (root / out).string()});
  }
};

const char* kSmallModels = R"([
  {"name": "OLS", "kind": "ols"},
  {"name": "Forest", "kind": "forest", "params": {"trees": 20}},
  {"name": "Null", "kind": "null"}])";

}  // namespace

TEST_CASE("synth writes the panel and a manifest") {
  Workspace ws("synth");
  for (auto f : {"suicide.csv", "socio.csv", "climate.csv", "schema.txt", "config.txt", "manifest.json"}) {
    CHECK_MESSAGE(fs::exists(ws.raw(f)), f);
  }
  auto m = json::parse(slurp(ws.raw("manifest.json")));
  CHECK(m["command"] == "synth");
  CHECK(m["seeds"]["seed"] == 3);
  CHECK(lines(ws.raw("suicide.csv")).size() == 4 * 3 * 12 + 1);

  // Rerunning from the recorded config reproduces the files.
  auto again = run({"synth", "--config", ws.raw("config.txt").string(), "--out", (ws.root / "again").string()});
  REQUIRE(again.code == 0);
  CHECK(slurp(ws.root / "again" / "climate.csv") == slurp(ws.raw("climate.csv")));
}

TEST_CASE("argument errors exit 2") {
  CHECK(run({}).code == kExitInput);
  CHECK(run({"frobnicate"}).code == kExitInput);
  CHECK(run({"evaluate", "--dataset", "/nonexistent.csv", "--out", "/tmp/x"}).code == kExitInput);
  CHECK(run({"--version"}).code == kExitOk);
  CHECK(run({"synth", "--counties", "1", "--out", "/tmp/panelreg_never"}).code == kExitInput);
  CHECK_FALSE(fs::exists("/tmp/panelreg_never"));
}

TEST_CASE("ingest merges the three tables") {
  Workspace ws("ingest");
  auto r = ws.ingest();
  REQUIRE(r.code == 0);
  auto header = lines(ws.root / "clean" / "dataset.csv").front();
  CHECK(header.find("rate") != std::string::npos);
  CHECK(header.find(",count,") == std::string::npos);
  CHECK(lines(ws.root / "clean" / "dataset.csv").size() == 145);
  auto lineage = json::parse(slurp(ws.root / "clean" / "lineage.json"));
  std::vector<std::string> ops;
  for (const auto& s : lineage) ops.push_back(s["op"]);
  for (auto op : {"join_on_keys", "normalize_rate", "drop_sparse_columns", "prune_correlated"}) {
    CHECK_MESSAGE(std::find(ops.begin(), ops.end(), op) != ops.end(), op);
  }
  CHECK(json::parse(slurp(ws.root / "clean" / "manifest.json"))["command"] == "ingest");
}

TEST_CASE("ingest drops a sparse column and prunes a duplicate") {
  Workspace ws("ingest_rules");
  // Extra monthly table: `sparse` is 30% missing, `dup` copies x3.
  auto climate = lines(ws.raw("climate.csv"));
  std::ostringstream extra;
  extra << "county,year,month,sparse,dup\n";
  auto head = climate.front();
  std::size_t x3_col = 0;
  {
    std::stringstream ss(head);
    std::string c;
    for (std::size_t i = 0; std::getline(ss, c, ','); ++i) {
      if (c == "x3") x3_col = i;
    }
  }
  for (std::size_t i = 1; i < climate.size(); ++i) {
    std::vector<std::string> cells;
    std::stringstream ss(climate[i]);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    bool blank = (i - 1) % 10 < 3;
    extra << cells[0] << ',' << cells[1] << ',' << cells[2] << ',' << (blank ? "NA" : std::to_string(i % 7)) << ','
          << cells[x3_col] << '\n';
  }
  spit(ws.raw("extra.csv"), extra.str());
  spit(ws.raw("schema.txt"), slurp(ws.raw("schema.txt")) + "sparse,numeric-feature,monthly\ndup,numeric-feature,monthly\n");

  auto r = run({"ingest", "--inputs", ws.raw("suicide.csv").string(), ws.raw("socio.csv").string(),
                ws.raw("climate.csv").string(), ws.raw("extra.csv").string(), "--schema", ws.raw("schema.txt").string(),
                "--out", (ws.root / "clean").string()});
  REQUIRE(r.code == 0);
  auto header = lines(ws.root / "clean" / "dataset.csv").front();
  CHECK(header.find("sparse") == std::string::npos);
  CHECK(header.find(",x3") != std::string::npos);
  CHECK(header.find("dup") == std::string::npos);
  auto lineage = json::parse(slurp(ws.root / "clean" / "lineage.json"));
  bool sparse_named = false, dup_named = false;
  for (const auto& step : lineage) {
    for (const auto& c : step["removed_columns"]) {
      if (c == "sparse") sparse_named = step["op"] == "drop_sparse_columns";
      if (c == "dup") dup_named = step["op"] == "prune_correlated";
    }
    if (step["op"] == "prune_correlated") CHECK(step.dump().find("\"rho\"") != std::string::npos);
  }
  CHECK(sparse_named);
  CHECK(dup_named);
  CHECK(r.out.find("sparse") != std::string::npos);
}

TEST_CASE("ingest schema errors list the offending columns") {
  Workspace ws("ingest_bad");
  auto schema = slurp(ws.raw("schema.txt"));
  std::string trimmed;
  std::stringstream ss(schema);
  for (std::string l; std::getline(ss, l);) {
    if (l.rfind("x4,", 0) != 0 && l.rfind("x7,", 0) != 0) trimmed += l + "\n";
  }
  spit(ws.raw("schema.txt"), trimmed);
  auto r = ws.ingest();
  CHECK(r.code == kExitInput);
  CHECK(r.err.find("x4, x7") != std::string::npos);

  spit(ws.raw("schema.txt"), "county,key,static\nyear,sideways,annual\n");
  CHECK(ws.ingest().code == kExitInput);
}

TEST_CASE("split partitions rows by urbanization") {
  Workspace ws("split");
  REQUIRE(ws.ingest().code == 0);
  auto r = run({"split", "--dataset", (ws.root / "clean" / "dataset.csv").string(), "--out", (ws.root / "parts").string()});
  REQUIRE(r.code == 0);
  auto all = lines(ws.root / "clean" / "dataset.csv");
  auto lcm = lines(ws.root / "parts" / "lcm.csv");
  auto msm = lines(ws.root / "parts" / "msm.csv");
  CHECK(lcm.size() - 1 + msm.size() - 1 == all.size() - 1);
  CHECK(lcm.size() > 1);
  CHECK(msm.size() > 1);

  // Filter oracle: drop the urbanization cell from each input line and route by its value.
  std::vector<std::string> names;
  {
    std::stringstream ss(all.front());
    for (std::string c; std::getline(ss, c, ',');) names.push_back(c);
  }
  auto u = static_cast<std::size_t>(std::find(names.begin(), names.end(), "urbanization") - names.begin());
  REQUIRE(u < names.size());
  std::vector<std::string> want_lcm, want_msm;
  for (const auto& line : all) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    std::string flag = cells[u];
    cells.erase(cells.begin() + static_cast<std::ptrdiff_t>(u));
    std::string joined = fmt::format("{}", fmt::join(cells, ","));
    if (flag == "urbanization") {
      want_lcm.push_back(joined);
      want_msm.push_back(joined);
    } else {
      (flag == "1" ? want_lcm : want_msm).push_back(joined);
    }
  }
  CHECK(lcm == want_lcm);
  CHECK(msm == want_msm);
}

TEST_CASE("split of an all-urban dataset warns and writes an empty msm") {
  Workspace ws("split_all");
  REQUIRE(ws.ingest().code == 0);
  auto rows = lines(ws.root / "clean" / "dataset.csv");
  std::vector<std::string> names;
  std::stringstream hs(rows.front());
  for (std::string c; std::getline(hs, c, ',');) names.push_back(c);
  auto u = static_cast<std::size_t>(std::find(names.begin(), names.end(), "urbanization") - names.begin());
  std::string text = rows.front() + "\n";
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::vector<std::string> cells;
    std::stringstream ss(rows[i]);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    cells[u] = "1";
    text += fmt::format("{}\n", fmt::join(cells, ","));
  }
  spit(ws.root / "clean" / "dataset.csv", text);
  auto r = run({"split", "--dataset", (ws.root / "clean" / "dataset.csv").string(), "--out", (ws.root / "parts").string()});
  REQUIRE(r.code == 0);
  CHECK(lines(ws.root / "parts" / "msm.csv").size() == 1);
  CHECK(lines(ws.root / "parts" / "lcm.csv").size() == rows.size());
  CHECK(r.err.find("warning") != std::string::npos);
}

TEST_CASE("split without an urbanization column exits 2") {
  Workspace ws("split_none");
  auto r = run({"ingest", "--inputs", ws.raw("suicide.csv").string(), ws.raw("climate.csv").string(), "--schema",
                ws.raw("schema.txt").string(), "--out", (ws.root / "clean").string()});
  REQUIRE(r.code == 0);
  auto s = run({"split", "--dataset", (ws.root / "clean" / "dataset.csv").string(), "--out", (ws.root / "parts").string()});
  CHECK(s.code == kExitInput);
  CHECK(s.err.find("urbanization") != std::string::npos);
}

TEST_CASE("evaluate writes reports, models and a manifest") {
  Workspace ws("evaluate");
  REQUIRE(ws.ingest().code == 0);
  spit(ws.root / "models.json", kSmallModels);
  auto data = (ws.root / "clean" / "dataset.csv").string();
  auto eval = [&](const std::string& out, const std::string& iterations) {
    return run({"evaluate", "--dataset", data, "--models", (ws.root / "models.json").string(), "--iterations",
                iterations, "--seed", "17", "--out", (ws.root / out).string()});
  };
  auto r = eval("eval", "3");
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("selected model: ", 0) == 0);
  for (auto f : {"report.md", "report.csv", "report.json", "manifest.json", "models/index.json", "models/forest.json",
                 "models/ols.json", "models/null.json"}) {
    CHECK_MESSAGE(fs::exists(ws.root / "eval" / f), f);
  }
  auto report = json::parse(slurp(ws.root / "eval" / "report.json"));
  CHECK(report["models"].size() == 3);
  CHECK(report["iterations"] == 3);
  CHECK(r.out == fmt::format("selected model: {}\n", report["selection"]["model"].get<std::string>()));

  REQUIRE(eval("eval2", "3").code == 0);
  CHECK(slurp(ws.root / "eval" / "report.json") == slurp(ws.root / "eval2" / "report.json"));

  // One iteration: the report matches a direct fit on the plan's single split.
  REQUIRE(eval("one", "1").code == 0);
  auto one = json::parse(slurp(ws.root / "one" / "report.json"));
  auto ds = load_csv(data, read_schema_file(ws.root / "clean" / "schema.txt"));
  auto d = DesignMatrix::from_dataset(ds);
  auto plan = make_split_plan(d.n_rows(), 1, 0.2, 17);
  auto train = d.subset(plan.train_indices(0)), test = d.subset(plan.test_index_sets[0]);
  auto ols = fit_ols(train);
  auto direct = score(test.response(), predict(ols, test.features()));
  CHECK(one["models"][0]["out_of_sample"]["rmse"].get<double>() == doctest::Approx(direct.rmse).epsilon(1e-12));
  CHECK(one["models"][0]["out_of_sample"]["mae"].get<double>() == doctest::Approx(direct.mae).epsilon(1e-12));

  // The saved full-data refit reproduces a direct refit.
  auto saved = load_model(ws.root / "eval" / "models" / "ols.json");
  auto refit = fit_ols(d);
  CHECK(predict(saved, d.features()) == predict(refit, d.features()));
}

TEST_CASE("evaluate exits 3 on a model failure and still writes the report") {
  Workspace ws("evaluate_fail");
  REQUIRE(ws.ingest().code == 0);
  spit(ws.root / "models.json", R"([
    {"name": "Stuck Lasso", "kind": "lasso", "params": {"lambda": 1e-6, "max_sweeps": 1, "tolerance": 1e-15}},
    {"name": "OLS", "kind": "ols"},
    {"name": "Null", "kind": "null"}])");
  auto r = run({"evaluate", "--dataset", (ws.root / "clean" / "dataset.csv").string(), "--models",
                (ws.root / "models.json").string(), "--iterations", "2", "--out", (ws.root / "eval").string()});
  CHECK(r.code == kExitModel);
  CHECK(r.err.find("Stuck Lasso") != std::string::npos);
  CHECK(slurp(ws.root / "eval" / "report.md").find("error:") != std::string::npos);
  CHECK(r.out == "selected model: OLS\n");
  CHECK(fs::exists(ws.root / "eval" / "models" / "ols.json"));

  spit(ws.root / "bad.json", R"([{"name": "x", "kind": "svm"}])");
  auto bad = run({"evaluate", "--dataset", (ws.root / "clean" / "dataset.csv").string(), "--models",
                  (ws.root / "bad.json").string(), "--out", (ws.root / "eval_bad").string()});
  CHECK(bad.code == kExitInput);
}

TEST_CASE("interpret writes plot data that matches the library") {
  Workspace ws("interpret");
  REQUIRE(ws.ingest().code == 0);
  spit(ws.root / "models.json", kSmallModels);
  auto data = (ws.root / "clean" / "dataset.csv").string();
  REQUIRE(run({"evaluate", "--dataset", data, "--models", (ws.root / "models.json").string(), "--iterations", "2",
               "--out", (ws.root / "eval").string()})
              .code == 0);
  auto forest = (ws.root / "eval" / "models" / "forest.json").string();

  auto r = run({"interpret", "--model", forest, "--dataset", data, "--features", "top5", "--out",
                (ws.root / "top").string()});
  REQUIRE(r.code == 0);
  auto importance = lines(ws.root / "top" / "importance.csv");
  CHECK(importance.size() == 17);  // header plus every feature
  std::size_t pdp_files = 0;
  for (const auto& e : fs::directory_iterator(ws.root / "top")) pdp_files += e.path().filename().string().rfind("pdp_", 0) == 0;
  CHECK(pdp_files == 5);
  for (auto f : {"qq.csv", "actual_vs_fitted.csv", "interpret.json", "manifest.json"}) {
    CHECK_MESSAGE(fs::exists(ws.root / "top" / f), f);
  }
  auto meta = json::parse(slurp(ws.root / "top" / "interpret.json"));
  CHECK(meta["partial_dependence"].size() == 5);
  CHECK(meta["importance"] == "importance.csv");
  CHECK(meta["qq"]["file"] == "qq.csv");

  auto one = run({"interpret", "--model", forest, "--dataset", data, "--features", "x2", "--grid", "11", "--out",
                  (ws.root / "one").string()});
  REQUIRE(one.code == 0);
  pdp_files = 0;
  for (const auto& e : fs::directory_iterator(ws.root / "one")) pdp_files += e.path().filename().string().rfind("pdp_", 0) == 0;
  CHECK(pdp_files == 1);

  auto model = load_model(forest);
  auto d = DesignMatrix::from_dataset(load_csv(data, read_schema_file(ws.root / "clean" / "schema.txt")));
  std::ostringstream expected;
  write_pdp_csv(partial_dependence(model, d, "x2", 11), expected);
  CHECK(slurp(ws.root / "one" / "pdp_x2.csv") == expected.str());

  auto unknown = run({"interpret", "--model", forest, "--dataset", data, "--features", "x2,nope", "--out",
                      (ws.root / "bad").string()});
  CHECK(unknown.code == kExitInput);
  CHECK(unknown.err.find("nope") != std::string::npos);

  auto linear = run({"interpret", "--model", (ws.root / "eval" / "models" / "ols.json").string(), "--dataset", data,
                     "--features", "top15", "--out", (ws.root / "lin").string()});
  CHECK(linear.code == kExitInput);
}
