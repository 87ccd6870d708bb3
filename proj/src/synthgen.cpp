#include "panelreg/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "panelreg/error.hpp"
#include "panelreg/rng.hpp"

namespace panelreg {

namespace {

constexpr std::size_t kMonthlyFeatures = 10;
constexpr std::string_view kUrbanization = "urbanization";

std::string feature_name(std::size_t j) { return fmt::format("x{}", j); }

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

void validate(const PanelConfig& cfg) {
  if (cfg.n_counties < 2) throw InputError("panel needs at least 2 counties");
  if (cfg.year_last < cfg.year_first) throw InputError("panel year range is empty");
  if (cfg.n_features < 6) throw InputError("panel needs at least 6 features (urbanization plus x1..x5)");
  if (!(cfg.noise_sd >= 0.0)) throw InputError("noise_sd must be nonnegative");
  if (!(cfg.urban_fraction > 0.0 && cfg.urban_fraction < 1.0)) throw InputError("urban_fraction must lie in (0,1)");
}

}  // namespace

std::string_view to_string(ResponseLaw law) {
  switch (law) {
    case ResponseLaw::kLinear: return "linear";
    case ResponseLaw::kFriedman: return "friedman";
    case ResponseLaw::kStepInteraction: return "step-interaction";
  }
  return "?";
}

ResponseLaw parse_response_law(std::string_view text) {
  for (auto law : {ResponseLaw::kLinear, ResponseLaw::kFriedman, ResponseLaw::kStepInteraction}) {
    if (to_string(law) == text) return law;
  }
  throw InputError(fmt::format("unknown response law '{}'", text));
}

std::size_t PanelConfig::n_rows() const {
  return n_counties * static_cast<std::size_t>(year_last - year_first + 1) * 12;
}

PanelConfig parse_panel_config(std::string_view text) {
  PanelConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    auto eq = view.find('=');
    if (eq == std::string_view::npos) throw InputError(fmt::format("panel config line {}: expected key = value", line_no));
    std::string key(trim(view.substr(0, eq)));
    std::string value(trim(view.substr(eq + 1)));
    try {
      if (key == "n_counties") {
        cfg.n_counties = std::stoul(value);
      } else if (key == "year_first") {
        cfg.year_first = std::stoi(value);
      } else if (key == "year_last") {
        cfg.year_last = std::stoi(value);
      } else if (key == "n_features") {
        cfg.n_features = std::stoul(value);
      } else if (key == "law" || key == "response_law") {
        cfg.response_law = parse_response_law(value);
      } else if (key == "noise_sd") {
        cfg.noise_sd = std::stod(value);
      } else if (key == "urban_fraction") {
        cfg.urban_fraction = std::stod(value);
      } else if (key == "seed") {
        cfg.seed = std::stoull(value);
      } else {
        throw InputError(fmt::format("panel config line {}: unknown key '{}'", line_no, key));
      }
    } catch (const std::logic_error&) {
      throw InputError(fmt::format("panel config line {}: bad value '{}' for {}", line_no, value, key));
    }
  }
  validate(cfg);
  return cfg;
}

PanelConfig read_panel_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open panel config {}", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_panel_config(buffer.str());
}

std::string format_panel_config(const PanelConfig& cfg) {
  return fmt::format(
      "n_counties = {}\nyear_first = {}\nyear_last = {}\nn_features = {}\nlaw = {}\nnoise_sd = {}\n"
      "urban_fraction = {}\nseed = {}\n",
      cfg.n_counties, cfg.year_first, cfg.year_last, cfg.n_features, to_string(cfg.response_law), cfg.noise_sd,
      cfg.urban_fraction, cfg.seed);
}

std::vector<double> linear_coefficients(std::size_t m) {
  std::vector<double> beta(m);
  for (std::size_t j = 1; j <= m; ++j) beta[j - 1] = 0.5 * (static_cast<double>(j % 7) - 3.0);
  return beta;
}

double evaluate_law(ResponseLaw law, std::span<const double> x) {
  switch (law) {
    case ResponseLaw::kLinear: {
      auto beta = linear_coefficients(x.size());
      double out = kLinearIntercept;
      for (std::size_t j = 0; j < x.size(); ++j) out += beta[j] * x[j];
      return out;
    }
    case ResponseLaw::kFriedman:
      return 10.0 + 10.0 * std::sin(std::numbers::pi * x[0] * x[1]) + 20.0 * (x[2] - 0.5) * (x[2] - 0.5) +
             10.0 * x[3] + 5.0 * x[4];
    case ResponseLaw::kStepInteraction:
      return 20.0 + 6.0 * (x[0] > 0.5 ? 1.0 : 0.0) + 4.0 * ((x[1] > 0.5 && x[2] > 0.5) ? 1.0 : 0.0) + 3.0 * x[2];
  }
  return 0.0;
}

double law_mean(ResponseLaw law, std::size_t m) {
  switch (law) {
    case ResponseLaw::kLinear: {
      auto beta = linear_coefficients(m);
      return kLinearIntercept + 0.5 * std::accumulate(beta.begin(), beta.end(), 0.0);
    }
    case ResponseLaw::kFriedman: {
      // E[sin(pi U V)] = int_0^1 (1 - cos(pi u)) / (pi u) du, composite Simpson.
      constexpr int kIntervals = 2000;
      auto f = [](double u) { return u == 0.0 ? 0.0 : (1.0 - std::cos(std::numbers::pi * u)) / (std::numbers::pi * u); };
      double h = 1.0 / kIntervals, sum = f(0.0) + f(1.0);
      for (int i = 1; i < kIntervals; ++i) sum += (i % 2 ? 4.0 : 2.0) * f(i * h);
      double e_sin = sum * h / 3.0;
      return 10.0 + 10.0 * e_sin + 20.0 / 12.0 + 5.0 + 2.5;
    }
    case ResponseLaw::kStepInteraction:
      return 20.0 + 3.0 + 1.0 + 1.5;
  }
  return 0.0;
}

Dataset generate(const PanelConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const std::size_t m = cfg.n_features - 1;  // x1..xm
  const std::size_t monthly = std::min(kMonthlyFeatures, m);
  const std::size_t years = static_cast<std::size_t>(cfg.year_last - cfg.year_first + 1);
  const std::size_t n = cfg.n_rows();

  std::vector<std::size_t> county_order(cfg.n_counties);
  std::iota(county_order.begin(), county_order.end(), std::size_t{0});
  std::shuffle(county_order.begin(), county_order.end(), rng);
  auto n_urban = static_cast<std::size_t>(std::llround(cfg.urban_fraction * static_cast<double>(cfg.n_counties)));
  std::vector<double> urban(cfg.n_counties, 0.0);
  for (std::size_t k = 0; k < n_urban; ++k) urban[county_order[k]] = 1.0;

  std::vector<double> base_population(cfg.n_counties);
  for (auto& p : base_population) p = std::exp(std::log(3.0e6) + 0.5 * normal(rng));

  std::vector<std::string> county(n);
  std::vector<double> year(n), month(n), count(n), population(n), urbanization(n);
  std::vector<std::vector<double>> x(m, std::vector<double>(n));
  std::vector<double> row_x(m);

  std::size_t r = 0;
  for (std::size_t c = 0; c < cfg.n_counties; ++c) {
    for (std::size_t yi = 0; yi < years; ++yi) {
      for (std::size_t j = monthly; j < m; ++j) row_x[j] = unit(rng);
      double pop = std::round(base_population[c] * std::pow(1.01, static_cast<double>(yi)));
      for (int mo = 1; mo <= 12; ++mo, ++r) {
        for (std::size_t j = 0; j < monthly; ++j) row_x[j] = unit(rng);
        county[r] = fmt::format("County{:02}", c + 1);
        year[r] = cfg.year_first + static_cast<int>(yi);
        month[r] = mo;
        population[r] = pop;
        urbanization[r] = urban[c];
        for (std::size_t j = 0; j < m; ++j) x[j][r] = row_x[j];

        double rate = evaluate_law(cfg.response_law, row_x);
        if (cfg.noise_sd > 0.0) rate += cfg.noise_sd * normal(rng);
        double expected = std::max(rate, 0.0) * pop / 1.0e5;
        if (cfg.noise_sd > 0.0) {
          std::poisson_distribution<long long> poisson(expected);
          count[r] = expected > 0.0 ? static_cast<double>(poisson(rng)) : 0.0;
        } else {
          count[r] = expected;
        }
      }
    }
  }

  Dataset d;
  d.add_text_column({std::string(kCountyKey), ColumnKind::kKey, Periodicity::kStatic}, std::move(county));
  d.add_numeric_column({std::string(kYearKey), ColumnKind::kKey, Periodicity::kAnnual}, std::move(year));
  d.add_numeric_column({std::string(kMonthKey), ColumnKind::kKey, Periodicity::kMonthly}, std::move(month));
  d.add_numeric_column({"count", ColumnKind::kCount, Periodicity::kMonthly}, std::move(count));
  d.add_numeric_column({"population", ColumnKind::kPopulation, Periodicity::kAnnual}, std::move(population));
  d.add_numeric_column({std::string(kUrbanization), ColumnKind::kBinaryFeature, Periodicity::kAnnual},
                       std::move(urbanization));
  for (std::size_t j = 0; j < m; ++j) {
    d.add_numeric_column({feature_name(j + 1), ColumnKind::kNumericFeature,
                          j < monthly ? Periodicity::kMonthly : Periodicity::kAnnual},
                         std::move(x[j]));
  }
  nlohmann::json params = nlohmann::json::object();
  params["config"] = format_panel_config(cfg);
  d.record(make_step("generate", std::move(params)));
  return d;
}

std::vector<double> true_rates(const Dataset& d, ResponseLaw law) {
  std::vector<std::span<const double>> cols;
  for (std::size_t j = 1; d.has_column(feature_name(j)); ++j) cols.push_back(d.values(feature_name(j)));
  if (cols.size() < 5) throw InputError("dataset lacks the x1..x5 columns of a generated panel");
  std::vector<double> out(d.n_rows()), row(cols.size());
  for (std::size_t r = 0; r < d.n_rows(); ++r) {
    for (std::size_t j = 0; j < cols.size(); ++j) row[j] = cols[j][r];
    out[r] = evaluate_law(law, row);
  }
  return out;
}

Dataset inject_missing(const Dataset& d, const std::string& column, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw InputError(fmt::format("missing fraction {} outside [0,1]", fraction));
  const ColumnSpec& spec = d.spec(column);
  if (spec.kind == ColumnKind::kKey || spec.kind == ColumnKind::kResponse) {
    throw InputError(fmt::format("cannot inject missing values into {} column '{}'", to_string(spec.kind), column));
  }
  const std::size_t n = d.n_rows();
  auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  Dataset out = d;
  if (k == 0) return out;

  Rng rng(seed);
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(rows[i], rows[pick(rng)]);
  }
  auto values = out.mutable_values(column);
  for (std::size_t i = 0; i < k; ++i) values[rows[i]] = kMissing;
  out.record(make_step("inject_missing", {{"column", column}, {"fraction", fraction}, {"cells", k}, {"seed", seed}}));
  return out;
}

void write_panel_files(const Dataset& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> mortality, annual, monthly;
  for (const auto& spec : d.schema()) {
    if (spec.kind == ColumnKind::kKey) continue;
    if (spec.kind == ColumnKind::kCount || spec.kind == ColumnKind::kPopulation) {
      mortality.push_back(spec.name);
    } else if (spec.periodicity == Periodicity::kMonthly) {
      monthly.push_back(spec.name);
    } else {
      annual.push_back(spec.name);
    }
  }

  auto write_table = [&](const std::filesystem::path& path, const std::vector<std::string>& keys,
                         const std::vector<std::string>& columns, bool one_row_per_year) {
    std::ofstream out(path);
    if (!out) throw InputError(fmt::format("cannot write {}", path.string()));
    std::vector<std::string> all = keys;
    all.insert(all.end(), columns.begin(), columns.end());
    std::vector<std::size_t> idx;
    for (std::size_t c = 0; c < all.size(); ++c) {
      out << (c ? "," : "") << all[c];
      idx.push_back(d.index_of(all[c]));
    }
    out << '\n';
    auto month = d.values(kMonthKey);
    for (std::size_t r = 0; r < d.n_rows(); ++r) {
      if (one_row_per_year && month[r] != 1.0) continue;
      for (std::size_t c = 0; c < idx.size(); ++c) out << (c ? "," : "") << d.cell_text(r, idx[c]);
      out << '\n';
    }
  };

  std::vector<std::string> full_keys{std::string(kCountyKey), std::string(kYearKey), std::string(kMonthKey)};
  std::vector<std::string> year_keys{std::string(kCountyKey), std::string(kYearKey)};
  write_table(dir / "suicide.csv", full_keys, mortality, false);
  write_table(dir / "socio.csv", year_keys, annual, true);
  write_table(dir / "climate.csv", full_keys, monthly, false);

  std::ofstream schema(dir / "schema.txt");
  schema << "# column,kind,periodicity\n" << format_schema(d.schema());
}

}  // namespace panelreg
