#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "panelreg/dataset.hpp"

namespace panelreg {

enum class ResponseLaw { kLinear, kFriedman, kStepInteraction };

std::string_view to_string(ResponseLaw law);
ResponseLaw parse_response_law(std::string_view text);

/// Shape of a synthetic county-month panel. Features are named x1..x{n-1}
/// plus the binary `urbanization` column, n = n_features in total.
///   x1..x10   monthly, Uniform(0,1) per row (x1..x5 drive the friedman law)
///   x11..     annual, Uniform(0,1) per county-year
///   urbanization  fixed per county; round(urban_fraction * n_counties) are 1
struct PanelConfig {
  std::size_t n_counties = 13;
  int year_first = 2000;
  int year_last = 2015;
  std::size_t n_features = 32;
  ResponseLaw response_law = ResponseLaw::kFriedman;
  double noise_sd = 1.0;
  double urban_fraction = 0.5;
  std::uint64_t seed = 0;

  std::size_t n_rows() const;
};

/// `key = value` lines; keys match the PanelConfig field names, `law` takes
/// linear | friedman | step-interaction.
PanelConfig parse_panel_config(std::string_view text);
PanelConfig read_panel_config(const std::filesystem::path& path);
std::string format_panel_config(const PanelConfig& cfg);

/// Noise-free rate per 100,000 for feature values x = (x1, ..., x{m}).
///   linear:           20 + sum_j beta_j x_j
///   friedman:         10 + 10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5
///   step-interaction: 20 + 6 [x1 > .5] + 4 [x2 > .5][x3 > .5] + 3 x3
double evaluate_law(ResponseLaw law, std::span<const double> x);

/// beta_j for the linear law over x1..x{m}: 0.5 * ((j mod 7) - 3).
std::vector<double> linear_coefficients(std::size_t m);
inline constexpr double kLinearIntercept = 20.0;

/// Expected rate under uniform features, by numerical integration.
double law_mean(ResponseLaw law, std::size_t m);

/// Generates the panel. Observed rate = law + N(0, noise_sd) (floored at 0);
/// counts are Poisson draws with mean rate * population / 1e5. With
/// noise_sd == 0 counts are set to that mean exactly, so normalization
/// recovers the law without sampling noise.
Dataset generate(const PanelConfig& cfg);

/// Noise-free rate for every row of a generated (or normalized) dataset.
std::vector<double> true_rates(const Dataset& d, ResponseLaw law);

/// Blanks exactly round(fraction * n_rows) cells of `column` at seeded positions.
Dataset inject_missing(const Dataset& d, const std::string& column, double fraction, std::uint64_t seed);

/// Writes the panel as three source tables plus a schema, mirroring the
/// mortality / socio-economic / climate inputs: suicide.csv (keys, count,
/// population), socio.csv (county-year keys, annual features), climate.csv
/// (keys, monthly features), schema.txt.
void write_panel_files(const Dataset& d, const std::filesystem::path& dir);

}  // namespace panelreg
