#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "panelreg/design.hpp"

namespace fixture {

inline panelreg::DesignMatrix design(const std::vector<std::vector<double>>& rows, const std::vector<double>& y) {
  panelreg::Matrix x(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) x(i, j) = rows[i][j];
  }
  std::vector<std::string> names;
  for (std::size_t j = 0; j < x.cols; ++j) names.push_back(fmt::format("x{}", j + 1));
  return panelreg::DesignMatrix(names, std::move(x), y);
}

inline std::vector<std::vector<double>> uniform_rows(std::mt19937_64& rng, std::size_t n, std::size_t m) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<double>> rows(n, std::vector<double>(m));
  for (auto& r : rows) {
    for (auto& v : r) v = u(rng);
  }
  return rows;
}

/// Friedman-style response on the first five columns plus Gaussian noise.
inline std::vector<double> friedman(std::mt19937_64& rng, const std::vector<std::vector<double>>& rows, double noise) {
  std::normal_distribution<double> g(0.0, noise);
  std::vector<double> y;
  for (const auto& x : rows) {
    y.push_back(10 * std::sin(std::numbers::pi * x[0] * x[1]) + 20 * (x[2] - 0.5) * (x[2] - 0.5) + 10 * x[3] +
                5 * x[4] + g(rng));
  }
  return y;
}

}  // namespace fixture
