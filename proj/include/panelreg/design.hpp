#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace panelreg {

class Dataset;

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::vector<double> column(std::size_t j) const;
};

/// Features plus response, no missing values.
class DesignMatrix {
 public:
  DesignMatrix(std::vector<std::string> feature_names, Matrix features, std::vector<double> response);

  /// Features are the numeric and binary feature columns in schema order; the
  /// response is the single response column.
  static DesignMatrix from_dataset(const Dataset& d);

  std::size_t n_rows() const { return features_.rows; }
  std::size_t n_features() const { return features_.cols; }
  const Matrix& features() const { return features_; }
  const std::vector<double>& response() const { return response_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  std::size_t feature_index(const std::string& name) const;

  DesignMatrix subset(std::span<const std::size_t> rows) const;

 private:
  std::vector<std::string> feature_names_;
  Matrix features_;
  std::vector<double> response_;
};

}  // namespace panelreg
