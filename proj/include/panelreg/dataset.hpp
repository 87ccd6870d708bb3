#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace panelreg {

enum class ColumnKind { kKey, kNumericFeature, kBinaryFeature, kCount, kPopulation, kResponse };
enum class Periodicity { kMonthly, kAnnual, kStatic };

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::kNumericFeature;
  Periodicity periodicity = Periodicity::kStatic;

  bool operator==(const ColumnSpec&) const = default;
};

inline constexpr std::string_view kCountyKey = "county";
inline constexpr std::string_view kYearKey = "year";
inline constexpr std::string_view kMonthKey = "month";

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return std::isnan(v); }

inline bool is_feature(ColumnKind kind) {
  return kind == ColumnKind::kNumericFeature || kind == ColumnKind::kBinaryFeature;
}

std::string_view to_string(ColumnKind kind);
std::string_view to_string(Periodicity periodicity);
ColumnKind parse_column_kind(std::string_view text);
Periodicity parse_periodicity(std::string_view text);

/// Schema text: one `name,kind,periodicity` line per column. Blank lines and
/// lines starting with '#' are ignored.
std::vector<ColumnSpec> parse_schema(std::string_view text);
std::vector<ColumnSpec> read_schema_file(const std::filesystem::path& path);
std::string format_schema(std::span<const ColumnSpec> schema);

/// One applied preprocessing step.
struct LineageStep {
  std::string op;
  nlohmann::json params = nlohmann::json::object();
  std::vector<std::string> removed_columns;
  std::vector<std::string> warnings;
  std::string timestamp;
};

/// Stamps `step` with the current UTC time.
LineageStep make_step(std::string op, nlohmann::json params = nlohmann::json::object());

/// Column-oriented table. The `county` key column holds text labels; every
/// other column is numeric with NaN as the missing marker.
class Dataset {
 public:
  Dataset() = default;

  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_columns() const { return schema_.size(); }
  const std::vector<ColumnSpec>& schema() const { return schema_; }
  const std::vector<LineageStep>& lineage() const { return lineage_; }

  bool has_column(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  const ColumnSpec& spec(std::string_view name) const { return schema_[index_of(name)]; }
  bool is_text(std::string_view name) const;

  std::span<const double> values(std::string_view name) const;
  std::span<double> mutable_values(std::string_view name);
  const std::vector<std::string>& labels(std::string_view name) const;

  /// The first column added fixes n_rows; later columns must match it.
  void add_numeric_column(ColumnSpec spec, std::vector<double> values);
  void add_text_column(ColumnSpec spec, std::vector<std::string> labels);
  void drop_column(std::string_view name);

  /// Copies the given rows in order. Lineage is carried over.
  Dataset select_rows(std::span<const std::size_t> rows) const;

  std::vector<std::string> names_of_kind(ColumnKind kind) const;
  /// Numeric and binary feature columns in schema order.
  std::vector<std::string> feature_names() const;
  std::size_t missing_count(std::string_view name) const;

  /// Renders cell (row, column) as text; missing numeric cells render as "NA".
  std::string cell_text(std::size_t row, std::size_t column) const;

  void record(LineageStep step) { lineage_.push_back(std::move(step)); }
  void set_lineage(std::vector<LineageStep> lineage) { lineage_ = std::move(lineage); }

 private:
  struct Column {
    std::vector<double> values;
    std::vector<std::string> labels;
  };

  void check_length(std::size_t length, std::string_view name);

  std::vector<ColumnSpec> schema_;
  std::vector<Column> columns_;
  std::size_t n_rows_ = 0;
  std::vector<LineageStep> lineage_;
};

/// Whether a column with this spec is stored as text.
bool is_text_column(const ColumnSpec& spec);

/// Throws InputError if two rows share the key tuple formed by whichever of
/// (county, year, month) are present.
void check_unique_keys(const Dataset& d);

/// Parses comma-separated text with a header row. `NA` or empty cells and
/// unparseable numbers become missing markers.
Dataset parse_csv(std::istream& in, std::span<const ColumnSpec> schema, std::string_view source = "<stream>");
Dataset load_csv(const std::filesystem::path& path, std::span<const ColumnSpec> schema);

void write_csv(const Dataset& d, std::ostream& out);
void write_csv(const Dataset& d, const std::filesystem::path& path);

nlohmann::json lineage_to_json(std::span<const LineageStep> lineage);

/// Shortest round-trip decimal text for a double.
std::string format_number(double v);

}  // namespace panelreg
