#include "panelreg/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "panelreg/error.hpp"

namespace panelreg {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      return fields;
    }
    fields.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

double parse_cell(std::string_view cell) {
  if (cell.empty() || cell == "NA") return kMissing;
  if (cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) return kMissing;
  return value;
}

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) {
    if (!out.empty()) out += ", ";
    out += n;
  }
  return out;
}

}  // namespace

std::string_view to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::kKey: return "key";
    case ColumnKind::kNumericFeature: return "numeric-feature";
    case ColumnKind::kBinaryFeature: return "binary-feature";
    case ColumnKind::kCount: return "count";
    case ColumnKind::kPopulation: return "population";
    case ColumnKind::kResponse: return "response";
  }
  return "?";
}

std::string_view to_string(Periodicity periodicity) {
  switch (periodicity) {
    case Periodicity::kMonthly: return "monthly";
    case Periodicity::kAnnual: return "annual";
    case Periodicity::kStatic: return "static";
  }
  return "?";
}

ColumnKind parse_column_kind(std::string_view text) {
  for (auto kind : {ColumnKind::kKey, ColumnKind::kNumericFeature, ColumnKind::kBinaryFeature, ColumnKind::kCount,
                    ColumnKind::kPopulation, ColumnKind::kResponse}) {
    if (to_string(kind) == text) return kind;
  }
  throw InputError(fmt::format("unknown column kind '{}'", text));
}

Periodicity parse_periodicity(std::string_view text) {
  for (auto p : {Periodicity::kMonthly, Periodicity::kAnnual, Periodicity::kStatic}) {
    if (to_string(p) == text) return p;
  }
  throw InputError(fmt::format("unknown periodicity '{}'", text));
}

std::vector<ColumnSpec> parse_schema(std::string_view text) {
  std::vector<ColumnSpec> schema;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    auto fields = split_fields(view);
    if (fields.size() != 3) {
      throw InputError(fmt::format("schema line {}: expected name,kind,periodicity", line_no));
    }
    ColumnSpec spec{std::string(fields[0]), parse_column_kind(fields[1]), parse_periodicity(fields[2])};
    if (spec.name.empty()) throw InputError(fmt::format("schema line {}: empty column name", line_no));
    if (!seen.insert(spec.name).second) {
      throw InputError(fmt::format("schema line {}: duplicate column '{}'", line_no, spec.name));
    }
    schema.push_back(std::move(spec));
  }
  return schema;
}

std::vector<ColumnSpec> read_schema_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open schema file {}", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_schema(buffer.str());
}

std::string format_schema(std::span<const ColumnSpec> schema) {
  std::string out;
  for (const auto& spec : schema) {
    out += fmt::format("{},{},{}\n", spec.name, to_string(spec.kind), to_string(spec.periodicity));
  }
  return out;
}

LineageStep make_step(std::string op, nlohmann::json params) {
  LineageStep step;
  step.op = std::move(op);
  step.params = std::move(params);
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  step.timestamp = fmt::format("{:%FT%TZ}", fmt::gmtime(now));
  return step;
}

bool is_text_column(const ColumnSpec& spec) { return spec.kind == ColumnKind::kKey && spec.name == kCountyKey; }

bool Dataset::has_column(std::string_view name) const {
  return std::any_of(schema_.begin(), schema_.end(), [&](const ColumnSpec& s) { return s.name == name; });
}

std::size_t Dataset::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < schema_.size(); ++i) {
    if (schema_[i].name == name) return i;
  }
  throw InputError(fmt::format("no column named '{}'", name));
}

bool Dataset::is_text(std::string_view name) const { return is_text_column(spec(name)); }

std::span<const double> Dataset::values(std::string_view name) const {
  std::size_t i = index_of(name);
  if (is_text_column(schema_[i])) throw InputError(fmt::format("column '{}' is not numeric", name));
  return columns_[i].values;
}

std::span<double> Dataset::mutable_values(std::string_view name) {
  std::size_t i = index_of(name);
  if (is_text_column(schema_[i])) throw InputError(fmt::format("column '{}' is not numeric", name));
  return columns_[i].values;
}

const std::vector<std::string>& Dataset::labels(std::string_view name) const {
  std::size_t i = index_of(name);
  if (!is_text_column(schema_[i])) throw InputError(fmt::format("column '{}' is not a text key", name));
  return columns_[i].labels;
}

void Dataset::check_length(std::size_t length, std::string_view name) {
  if (has_column(name)) throw InputError(fmt::format("duplicate column '{}'", name));
  if (schema_.empty()) {
    n_rows_ = length;
  } else if (length != n_rows_) {
    throw InputError(fmt::format("column '{}' has {} rows, dataset has {}", name, length, n_rows_));
  }
}

void Dataset::add_numeric_column(ColumnSpec spec, std::vector<double> values) {
  if (is_text_column(spec)) throw InputError("county key must be a text column");
  check_length(values.size(), spec.name);
  schema_.push_back(std::move(spec));
  columns_.push_back(Column{std::move(values), {}});
}

void Dataset::add_text_column(ColumnSpec spec, std::vector<std::string> labels) {
  if (!is_text_column(spec)) throw InputError(fmt::format("column '{}' is not a text key", spec.name));
  check_length(labels.size(), spec.name);
  schema_.push_back(std::move(spec));
  columns_.push_back(Column{{}, std::move(labels)});
}

void Dataset::drop_column(std::string_view name) {
  std::size_t i = index_of(name);
  schema_.erase(schema_.begin() + static_cast<std::ptrdiff_t>(i));
  columns_.erase(columns_.begin() + static_cast<std::ptrdiff_t>(i));
}

Dataset Dataset::select_rows(std::span<const std::size_t> rows) const {
  Dataset out;
  out.schema_ = schema_;
  out.n_rows_ = rows.size();
  out.lineage_ = lineage_;
  out.columns_.resize(columns_.size());
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    const Column& src = columns_[c];
    Column& dst = out.columns_[c];
    if (is_text_column(schema_[c])) {
      dst.labels.reserve(rows.size());
      for (std::size_t r : rows) dst.labels.push_back(src.labels.at(r));
    } else {
      dst.values.reserve(rows.size());
      for (std::size_t r : rows) dst.values.push_back(src.values.at(r));
    }
  }
  return out;
}

std::vector<std::string> Dataset::names_of_kind(ColumnKind kind) const {
  std::vector<std::string> names;
  for (const auto& s : schema_) {
    if (s.kind == kind) names.push_back(s.name);
  }
  return names;
}

std::vector<std::string> Dataset::feature_names() const {
  std::vector<std::string> names;
  for (const auto& s : schema_) {
    if (is_feature(s.kind)) names.push_back(s.name);
  }
  return names;
}

std::size_t Dataset::missing_count(std::string_view name) const {
  std::size_t i = index_of(name);
  if (is_text_column(schema_[i])) {
    return static_cast<std::size_t>(
        std::count_if(columns_[i].labels.begin(), columns_[i].labels.end(), [](const auto& s) { return s.empty(); }));
  }
  return static_cast<std::size_t>(std::count_if(columns_[i].values.begin(), columns_[i].values.end(), is_missing));
}

std::string Dataset::cell_text(std::size_t row, std::size_t column) const {
  if (is_text_column(schema_[column])) return columns_[column].labels[row];
  return format_number(columns_[column].values[row]);
}

void check_unique_keys(const Dataset& d) {
  if (!d.has_column(kCountyKey)) return;
  const auto& county = d.labels(kCountyKey);
  std::span<const double> year, month;
  if (d.has_column(kYearKey)) year = d.values(kYearKey);
  if (d.has_column(kMonthKey)) month = d.values(kMonthKey);

  std::unordered_set<std::string> seen;
  seen.reserve(d.n_rows());
  for (std::size_t r = 0; r < d.n_rows(); ++r) {
    std::string key = county[r];
    if (!year.empty()) key += "\x1f" + format_number(year[r]);
    if (!month.empty()) key += "\x1f" + format_number(month[r]);
    if (!seen.insert(key).second) {
      throw InputError(fmt::format("duplicate key (county={}{}{}) at data row {}", county[r],
                                   year.empty() ? "" : ", year=" + format_number(year[r]),
                                   month.empty() ? "" : ", month=" + format_number(month[r]), r + 1));
    }
  }
}

Dataset parse_csv(std::istream& in, std::span<const ColumnSpec> schema, std::string_view source) {
  std::string line;
  if (!std::getline(in, line)) throw InputError(fmt::format("{}: empty file", source));
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  auto header = split_fields(line);

  // Map header positions onto schema entries, order-insensitive.
  std::vector<std::string> unknown, absent;
  std::vector<std::size_t> schema_of_field(header.size());
  std::vector<bool> covered(schema.size(), false);
  for (std::size_t f = 0; f < header.size(); ++f) {
    auto it = std::find_if(schema.begin(), schema.end(), [&](const ColumnSpec& s) { return s.name == header[f]; });
    if (it == schema.end()) {
      unknown.emplace_back(header[f]);
      continue;
    }
    std::size_t s = static_cast<std::size_t>(it - schema.begin());
    if (covered[s]) throw InputError(fmt::format("{}: header repeats column '{}'", source, header[f]));
    covered[s] = true;
    schema_of_field[f] = s;
  }
  for (std::size_t s = 0; s < schema.size(); ++s) {
    if (!covered[s]) absent.push_back(schema[s].name);
  }
  if (!unknown.empty() || !absent.empty()) {
    std::string msg = fmt::format("{}: header does not match schema", source);
    if (!unknown.empty()) msg += "; not in schema: " + join_names(unknown);
    if (!absent.empty()) msg += "; missing from header: " + join_names(absent);
    throw InputError(msg);
  }

  std::vector<std::vector<double>> numeric(schema.size());
  std::vector<std::vector<std::string>> text(schema.size());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw InputError(
          fmt::format("{}: line {} has {} fields, expected {}", source, line_no, fields.size(), header.size()));
    }
    for (std::size_t f = 0; f < fields.size(); ++f) {
      std::size_t s = schema_of_field[f];
      if (is_text_column(schema[s])) {
        text[s].emplace_back(fields[f] == "NA" ? std::string_view{} : fields[f]);
      } else {
        numeric[s].push_back(parse_cell(fields[f]));
      }
    }
  }

  Dataset d;
  for (std::size_t s = 0; s < schema.size(); ++s) {
    if (is_text_column(schema[s])) {
      d.add_text_column(schema[s], std::move(text[s]));
    } else {
      d.add_numeric_column(schema[s], std::move(numeric[s]));
    }
  }
  check_unique_keys(d);
  auto step = make_step("load_csv", {{"source", std::string(source)}, {"rows", d.n_rows()}});
  d.record(std::move(step));
  return d;
}

Dataset load_csv(const std::filesystem::path& path, std::span<const ColumnSpec> schema) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open {}", path.string()));
  return parse_csv(in, schema, path.filename().string());
}

void write_csv(const Dataset& d, std::ostream& out) {
  const auto& schema = d.schema();
  for (std::size_t c = 0; c < schema.size(); ++c) out << (c ? "," : "") << schema[c].name;
  out << '\n';
  for (std::size_t r = 0; r < d.n_rows(); ++r) {
    for (std::size_t c = 0; c < schema.size(); ++c) out << (c ? "," : "") << d.cell_text(r, c);
    out << '\n';
  }
}

void write_csv(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError(fmt::format("cannot write {}", path.string()));
  write_csv(d, out);
}

nlohmann::json lineage_to_json(std::span<const LineageStep> lineage) {
  auto steps = nlohmann::json::array();
  for (const auto& step : lineage) {
    nlohmann::json j = {{"op", step.op},
                        {"params", step.params},
                        {"removed_columns", step.removed_columns},
                        {"timestamp", step.timestamp}};
    if (!step.warnings.empty()) j["warnings"] = step.warnings;
    steps.push_back(std::move(j));
  }
  return steps;
}

std::string format_number(double v) {
  if (is_missing(v)) return "NA";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace panelreg
