#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "npmean/errors.hpp"
#include "npmean/sample.hpp"

namespace npmean {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

// RFC-4180-ish: double quotes group commas, "" escapes a quote.
std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(trim(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  cells.push_back(trim(cell));
  return cells;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::optional<double> parse_number(const std::string& cell) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || first == last) return std::nullopt;
  return v;
}

class Table {
 public:
  explicit Table(std::istream& in) {
    std::string line;
    while (std::getline(in, line)) {
      if (!trim(line).empty()) break;
    }
    if (trim(line).empty()) throw ParseError("empty CSV input: no header row", 0);
    header_ = split_row(line);
    for (std::size_t c = 0; c < header_.size(); ++c) columns_[header_[c]] = c;
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      auto cells = split_row(line);
      if (cells.size() != header_.size()) {
        std::ostringstream msg;
        msg << "row " << rows_.size() + 1 << ": expected " << header_.size() << " cells, found "
            << cells.size();
        throw ParseError(msg.str(), rows_.size() + 1);
      }
      rows_.push_back(std::move(cells));
    }
  }

  std::optional<std::size_t> find(const std::string& name) const {
    auto it = columns_.find(name);
    if (it == columns_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t require(const std::string& name) const {
    if (name.empty()) throw ParseError("schema leaves a required column unnamed", 0);
    auto c = find(name);
    if (!c) throw ParseError("missing required column '" + name + "'", 0);
    return *c;
  }

  std::size_t size() const { return rows_.size(); }
  const std::string& cell(std::size_t row, std::size_t col) const { return rows_[row][col]; }

  double number(std::size_t row, std::size_t col) const {
    const auto& s = rows_[row][col];
    auto v = parse_number(s);
    if (!v) {
      throw ParseError("row " + std::to_string(row + 1) + ": column '" + header_[col] +
                           "' is not numeric ('" + s + "')",
                       row + 1);
    }
    return *v;
  }

  std::optional<double> optional_number(std::size_t row, std::size_t col) const {
    if (rows_[row][col].empty()) return std::nullopt;
    return number(row, col);
  }

  bool flag(std::size_t row, std::size_t col) const {
    const auto& s = rows_[row][col];
    if (s == "1") return true;
    if (s == "0") return false;
    throw ParseError("row " + std::to_string(row + 1) + ": column '" + header_[col] +
                         "' must be 0 or 1 ('" + s + "')",
                     row + 1);
  }

 private:
  std::vector<std::string> header_;
  std::map<std::string, std::size_t> columns_;
  std::vector<std::vector<std::string>> rows_;
};

Eigen::VectorXd read_covariates(const Table& t, std::size_t row, const std::vector<std::size_t>& cols) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (t.cell(row, cols[c]).empty()) {
      throw ParseError("row " + std::to_string(row + 1) + ": missing covariate value", row + 1);
    }
    x(static_cast<Eigen::Index>(c)) = t.number(row, cols[c]);
  }
  return x;
}

std::vector<std::size_t> covariate_columns(const Table& t, const CsvSchema& schema) {
  if (schema.covariates.empty()) throw ParseError("schema lists no covariates", 0);
  std::vector<std::size_t> cols;
  for (const auto& name : schema.covariates) cols.push_back(t.require(name));
  return cols;
}

void read_optional_fields(const Table& t, std::size_t row, const CsvSchema& schema, UnitRecord& rec) {
  if (!schema.pi.empty()) rec.pi = t.optional_number(row, t.require(schema.pi));
  if (!schema.group.empty()) {
    const auto col = t.require(schema.group);
    if (auto g = t.optional_number(row, col)) {
      if (*g != std::floor(*g)) {
        throw ParseError("row " + std::to_string(row + 1) + ": group label must be an integer",
                         row + 1);
      }
      rec.group = static_cast<std::int64_t>(*g);
    }
  }
}

CombinedSample finish(std::vector<UnitRecord> records, const CsvSchema& schema) {
  CombinedSample sample(std::move(records), schema.covariates);
  require_valid(sample);
  return sample;
}

}  // namespace

CsvSchema CsvSchema::parse(std::istream& in) {
  CsvSchema schema;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("schema line " + std::to_string(lineno) + ": expected key=value");
    }
    const auto key = trim(body.substr(0, eq));
    const auto value = trim(body.substr(eq + 1));
    if (key == "covariates") {
      schema.covariates = split_list(value);
    } else if (key == "delta") {
      schema.delta = value;
    } else if (key == "in_b") {
      schema.in_b = value;
    } else if (key == "outcome" || key == "y") {
      schema.outcome = value;
    } else if (key == "weight" || key == "d") {
      schema.weight = value;
    } else if (key == "pi") {
      schema.pi = value;
    } else if (key == "group") {
      schema.group = value;
    } else {
      throw ConfigError("schema line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  if (schema.covariates.empty()) throw ConfigError("schema must list covariates");
  return schema;
}

CsvSchema CsvSchema::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schema file '" + path + "'");
  return parse(in);
}

CombinedSample load_csv(std::istream& in, const CsvSchema& schema) {
  const Table t(in);
  const auto xcols = covariate_columns(t, schema);
  const auto c_delta = t.require(schema.delta);
  const auto c_inb = t.require(schema.in_b);
  const auto c_y = t.require(schema.outcome);
  const auto c_d = t.require(schema.weight);

  std::vector<UnitRecord> records;
  records.reserve(t.size());
  for (std::size_t row = 0; row < t.size(); ++row) {
    UnitRecord rec;
    rec.x = read_covariates(t, row, xcols);
    rec.delta = t.flag(row, c_delta);
    rec.in_b = t.flag(row, c_inb);
    rec.y = t.optional_number(row, c_y);
    rec.d = t.optional_number(row, c_d);
    if (rec.delta && !rec.y) {
      throw ValidationError("row " + std::to_string(row + 1) + ": missing outcome for an A unit");
    }
    if (rec.in_b && !rec.d) {
      throw ValidationError("row " + std::to_string(row + 1) +
                            ": missing design weight for a B unit");
    }
    read_optional_fields(t, row, schema, rec);
    records.push_back(std::move(rec));
  }
  return finish(std::move(records), schema);
}

CombinedSample load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'", 0);
  return load_csv(in, schema);
}

CombinedSample load_csv_pair(std::istream& in_a, std::istream& in_b, const CsvSchema& schema) {
  std::vector<UnitRecord> records;
  {
    const Table t(in_a);
    const auto xcols = covariate_columns(t, schema);
    const auto c_y = t.require(schema.outcome);
    const auto c_inb = t.find(schema.in_b);
    const auto c_d = t.find(schema.weight);
    for (std::size_t row = 0; row < t.size(); ++row) {
      UnitRecord rec;
      rec.x = read_covariates(t, row, xcols);
      rec.delta = true;
      if (t.cell(row, c_y).empty()) {
        throw ValidationError("A row " + std::to_string(row + 1) + ": missing outcome");
      }
      rec.y = t.number(row, c_y);
      rec.in_b = c_inb ? t.flag(row, *c_inb) : false;
      if (c_d) rec.d = t.optional_number(row, *c_d);
      read_optional_fields(t, row, schema, rec);
      records.push_back(std::move(rec));
    }
  }
  {
    const Table t(in_b);
    const auto xcols = covariate_columns(t, schema);
    const auto c_d = t.require(schema.weight);
    const auto c_delta = t.find(schema.delta);
    for (std::size_t row = 0; row < t.size(); ++row) {
      UnitRecord rec;
      rec.x = read_covariates(t, row, xcols);
      rec.in_b = true;
      if (t.cell(row, c_d).empty()) {
        throw ValidationError("B row " + std::to_string(row + 1) + ": missing design weight");
      }
      rec.d = t.number(row, c_d);
      // Overlap with A is only known when the file says so; the unit's
      // outcome is not observed through B, so it stays absent.
      rec.delta = c_delta ? t.flag(row, *c_delta) : false;
      if (rec.delta) {
        throw ValidationError("B row " + std::to_string(row + 1) +
                              ": units observed in A must appear in the A file with in_b=1");
      }
      read_optional_fields(t, row, schema, rec);
      records.push_back(std::move(rec));
    }
  }
  return finish(std::move(records), schema);
}

CombinedSample load_csv_pair(const std::string& path_a, const std::string& path_b,
                             const CsvSchema& schema) {
  std::ifstream in_a(path_a);
  if (!in_a) throw ParseError("cannot open '" + path_a + "'", 0);
  std::ifstream in_b(path_b);
  if (!in_b) throw ParseError("cannot open '" + path_b + "'", 0);
  return load_csv_pair(in_a, in_b, schema);
}

void write_csv(const CombinedSample& sample, std::ostream& out, const CsvSchema& schema) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& name : schema.covariates) out << name << ',';
  out << schema.delta << ',' << schema.in_b << ',' << schema.outcome << ',' << schema.weight;
  if (!schema.pi.empty()) out << ',' << schema.pi;
  if (!schema.group.empty()) out << ',' << schema.group;
  out << '\n';
  for (const auto& r : sample.records()) {
    for (Eigen::Index j = 0; j < r.x.size(); ++j) out << r.x(j) << ',';
    out << (r.delta ? 1 : 0) << ',' << (r.in_b ? 1 : 0) << ',';
    if (r.y) out << *r.y;
    out << ',';
    if (r.d) out << *r.d;
    if (!schema.pi.empty()) {
      out << ',';
      if (r.pi) out << *r.pi;
    }
    if (!schema.group.empty()) {
      out << ',';
      if (r.group) out << *r.group;
    }
    out << '\n';
  }
}

void write_csv(const CombinedSample& sample, const std::string& path, const CsvSchema& schema) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  write_csv(sample, out, schema);
}

}  // namespace npmean
