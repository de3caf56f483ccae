#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "eegpolicy/csv.hpp"
#include "eegpolicy/eeg_io.hpp"
#include "eegpolicy/error.hpp"
#include "json.hpp"

namespace eegpolicy {

namespace {

bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" || cell == "null";
}

bool parse_number(const std::string& cell, double& out) {
  if (cell.empty()) return false;
  char* end = nullptr;
  out = std::strtod(cell.c_str(), &end);
  return end == cell.c_str() + cell.size() && std::isfinite(out);
}

std::map<std::string, std::string> read_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, path.string(), "cannot open schema");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::malformed_header, "schema", e.what());
  }
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : j.items()) out[k] = v.get<std::string>();
  return out;
}

}  // namespace

int FeatureMatrix::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < column_names.size(); ++i)
    if (column_names[i] == name) return static_cast<int>(i);
  return -1;
}

void FeatureMatrix::validate() const {
  const auto n = X.rows();
  if (n == 0 || X.cols() == 0) throw Error(Errc::domain, "X", "empty feature matrix");
  if (W.size() != n || Y.size() != n || static_cast<Eigen::Index>(subject_ids.size()) != n)
    throw Error(Errc::length_mismatch, "rows", "X, W, Y and subject_ids disagree in length");
  if (static_cast<Eigen::Index>(column_names.size()) != X.cols() ||
      column_kinds.size() != column_names.size())
    throw Error(Errc::length_mismatch, "column_names", "one name and kind per column required");
  std::set<std::string> seen;
  for (const auto& c : column_names)
    if (!seen.insert(c).second) throw Error(Errc::duplicate_name, c, "duplicate column name");
  for (Eigen::Index i = 0; i < n; ++i)
    if (W[i] != 0.0 && W[i] != 1.0) throw Error(Errc::domain, "W", "treatment must be 0 or 1");
  if (!X.allFinite()) throw Error(Errc::domain, "X", "non-finite covariate");
  if (!Y.allFinite()) throw Error(Errc::domain, "Y", "non-finite outcome");
}

FeatureMatrix FeatureMatrix::subset(const std::vector<std::size_t>& rows) const {
  FeatureMatrix out;
  out.column_names = column_names;
  out.column_kinds = column_kinds;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.X.resize(n, X.cols());
  out.W.resize(n);
  out.Y.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto r = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(k)]);
    out.X.row(k) = X.row(r);
    out.W[k] = W[r];
    out.Y[k] = Y[r];
    out.subject_ids.push_back(subject_ids[static_cast<std::size_t>(r)]);
  }
  return out;
}

FeatureTable load_feature_table(const std::filesystem::path& path, const FeatureTableOptions& options) {
  const auto table = csv::read(path);
  for (const char* required : {"subject_id", "W", "Y"})
    if (table.column(required) < 0)
      throw Error(Errc::missing_column, required, "mandatory column missing");

  std::map<std::string, std::string> schema;
  auto schema_path = options.schema_path;
  if (!schema_path) {
    auto candidate = path;
    candidate += ".schema.json";
    if (std::filesystem::exists(candidate)) schema_path = candidate;
  }
  if (schema_path) schema = read_schema(*schema_path);

  const int id_col = table.column("subject_id");
  const int w_col = table.column("W");
  const int y_col = table.column("Y");

  FeatureTable out;
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const bool incomplete = std::any_of(row.begin(), row.end(), is_missing);
    if (incomplete) {
      if (!options.drop_incomplete_rows)
        throw Error(Errc::parse, "row " + std::to_string(r + 2), "missing value");
      ++out.dropped_rows;
      continue;
    }
    rows.push_back(r);
  }

  std::vector<int> continuous_cols;
  std::vector<int> categorical_cols;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const auto& name = table.header[c];
    if (static_cast<int>(c) == id_col || static_cast<int>(c) == w_col || static_cast<int>(c) == y_col)
      continue;
    auto it = schema.find(name);
    if (it != schema.end() && it->second == "categorical")
      categorical_cols.push_back(static_cast<int>(c));
    else
      continuous_cols.push_back(static_cast<int>(c));
  }

  FeatureMatrix& fm = out.matrix;
  const auto n = static_cast<Eigen::Index>(rows.size());
  fm.W.resize(n);
  fm.Y.resize(n);

  // levels per categorical column, sorted; the first is the dropped reference
  std::vector<std::vector<std::string>> levels;
  std::size_t width = continuous_cols.size();
  for (int c : categorical_cols) {
    std::set<std::string> lv;
    for (auto r : rows) lv.insert(table.rows[r][static_cast<std::size_t>(c)]);
    levels.emplace_back(lv.begin(), lv.end());
    width += levels.back().empty() ? 0 : levels.back().size() - 1;
  }
  fm.X = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(width));
  for (int c : continuous_cols) {
    fm.column_names.push_back(table.header[static_cast<std::size_t>(c)]);
    fm.column_kinds.push_back(ColumnKind::continuous);
  }
  for (std::size_t k = 0; k < categorical_cols.size(); ++k) {
    const auto& base = table.header[static_cast<std::size_t>(categorical_cols[k])];
    for (std::size_t l = 1; l < levels[k].size(); ++l) {
      fm.column_names.push_back(base + "." + levels[k][l]);
      fm.column_kinds.push_back(ColumnKind::categorical);
    }
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = table.rows[rows[static_cast<std::size_t>(i)]];
    fm.subject_ids.push_back(row[static_cast<std::size_t>(id_col)]);
    double w = 0.0;
    if (!parse_number(row[static_cast<std::size_t>(w_col)], w) || (w != 0.0 && w != 1.0))
      throw Error(Errc::domain, "W", "treatment value '" + row[static_cast<std::size_t>(w_col)] +
                                         "' is not 0 or 1");
    fm.W[i] = w;
    if (!parse_number(row[static_cast<std::size_t>(y_col)], fm.Y[i]))
      throw Error(Errc::parse, "Y", "non-numeric outcome '" + row[static_cast<std::size_t>(y_col)] + "'");
    Eigen::Index col = 0;
    for (int c : continuous_cols) {
      double v = 0.0;
      if (!parse_number(row[static_cast<std::size_t>(c)], v))
        throw Error(Errc::parse, table.header[static_cast<std::size_t>(c)],
                    "non-numeric value '" + row[static_cast<std::size_t>(c)] +
                        "' in a column not tagged categorical");
      fm.X(i, col++) = v;
    }
    for (std::size_t k = 0; k < categorical_cols.size(); ++k) {
      const auto& value = row[static_cast<std::size_t>(categorical_cols[k])];
      for (std::size_t l = 1; l < levels[k].size(); ++l) fm.X(i, col++) = value == levels[k][l] ? 1.0 : 0.0;
    }
  }
  fm.validate();
  return out;
}

void save_feature_table(const FeatureMatrix& fm, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io, path.string(), "cannot write feature table");
  out << "subject_id,W,Y";
  for (const auto& c : fm.column_names) out << ',' << csv::escape(c);
  out << '\n';
  for (Eigen::Index i = 0; i < fm.X.rows(); ++i) {
    out << csv::escape(fm.subject_ids[static_cast<std::size_t>(i)]) << ','
        << csv::format_double(fm.W[i]) << ',' << csv::format_double(fm.Y[i]);
    for (Eigen::Index j = 0; j < fm.X.cols(); ++j) out << ',' << csv::format_double(fm.X(i, j));
    out << '\n';
  }
}

void save_covariate_table(const CovariateTable& t, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io, path.string(), "cannot write table");
  out << "subject_id";
  for (const auto& c : t.column_names) out << ',' << csv::escape(c);
  out << '\n';
  for (Eigen::Index i = 0; i < t.values.rows(); ++i) {
    out << csv::escape(t.subject_ids[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < t.values.cols(); ++j) out << ',' << csv::format_double(t.values(i, j));
    out << '\n';
  }
}

CovariateTable load_covariate_table(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const int id_col = table.column("subject_id");
  if (id_col < 0) throw Error(Errc::missing_column, "subject_id", "mandatory column missing");
  CovariateTable t;
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < table.header.size(); ++c)
    if (static_cast<int>(c) != id_col) {
      cols.push_back(c);
      t.column_names.push_back(table.header[c]);
    }
  t.values.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    t.subject_ids.push_back(table.rows[r][static_cast<std::size_t>(id_col)]);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      double v = 0.0;
      if (!parse_number(table.rows[r][cols[k]], v))
        throw Error(Errc::parse, table.header[cols[k]], "non-numeric value");
      t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = v;
    }
  }
  return t;
}

}  // namespace eegpolicy
