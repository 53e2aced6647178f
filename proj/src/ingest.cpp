#include "cmf/ingest.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace cmf {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(const std::string& tok, const std::string& context) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(tok, &pos);
    while (pos < tok.size() && std::isspace(static_cast<unsigned char>(tok[pos]))) ++pos;
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("cannot parse number '" + tok + "' in " + context);
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> default_col_names(Index p) {
  std::vector<std::string> names;
  names.reserve(p);
  for (Index j = 0; j < p; ++j) names.push_back("c" + std::to_string(j));
  return names;
}

}  // namespace

LossKind ColumnSchema::loss_for(const std::string& column) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == column) return losses[i];
  return LossKind::gaussian();
}

ColumnSchema read_schema_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open schema " + path.string());
  nlohmann::json j;
  in >> j;
  if (!j.is_object()) throw std::runtime_error("schema must be a JSON object");

  auto parse_kind = [&](const nlohmann::json& v) -> LossKind {
    if (v.is_string()) {
      const std::string s = v.get<std::string>();
      if (s == "gaussian") return LossKind::gaussian();
      if (s == "bernoulli") return LossKind::bernoulli();
      if (s == "poisson") return LossKind::poisson();
      throw std::runtime_error("unknown loss kind '" + s + "'");
    }
    if (v.is_object()) {
      const std::string s = v.at("kind").get<std::string>();
      if (s == "gaussian")
        return LossKind::gaussian(v.value("variance", 1.0));
      if (s == "bernoulli") return LossKind::bernoulli();
      if (s == "poisson") return LossKind::poisson();
      throw std::runtime_error("unknown loss kind '" + s + "'");
    }
    throw std::runtime_error("schema entries must be strings or objects");
  };

  ColumnSchema schema;
  for (const auto& [key, value] : j.items()) {
    schema.columns.push_back(key);
    schema.losses.push_back(parse_kind(value));
  }
  return schema;
}

ObservedMatrix read_csv_matrix(const std::filesystem::path& path,
                               const ColumnSchema& schema,
                               const std::string& na_token) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw std::runtime_error("empty CSV file " + path.string());
  const auto header = split_csv_line(lines[0]);
  const Index p = static_cast<Index>(header.size());
  const Index n = static_cast<Index>(lines.size()) - 1;
  if (n < 1) throw std::runtime_error("CSV has a header but no rows: " + path.string());

  std::vector<LossKind> losses;
  losses.reserve(p);
  for (const std::string& col : header) losses.push_back(schema.loss_for(col));

  std::vector<Entry> entries;
  for (Index i = 0; i < n; ++i) {
    const auto fields = split_csv_line(lines[i + 1]);
    if (static_cast<Index>(fields.size()) != p)
      throw std::runtime_error("row " + std::to_string(i + 1) + " has " +
                               std::to_string(fields.size()) + " fields, expected " +
                               std::to_string(p));
    for (Index j = 0; j < p; ++j) {
      if (fields[j] == na_token) continue;
      entries.push_back({i, j, parse_double(fields[j], path.string())});
    }
  }
  return ObservedMatrix(n, p, std::move(entries), std::move(losses), na_token);
}

void write_csv_matrix(const std::filesystem::path& path, const ObservedMatrix& obs,
                      const std::vector<std::string>& col_names) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const auto names = col_names.empty() ? default_col_names(obs.cols()) : col_names;
  if (static_cast<Index>(names.size()) != obs.cols())
    throw std::invalid_argument("write_csv_matrix: column name count mismatch");
  for (Index j = 0; j < obs.cols(); ++j) out << (j ? "," : "") << names[j];
  out << '\n';

  // Dense row scan over the canonical (row-major) entry list.
  const auto& entries = obs.entries();
  std::size_t next = 0;
  for (Index i = 0; i < obs.rows(); ++i) {
    for (Index j = 0; j < obs.cols(); ++j) {
      if (j) out << ',';
      if (next < entries.size() && entries[next].row == i && entries[next].col == j) {
        out << format_double(entries[next].value);
        ++next;
      } else {
        out << obs.na_policy();
      }
    }
    out << '\n';
  }
}

Matrix read_dense_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw std::runtime_error("empty CSV file " + path.string());
  const auto header = split_csv_line(lines[0]);
  const Index p = static_cast<Index>(header.size());
  const Index n = static_cast<Index>(lines.size()) - 1;
  Matrix m(n, p);
  for (Index i = 0; i < n; ++i) {
    const auto fields = split_csv_line(lines[i + 1]);
    if (static_cast<Index>(fields.size()) != p)
      throw std::runtime_error("dense CSV row width mismatch in " + path.string());
    for (Index j = 0; j < p; ++j) m(i, j) = parse_double(fields[j], path.string());
  }
  return m;
}

void write_dense_csv(const std::filesystem::path& path, const Matrix& m,
                     const std::vector<std::string>& col_names) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const auto names = col_names.empty() ? default_col_names(m.cols()) : col_names;
  if (static_cast<Index>(names.size()) != m.cols())
    throw std::invalid_argument("write_dense_csv: column name count mismatch");
  for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << names[j];
  out << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j)
      out << (j ? "," : "") << format_double(m(i, j));
    out << '\n';
  }
}

Matrix mode_impute(const ObservedMatrix& obs) {
  Matrix out(obs.rows(), obs.cols());
  std::vector<char> seen(static_cast<std::size_t>(obs.rows()) * obs.cols(), 0);
  for (Index j = 0; j < obs.cols(); ++j) {
    const auto [b, e] = obs.col_span(j);
    if (b == e)
      throw std::runtime_error("mode_impute: column " + std::to_string(j) +
                               " has no observed entries");
    std::map<double, Index> counts;
    for (Index t = b; t < e; ++t) {
      const Entry& entry = obs.entries_col_major()[t];
      ++counts[entry.value];
      out(entry.row, j) = entry.value;
      seen[static_cast<std::size_t>(entry.row) * obs.cols() + j] = 1;
    }
    // std::map iterates keys ascending, so the first maximal count is the
    // smallest modal value.
    double mode = counts.begin()->first;
    Index best = 0;
    for (const auto& [value, count] : counts) {
      if (count > best) {
        best = count;
        mode = value;
      }
    }
    for (Index i = 0; i < obs.rows(); ++i)
      if (!seen[static_cast<std::size_t>(i) * obs.cols() + j]) out(i, j) = mode;
  }
  return out;
}

std::vector<TwinsRecord> read_twins_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw std::runtime_error("empty twins CSV " + path.string());
  const auto header = split_csv_line(lines[0]);
  const std::vector<std::string> expected = {"pair_id",        "gestat10",
                                             "weight_lighter", "weight_heavier",
                                             "mortality_lighter", "mortality_heavier"};
  if (header != expected)
    throw std::runtime_error("twins CSV header mismatch in " + path.string());

  std::vector<TwinsRecord> records;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_csv_line(lines[i]);
    if (f.size() != expected.size())
      throw std::runtime_error("twins CSV row width mismatch in " + path.string());
    TwinsRecord rec;
    rec.pair_id = static_cast<Index>(parse_double(f[0], path.string()));
    rec.gestat10 = static_cast<int>(parse_double(f[1], path.string()));
    rec.weight_lighter = parse_double(f[2], path.string());
    rec.weight_heavier = parse_double(f[3], path.string());
    rec.mortality_lighter = static_cast<int>(parse_double(f[4], path.string()));
    rec.mortality_heavier = static_cast<int>(parse_double(f[5], path.string()));
    if (rec.gestat10 < 0 || rec.gestat10 > 9)
      throw std::runtime_error("twins CSV: gestat10 out of range in row " +
                               std::to_string(i));
    if ((rec.mortality_lighter != 0 && rec.mortality_lighter != 1) ||
        (rec.mortality_heavier != 0 && rec.mortality_heavier != 1))
      throw std::runtime_error("twins CSV: mortality must be 0/1 in row " +
                               std::to_string(i));
    records.push_back(rec);
  }
  return records;
}

void write_twins_csv(const std::filesystem::path& path,
                     const std::vector<TwinsRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "pair_id,gestat10,weight_lighter,weight_heavier,mortality_lighter,"
         "mortality_heavier\n";
  for (const TwinsRecord& rec : records) {
    out << rec.pair_id << ',' << rec.gestat10 << ',' << format_double(rec.weight_lighter)
        << ',' << format_double(rec.weight_heavier) << ',' << rec.mortality_lighter
        << ',' << rec.mortality_heavier << '\n';
  }
}

}  // namespace cmf
