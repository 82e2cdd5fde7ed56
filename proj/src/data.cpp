#include "igsaft/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace igsaft {

namespace {

std::string describe_row(Index row) { return "row " + std::to_string(row + 1); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  out.push_back(field);
  for (auto& f : out) {
    const auto first = f.find_first_not_of(" \t");
    const auto last = f.find_last_not_of(" \t");
    f = first == std::string::npos ? std::string() : f.substr(first, last - first + 1);
  }
  return out;
}

bool is_missing(const std::string& s) {
  return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan" || s == "." || s == "null";
}

double parse_number(const std::string& s, const std::string& column, Index row) {
  if (is_missing(s)) {
    throw ValueError("missing value in column '" + column + "' at " + describe_row(row));
  }
  double value = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw ValueError("non-numeric value '" + s + "' in column '" + column + "' at " + describe_row(row));
  }
  if (!std::isfinite(value)) {
    throw ValueError("non-finite value in column '" + column + "' at " + describe_row(row));
  }
  return value;
}

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, ptr);
}

}  // namespace

Dataset::Dataset(MatrixXd z, VectorXd d, VectorXd y, VectorXi delta)
    : z_(std::move(z)), d_(std::move(d)), y_(std::move(y)), delta_(std::move(delta)) {
  const Index n = y_.size();
  if (d_.size() != n || delta_.size() != n || z_.rows() != n) {
    throw ValueError("dataset columns have inconsistent lengths");
  }
  if (n < 2) throw ValueError("dataset needs at least 2 observations");
  if (z_.cols() < 1) throw ValueError("dataset needs at least one instrument");
  bool any_event = false;
  for (Index i = 0; i < n; ++i) {
    if (delta_(i) != 0 && delta_(i) != 1) {
      throw ValueError("event indicator outside {0,1} at " + describe_row(i));
    }
    any_event = any_event || delta_(i) == 1;
    if (!std::isfinite(y_(i)) || !std::isfinite(d_(i)) || !z_.row(i).allFinite()) {
      throw ValueError("non-finite value at " + describe_row(i));
    }
  }
  if (!any_event) throw ValueError("dataset has no observed events");
}

Observation Dataset::observation(Index i) const {
  return Observation{z_.row(i).transpose(), d_(i), y_(i), delta_(i)};
}

Dataset Dataset::subset(std::span<const Index> rows) const {
  const auto m = static_cast<Index>(rows.size());
  MatrixXd z(m, p());
  VectorXd d(m), y(m);
  VectorXi delta(m);
  for (Index r = 0; r < m; ++r) {
    const Index i = rows[static_cast<std::size_t>(r)];
    z.row(r) = z_.row(i);
    d(r) = d_(i);
    y(r) = y_(i);
    delta(r) = delta_(i);
  }
  return Dataset(std::move(z), std::move(d), std::move(y), std::move(delta));
}

Dataset Dataset::with_outcome(VectorXd y, VectorXi delta) const {
  return Dataset(z_, d_, std::move(y), std::move(delta));
}

double Dataset::censoring_rate() const {
  return 1.0 - static_cast<double>(delta_.sum()) / static_cast<double>(n());
}

ColumnConfig ColumnConfig::standard(Index p) {
  ColumnConfig c;
  for (Index j = 0; j < p; ++j) c.ivs.push_back("z" + std::to_string(j + 1));
  c.time_scale = TimeScale::log;
  return c;
}

Dataset load_csv(const std::string& path, const ColumnConfig& config) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open data file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("data file '" + path + "' is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv_line(line);

  std::map<std::string, std::size_t> position;
  for (std::size_t j = 0; j < header.size(); ++j) position.emplace(header[j], j);
  auto locate = [&](const std::string& name) {
    const auto it = position.find(name);
    if (it == position.end()) throw SchemaError("missing column '" + name + "'");
    return it->second;
  };
  if (config.ivs.empty()) throw SchemaError("no instrument columns configured");
  const std::size_t time_col = locate(config.time);
  const std::size_t status_col = locate(config.status);
  const std::size_t exposure_col = locate(config.exposure);
  std::vector<std::size_t> iv_cols;
  for (const auto& name : config.ivs) iv_cols.push_back(locate(name));

  std::vector<double> ys, ds, zs;
  std::vector<int> deltas;
  Index row = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw SchemaError(describe_row(row) + " has " + std::to_string(fields.size()) + " fields, header has " +
                        std::to_string(header.size()));
    }
    double t = parse_number(fields[time_col], config.time, row);
    if (config.time_scale == TimeScale::raw) {
      if (!(t > 0.0)) throw ValueError("nonpositive raw time at " + describe_row(row));
      t = std::log(t);
    }
    const double status = parse_number(fields[status_col], config.status, row);
    if (status != 0.0 && status != 1.0) {
      throw ValueError("status outside {0,1} at " + describe_row(row));
    }
    ys.push_back(t);
    deltas.push_back(static_cast<int>(status));
    ds.push_back(parse_number(fields[exposure_col], config.exposure, row));
    for (std::size_t j = 0; j < iv_cols.size(); ++j) {
      zs.push_back(parse_number(fields[iv_cols[j]], config.ivs[j], row));
    }
    ++row;
  }

  const Index n = row;
  const auto p = static_cast<Index>(iv_cols.size());
  MatrixXd z(n, p);
  VectorXd d(n), y(n);
  VectorXi delta(n);
  for (Index i = 0; i < n; ++i) {
    y(i) = ys[static_cast<std::size_t>(i)];
    d(i) = ds[static_cast<std::size_t>(i)];
    delta(i) = deltas[static_cast<std::size_t>(i)];
    for (Index j = 0; j < p; ++j) z(i, j) = zs[static_cast<std::size_t>(i * p + j)];
  }
  return Dataset(std::move(z), std::move(d), std::move(y), std::move(delta));
}

void write_csv(const std::string& path, const Dataset& dataset, const ColumnConfig& config) {
  if (static_cast<Index>(config.ivs.size()) != dataset.p()) {
    throw SchemaError("column config names " + std::to_string(config.ivs.size()) + " instruments, dataset has " +
                      std::to_string(dataset.p()));
  }
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot write '" + path + "'");
  out << config.time << ',' << config.status << ',' << config.exposure;
  for (const auto& name : config.ivs) out << ',' << name;
  out << '\n';
  for (Index i = 0; i < dataset.n(); ++i) {
    const double y = dataset.y()(i);
    out << format_number(config.time_scale == TimeScale::log ? y : std::exp(y)) << ',' << dataset.delta()(i) << ','
        << format_number(dataset.d()(i));
    for (Index j = 0; j < dataset.p(); ++j) out << ',' << format_number(dataset.z()(i, j));
    out << '\n';
  }
  if (!out) throw Error("write to '" + path + "' failed");
}

ValidationReport validate(const Dataset& dataset, double correlation_threshold) {
  ValidationReport report;
  report.censoring_rate = dataset.censoring_rate();
  report.findings.push_back({"censoring_rate", "censoring rate " + format_number(report.censoring_rate)});

  const Index n = dataset.n();
  const Index p = dataset.p();
  auto is_constant = [](const auto& col) { return (col.array() == col(0)).all(); };
  if (is_constant(dataset.d())) report.findings.push_back({"constant_column", "exposure is constant"});
  for (Index j = 0; j < p; ++j) {
    if (is_constant(dataset.z().col(j))) {
      report.findings.push_back({"constant_column", "instrument " + std::to_string(j + 1) + " is constant"});
    }
  }

  std::vector<double> events;
  for (Index i = 0; i < n; ++i) {
    if (dataset.delta()(i) == 1) events.push_back(dataset.y()(i));
  }
  std::sort(events.begin(), events.end());
  Index duplicates = 0;
  for (std::size_t i = 1; i < events.size(); ++i) duplicates += events[i] == events[i - 1] ? 1 : 0;
  if (duplicates > 0) {
    report.findings.push_back({"duplicate_event_times", std::to_string(duplicates) + " tied event times"});
  }

  const MatrixXd centered = dataset.z().rowwise() - dataset.z().colwise().mean();
  const VectorXd sd = centered.colwise().norm();
  const MatrixXd cross = centered.transpose() * centered;
  for (Index j = 0; j < p; ++j) {
    for (Index k = j + 1; k < p; ++k) {
      if (sd(j) == 0.0 || sd(k) == 0.0) continue;
      const double r = cross(j, k) / (sd(j) * sd(k));
      if (std::abs(r) > correlation_threshold) {
        report.findings.push_back({"instrument_correlation", "instruments (" + std::to_string(j + 1) + "," +
                                                                 std::to_string(k + 1) + ") correlation " +
                                                                 format_number(r)});
      }
    }
  }
  return report;
}

}  // namespace igsaft
