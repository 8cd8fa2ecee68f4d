#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "classifier.hpp"
#include "error.hpp"
#include "points.hpp"

namespace dptl::io {

//! Column layout of the processed UCI heart-disease files.
inline std::vector<std::string> uci_heart_columns()
{
  return { "age",     "sex",     "cp",    "trestbps", "chol", "fbs",  "restecg",
           "thalach", "exang",   "oldpeak", "slope",  "ca",   "thal", "num" };
}

//! Covariates kept for the heart-disease study.
inline std::vector<std::string> heart_covariates()
{
  return { "age", "sex", "cp", "exang", "thalach", "oldpeak", "trestbps" };
}

struct TableSchema
{
  std::vector<std::string> columns = uci_heart_columns(); //!< file order, used without a header
  std::vector<std::string> covariates = heart_covariates();
  std::string label = "num";
  double label_threshold = 0.0; //!< label is 1 iff value > threshold
  bool has_header = false;
  char delimiter = ',';
  std::string missing = "?";
};

struct TabularSource
{
  std::string path;
  std::string server_label;
};

//! Selected covariates and binary labels of one file, before scaling.
struct RawTable
{
  std::string server_label;
  std::vector<std::string> covariates;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::size_t dropped = 0; //!< rows with a missing selected value

  std::size_t size() const noexcept { return rows.size(); }
};

namespace detail {

inline std::string_view trim(std::string_view s) noexcept
{
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_line(std::string_view line, char delim)
{
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start)));
    if (pos == std::string_view::npos)
      break;
    start = pos + 1;
  }
  return out;
}

inline std::size_t column_index(const std::vector<std::string>& names, const std::string& name,
                                const std::string& where)
{
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end())
    throw DataError(where + ": column '" + name + "' not in schema");
  return static_cast<std::size_t>(it - names.begin());
}

} // namespace detail

//! Parses delimited text. Rows with the missing sentinel in any selected
//! column are dropped and counted; anything else unparseable is an error.
inline RawTable parse_csv(std::istream& in, const std::string& server_label, const TableSchema& schema)
{
  RawTable t;
  t.server_label = server_label;
  t.covariates = schema.covariates;
  std::vector<std::string> names = schema.columns;
  std::string line;
  std::size_t line_no = 0;
  if (schema.has_header) {
    if (!std::getline(in, line))
      return t;
    ++line_no;
    names.clear();
    for (auto f : detail::split_line(line, schema.delimiter))
      names.emplace_back(f);
  }
  std::vector<std::size_t> cov_idx;
  for (const auto& c : schema.covariates)
    cov_idx.push_back(detail::column_index(names, c, server_label));
  const std::size_t label_idx = detail::column_index(names, schema.label, server_label);

  auto parse = [&](std::string_view f, std::size_t col, double& out) {
    const auto* end = f.data() + f.size();
    auto [ptr, ec] = std::from_chars(f.data(), end, out);
    if (ec != std::errc() || ptr != end || f.empty()) {
      std::ostringstream msg;
      msg << server_label << ": line " << line_no << ", column '" << names[col]
          << "': cannot parse '" << f << "'";
      throw DataError(msg.str());
    }
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty())
      continue;
    const auto fields = detail::split_line(line, schema.delimiter);
    if (fields.size() != names.size()) {
      std::ostringstream msg;
      msg << server_label << ": line " << line_no << " has " << fields.size() << " fields, expected "
          << names.size();
      throw DataError(msg.str());
    }
    bool missing = fields[label_idx] == schema.missing;
    for (auto c : cov_idx)
      missing = missing || fields[c] == schema.missing;
    if (missing) {
      ++t.dropped;
      continue;
    }
    std::vector<double> row(cov_idx.size());
    for (std::size_t k = 0; k < cov_idx.size(); ++k)
      parse(fields[cov_idx[k]], cov_idx[k], row[k]);
    double y = 0.0;
    parse(fields[label_idx], label_idx, y);
    t.rows.push_back(std::move(row));
    t.labels.push_back(y > schema.label_threshold ? 1 : 0);
  }
  return t;
}

inline RawTable load_csv(const TabularSource& source, const TableSchema& schema = {})
{
  std::ifstream in(source.path);
  if (!in)
    throw DataError("cannot open '" + source.path + "'");
  return parse_csv(in, source.server_label.empty() ? source.path : source.server_label, schema);
}

inline std::vector<RawTable> load_csv(std::span<const TabularSource> sources, const TableSchema& schema = {})
{
  std::vector<RawTable> out;
  for (const auto& s : sources)
    out.push_back(load_csv(s, schema));
  return out;
}

//! Per-column affine map [min, max] -> [0, upper].
struct ScalingRecord
{
  std::vector<std::string> columns;
  std::vector<double> min, max;
  double upper = 0.5;

  double apply(std::size_t col, double v) const
  {
    return upper * (v - min[col]) / (max[col] - min[col]);
  }

  Points apply(const RawTable& t) const
  {
    dptl::detail::require<InputError>(t.covariates == columns, "ScalingRecord: column mismatch");
    Points p(columns.size());
    p.reserve(t.size());
    std::vector<double> row(columns.size());
    for (const auto& r : t.rows) {
      for (std::size_t k = 0; k < r.size(); ++k)
        row[k] = apply(k, r[k]);
      p.push_back(row);
    }
    return p;
  }
};

//! Min/max pooled over every row of every table.
inline ScalingRecord fit_scaling(std::span<const RawTable> tables, double upper = 0.5)
{
  dptl::detail::require<InputError>(!tables.empty(), "fit_scaling: no tables");
  ScalingRecord s;
  s.columns = tables.front().covariates;
  s.upper = upper;
  const std::size_t d = s.columns.size();
  s.min.assign(d, std::numeric_limits<double>::infinity());
  s.max.assign(d, -std::numeric_limits<double>::infinity());
  for (const auto& t : tables) {
    dptl::detail::require<DataError>(t.covariates == s.columns, "fit_scaling: schema differs across servers");
    for (const auto& r : t.rows)
      for (std::size_t k = 0; k < d; ++k) {
        s.min[k] = std::min(s.min[k], r[k]);
        s.max[k] = std::max(s.max[k], r[k]);
      }
  }
  for (std::size_t k = 0; k < d; ++k)
    if (!(s.max[k] > s.min[k]))
      throw DataError("fit_scaling: column '" + s.columns[k] + "' has zero range");
  return s;
}

struct PreprocessConfig
{
  double upper = 0.5;
  bool recenter = true; //!< label offset = server prevalence instead of 1/2
};

struct Preprocessed
{
  std::vector<ServerDataset> servers;
  ScalingRecord scaling;
  std::vector<std::string> server_labels;
  std::vector<std::size_t> dropped;
};

inline double prevalence(std::span<const int> labels)
{
  if (labels.empty())
    return 0.5;
  return static_cast<double>(std::accumulate(labels.begin(), labels.end(), 0)) /
         static_cast<double>(labels.size());
}

//! Scales with a given record and builds one ServerDataset per table; table
//! k becomes server k.
inline Preprocessed preprocess(std::span<const RawTable> tables, const ScalingRecord& scaling,
                               const PreprocessConfig& config = {})
{
  Preprocessed p;
  p.scaling = scaling;
  for (std::size_t k = 0; k < tables.size(); ++k) {
    ServerDataset s;
    s.server_id = static_cast<int>(k);
    s.covariates = scaling.apply(tables[k]);
    s.labels = tables[k].labels;
    s.label_offset = config.recenter ? prevalence(s.labels) : 0.5;
    p.servers.push_back(std::move(s));
    p.server_labels.push_back(tables[k].server_label);
    p.dropped.push_back(tables[k].dropped);
  }
  return p;
}

inline Preprocessed preprocess(std::span<const RawTable> tables, const PreprocessConfig& config = {})
{
  dptl::detail::require<InputError>(!tables.empty(), "preprocess: no tables");
  return preprocess(tables, fit_scaling(tables, config.upper), config);
}

struct Split
{
  RawTable train;
  RawTable test;
};

//! Seeded split without replacement; `test_size` rows go to the test part.
inline Split split(const RawTable& t, std::size_t test_size, std::uint64_t seed)
{
  if (test_size > t.size())
    throw DataError("split: test size " + std::to_string(test_size) + " exceeds " +
                    std::to_string(t.size()) + " rows of " + t.server_label);
  std::vector<std::size_t> idx(t.size());
  std::iota(idx.begin(), idx.end(), std::size_t{ 0 });
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(test_size));
  std::sort(idx.begin() + static_cast<std::ptrdiff_t>(test_size), idx.end());
  Split s;
  for (auto* part : { &s.train, &s.test }) {
    part->server_label = t.server_label;
    part->covariates = t.covariates;
  }
  s.train.dropped = t.dropped;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto& part = i < test_size ? s.test : s.train;
    part.rows.push_back(t.rows[idx[i]]);
    part.labels.push_back(t.labels[idx[i]]);
  }
  return s;
}

//! Writes covariates and labels with a header line.
inline void write_csv(std::ostream& out, const ServerDataset& s, std::span<const std::string> columns,
                      std::string_view label = "label")
{
  dptl::detail::require<InputError>(columns.size() == s.dim(), "write_csv: one name per covariate");
  for (const auto& c : columns)
    out << c << ',';
  out << label << '\n';
  out << std::setprecision(17);
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (double v : s.covariates[i])
      out << v << ',';
    out << s.labels[i] << '\n';
  }
}

} // namespace dptl::io
