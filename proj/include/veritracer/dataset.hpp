#pragma once

// CSV ingestion, preprocessing (min-max scaling to [0,1], one-hot
// encoding, median binarization), seeded train/test splitting, LOO subset
// construction, bundled synthetic blobs, and the synthetic distribution
// shift used by the DS protocol.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "veritracer/schema.hpp"

namespace veritracer {

struct SplitDataset {
  std::vector<std::vector<double>> train_x;
  std::vector<int> train_y;
  std::vector<std::vector<double>> test_x;
  std::vector<int> test_y;
  FeatureSchema schema;
  // Provenance: source path, seed, and a replayable transform log.
  std::string source;
  std::uint64_t seed = 0;
  std::vector<std::string> transform_log;
};

namespace detail {

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

// Deterministic standard normal (explicit Box-Muller over the raw engine).
inline double normal_sample(std::mt19937_64& rng) {
  const double u1 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

struct BlobsSpec {
  std::size_t n = 500;
  double separation = 3.0;   // center distance in sigma units
  double sigma = 1.0;
  double test_fraction = 0.2;
  // DS construction: extra cluster merged into class 1.
  std::size_t shift_points = 0;
};

// Two-Gaussian-blobs binary task in 2-d, min-max scaled to [0,1] with the
// scaling fitted on the training split.
inline SplitDataset make_blobs(const BlobsSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> raw;
  std::vector<int> labels;
  raw.reserve(spec.n);
  const double half = spec.separation / 2.0;
  for (std::size_t i = 0; i < spec.n; ++i) {
    const int y = static_cast<int>(i % 2);
    const double cx = y == 1 ? half : -half;
    const double cy = y == 1 ? half : -half;
    raw.push_back({cx + spec.sigma * detail::normal_sample(rng),
                   cy + spec.sigma * detail::normal_sample(rng)});
    labels.push_back(y);
  }

  SplitDataset ds;
  ds.schema = continuous_schema(2);
  ds.source = "synthetic:blobs";
  ds.seed = seed;

  auto idx = detail::shuffled_indices(spec.n, seed ^ 0x9e3779b97f4a7c15ull);
  const std::size_t n_test = static_cast<std::size_t>(spec.test_fraction * spec.n);
  std::vector<std::size_t> test_idx(idx.begin(), idx.begin() + n_test);
  std::vector<std::size_t> train_idx(idx.begin() + n_test, idx.end());

  // Fit min/max on the training split only.
  std::vector<double> mn(2, std::numeric_limits<double>::infinity());
  std::vector<double> mx(2, -std::numeric_limits<double>::infinity());
  for (std::size_t i : train_idx)
    for (std::size_t d = 0; d < 2; ++d) {
      mn[d] = std::min(mn[d], raw[i][d]);
      mx[d] = std::max(mx[d], raw[i][d]);
    }
  ds.schema.fitted_min = mn;
  ds.schema.fitted_max = mx;
  auto scale = [&](const std::vector<double>& v) {
    std::vector<double> out(2);
    for (std::size_t d = 0; d < 2; ++d) {
      const double range = mx[d] - mn[d];
      double s = range > 0 ? (v[d] - mn[d]) / range : 0.5;
      out[d] = std::clamp(s, 0.0, 1.0);
    }
    return out;
  };
  for (std::size_t i : train_idx) {
    ds.train_x.push_back(scale(raw[i]));
    ds.train_y.push_back(labels[i]);
  }
  for (std::size_t i : test_idx) {
    ds.test_x.push_back(scale(raw[i]));
    ds.test_y.push_back(labels[i]);
  }
  ds.transform_log.push_back("blobs n=" + std::to_string(spec.n));
  ds.transform_log.push_back("split test_fraction=" + std::to_string(spec.test_fraction));
  return ds;
}

// Original plus shifted variant: a third cluster, relabeled to class 1, is
// merged into the training split.
inline std::pair<SplitDataset, SplitDataset> make_synthetic_shift(const BlobsSpec& spec,
                                                                  std::uint64_t seed) {
  SplitDataset original = make_blobs(spec, seed);
  SplitDataset shifted = original;
  std::mt19937_64 rng(seed ^ 0xda3e39cb94b95bdbull);
  const double half = spec.separation / 2.0;
  // New cluster sits off-axis, between the two original blobs.
  const auto& mn = original.schema.fitted_min;
  const auto& mx = original.schema.fitted_max;
  for (std::size_t i = 0; i < spec.shift_points; ++i) {
    std::vector<double> p = {half + spec.sigma * detail::normal_sample(rng),
                             -half + spec.sigma * detail::normal_sample(rng)};
    std::vector<double> s(2);
    for (std::size_t d = 0; d < 2; ++d) {
      const double range = mx[d] - mn[d];
      s[d] = std::clamp(range > 0 ? (p[d] - mn[d]) / range : 0.5, 0.0, 1.0);
    }
    shifted.train_x.push_back(s);
    shifted.train_y.push_back(1);
  }
  shifted.transform_log.push_back("shift added=" + std::to_string(spec.shift_points));
  return {original, shifted};
}

// ---------------------------------------------------------------------------
// LOO subsets
// ---------------------------------------------------------------------------

// Removes exactly ceil(0.01 * n) training rows, seeded; the test split is
// untouched.
inline SplitDataset make_loo_subset(const SplitDataset& ds, std::uint64_t seed,
                                    double drop_fraction = 0.01) {
  const std::size_t n = ds.train_x.size();
  if (n < 100) throw std::invalid_argument("make_loo_subset: train size must be >= 100");
  const std::size_t k =
      static_cast<std::size_t>(std::ceil(drop_fraction * static_cast<double>(n)));
  auto idx = detail::shuffled_indices(n, seed);
  std::vector<bool> drop(n, false);
  std::string dropped_ids;
  for (std::size_t i = 0; i < k; ++i) {
    drop[idx[i]] = true;
    dropped_ids += (i ? "," : "") + std::to_string(idx[i]);
  }
  SplitDataset out = ds;
  out.train_x.clear();
  out.train_y.clear();
  for (std::size_t i = 0; i < n; ++i) {
    if (drop[i]) continue;
    out.train_x.push_back(ds.train_x[i]);
    out.train_y.push_back(ds.train_y[i]);
  }
  out.transform_log.push_back("loo removed=" + std::to_string(k) + " ids=" + dropped_ids);
  return out;
}

// ---------------------------------------------------------------------------
// CSV loading
// ---------------------------------------------------------------------------

struct ColumnSpec {
  std::string name;
  enum class Kind { Continuous, Categorical } kind = Kind::Continuous;
};

struct CsvSchemaSpec {
  std::vector<ColumnSpec> columns;
  std::string label_column;
  // "binary" expects 0/1 labels; "median" binarizes against the train median.
  std::string label_kind = "binary";
  double test_fraction = 0.2;
};

namespace detail {

// RFC-4180 record reader: quoted fields, doubled quotes, embedded commas.
inline bool read_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool in_quotes = false, any = false;
  int c;
  while ((c = in.get()) != EOF) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') { field += '"'; in.get(); }
        else in_quotes = false;
      } else field += static_cast<char>(c);
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field += static_cast<char>(c);
    }
  }
  if (!any) return false;
  fields.push_back(field);
  return true;
}

inline std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos != s.size()) return std::nullopt;
    return v;
  } catch (...) {
    return std::nullopt;
  }
}

}  // namespace detail

// Binarizes a numeric column against a threshold: 1 iff value > threshold.
inline std::vector<int> binarize_labels(const std::vector<double>& values,
                                        double threshold) {
  std::vector<int> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(v > threshold ? 1 : 0);
  return out;
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median_of: empty");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline SplitDataset load_csv(const std::string& path, const CsvSchemaSpec& spec,
                             std::uint64_t seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);

  std::vector<std::string> header;
  if (!detail::read_record(in, header))
    throw std::runtime_error("load_csv: empty file " + path);

  auto col_index = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::runtime_error("load_csv: missing column '" + name + "'");
  };
  std::vector<std::size_t> feat_idx;
  for (const auto& c : spec.columns) feat_idx.push_back(col_index(c.name));
  const std::size_t label_idx = col_index(spec.label_column);

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> rec;
  std::size_t dropped = 0;
  while (detail::read_record(in, rec)) {
    if (rec.size() == 1 && rec[0].empty()) continue;  // trailing blank line
    if (rec.size() != header.size())
      throw std::runtime_error("load_csv: ragged row in " + path);
    bool missing = false;
    for (std::size_t i : feat_idx)
      if (rec[i].empty()) missing = true;
    if (rec[label_idx].empty()) missing = true;
    if (missing) { ++dropped; continue; }
    rows.push_back(rec);
  }
  if (rows.empty()) throw std::runtime_error("load_csv: no usable rows in " + path);

  SplitDataset ds;
  ds.source = path;
  ds.seed = seed;
  if (dropped)
    ds.transform_log.push_back("dropped_missing=" + std::to_string(dropped));

  auto idx = detail::shuffled_indices(rows.size(), seed);
  const std::size_t n_test =
      static_cast<std::size_t>(spec.test_fraction * static_cast<double>(rows.size()));
  std::vector<std::size_t> test_rows(idx.begin(), idx.begin() + n_test);
  std::vector<std::size_t> train_rows(idx.begin() + n_test, idx.end());

  // Fit per-column stats on the training rows only.
  std::vector<double> mn(spec.columns.size(), std::numeric_limits<double>::infinity());
  std::vector<double> mx(spec.columns.size(), -std::numeric_limits<double>::infinity());
  std::vector<std::map<std::string, std::size_t>> categories(spec.columns.size());
  for (std::size_t r : train_rows) {
    for (std::size_t c = 0; c < spec.columns.size(); ++c) {
      const std::string& cell = rows[r][feat_idx[c]];
      if (spec.columns[c].kind == ColumnSpec::Kind::Continuous) {
        auto v = detail::parse_double(cell);
        if (!v)
          throw std::runtime_error("load_csv: non-numeric value '" + cell +
                                   "' in continuous column '" + spec.columns[c].name + "'");
        mn[c] = std::min(mn[c], *v);
        mx[c] = std::max(mx[c], *v);
      } else {
        categories[c].emplace(cell, categories[c].size());
      }
    }
  }

  ds.schema.label_name = spec.label_column;
  for (std::size_t c = 0; c < spec.columns.size(); ++c) {
    if (spec.columns[c].kind == ColumnSpec::Kind::Continuous) {
      ds.schema.features.push_back({spec.columns[c].name, 0});
      ds.schema.fitted_min.push_back(mn[c]);
      ds.schema.fitted_max.push_back(mx[c]);
    } else {
      ds.schema.features.push_back({spec.columns[c].name, categories[c].size()});
      ds.schema.fitted_min.push_back(0.0);
      ds.schema.fitted_max.push_back(1.0);
    }
  }

  double label_threshold = 0.0;
  if (spec.label_kind == "median") {
    std::vector<double> train_labels;
    for (std::size_t r : train_rows) {
      auto v = detail::parse_double(rows[r][label_idx]);
      if (!v) throw std::runtime_error("load_csv: non-numeric label");
      train_labels.push_back(*v);
    }
    label_threshold = median_of(train_labels);
    bool constant = std::all_of(train_labels.begin(), train_labels.end(),
                                [&](double v) { return v == train_labels[0]; });
    if (constant)
      throw std::runtime_error("load_csv: constant label column (degenerate task)");
    ds.transform_log.push_back("label_median=" + std::to_string(label_threshold));
  }

  auto encode_row = [&](std::size_t r, bool is_train) {
    std::vector<double> out;
    for (std::size_t c = 0; c < spec.columns.size(); ++c) {
      const std::string& cell = rows[r][feat_idx[c]];
      if (spec.columns[c].kind == ColumnSpec::Kind::Continuous) {
        double v = *detail::parse_double(cell);
        const double range = mx[c] - mn[c];
        out.push_back(std::clamp(range > 0 ? (v - mn[c]) / range : 0.5, 0.0, 1.0));
      } else {
        std::vector<double> group(categories[c].size(), 0.0);
        auto it = categories[c].find(cell);
        if (it != categories[c].end()) {
          group[it->second] = 1.0;
        } else if (is_train) {
          throw std::logic_error("load_csv: train category not fitted");
        } else {
          ds.transform_log.push_back("unseen_category col=" + spec.columns[c].name +
                                     " value=" + cell);
        }
        out.insert(out.end(), group.begin(), group.end());
      }
    }
    return out;
  };
  auto encode_label = [&](std::size_t r) {
    double v = *detail::parse_double(rows[r][label_idx]);
    if (spec.label_kind == "median") return v > label_threshold ? 1 : 0;
    if (v != 0.0 && v != 1.0)
      throw std::runtime_error("load_csv: non-binary label value");
    return static_cast<int>(v);
  };

  for (std::size_t r : train_rows) {
    ds.train_x.push_back(encode_row(r, true));
    ds.train_y.push_back(encode_label(r));
  }
  for (std::size_t r : test_rows) {
    ds.test_x.push_back(encode_row(r, false));
    ds.test_y.push_back(encode_label(r));
  }
  ds.transform_log.push_back("split seed=" + std::to_string(seed) + " test_fraction=" +
                             std::to_string(spec.test_fraction));
  return ds;
}

// ---------------------------------------------------------------------------
// Binary matrix cache (versioned, little-endian 64-bit floats, row-major,
// with a JSON sidecar written by the caller)
// ---------------------------------------------------------------------------

inline void write_matrix_cache(const std::string& path,
                               const std::vector<std::vector<double>>& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_matrix_cache: cannot open " + path);
  const char magic[8] = {'V', 'T', 'C', 'M', 'A', 'T', '0', '1'};
  out.write(magic, 8);
  std::uint64_t rows = m.size();
  std::uint64_t cols = rows ? m[0].size() : 0;
  out.write(reinterpret_cast<const char*>(&rows), 8);
  out.write(reinterpret_cast<const char*>(&cols), 8);
  for (const auto& row : m) {
    if (row.size() != cols) throw std::invalid_argument("write_matrix_cache: ragged matrix");
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(cols * sizeof(double)));
  }
}

inline std::vector<std::vector<double>> read_matrix_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_matrix_cache: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (std::string(magic, 8) != "VTCMAT01")
    throw std::runtime_error("read_matrix_cache: bad magic/version in " + path);
  std::uint64_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), 8);
  in.read(reinterpret_cast<char*>(&cols), 8);
  std::vector<std::vector<double>> m(rows, std::vector<double>(cols));
  for (auto& row : m)
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(cols * sizeof(double)));
  if (!in) throw std::runtime_error("read_matrix_cache: truncated file " + path);
  return m;
}

}  // namespace veritracer
