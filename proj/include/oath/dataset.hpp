#pragma once

// Labelled two-group datasets: CSV ingestion with a schema, min-max
// normalisation with persisted constants, and a seeded synthetic generator
// producing biased data.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "oath/random.hpp"

namespace oath {

enum class Group : std::uint8_t { kA = 0, kB = 1 };

inline constexpr std::uint64_t group_code(Group g) { return static_cast<std::uint64_t>(g); }
inline Group group_from_code(std::uint64_t c) {
  if (c > 1) throw std::invalid_argument("group code must be 0 (a) or 1 (b)");
  return static_cast<Group>(c);
}
inline const char* group_name(Group g) { return g == Group::kA ? "a" : "b"; }

struct Record {
  std::vector<double> features;  // normalised to [0, 1]
  int label = 0;
  Group group = Group::kA;
};

struct LabeledDataset {
  std::vector<Record> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  std::size_t dim() const { return records.empty() ? 0 : records.front().features.size(); }

  std::size_t group_size(Group g) const {
    return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [g](const Record& r) { return r.group == g; }));
  }

  void validate() const {
    if (records.empty()) throw std::invalid_argument("dataset is empty");
    const std::size_t d = dim();
    for (const auto& r : records) {
      if (r.features.size() != d) throw std::invalid_argument("dataset has ragged feature rows");
      if (r.label != 0 && r.label != 1) throw std::invalid_argument("dataset labels must be binary");
    }
  }

  // Group-relabelled copy (a <-> b).
  LabeledDataset swapped_groups() const {
    LabeledDataset out = *this;
    for (auto& r : out.records) r.group = r.group == Group::kA ? Group::kB : Group::kA;
    return out;
  }
};

/// Which CSV columns carry the label, the sensitive attribute and features.
struct Schema {
  std::string label_column;
  std::string sensitive_column;
  std::string group_a_value;
  std::string group_b_value;
  std::string positive_label = "1";
  std::vector<std::string> feature_columns;  // empty: all other columns

  static Schema from_kv(const std::map<std::string, std::string>& kv) {
    auto need = [&](const std::string& k) {
      auto it = kv.find(k);
      if (it == kv.end()) throw std::invalid_argument("schema: missing key '" + k + "'");
      return it->second;
    };
    Schema s;
    s.label_column = need("label");
    s.sensitive_column = need("sensitive");
    s.group_a_value = need("group_a");
    s.group_b_value = need("group_b");
    if (auto it = kv.find("positive_label"); it != kv.end()) s.positive_label = it->second;
    if (auto it = kv.find("features"); it != kv.end() && !it->second.empty()) {
      std::stringstream ss(it->second);
      std::string col;
      while (std::getline(ss, col, ',')) s.feature_columns.push_back(col);
    }
    return s;
  }
};

/// Per-feature min/max used for normalisation; persisted so client queries are
/// normalised exactly like the training data.
struct Normalizer {
  std::vector<double> min;
  std::vector<double> max;

  static Normalizer fit(const std::vector<std::vector<double>>& rows) {
    Normalizer n;
    if (rows.empty()) return n;
    n.min = rows.front();
    n.max = rows.front();
    for (const auto& r : rows)
      for (std::size_t j = 0; j < r.size(); ++j) {
        n.min[j] = std::min(n.min[j], r[j]);
        n.max[j] = std::max(n.max[j], r[j]);
      }
    return n;
  }

  std::vector<double> apply(const std::vector<double>& raw) const {
    std::vector<double> out(raw.size());
    for (std::size_t j = 0; j < raw.size(); ++j) {
      double span = max[j] - min[j];
      double v = span > 0 ? (raw[j] - min[j]) / span : 0.0;
      out[j] = std::clamp(v, 0.0, 1.0);
    }
    return out;
  }

  nlohmann::json to_json() const { return {{"min", min}, {"max", max}}; }
  static Normalizer from_json(const nlohmann::json& j) {
    return Normalizer{j.at("min").get<std::vector<double>>(), j.at("max").get<std::vector<double>>()};
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') quoted = !quoted;
    else if (c == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') cur.push_back(c);
  }
  out.push_back(cur);
  for (auto& s : out) {
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
  }
  return out;
}

}  // namespace detail

struct CsvLoadResult {
  LabeledDataset dataset;
  Normalizer normalizer;
  std::vector<std::string> feature_names;
};

/// Loads a CSV with header. If `normalizer` is given it is applied as is,
/// otherwise one is fitted on this file.
inline CsvLoadResult load_csv(std::istream& in, const Schema& schema, const Normalizer* normalizer = nullptr) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("csv: missing header");
  auto header = detail::split_csv_line(line);
  auto col = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::invalid_argument("csv: no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t label_col = col(schema.label_column);
  const std::size_t sens_col = col(schema.sensitive_column);
  std::vector<std::size_t> feat_cols;
  std::vector<std::string> names;
  if (schema.feature_columns.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (i != label_col && i != sens_col) {
        feat_cols.push_back(i);
        names.push_back(header[i]);
      }
  } else {
    for (const auto& f : schema.feature_columns) {
      feat_cols.push_back(col(f));
      names.push_back(f);
    }
  }

  std::vector<std::vector<double>> raw;
  std::vector<int> labels;
  std::vector<Group> groups;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) throw std::invalid_argument("csv: wrong cell count on line " + std::to_string(lineno));
    const std::string& s = cells[sens_col];
    if (s == schema.group_a_value) groups.push_back(Group::kA);
    else if (s == schema.group_b_value) groups.push_back(Group::kB);
    else throw std::invalid_argument("csv: unknown sensitive value '" + s + "' on line " + std::to_string(lineno));
    labels.push_back(cells[label_col] == schema.positive_label ? 1 : 0);
    std::vector<double> row;
    row.reserve(feat_cols.size());
    for (auto c : feat_cols) {
      try {
        row.push_back(std::stod(cells[c]));
      } catch (const std::exception&) {
        throw std::invalid_argument("csv: non-numeric feature '" + cells[c] + "' on line " + std::to_string(lineno));
      }
    }
    raw.push_back(std::move(row));
  }

  CsvLoadResult out;
  out.normalizer = normalizer ? *normalizer : Normalizer::fit(raw);
  out.feature_names = names;
  for (std::size_t i = 0; i < raw.size(); ++i)
    out.dataset.records.push_back({out.normalizer.apply(raw[i]), labels[i], groups[i]});
  return out;
}

inline void write_csv(std::ostream& out, const LabeledDataset& ds) {
  out << "label,group";
  for (std::size_t j = 0; j < ds.dim(); ++j) out << ",x" << j;
  out << "\n";
  out.precision(17);
  for (const auto& r : ds.records) {
    out << r.label << "," << group_name(r.group);
    for (double v : r.features) out << "," << v;
    out << "\n";
  }
}

/// Schema matching `write_csv`.
inline Schema default_schema() {
  Schema s;
  s.label_column = "label";
  s.sensitive_column = "group";
  s.group_a_value = "a";
  s.group_b_value = "b";
  return s;
}

inline void save_dataset_csv(const std::string& path, const LabeledDataset& ds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_csv(out, ds);
}

/// Reads a file written by `write_csv`; features are taken as stored.
inline LabeledDataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string header;
  std::getline(in, header);
  const std::size_t dim = detail::split_csv_line(header).size() - 2;
  in.clear();
  in.seekg(0);
  Normalizer identity{std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
  auto ds = load_csv(in, default_schema(), &identity).dataset;
  ds.validate();
  return ds;
}

struct SyntheticConfig {
  std::size_t n = 1000;
  std::size_t dim = 4;
  double fraction_a = 0.5;
  double base_rate_a = 0.6;  // P(y = 1 | group a)
  double base_rate_b = 0.3;  // P(y = 1 | group b)
  double separation = 0.25;  // class-conditional mean shift per feature
  double group_shift = 0.1;  // group-conditional mean shift (proxy bias)
  double noise = 0.15;
  std::uint64_t seed = 1;
};

/// Two-group data whose label base rates and feature means differ by group,
/// so a single global threshold is unfair under demographic parity.
inline LabeledDataset generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.n == 0 || cfg.dim == 0) throw std::invalid_argument("synthetic: n and dim must be positive");
  Prg prg(seed_from_u64(cfg.seed), 0x5eed);
  auto gauss = [&prg] {
    double u1 = std::max(prg.unit(), 1e-300), u2 = prg.unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  };
  LabeledDataset ds;
  ds.records.reserve(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    Record r;
    r.group = prg.bernoulli(cfg.fraction_a) ? Group::kA : Group::kB;
    r.label = prg.bernoulli(r.group == Group::kA ? cfg.base_rate_a : cfg.base_rate_b) ? 1 : 0;
    r.features.resize(cfg.dim);
    for (std::size_t j = 0; j < cfg.dim; ++j) {
      // alternate feature polarity so the model needs several features
      double sign = (j % 2 == 0) ? 1.0 : -0.5;
      double mean = 0.5 + sign * cfg.separation * (r.label ? 1.0 : -1.0) +
                    (r.group == Group::kA ? cfg.group_shift : -cfg.group_shift) * (j == 0 ? 1.0 : 0.3);
      r.features[j] = std::clamp(mean + cfg.noise * gauss(), 0.0, 1.0);
    }
    ds.records.push_back(std::move(r));
  }
  return ds;
}

}  // namespace oath
