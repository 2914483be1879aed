#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "heartfl/error.hpp"
#include "heartfl/random.hpp"

namespace heartfl {

// ---------------------------------------------------------------------------
// Centers
// ---------------------------------------------------------------------------

enum class Center : std::uint8_t { kCleveland = 0, kHungary, kSwitzerland, kVA };

inline constexpr std::array<Center, 4> kAllCenters = {
    Center::kCleveland, Center::kHungary, Center::kSwitzerland, Center::kVA};

inline std::string_view center_name(Center c) {
  switch (c) {
    case Center::kCleveland: return "Cleveland";
    case Center::kHungary: return "Hungary";
    case Center::kSwitzerland: return "Switzerland";
    case Center::kVA: return "VA";
  }
  return "?";
}

inline std::string_view center_file_name(Center c) {
  switch (c) {
    case Center::kCleveland: return "processed.cleveland.data";
    case Center::kHungary: return "processed.hungarian.data";
    case Center::kSwitzerland: return "processed.switzerland.data";
    case Center::kVA: return "processed.va.data";
  }
  return "";
}

inline std::optional<Center> parse_center(std::string_view s) {
  for (Center c : kAllCenters) {
    std::string lower(center_name(c));
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    std::string in(s);
    std::transform(in.begin(), in.end(), in.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (in == lower) return c;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

enum class FeatureKind : std::uint8_t { kContinuous, kCategorical, kBinary };

struct Feature {
  std::string name;
  FeatureKind kind;
  std::size_t raw_column;  // column in the 14-field UCI record

  bool operator==(const Feature&) const = default;
};

inline constexpr std::size_t kRawColumns = 14;
inline constexpr std::size_t kLabelColumn = 13;

class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<Feature> features) : features_(std::move(features)) {
    for (std::size_t i = 0; i < features_.size(); ++i)
      for (std::size_t j = i + 1; j < features_.size(); ++j)
        if (features_[i].name == features_[j].name)
          throw ConfigError("duplicate feature name '" + features_[i].name + "'");
  }

  // The 13 input attributes of the processed UCI files, in file order.
  static FeatureSchema uci() {
    using K = FeatureKind;
    return FeatureSchema({{"age", K::kContinuous, 0},
                          {"sex", K::kBinary, 1},
                          {"cp", K::kCategorical, 2},
                          {"trestbps", K::kContinuous, 3},
                          {"chol", K::kContinuous, 4},
                          {"fbs", K::kBinary, 5},
                          {"restecg", K::kCategorical, 6},
                          {"thalach", K::kContinuous, 7},
                          {"exang", K::kBinary, 8},
                          {"oldpeak", K::kContinuous, 9},
                          {"slope", K::kCategorical, 10},
                          {"ca", K::kCategorical, 11},
                          {"thal", K::kCategorical, 12}});
  }

  static std::string_view target_name() { return "num"; }

  // Sub-schema restricted to `names`, kept in this schema's order.
  FeatureSchema select(std::span<const std::string> names) const {
    if (names.empty()) throw ConfigError("feature subset is empty");
    for (const auto& n : names)
      if (!index_of(n)) throw ConfigError("unknown feature '" + n + "'");
    std::vector<Feature> out;
    for (const auto& f : features_)
      if (std::find(names.begin(), names.end(), f.name) != names.end()) out.push_back(f);
    return FeatureSchema(std::move(out));
  }

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < features_.size(); ++i)
      if (features_[i].name == name) return i;
    return std::nullopt;
  }

  std::size_t size() const { return features_.size(); }
  const Feature& operator[](std::size_t i) const { return features_[i]; }
  const std::vector<Feature>& features() const { return features_; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(features_.size());
    for (const auto& f : features_) out.push_back(f.name);
    return out;
  }

  bool operator==(const FeatureSchema&) const = default;

 private:
  std::vector<Feature> features_;
};

// All 13 inputs.
inline std::vector<std::string> full_feature_names() { return FeatureSchema::uci().names(); }

// The ten attributes that remain after discarding the sparsely recorded
// slope, ca and thal columns.
inline std::vector<std::string> reduced_feature_names() {
  return {"age", "sex", "cp", "trestbps", "chol", "fbs", "restecg", "thalach", "exang", "oldpeak"};
}

// ---------------------------------------------------------------------------
// Records and datasets
// ---------------------------------------------------------------------------

struct RawRecord {
  std::array<std::optional<double>, kRawColumns> values;
  Center center = Center::kCleveland;

  bool operator==(const RawRecord&) const = default;
};

// Row-major dense feature matrix with binary labels and per-row center tags.
struct TabularDataset {
  FeatureSchema schema;
  std::vector<double> features;
  std::vector<int> labels;
  std::vector<Center> centers;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return schema.size(); }
  bool empty() const { return labels.empty(); }

  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * dim(), dim()};
  }
  std::span<double> row(std::size_t i) { return {features.data() + i * dim(), dim()}; }

  void push_back(std::span<const double> x, int label, Center center) {
    if (x.size() != dim()) throw ContractError("row width does not match schema");
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
    centers.push_back(center);
  }

  TabularDataset take(std::span<const std::size_t> rows) const {
    TabularDataset out{schema, {}, {}, {}};
    out.features.reserve(rows.size() * dim());
    out.labels.reserve(rows.size());
    out.centers.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(row(r), labels[r], centers[r]);
    return out;
  }

  std::size_t count_label(int label) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
  }

  bool operator==(const TabularDataset&) const = default;
};

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

}  // namespace detail

// Parses the comma-separated "processed.*.data" format: 14 fields per line,
// '?' (or an empty field) marks a missing value. Blank lines are skipped.
inline std::vector<RawRecord> parse_uci_file(std::string_view text, Center center) {
  std::vector<RawRecord> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    line = detail::trim(line);
    if (line.empty()) continue;

    RawRecord rec;
    rec.center = center;
    std::size_t field = 0;
    while (true) {
      const auto comma = line.find(',');
      const std::string_view tok = detail::trim(line.substr(0, comma));
      if (field >= kRawColumns)
        throw ParseError(line_no, "expected 14 fields, found more");
      if (!tok.empty() && tok != "?") {
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v))
          throw ParseError(line_no, "unparsable numeric '" + std::string(tok) + "' in field " +
                                        std::to_string(field + 1));
        rec.values[field] = v;
      }
      ++field;
      if (comma == std::string_view::npos) break;
      line.remove_prefix(comma + 1);
    }
    if (field != kRawColumns)
      throw ParseError(line_no, "expected 14 fields, found " + std::to_string(field));
    out.push_back(rec);
  }
  return out;
}

inline std::vector<RawRecord> read_uci_file(const std::filesystem::path& path, Center center) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_uci_file(ss.str(), center);
  } catch (const ParseError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

// Reads the four center files from `dir`, in the fixed center order.
inline std::vector<RawRecord> load_uci_directory(const std::filesystem::path& dir) {
  std::vector<RawRecord> all;
  for (Center c : kAllCenters) {
    auto recs = read_uci_file(dir / center_file_name(c), c);
    all.insert(all.end(), recs.begin(), recs.end());
  }
  return all;
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

// Keeps the selected columns, drops any record with a missing selected value
// or missing label, and binarizes the label (num > 0 becomes 1).
inline TabularDataset preprocess(std::span<const RawRecord> records, const FeatureSchema& schema,
                                 std::span<const std::string> subset) {
  FeatureSchema selected = schema.select(subset);
  TabularDataset ds{selected, {}, {}, {}};
  std::vector<double> x(selected.size());
  for (const auto& rec : records) {
    bool complete = rec.values[kLabelColumn].has_value();
    for (std::size_t j = 0; complete && j < selected.size(); ++j) {
      const auto& v = rec.values[selected[j].raw_column];
      if (!v) complete = false;
      else x[j] = *v;
    }
    if (!complete) continue;
    ds.push_back(x, *rec.values[kLabelColumn] > 0.0 ? 1 : 0, rec.center);
  }
  return ds;
}

inline TabularDataset preprocess(std::span<const RawRecord> records,
                                 std::span<const std::string> subset) {
  return preprocess(records, FeatureSchema::uci(), subset);
}

// Seeded uniform shuffle, then the first floor(N * train_frac) rows train.
inline std::pair<TabularDataset, TabularDataset> split_train_test(const TabularDataset& ds,
                                                                  std::uint64_t seed,
                                                                  double train_frac = 0.66) {
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw SplitError("train fraction must lie strictly between 0 and 1");
  const std::size_t n = ds.size();
  if (n < 2) throw SplitError("need at least 2 rows to split, got " + std::to_string(n));
  // The small offset keeps products such as 50 * 0.66 from flooring to 32.
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_frac + 1e-9));
  if (n_train == 0 || n_train >= n)
    throw SplitError("split of " + std::to_string(n) + " rows leaves an empty side");
  Rng rng(seed);
  const auto idx = shuffled_indices(n, rng);
  const std::span<const std::size_t> all(idx);
  return {ds.take(all.first(n_train)), ds.take(all.subspan(n_train))};
}

struct StandardizationStats {
  static constexpr double kZeroVariance = 1e-12;

  std::vector<double> mean;
  std::vector<double> stddev;

  static StandardizationStats fit(const TabularDataset& ds) {
    if (ds.empty()) throw ContractError("cannot standardize with an empty training set");
    const std::size_t p = ds.dim();
    const double n = static_cast<double>(ds.size());
    StandardizationStats s{std::vector<double>(p, 0.0), std::vector<double>(p, 0.0)};
    for (std::size_t i = 0; i < ds.size(); ++i)
      for (std::size_t j = 0; j < p; ++j) s.mean[j] += ds.row(i)[j];
    for (auto& m : s.mean) m /= n;
    for (std::size_t i = 0; i < ds.size(); ++i)
      for (std::size_t j = 0; j < p; ++j) {
        const double d = ds.row(i)[j] - s.mean[j];
        s.stddev[j] += d * d;
      }
    for (auto& v : s.stddev) v = std::sqrt(v / n);
    return s;
  }

  double transform(std::size_t j, double v) const {
    return stddev[j] < kZeroVariance ? 0.0 : (v - mean[j]) / stddev[j];
  }

  TabularDataset apply(TabularDataset ds) const {
    if (ds.dim() != mean.size()) throw ContractError("stats width does not match dataset");
    for (std::size_t i = 0; i < ds.size(); ++i) {
      auto r = ds.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) r[j] = transform(j, r[j]);
    }
    return ds;
  }
};

struct StandardizedSplit {
  TabularDataset train;
  TabularDataset test;
  StandardizationStats stats;
};

// z-scores both sets with statistics taken from `train` only.
inline StandardizedSplit standardize(const TabularDataset& train, const TabularDataset& test) {
  if (!(train.schema == test.schema)) throw ContractError("train and test schemas differ");
  auto stats = StandardizationStats::fit(train);
  return {stats.apply(train), stats.apply(test), std::move(stats)};
}

// Splits rows by center tag, preserving row order. Every center is a key.
inline std::map<Center, TabularDataset> partition_by_center(const TabularDataset& ds) {
  std::map<Center, std::vector<std::size_t>> rows;
  for (Center c : kAllCenters) rows[c];
  for (std::size_t i = 0; i < ds.size(); ++i) rows[ds.centers[i]].push_back(i);
  std::map<Center, TabularDataset> out;
  for (const auto& [c, idx] : rows) out.emplace(c, ds.take(idx));
  return out;
}

inline std::map<Center, std::size_t> count_by_center(std::span<const RawRecord> records) {
  std::map<Center, std::size_t> out;
  for (Center c : kAllCenters) out[c] = 0;
  for (const auto& r : records) ++out[r.center];
  return out;
}

}  // namespace heartfl
