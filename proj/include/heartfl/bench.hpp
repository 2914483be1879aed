#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "heartfl/dataset.hpp"
#include "heartfl/error.hpp"
#include "heartfl/federation.hpp"
#include "heartfl/interpret.hpp"
#include "heartfl/models/model.hpp"

// Experiment orchestration and report emission for the bench CLI.

namespace heartfl::bench {

enum class Experiment : std::uint8_t { kCentralized, kFederated, kLocalBaseline, kShap, kGridSearch };

inline std::string_view experiment_name(Experiment e) {
  switch (e) {
    case Experiment::kCentralized: return "centralized";
    case Experiment::kFederated: return "federated";
    case Experiment::kLocalBaseline: return "local-baseline";
    case Experiment::kShap: return "shap";
    case Experiment::kGridSearch: return "grid-search";
  }
  return "?";
}

inline Experiment parse_experiment(std::string_view s) {
  for (auto e : {Experiment::kCentralized, Experiment::kFederated, Experiment::kLocalBaseline,
                 Experiment::kShap, Experiment::kGridSearch})
    if (s == experiment_name(e)) return e;
  throw ConfigError("unknown experiment '" + std::string(s) + "'");
}

enum class Format : std::uint8_t { kCsv, kJson, kMarkdown };

inline Format parse_format(std::string_view s) {
  if (s == "csv") return Format::kCsv;
  if (s == "json") return Format::kJson;
  if (s == "markdown" || s == "md") return Format::kMarkdown;
  throw ConfigError("unknown format '" + std::string(s) + "'");
}

enum class FeatureSet : std::uint8_t { kFull, kReduced };

inline std::string_view feature_set_name(FeatureSet f) { return f == FeatureSet::kFull ? "full" : "table4"; }

inline FeatureSet parse_feature_set(std::string_view s) {
  if (s == "full") return FeatureSet::kFull;
  if (s == "table4" || s == "reduced") return FeatureSet::kReduced;
  throw ConfigError("unknown feature set '" + std::string(s) + "'");
}

inline std::vector<std::string> feature_names(FeatureSet f) {
  return f == FeatureSet::kFull ? full_feature_names() : reduced_feature_names();
}

struct RunConfig {
  std::filesystem::path data_dir;
  Experiment experiment = Experiment::kCentralized;
  std::vector<Family> families;
  std::vector<Strategy> strategies = {kAllStrategies.begin(), kAllStrategies.end()};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  // Per-family fixed hyperparameters; families without an entry are tuned
  // on the pooled data with default_grid().
  std::map<Family, Hyperparams> fixed_hp;
  std::size_t epochs = 30;
  FeatureSet features = FeatureSet::kReduced;
  std::size_t rounds = 30;
  std::size_t local_steps = 50;
  ServerHyper server;
  ScaffoldOption scaffold_option = ScaffoldOption::kReuseLocalSteps;
  bool include_switzerland = false;
  bool include_reference_lr = true;
  std::size_t shap_background = 100;
  std::size_t shap_instances = 0;  // 0 = the whole test split
  Format format = Format::kCsv;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> trace_path;
  std::size_t threads = 0;
};

// One table cell: accuracy mean/std, or a mean-|SHAP| value with its rank.
struct Cell {
  double mean = 0.0;
  double std = 0.0;
  std::optional<std::size_t> rank;
};

struct BenchReport {
  std::string experiment;
  std::vector<std::string> columns;
  std::vector<std::pair<std::string, std::vector<std::optional<Cell>>>> rows;
  // Everything except runtime is a pure function of the configuration.
  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();
  double runtime_seconds = 0.0;

  void add_row(std::string label, std::vector<std::optional<Cell>> cells) {
    if (cells.size() != columns.size()) throw ContractError("row width does not match column count");
    rows.emplace_back(std::move(label), std::move(cells));
  }

  const Cell* find(std::string_view row, std::string_view col) const {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (columns[c] != col) continue;
      for (const auto& [label, cells] : rows)
        if (label == row && cells[c]) return &*cells[c];
    }
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// Formatting
// ---------------------------------------------------------------------------

inline std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  // Avoid "-0.000".
  if (std::string(buf) == "-0.000") return "0.000";
  return buf;
}

inline double round3(double v) { return std::stod(fixed3(v)); }

inline std::string format_cell(const Cell& c) {
  if (c.rank) return fixed3(c.mean) + " (" + std::to_string(*c.rank) + ")";
  return fixed3(c.mean) + " ± " + fixed3(c.std);
}

// Inverse of format_cell.
inline Cell parse_cell(std::string_view s) {
  Cell c;
  const auto pm = s.find("±");
  if (pm != std::string_view::npos) {
    c.mean = std::stod(std::string(s.substr(0, pm)));
    c.std = std::stod(std::string(s.substr(pm + std::string_view("±").size())));
    return c;
  }
  const auto open = s.find('(');
  if (open == std::string_view::npos) throw ContractError("unrecognized cell '" + std::string(s) + "'");
  c.mean = std::stod(std::string(s.substr(0, open)));
  c.rank = static_cast<std::size_t>(std::stoul(std::string(s.substr(open + 1))));
  return c;
}

inline std::string to_csv(const BenchReport& r) {
  std::ostringstream os;
  os << "model";
  for (const auto& c : r.columns) os << ',' << c;
  os << '\n';
  for (const auto& [label, cells] : r.rows) {
    os << label;
    for (const auto& cell : cells) os << ',' << (cell ? format_cell(*cell) : "");
    os << '\n';
  }
  return os.str();
}

inline nlohmann::ordered_json to_json_value(const BenchReport& r, bool with_runtime = true) {
  nlohmann::ordered_json j;
  j["experiment"] = r.experiment;
  j["columns"] = r.columns;
  nlohmann::ordered_json rows = nlohmann::ordered_json::object();
  for (const auto& [label, cells] : r.rows) {
    nlohmann::ordered_json row = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (!cells[c]) continue;
      nlohmann::ordered_json cell;
      cell["mean"] = round3(cells[c]->mean);
      if (cells[c]->rank)
        cell["rank"] = *cells[c]->rank;
      else
        cell["std"] = round3(cells[c]->std);
      row[r.columns[c]] = cell;
    }
    rows[label] = row;
  }
  j["rows"] = rows;
  j["metadata"] = r.metadata;
  if (with_runtime) j["metadata"]["runtime_seconds"] = r.runtime_seconds;
  return j;
}

inline std::string to_json(const BenchReport& r) { return to_json_value(r).dump(2) + "\n"; }

inline std::string to_markdown(const BenchReport& r) {
  std::ostringstream os;
  os << "| model |";
  for (const auto& c : r.columns) os << ' ' << c << " |";
  os << "\n|---|";
  for (std::size_t i = 0; i < r.columns.size(); ++i) os << "---|";
  os << '\n';
  for (const auto& [label, cells] : r.rows) {
    os << "| " << label << " |";
    for (const auto& cell : cells) os << ' ' << (cell ? format_cell(*cell) : "") << " |";
    os << '\n';
  }
  if (r.metadata.contains("config_hash"))
    os << "\n<!-- config " << r.metadata["config_hash"].get<std::string>() << " -->\n";
  return os.str();
}

inline std::string render(const BenchReport& r, Format f) {
  switch (f) {
    case Format::kCsv: return to_csv(r);
    case Format::kJson: return to_json(r);
    case Format::kMarkdown: return to_markdown(r);
  }
  return {};
}

inline void emit_report(const BenchReport& r, Format f, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << render(r, f);
  if (!out) throw IoError("write failed for " + path.string());
}

// Parses a CSV produced by to_csv back into a report (metadata is not carried).
inline BenchReport parse_csv(std::string_view text) {
  BenchReport r;
  std::istringstream in{std::string(text)};
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : l) {
      if (ch == ',') {
        out.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    out.push_back(cur);
    return out;
  };
  if (!std::getline(in, line)) throw ContractError("empty CSV");
  auto header = split(line);
  r.columns.assign(header.begin() + 1, header.end());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split(line);
    std::vector<std::optional<Cell>> cells;
    for (std::size_t i = 1; i < f.size(); ++i)
      cells.push_back(f[i].empty() ? std::nullopt : std::optional<Cell>(parse_cell(f[i])));
    r.add_row(f[0], std::move(cells));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Configuration identity
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline nlohmann::ordered_json hp_json(const Hyperparams& hp) {
  nlohmann::ordered_json j;
  j["family"] = family_name(hp.family);
  j["learning_rate"] = hp.learning_rate;
  j["batch_size"] = hp.batch_size;
  j["epochs"] = hp.epochs;
  j["hidden_units"] = hp.hidden_units;
  j["C"] = hp.c;
  j["alpha"] = hp.alpha;
  j["max_depth"] = hp.max_depth ? nlohmann::ordered_json(*hp.max_depth) : nlohmann::ordered_json(nullptr);
  j["n_estimators"] = hp.n_estimators;
  j["k"] = hp.k;
  return j;
}

inline Hyperparams hp_from_json(const nlohmann::ordered_json& j) {
  Hyperparams hp;
  hp.family = parse_family(j.at("family").get<std::string>());
  hp.learning_rate = j.at("learning_rate").get<double>();
  hp.batch_size = j.at("batch_size").get<std::size_t>();
  hp.epochs = j.at("epochs").get<std::size_t>();
  hp.hidden_units = j.at("hidden_units").get<std::size_t>();
  hp.c = j.at("C").get<double>();
  hp.alpha = j.at("alpha").get<double>();
  if (!j.at("max_depth").is_null()) hp.max_depth = j.at("max_depth").get<std::size_t>();
  hp.n_estimators = j.at("n_estimators").get<std::size_t>();
  hp.k = j.at("k").get<std::size_t>();
  return hp;
}

// Canonical description of every input that can change a reported number,
// including a digest of the data files' bytes.
inline nlohmann::ordered_json config_identity(const RunConfig& cfg, std::uint64_t data_digest) {
  nlohmann::ordered_json j;
  j["experiment"] = experiment_name(cfg.experiment);
  std::vector<std::string> fams;
  for (Family f : cfg.families) fams.emplace_back(family_name(f));
  j["families"] = fams;
  std::vector<std::string> strats;
  for (Strategy s : cfg.strategies) strats.emplace_back(strategy_name(s));
  j["strategies"] = strats;
  j["seeds"] = cfg.seeds;
  nlohmann::ordered_json fixed = nlohmann::ordered_json::object();
  for (const auto& [f, hp] : cfg.fixed_hp) fixed[std::string(family_name(f))] = hp_json(hp);
  j["fixed_hyperparams"] = fixed;
  j["epochs"] = cfg.epochs;
  j["features"] = feature_set_name(cfg.features);
  j["rounds"] = cfg.rounds;
  j["local_steps"] = cfg.local_steps;
  j["server"] = {{"beta1", cfg.server.beta1}, {"beta2", cfg.server.beta2}, {"eta", cfg.server.eta},
                 {"tau", cfg.server.tau}, {"eta_g", cfg.server.eta_g}};
  j["scaffold_option"] = cfg.scaffold_option == ScaffoldOption::kGradientAtServer ? "i" : "ii";
  j["include_switzerland"] = cfg.include_switzerland;
  j["include_reference_lr"] = cfg.include_reference_lr;
  j["shap_background"] = cfg.shap_background;
  j["shap_instances"] = cfg.shap_instances;
  char digest[17];
  std::snprintf(digest, sizeof(digest), "%016llx", static_cast<unsigned long long>(data_digest));
  j["data_digest"] = digest;
  return j;
}

inline std::string config_hash(const nlohmann::ordered_json& identity) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(identity.dump())));
  return buf;
}

inline std::uint64_t data_digest(const std::filesystem::path& dir) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Center c : kAllCenters) {
    const auto path = dir / center_file_name(c);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    h = fnv1a(ss.str(), h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct LoadedData {
  std::vector<RawRecord> records;
  TabularDataset pooled;
  std::uint64_t digest = 0;
};

inline LoadedData load_data(const RunConfig& cfg) {
  LoadedData d;
  d.records = load_uci_directory(cfg.data_dir);
  d.digest = data_digest(cfg.data_dir);
  const auto names = feature_names(cfg.features);
  d.pooled = preprocess(d.records, names);
  return d;
}

inline std::vector<Family> families_or_default(const RunConfig& cfg) {
  if (!cfg.families.empty()) return cfg.families;
  if (cfg.experiment == Experiment::kFederated || cfg.experiment == Experiment::kLocalBaseline)
    return {Family::kLR, Family::kNN1, Family::kSVM};
  return {kAllFamilies.begin(), kAllFamilies.end()};
}

inline void validate(const RunConfig& cfg) {
  if (cfg.seeds.empty()) throw ConfigError("seeds: list is empty");
  if (cfg.experiment == Experiment::kFederated)
    for (Family f : cfg.families)
      if (!is_differentiable(f))
        throw ConfigError("families: " + std::string(family_name(f)) +
                          " is not supported in the federated experiment (LR, NN1, SVM only)");
  if (cfg.experiment == Experiment::kFederated && cfg.strategies.empty())
    throw ConfigError("strategies: list is empty");
}

// Hyperparameters per family: the fixed entry if present, otherwise the
// best point of the pooled grid search over the configured seeds.
inline Hyperparams resolve_hp(const RunConfig& cfg, Family f, const TabularDataset& pooled,
                              nlohmann::ordered_json& meta, std::optional<MeanStd>* tuned_score = nullptr) {
  if (auto it = cfg.fixed_hp.find(f); it != cfg.fixed_hp.end()) {
    Hyperparams hp = it->second;
    hp.family = f;
    meta["hyperparams"][std::string(family_name(f))] = hp_json(hp);
    return hp;
  }
  const auto grid = default_grid(f, cfg.epochs);
  const auto res = grid_search(f, grid, cfg.seeds, pooled, cfg.threads);
  meta["hyperparams"][std::string(family_name(f))] = hp_json(res.best);
  if (tuned_score)
    for (const auto& pt : res.points)
      if (pt.hp == res.best) *tuned_score = pt.summary;
  return res.best;
}

inline MeanStd seeds_accuracy(const Hyperparams& hp, const TabularDataset& ds,
                              std::span<const std::uint64_t> seeds, std::size_t threads) {
  std::vector<double> acc(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t i) { acc[i] = holdout_accuracy(hp, ds, seeds[i]); }, threads);
  return mean_std(acc);
}

inline BenchReport run_centralized(const RunConfig& cfg, const LoadedData& data) {
  BenchReport r;
  r.experiment = "centralized";
  r.columns = {"pooled"};
  if (cfg.include_reference_lr) {
    const auto ms = seeds_accuracy(reference_lr_config(), data.pooled, cfg.seeds, cfg.threads);
    r.add_row("LR [reference: lr=0.001 batch=4 epochs=30]", {Cell{ms.mean, ms.std, std::nullopt}});
  }
  for (Family f : families_or_default(cfg)) {
    std::optional<MeanStd> tuned;
    const Hyperparams hp = resolve_hp(cfg, f, data.pooled, r.metadata, &tuned);
    const MeanStd ms = tuned ? *tuned : seeds_accuracy(hp, data.pooled, cfg.seeds, cfg.threads);
    r.add_row(std::string(family_name(f)), {Cell{ms.mean, ms.std, std::nullopt}});
  }
  return r;
}

inline BenchReport run_grid(const RunConfig& cfg, const LoadedData& data) {
  BenchReport r;
  r.experiment = "grid-search";
  r.columns = {"pooled"};
  for (Family f : families_or_default(cfg)) {
    const auto res = grid_search(f, default_grid(f, cfg.epochs), cfg.seeds, data.pooled, cfg.threads);
    for (const auto& pt : res.points)
      r.add_row(describe(pt.hp), {Cell{pt.summary.mean, pt.summary.std, std::nullopt}});
    r.metadata["best"][std::string(family_name(f))] = hp_json(res.best);
  }
  return r;
}

inline BenchReport run_federated_experiment(const RunConfig& cfg, const LoadedData& data) {
  BenchReport r;
  r.experiment = "federated";
  for (Strategy s : cfg.strategies) r.columns.emplace_back(strategy_name(s));
  std::ofstream trace;
  if (cfg.trace_path) {
    trace.open(*cfg.trace_path, std::ios::binary);
    if (!trace) throw IoError("cannot write " + cfg.trace_path->string());
  }
  for (Family f : families_or_default(cfg)) {
    const Hyperparams hp = resolve_hp(cfg, f, data.pooled, r.metadata);
    std::vector<std::optional<Cell>> cells;
    for (Strategy s : cfg.strategies) {
      FedConfig fc;
      fc.hp = hp;
      fc.strategy = s;
      fc.rounds = cfg.rounds;
      fc.local_steps = cfg.local_steps;
      fc.seeds = cfg.seeds;
      fc.server = cfg.server;
      fc.scaffold_option = cfg.scaffold_option;
      fc.record_trace = cfg.trace_path.has_value();
      fc.threads = cfg.threads;
      const auto sum = run_federated(data.pooled, fc);
      cells.push_back(Cell{sum.acc_avg.mean, sum.acc_avg.std, std::nullopt});
      if (trace)
        for (const auto& run : sum.runs) write_trace_jsonl(trace, run.seed, run.trace);
    }
    r.add_row(std::string(family_name(f)), std::move(cells));
  }
  return r;
}

inline BenchReport run_local_baselines(const RunConfig& cfg, const LoadedData& data) {
  BenchReport r;
  r.experiment = "local-baseline";
  std::vector<Center> centers;
  for (Center c : kAllCenters)
    if (c != Center::kSwitzerland || cfg.include_switzerland) centers.push_back(c);
  for (Center c : centers) r.columns.emplace_back(center_name(c));
  for (Family f : families_or_default(cfg)) {
    const Hyperparams hp = resolve_hp(cfg, f, data.pooled, r.metadata);
    std::vector<std::optional<Cell>> cells;
    for (Center c : centers) {
      const auto ms = run_local_baseline(data.pooled, c, hp, cfg.seeds, cfg.include_switzerland);
      cells.push_back(Cell{ms.mean, ms.std, std::nullopt});
    }
    r.add_row(std::string(family_name(f)), std::move(cells));
  }
  return r;
}

// Trains each family on the first seed's pooled split and reports mean
// |SHAP| per feature with importance ranks, one cell per (family, feature).
inline BenchReport run_shap(const RunConfig& cfg, const LoadedData& data) {
  BenchReport r;
  r.experiment = "shap";
  r.columns = data.pooled.schema.names();
  const std::uint64_t seed = cfg.seeds.front();
  const auto [tr, te] = split_train_test(data.pooled, seed);
  const auto s = standardize(tr, te);
  const auto background = sample_background(s.train, cfg.shap_background, derive_seed(seed, 0x626bULL));
  TabularDataset explain = s.test;
  if (cfg.shap_instances > 0 && cfg.shap_instances < explain.size()) {
    std::vector<std::size_t> idx(cfg.shap_instances);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    explain = explain.take(idx);
  }
  for (Family f : families_or_default(cfg)) {
    const Hyperparams hp = resolve_hp(cfg, f, data.pooled, r.metadata);
    const auto model = train_model(hp, s.train, derive_seed(seed, 0x747261ULL));
    const auto rep = mean_abs_shap(model, explain, background, cfg.threads);
    std::vector<std::optional<Cell>> cells;
    for (std::size_t j = 0; j < rep.features.size(); ++j)
      cells.push_back(Cell{rep.mean_abs[j], 0.0, rep.rank[j]});
    r.add_row(std::string(family_name(f)), std::move(cells));
  }
  return r;
}

inline BenchReport run_experiment(const RunConfig& cfg) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const LoadedData data = load_data(cfg);
  BenchReport r;
  switch (cfg.experiment) {
    case Experiment::kCentralized: r = run_centralized(cfg, data); break;
    case Experiment::kFederated: r = run_federated_experiment(cfg, data); break;
    case Experiment::kLocalBaseline: r = run_local_baselines(cfg, data); break;
    case Experiment::kShap: r = run_shap(cfg, data); break;
    case Experiment::kGridSearch: r = run_grid(cfg, data); break;
  }
  const auto identity = config_identity(cfg, data.digest);
  r.metadata["seeds"] = cfg.seeds;
  r.metadata["config_hash"] = config_hash(identity);
  r.metadata["config"] = identity;
  r.metadata["rows_after_preprocessing"] = data.pooled.size();
  r.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace heartfl::bench
