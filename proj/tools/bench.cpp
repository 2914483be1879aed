// bench: runs one experiment over a seed list and writes a report.
//
// Exit status: 0 success, 1 usage error, 2 I/O error, 3 numeric failure.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "heartfl/bench.hpp"

namespace {

using namespace heartfl;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Accepts "0..9", "1,4,7" and mixtures such as "0..2,10".
std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(s)) {
    const auto dots = item.find("..");
    try {
      if (dots == std::string::npos) {
        out.push_back(std::stoull(item));
        continue;
      }
      const auto lo = std::stoull(item.substr(0, dots));
      const auto hi = std::stoull(item.substr(dots + 2));
      if (hi < lo) throw ConfigError("seeds: empty range '" + item + "'");
      for (auto v = lo; v <= hi; ++v) out.push_back(v);
    } catch (const std::logic_error&) {
      throw ConfigError("seeds: cannot parse '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("seeds: list is empty");
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"Seeded benchmark runner for the heart-disease classifiers"};
  app.set_version_flag("--version", "heartfl-bench 1.0");

  std::string experiment;
  std::string data_dir;
  std::string families;
  std::string strategies = "fedavg,fedadam,fedyogi,scaffold";
  std::string seeds = "0..9";
  std::string features = "table4";
  std::string format = "csv";
  std::string out;
  std::string trace;
  std::string scaffold_option = "ii";
  bench::RunConfig cfg;

  std::optional<double> lr, c, alpha;
  std::optional<std::size_t> batch, hidden, max_depth, n_estimators, k;

  app.add_option("experiment", experiment, "centralized | federated | local-baseline | shap | grid-search")
      ->required();
  app.add_option("--data-dir", data_dir, "Directory holding the four processed.*.data files")
      ->envname("HEARTFL_DATA_DIR");
  app.add_option("--families", families, "Comma list: LR,NN1,SVM,NB,DT,RF,KNN");
  app.add_option("--strategies", strategies, "Comma list: fedavg,fedadam,fedyogi,scaffold")
      ->capture_default_str();
  app.add_option("--seeds", seeds, "Seed list, e.g. 0..9 or 1,5,9")->capture_default_str();
  app.add_option("--rounds", cfg.rounds, "Federation rounds")->capture_default_str();
  app.add_option("--local-steps", cfg.local_steps, "Local mini-batch steps per round")
      ->capture_default_str();
  app.add_option("--epochs", cfg.epochs, "Epochs for SGD-trained families")->capture_default_str();
  app.add_option("--features", features, "full (13 features) | table4 (10 features)")
      ->capture_default_str();
  app.add_option("--format", format, "csv | json | markdown")->capture_default_str();
  app.add_option("--out", out, "Output path; stdout when omitted");
  app.add_option("--trace", trace, "Per-round federated trace, one JSON record per line");
  app.add_option("--threads", cfg.threads, "Worker threads; 0 uses hardware concurrency");

  app.add_option("--server-lr", cfg.server.eta, "Adaptive server step size")->capture_default_str();
  app.add_option("--beta1", cfg.server.beta1)->capture_default_str();
  app.add_option("--beta2", cfg.server.beta2)->capture_default_str();
  app.add_option("--tau", cfg.server.tau, "Adaptivity constant")->capture_default_str();
  app.add_option("--scaffold-lr", cfg.server.eta_g, "SCAFFOLD global step size")->capture_default_str();
  app.add_option("--scaffold-option", scaffold_option, "Control-variate update: i | ii")
      ->check(CLI::IsMember({"i", "ii"}))
      ->capture_default_str();

  app.add_option("--lr", lr, "Fix the learning rate instead of grid search");
  app.add_option("--batch", batch, "Fix the batch size");
  app.add_option("--hidden", hidden, "Fix the NN1 hidden width");
  app.add_option("--C", c, "Fix the SVM regularization constant");
  app.add_option("--alpha", alpha, "Fix the NB smoothing");
  app.add_option("--max-depth", max_depth, "Fix the DT depth limit");
  app.add_option("--n-estimators", n_estimators, "Fix the RF size");
  app.add_option("--k", k, "Fix the KNN neighbor count");

  app.add_option("--shap-background", cfg.shap_background, "Background sample size")
      ->capture_default_str();
  app.add_option("--shap-instances", cfg.shap_instances, "Explained test rows; 0 = all");
  app.add_flag("--include-switzerland", cfg.include_switzerland,
               "Run the single-class Switzerland local baseline too");
  app.add_flag("!--no-reference-lr", cfg.include_reference_lr,
               "Skip the fixed-configuration LR row in centralized runs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    cfg.experiment = bench::parse_experiment(experiment);
    if (data_dir.empty()) throw ConfigError("data-dir: not given and HEARTFL_DATA_DIR is unset");
    cfg.data_dir = data_dir;
    for (const auto& f : split_list(families)) cfg.families.push_back(parse_family(f));
    cfg.strategies.clear();
    for (const auto& s : split_list(strategies)) cfg.strategies.push_back(parse_strategy(s));
    cfg.seeds = parse_seeds(seeds);
    cfg.features = bench::parse_feature_set(features);
    cfg.format = bench::parse_format(format);
    cfg.scaffold_option =
        scaffold_option == "i" ? ScaffoldOption::kGradientAtServer : ScaffoldOption::kReuseLocalSteps;
    if (!trace.empty()) cfg.trace_path = trace;

    const bool fixed = lr || batch || hidden || c || alpha || max_depth || n_estimators || k;
    if (fixed) {
      if (cfg.families.empty()) throw ConfigError("families: required when hyperparameters are fixed");
      for (Family f : cfg.families) {
        Hyperparams hp;
        hp.family = f;
        hp.epochs = cfg.epochs;
        if (lr) hp.learning_rate = *lr;
        if (batch) hp.batch_size = *batch;
        if (hidden) hp.hidden_units = *hidden;
        if (c) hp.c = *c;
        if (alpha) hp.alpha = *alpha;
        if (max_depth) hp.max_depth = *max_depth;
        if (n_estimators) hp.n_estimators = *n_estimators;
        if (k) hp.k = *k;
        cfg.fixed_hp[f] = hp;
      }
    }

    const auto report = bench::run_experiment(cfg);
    if (out.empty())
      std::cout << bench::render(report, cfg.format);
    else
      bench::emit_report(report, cfg.format, out);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const UnsupportedFamilyError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
