#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "heartfl/bench.hpp"

using namespace heartfl;
using namespace heartfl::bench;
namespace fs = std::filesystem;

namespace {

// Writes four synthetic files in the UCI layout. Labels depend on oldpeak
// and exang so models have something to learn; a few fields are missing.
fs::path synthetic_data_dir(const std::string& name, std::uint32_t seed = 1) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::create_directories(dir);
  std::mt19937 gen(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_int_distribution<int> cat(1, 4), bin(0, 1), pct(0, 99);
  const std::size_t sizes[4] = {60, 50, 30, 40};
  for (std::size_t c = 0; c < 4; ++c) {
    std::ofstream out(dir / center_file_name(kAllCenters[c]));
    for (std::size_t i = 0; i < sizes[c]; ++i) {
      const double risk = nd(gen);
      const int y = risk > 0 ? 1 + pct(gen) % 3 : 0;
      out << 50 + 8 * nd(gen) << ',' << bin(gen) << ',' << (y ? 4 : cat(gen)) << ',' << 130 + 15 * nd(gen)
          << ',' << (pct(gen) < 5 ? std::string("?") : std::to_string(240 + 40 * nd(gen))) << ','
          << bin(gen) << ',' << pct(gen) % 3 << ',' << 150 - 10 * risk + 5 * nd(gen) << ','
          << (risk + 0.5 * nd(gen) > 0 ? 1 : 0) << ',' << std::max(0.0, 1 + risk + 0.3 * nd(gen)) << ','
          << 1 + pct(gen) % 3 << ',' << (pct(gen) < 30 ? std::string("?") : std::to_string(pct(gen) % 4))
          << ',' << (pct(gen) < 20 ? std::string("?") : std::string("3.0")) << ',' << y << '\n';
    }
  }
  return dir;
}

BenchReport small_report() {
  BenchReport r;
  r.experiment = "federated";
  r.columns = {"FedAvg", "FedYogi"};
  r.add_row("LR", {Cell{0.70312, 0.0281, std::nullopt}, Cell{0.7211, 0.0, std::nullopt}});
  r.add_row("SVM", {Cell{0.731, 0.05, std::nullopt}, std::nullopt});
  r.metadata["config_hash"] = "00000000deadbeef";
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HEARTFL_BENCH_EXE) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Format, CellText) {
  EXPECT_EQ(format_cell({0.7381, 0.0279, std::nullopt}), "0.738 ± 0.028");
  EXPECT_EQ(format_cell({0.1234, 0.0, std::size_t{2}}), "0.123 (2)");
  EXPECT_EQ(format_cell({-0.0001, 0.0, std::nullopt}), "0.000 ± 0.000");
}

TEST(Format, OneByOneCsvHasTwoLines) {
  BenchReport r;
  r.columns = {"pooled"};
  r.add_row("LR", {Cell{0.8, 0.0, std::nullopt}});
  const auto csv = to_csv(r);
  EXPECT_EQ(csv, "model,pooled\nLR,0.800 ± 0.000\n");
}

TEST(Format, RowWidthMustMatchColumns) {
  BenchReport r;
  r.columns = {"a", "b"};
  EXPECT_THROW(r.add_row("x", {Cell{}}), ContractError);
}

TEST(Format, CsvAndJsonCarryTheSameNumbers) {
  const auto r = small_report();
  const auto back = parse_csv(to_csv(r));
  const auto j = nlohmann::json::parse(to_json(r));
  ASSERT_EQ(back.columns, r.columns);
  for (const auto& [label, cells] : back.rows) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto& col = r.columns[c];
      if (!cells[c]) {
        EXPECT_FALSE(j["rows"][label].contains(col));
        continue;
      }
      EXPECT_DOUBLE_EQ(cells[c]->mean, j["rows"][label][col]["mean"].get<double>());
      EXPECT_DOUBLE_EQ(cells[c]->std, j["rows"][label][col]["std"].get<double>());
      const Cell* orig = r.find(label, col);
      ASSERT_NE(orig, nullptr);
      EXPECT_NEAR(cells[c]->mean, orig->mean, 5e-4 + 1e-12);
    }
  }
}

TEST(Format, MarkdownIsAPipeTable) {
  const auto md = to_markdown(small_report());
  std::istringstream in(md);
  std::string header, rule, row;
  std::getline(in, header);
  std::getline(in, rule);
  std::getline(in, row);
  EXPECT_EQ(header, "| model | FedAvg | FedYogi |");
  EXPECT_EQ(rule, "|---|---|---|");
  EXPECT_EQ(row, "| LR | 0.703 ± 0.028 | 0.721 ± 0.000 |");
}

TEST(Format, ShapCellsCarryRanks) {
  BenchReport r;
  r.experiment = "shap";
  r.columns = {"age", "oldpeak"};
  r.add_row("LR", {Cell{0.01, 0, std::size_t{2}}, Cell{0.2, 0, std::size_t{1}}});
  EXPECT_EQ(to_csv(r), "model,age,oldpeak\nLR,0.010 (2),0.200 (1)\n");
  const auto back = parse_csv(to_csv(r));
  EXPECT_EQ(*back.rows[0].second[1]->rank, 1u);
  const auto j = nlohmann::json::parse(to_json(r));
  EXPECT_EQ(j["rows"]["LR"]["oldpeak"]["rank"], 1);
}

TEST(Emit, UnwritablePathIsIoError) {
  EXPECT_THROW(emit_report(small_report(), Format::kCsv, "/nonexistent_dir/x/report.csv"), IoError);
}

TEST(Config, HashChangesWithAnyNumericInput) {
  RunConfig a;
  a.families = {Family::kLR};
  const auto h0 = config_hash(config_identity(a, 1));
  EXPECT_EQ(h0, config_hash(config_identity(a, 1)));
  EXPECT_NE(h0, config_hash(config_identity(a, 2)));
  RunConfig b = a;
  b.seeds = {0, 1};
  EXPECT_NE(h0, config_hash(config_identity(b, 1)));
  RunConfig c = a;
  c.server.tau = 1e-4;
  EXPECT_NE(h0, config_hash(config_identity(c, 1)));
  RunConfig d = a;
  d.features = FeatureSet::kFull;
  EXPECT_NE(h0, config_hash(config_identity(d, 1)));
}

TEST(Config, FederatedRejectsNonGradientFamilies) {
  RunConfig cfg;
  cfg.experiment = Experiment::kFederated;
  cfg.families = {Family::kLR, Family::kRF};
  try {
    validate(cfg);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("families"), std::string::npos);
  }
  cfg.families = {Family::kLR};
  cfg.seeds.clear();
  EXPECT_THROW(validate(cfg), ConfigError);
}

TEST(Experiment, CentralizedRunIsReproducible) {
  RunConfig cfg;
  cfg.data_dir = synthetic_data_dir("heartfl_bench_central");
  cfg.experiment = Experiment::kCentralized;
  cfg.families = {Family::kLR, Family::kNB, Family::kKNN};
  cfg.seeds = {0, 1, 2};
  cfg.epochs = 5;
  const auto a = run_experiment(cfg);
  const auto b = run_experiment(cfg);
  EXPECT_EQ(to_csv(a), to_csv(b));
  EXPECT_EQ(to_json_value(a, false).dump(), to_json_value(b, false).dump());
  ASSERT_EQ(a.rows.size(), 4u);  // reference LR row plus three families
  for (const auto& [label, cells] : a.rows) {
    EXPECT_GE(cells[0]->std, 0.0);
    EXPECT_GT(cells[0]->mean, 0.4) << label;
  }
  EXPECT_EQ(a.metadata["seeds"].size(), 3u);
  fs::remove_all(cfg.data_dir);
}

TEST(Experiment, SingleSeedHasZeroStd) {
  RunConfig cfg;
  cfg.data_dir = synthetic_data_dir("heartfl_bench_single");
  cfg.experiment = Experiment::kFederated;
  cfg.families = {Family::kLR};
  cfg.fixed_hp[Family::kLR] = Hyperparams{};
  cfg.seeds = {4};
  cfg.rounds = 2;
  cfg.local_steps = 3;
  const auto r = run_experiment(cfg);
  ASSERT_EQ(r.columns.size(), 4u);
  for (const auto& cell : r.rows[0].second) EXPECT_EQ(cell->std, 0.0);
  fs::remove_all(cfg.data_dir);
}

TEST(Experiment, LocalBaselineSkipsSwitzerlandByDefault) {
  RunConfig cfg;
  cfg.data_dir = synthetic_data_dir("heartfl_bench_local");
  cfg.experiment = Experiment::kLocalBaseline;
  cfg.families = {Family::kSVM};
  cfg.fixed_hp[Family::kSVM].family = Family::kSVM;
  cfg.seeds = {0, 1};
  const auto r = run_experiment(cfg);
  EXPECT_EQ(r.columns, (std::vector<std::string>{"Cleveland", "Hungary", "VA"}));
  cfg.include_switzerland = true;
  EXPECT_EQ(run_experiment(cfg).columns.size(), 4u);
  fs::remove_all(cfg.data_dir);
}

TEST(Experiment, ShapReportHasOneRankedCellPerFeature) {
  RunConfig cfg;
  cfg.data_dir = synthetic_data_dir("heartfl_bench_shap");
  cfg.experiment = Experiment::kShap;
  cfg.families = {Family::kLR};
  cfg.fixed_hp[Family::kLR] = Hyperparams{};
  cfg.seeds = {0};
  cfg.shap_background = 10;
  cfg.shap_instances = 5;
  const auto r = run_experiment(cfg);
  ASSERT_EQ(r.columns, reduced_feature_names());
  std::vector<std::size_t> ranks;
  for (const auto& c : r.rows[0].second) ranks.push_back(*c->rank);
  std::sort(ranks.begin(), ranks.end());
  for (std::size_t i = 0; i < ranks.size(); ++i) EXPECT_EQ(ranks[i], i + 1);
  fs::remove_all(cfg.data_dir);
}

TEST(Experiment, MissingDataIsIoError) {
  RunConfig cfg;
  cfg.data_dir = "/nonexistent_heartfl_dir";
  EXPECT_THROW(run_experiment(cfg), IoError);
}

TEST(Cli, ExitCodes) {
  const auto dir = synthetic_data_dir("heartfl_bench_cli");
  const auto out = fs::temp_directory_path() / "heartfl_cli_report.json";
  EXPECT_EQ(run_cli("centralized --data-dir " + dir.string() +
                    " --families NB --seeds 0..1 --format json --out " + out.string()),
            0);
  const auto j = nlohmann::json::parse(slurp(out));
  EXPECT_TRUE(j["rows"].contains("NB"));
  EXPECT_EQ(j["metadata"]["seeds"], nlohmann::json::parse("[0,1]"));
  EXPECT_EQ(run_cli("centralized --data-dir /nonexistent_heartfl_dir --families NB"), 2);
  EXPECT_EQ(run_cli("centralized --data-dir " + dir.string() + " --families XGB"), 1);
  EXPECT_EQ(run_cli("federated --data-dir " + dir.string() + " --families RF"), 1);
  EXPECT_EQ(run_cli("nonsense --data-dir " + dir.string()), 1);
  EXPECT_EQ(run_cli("--no-such-flag"), 1);
  EXPECT_EQ(run_cli("centralized --data-dir " + dir.string() + " --families NB --seeds 3..1"), 1);
  // Two identical invocations produce identical reports apart from runtime.
  const auto csv1 = fs::temp_directory_path() / "heartfl_cli_a.csv";
  const auto csv2 = fs::temp_directory_path() / "heartfl_cli_b.csv";
  const std::string args = "federated --data-dir " + dir.string() +
                           " --families LR,SVM --lr 0.05 --batch 8 --seeds 0..2 --rounds 3 --local-steps 4 --out ";
  EXPECT_EQ(run_cli(args + csv1.string()), 0);
  EXPECT_EQ(run_cli(args + csv2.string()), 0);
  EXPECT_EQ(slurp(csv1), slurp(csv2));
  EXPECT_FALSE(slurp(csv1).empty());
  fs::remove_all(dir);
}
