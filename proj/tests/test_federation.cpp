#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "heartfl/federation.hpp"

using namespace heartfl;

namespace {

// Four centers of different sizes; each center's blobs are shifted so the
// clients are not identically distributed.
TabularDataset pooled_fixture(std::uint32_t seed = 3) {
  std::vector<Feature> feats;
  for (std::size_t j = 0; j < 3; ++j) feats.push_back({"x" + std::to_string(j), FeatureKind::kContinuous, j});
  TabularDataset ds{FeatureSchema(feats), {}, {}, {}};
  std::mt19937 gen(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  const std::size_t sizes[4] = {40, 36, 20, 30};
  for (std::size_t c = 0; c < 4; ++c) {
    for (std::size_t i = 0; i < sizes[c]; ++i) {
      const int y = static_cast<int>((i * 7 + c) % 3 == 0);
      std::vector<double> x(3);
      for (std::size_t j = 0; j < 3; ++j) x[j] = nd(gen) + (y ? 1.2 : -1.2) + 0.5 * static_cast<double>(c);
      ds.push_back(x, y, kAllCenters[c]);
    }
  }
  return ds;
}

Hyperparams lr_hp() {
  Hyperparams hp;
  hp.family = Family::kLR;
  hp.learning_rate = 0.05;
  hp.batch_size = 8;
  return hp;
}

// Scalar reference for one adaptive step, written out from the recurrence.
struct ScalarState {
  double x, m, v;
};

ScalarState scalar_step(ScalarState s, double g, double b1, double b2, double eta, double tau, bool yogi) {
  s.m = b1 * s.m + (1 - b1) * g;
  if (yogi) {
    const double diff = s.v - g * g;
    const double sgn = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
    s.v = s.v - (1 - b2) * g * g * sgn;
  } else {
    s.v = b2 * s.v + (1 - b2) * g * g;
  }
  s.x = s.x - eta * s.m / (std::sqrt(s.v) + tau);
  return s;
}

}  // namespace

TEST(FedAvg, WeightedByClientSize) {
  std::vector<std::pair<ParamVector, std::size_t>> items = {{{1.0, 0.0}, 1}, {{4.0, 8.0}, 3}};
  const auto x = aggregate_fedavg(items);
  EXPECT_DOUBLE_EQ(x[0], 3.25);
  EXPECT_DOUBLE_EQ(x[1], 6.0);
}

TEST(FedAvg, SingleClientIsUnchanged) {
  std::vector<std::pair<ParamVector, std::size_t>> items = {{{0.3, -2.0, 7.5}, 11}};
  EXPECT_EQ(aggregate_fedavg(items), items[0].first);
}

TEST(FedAvg, ShapeMismatchAndEmptyThrow) {
  std::vector<std::pair<ParamVector, std::size_t>> items = {{{1.0}, 1}, {{1.0, 2.0}, 1}};
  EXPECT_THROW(aggregate_fedavg(items), ContractError);
  EXPECT_THROW(aggregate_fedavg({}), ContractError);
}

TEST(ServerOptimizer, AdamAndYogiMatchScalarRecurrence) {
  std::mt19937 gen(1);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (bool yogi : {false, true}) {
    ServerOptState st = ServerOptState::zeros({0.5, -1.0}, 4);
    st.beta1 = 0.9;
    st.beta2 = 0.99;
    st.eta = 0.03;
    st.tau = 1e-3;
    ScalarState ref[2] = {{0.5, 0, 0}, {-1.0, 0, 0}};
    for (int step = 0; step < 25; ++step) {
      std::vector<RoundDelta> deltas;
      for (int k = 0; k < 4; ++k) deltas.push_back({{nd(gen), nd(gen)}, 10});
      for (std::size_t i = 0; i < 2; ++i) {
        double mean = 0;
        for (const auto& d : deltas) mean += d.delta[i];
        ref[i] = scalar_step(ref[i], -mean / 4.0, 0.9, 0.99, 0.03, 1e-3, yogi);
      }
      st = yogi ? server_yogi_step(std::move(st), deltas) : server_adam_step(std::move(st), deltas);
      for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_NEAR(st.x[i], ref[i].x, 1e-12);
        EXPECT_NEAR(st.m[i], ref[i].m, 1e-12);
        EXPECT_NEAR(st.v[i], ref[i].v, 1e-12);
      }
    }
  }
}

TEST(ServerOptimizer, FirstStepFromZeroMomentsAgree) {
  std::mt19937 gen(2);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    ParamVector x0(5);
    for (auto& v : x0) v = nd(gen);
    std::vector<RoundDelta> deltas;
    for (int k = 0; k < 4; ++k) {
      RoundDelta d{ParamVector(5), 1};
      for (auto& v : d.delta) v = nd(gen);
      deltas.push_back(d);
    }
    const auto a = server_adam_step(ServerOptState::zeros(x0, 4), deltas);
    const auto y = server_yogi_step(ServerOptState::zeros(x0, 4), deltas);
    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_NEAR(a.x[i], y.x[i], 1e-12);
      EXPECT_NEAR(a.v[i], y.v[i], 1e-12);
    }
  }
}

TEST(ServerOptimizer, DegenerateMomentsMoveTowardClients) {
  ServerOptState st = ServerOptState::zeros({0.0, 0.0, 0.0}, 2);
  st.beta1 = 0.0;
  st.beta2 = 0.0;
  st.tau = 1e-12;
  st.eta = 0.1;
  std::vector<RoundDelta> deltas = {{{1.0, -2.0, 0.0}, 5}, {{3.0, -1.0, 0.0}, 5}};
  const auto out = server_adam_step(st, deltas);
  EXPECT_NEAR(out.x[0], 0.1, 1e-9);
  EXPECT_NEAR(out.x[1], -0.1, 1e-9);
  EXPECT_EQ(out.x[2], 0.0);
}

TEST(ServerOptimizer, PseudoGradientIsNegatedMean) {
  std::vector<RoundDelta> deltas = {{{1.0, 2.0}, 1}, {{3.0, -4.0}, 100}};
  const auto g = pseudo_gradient(deltas, 2);
  EXPECT_DOUBLE_EQ(g[0], -2.0);
  EXPECT_DOUBLE_EQ(g[1], 1.0);
}

TEST(LocalSteps, ZeroStepsGiveZeroDelta) {
  auto clients = make_clients(pooled_fixture(), lr_hp(), 0);
  const ParamVector x(4, 0.3);
  const auto rd = local_steps(clients[0], x, 0, lr_hp(), std::nullopt, 1);
  EXPECT_EQ(rd.delta, ParamVector(4, 0.0));
  EXPECT_EQ(rd.n_k, clients[0].n_k);
}

TEST(LocalSteps, CorrectionShiftsEveryStep) {
  // On one step, adding a constant correction c moves the result by -lr * c.
  auto clients = make_clients(pooled_fixture(), lr_hp(), 0);
  const ParamVector x(4, 0.1);
  const ParamVector corr = {0.5, -0.25, 1.0, 2.0};
  const auto plain = local_steps(clients[1], x, 1, lr_hp(), std::nullopt, 9);
  const auto shifted = local_steps(clients[1], x, 1, lr_hp(), std::span<const double>(corr), 9);
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_NEAR(shifted.delta[i] - plain.delta[i], -clients[1].local_lr * corr[i], 1e-15);
}

TEST(LocalSteps, RejectsNonDifferentiableFamily) {
  auto clients = make_clients(pooled_fixture(), lr_hp(), 0);
  Hyperparams hp;
  hp.family = Family::kDT;
  const ParamVector x(4, 0.0);
  EXPECT_THROW(local_steps(clients[0], x, 1, hp, std::nullopt, 0), UnsupportedFamilyError);
}

TEST(Scaffold, DegenerateRoundEqualsUnweightedFedAvg) {
  auto clients = make_clients(pooled_fixture(), lr_hp(), 4);
  const ParamVector x0 = {0.2, -0.1, 0.05, 0.0};
  ServerOptState st = ServerOptState::zeros(x0, clients.size());
  st.eta_g = 1.0;
  for (auto& cs : clients) cs.control.assign(4, 0.0);
  const std::uint64_t seed = 77;

  std::vector<std::pair<ParamVector, std::size_t>> items;
  for (std::size_t k = 0; k < clients.size(); ++k) {
    const auto rd = local_steps(clients[k], x0, 1, lr_hp(), std::nullopt, derive_seed(seed, k));
    ParamVector y(4);
    for (std::size_t i = 0; i < 4; ++i) y[i] = x0[i] + rd.delta[i];
    items.emplace_back(y, 1);  // equal weights
  }
  const auto fedavg = aggregate_fedavg(items);
  for (auto option : {ScaffoldOption::kGradientAtServer, ScaffoldOption::kReuseLocalSteps}) {
    const auto [out_clients, out] = scaffold_round(clients, st, option, 1, lr_hp(), seed);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out.x[i], fedavg[i], 1e-12);
  }
}

TEST(Scaffold, ControlVariateUpdates) {
  auto clients = make_clients(pooled_fixture(), lr_hp(), 5);
  const ParamVector x0 = {0.0, 0.0, 0.0, 0.0};
  ServerOptState st = ServerOptState::zeros(x0, clients.size());
  for (auto& cs : clients) cs.control.assign(4, 0.0);
  const std::size_t K = 3;

  const auto [c1, s1] = scaffold_round(clients, st, ScaffoldOption::kGradientAtServer, K, lr_hp(), 2);
  ParamVector mean_c(4, 0.0);
  for (std::size_t k = 0; k < clients.size(); ++k) {
    const auto g = full_local_gradient(clients[k], x0, lr_hp());
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_NEAR(c1[k].control[i], g[i], 1e-15);
      mean_c[i] += g[i] / static_cast<double>(clients.size());
    }
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(s1.c[i], mean_c[i], 1e-15);

  // Option (ii) from zero controls: c_i+ = (x - y_i) / (K lr).
  const auto [c2, s2] = scaffold_round(clients, st, ScaffoldOption::kReuseLocalSteps, K, lr_hp(), 2);
  for (std::size_t k = 0; k < clients.size(); ++k)
    for (std::size_t i = 0; i < 4; ++i)
      EXPECT_NEAR(c2[k].control[i], (x0[i] - c2[k].params[i]) / (K * clients[k].local_lr), 1e-12);
}

TEST(Scaffold, OptionTwoNeedsPositiveSteps) {
  auto clients = make_clients(pooled_fixture(), lr_hp(), 0);
  ServerOptState st = ServerOptState::zeros(ParamVector(4, 0.0), clients.size());
  EXPECT_THROW(scaffold_round(clients, st, ScaffoldOption::kReuseLocalSteps, 0, lr_hp(), 0), ContractError);
}

TEST(Clients, OneClientPerCenterStandardizedLocally) {
  const auto clients = make_clients(pooled_fixture(), lr_hp(), 1);
  ASSERT_EQ(clients.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(clients[k].id, kAllCenters[k]);
    EXPECT_EQ(clients[k].n_k, clients[k].train.size());
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0;
      for (std::size_t i = 0; i < clients[k].train.size(); ++i) s += clients[k].train.row(i)[j];
      EXPECT_NEAR(s, 0.0, 1e-10);
    }
  }
  EXPECT_EQ(clients[0].n_k, 26u);  // floor(40 * 0.66)
}

TEST(Simulation, ZeroRoundsEvaluatesInitialModel) {
  const auto pooled = pooled_fixture();
  FedConfig cfg;
  cfg.hp = lr_hp();
  cfg.rounds = 0;
  cfg.seeds = {3};
  const auto res = run_federated_seed(pooled, cfg, 3);
  // The zero model scores sigmoid(0) = 0.5 and predicts 0 everywhere.
  const auto clients = make_clients(pooled, cfg.hp, 3);
  double n = 0, s = 0;
  for (std::size_t k = 0; k < clients.size(); ++k) {
    const double acc = static_cast<double>(clients[k].test.count_label(0)) / static_cast<double>(clients[k].test.size());
    EXPECT_DOUBLE_EQ(res.client_accuracy[k].second, acc);
    n += static_cast<double>(clients[k].n_k);
    s += static_cast<double>(clients[k].n_k) * acc;
  }
  EXPECT_NEAR(res.acc_avg, s / n, 1e-15);
}

TEST(Simulation, IdenticalClientsFedAvgEqualsOneClient) {
  // Four copies of the same center data under the same seed.
  auto base = pooled_fixture();
  TabularDataset pooled{base.schema, {}, {}, {}};
  for (Center c : kAllCenters)
    for (std::size_t i = 0; i < 30; ++i) pooled.push_back(base.row(i), base.labels[i], c);
  FedConfig cfg;
  cfg.hp = lr_hp();
  cfg.rounds = 1;
  cfg.local_steps = 5;
  auto clients = make_clients(pooled, cfg.hp, 0);
  // Splits differ per center seed, so align them before comparing.
  for (auto& cs : clients) {
    cs.train = clients[0].train;
    cs.n_k = clients[0].n_k;
  }
  const ParamVector x0(4, 0.0);
  std::vector<std::pair<ParamVector, std::size_t>> items;
  ParamVector one;
  for (const auto& cs : clients) {
    const auto rd = local_steps(cs, x0, 5, cfg.hp, std::nullopt, 123);
    items.emplace_back(rd.delta, cs.n_k);
    one = rd.delta;
  }
  const auto avg = aggregate_fedavg(items);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(avg[i], one[i], 1e-15);
}

TEST(Simulation, EveryStrategyIsDeterministicAndThreadIndependent) {
  const auto pooled = pooled_fixture();
  for (Strategy s : kAllStrategies) {
    FedConfig cfg;
    cfg.hp = lr_hp();
    cfg.strategy = s;
    cfg.rounds = 4;
    cfg.local_steps = 5;
    cfg.seeds = {0, 1, 2};
    cfg.threads = 1;
    const auto a = run_federated(pooled, cfg);
    cfg.threads = 3;
    const auto b = run_federated(pooled, cfg);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_EQ(a.runs[i].final_params, b.runs[i].final_params) << strategy_name(s);
      EXPECT_EQ(a.runs[i].acc_avg, b.runs[i].acc_avg);
    }
    EXPECT_GE(a.acc_avg.std, 0.0);
    EXPECT_GT(a.acc_avg.mean, 0.5) << strategy_name(s);
  }
}

TEST(Simulation, NetworkAndSvmRun) {
  const auto pooled = pooled_fixture();
  for (Family f : {Family::kNN1, Family::kSVM}) {
    FedConfig cfg;
    cfg.hp = lr_hp();
    cfg.hp.family = f;
    cfg.strategy = Strategy::kFedYogi;
    cfg.rounds = 3;
    cfg.local_steps = 5;
    cfg.seeds = {0};
    const auto out = run_federated(pooled, cfg);
    EXPECT_EQ(out.acc_avg.std, 0.0);
    EXPECT_TRUE(std::isfinite(out.acc_avg.mean));
  }
  FedConfig bad;
  bad.hp.family = Family::kKNN;
  EXPECT_THROW(run_federated(pooled, bad), UnsupportedFamilyError);
}

TEST(Simulation, TraceRecordsAreJsonLines) {
  const auto pooled = pooled_fixture();
  FedConfig cfg;
  cfg.hp = lr_hp();
  cfg.rounds = 3;
  cfg.local_steps = 2;
  cfg.record_trace = true;
  const auto res = run_federated_seed(pooled, cfg, 5);
  ASSERT_EQ(res.trace.size(), 3u);
  EXPECT_EQ(res.trace.back().checksum, params_checksum(res.final_params));
  std::ostringstream os;
  write_trace_jsonl(os, 5, res.trace);
  std::istringstream in(os.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["round"].get<std::size_t>(), ++n);
    EXPECT_EQ(j["strategy"], "FedAvg");
    EXPECT_EQ(j["client_accuracy"].size(), 4u);
  }
  EXPECT_EQ(n, 3u);
}

TEST(LocalBaseline, SwitzerlandNeedsOverride) {
  const auto pooled = pooled_fixture();
  const std::vector<std::uint64_t> seeds = {0};
  EXPECT_THROW(run_local_baseline(pooled, Center::kSwitzerland, lr_hp(), seeds), ConfigError);
  EXPECT_NO_THROW(run_local_baseline(pooled, Center::kSwitzerland, lr_hp(), seeds, true));
  const auto ms = run_local_baseline(pooled, Center::kCleveland, lr_hp(), seeds);
  EXPECT_EQ(ms.std, 0.0);
}

TEST(Strategy, ParseIsCaseInsensitive) {
  EXPECT_EQ(parse_strategy("FedYogi"), Strategy::kFedYogi);
  EXPECT_EQ(parse_strategy("scaffold"), Strategy::kScaffold);
  EXPECT_THROW(parse_strategy("fedprox"), ConfigError);
}
