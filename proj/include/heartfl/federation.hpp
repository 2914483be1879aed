#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "heartfl/dataset.hpp"
#include "heartfl/error.hpp"
#include "heartfl/models/dense.hpp"
#include "heartfl/models/model.hpp"
#include "heartfl/random.hpp"

// Cross-silo federated simulation: every client participates in every
// round, local work is counted in mini-batch steps, and the server applies
// one of four aggregation rules.

namespace heartfl {

enum class Strategy : std::uint8_t { kFedAvg, kFedAdam, kFedYogi, kScaffold };

inline constexpr std::array<Strategy, 4> kAllStrategies = {Strategy::kFedAvg, Strategy::kFedAdam,
                                                           Strategy::kFedYogi, Strategy::kScaffold};

inline std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kFedAvg: return "FedAvg";
    case Strategy::kFedAdam: return "FedAdam";
    case Strategy::kFedYogi: return "FedYogi";
    case Strategy::kScaffold: return "SCAFFOLD";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view s) {
  std::string lower(s);
  for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (lower == "fedavg") return Strategy::kFedAvg;
  if (lower == "fedadam") return Strategy::kFedAdam;
  if (lower == "fedyogi") return Strategy::kFedYogi;
  if (lower == "scaffold") return Strategy::kScaffold;
  throw ConfigError("unknown strategy '" + std::string(s) + "'");
}

enum class ScaffoldOption : std::uint8_t { kGradientAtServer, kReuseLocalSteps };  // (i), (ii)

struct ClientState {
  Center id = Center::kCleveland;
  TabularDataset train;  // standardized with this client's own training statistics
  TabularDataset test;
  std::size_t n_k = 0;   // training-set size
  ParamVector params;    // latest local parameters
  ParamVector control;   // SCAFFOLD control variate c_i
  double local_lr = 0.01;
};

struct ServerOptState {
  ParamVector x;  // global parameters
  ParamVector m;  // first moment
  ParamVector v;  // second moment
  ParamVector c;  // SCAFFOLD global control variate
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eta = 0.01;   // adaptive-server step size
  double tau = 1e-3;
  double eta_g = 1.0;  // SCAFFOLD global step size
  std::size_t num_clients = 0;

  static ServerOptState zeros(ParamVector x0, std::size_t num_clients) {
    ServerOptState st;
    const std::size_t d = x0.size();
    st.x = std::move(x0);
    st.m.assign(d, 0.0);
    st.v.assign(d, 0.0);
    st.c.assign(d, 0.0);
    st.num_clients = num_clients;
    return st;
  }
};

// theta_after - theta_before for one client, plus its training-set size.
struct RoundDelta {
  ParamVector delta;
  std::size_t n_k = 0;
};

// ---------------------------------------------------------------------------
// Client side
// ---------------------------------------------------------------------------

// Runs `steps` seeded mini-batch steps from `x`. With a correction term the
// step is y <- y - lr * (g(y) + correction), where correction = c - c_i.
inline RoundDelta local_steps(const ClientState& cs, std::span<const double> x, std::size_t steps,
                              const Hyperparams& hp,
                              std::optional<std::span<const double>> correction,
                              std::uint64_t seed) {
  if (!is_differentiable(hp.family))
    throw UnsupportedFamilyError(std::string(family_name(hp.family)) +
                                 " cannot run federated local steps");
  const DenseShape shape = dense_shape(hp.family, cs.train.dim(), hp.hidden_units);
  if (x.size() != shape.param_count()) throw ContractError("global parameters have the wrong shape");
  if (correction && correction->size() != x.size())
    throw ContractError("correction term has the wrong shape");

  ParamVector y(x.begin(), x.end());
  if (steps > 0 && !cs.train.empty()) {
    const LossConfig cfg{hp.c, cs.train.size()};
    BatchStream stream(cs.train.size(), hp.batch_size, seed);
    GradientBatch g(y.size());
    for (std::size_t s = 0; s < steps; ++s) {
      batch_loss_and_gradient(shape, y, cs.train, stream.next(), cfg, g);
      if (correction)
        for (std::size_t i = 0; i < y.size(); ++i) g[i] += (*correction)[i];
      for (std::size_t i = 0; i < y.size(); ++i) y[i] -= cs.local_lr * g[i];
    }
    check_finite(y, "local steps");
  }
  RoundDelta out{ParamVector(y.size()), cs.n_k};
  for (std::size_t i = 0; i < y.size(); ++i) out.delta[i] = y[i] - x[i];
  return out;
}

// Full-batch gradient of the client's training loss at `x`.
inline GradientBatch full_local_gradient(const ClientState& cs, std::span<const double> x,
                                         const Hyperparams& hp) {
  const DenseShape shape = dense_shape(hp.family, cs.train.dim(), hp.hidden_units);
  std::vector<std::size_t> rows(cs.train.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return batch_gradient(shape, x, cs.train, rows, {hp.c, cs.train.size()});
}

// ---------------------------------------------------------------------------
// Server side
// ---------------------------------------------------------------------------

// Weighted mean with weights n_k / sum(n_k).
inline ParamVector aggregate_fedavg(std::span<const std::pair<ParamVector, std::size_t>> items) {
  if (items.empty()) throw ContractError("nothing to aggregate");
  const std::size_t d = items.front().first.size();
  double total = 0.0;
  for (const auto& [p, n] : items) {
    if (p.size() != d) throw ContractError("client parameter shapes differ");
    total += static_cast<double>(n);
  }
  if (total <= 0.0) throw ContractError("client sizes sum to zero");
  ParamVector out(d, 0.0);
  for (const auto& [p, n] : items) {
    const double w = static_cast<double>(n) / total;
    for (std::size_t i = 0; i < d; ++i) out[i] += w * p[i];
  }
  return out;
}

enum class SecondMomentRule : std::uint8_t { kAdam, kYogi };

inline double sign(double v) { return static_cast<double>((v > 0) - (v < 0)); }

// One adaptive server step on the pseudo-gradient `delta`:
//   m <- b1 m + (1-b1) delta
//   v <- b2 v + (1-b2) delta^2                      (Adam)
//   v <- v - (1-b2) delta^2 sign(v - delta^2)       (Yogi)
//   x <- x - eta m / (sqrt(v) + tau)
// No bias correction is applied.
inline ServerOptState adaptive_server_update(ServerOptState st, std::span<const double> delta,
                                             SecondMomentRule rule) {
  const std::size_t d = st.x.size();
  if (delta.size() != d || st.m.size() != d || st.v.size() != d)
    throw ContractError("server state and update shapes differ");
  for (std::size_t i = 0; i < d; ++i) {
    const double g = delta[i];
    const double g2 = g * g;
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
    if (rule == SecondMomentRule::kAdam)
      st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g2;
    else
      st.v[i] = st.v[i] - (1.0 - st.beta2) * g2 * sign(st.v[i] - g2);
    st.x[i] -= st.eta * st.m[i] / (std::sqrt(st.v[i]) + st.tau);
  }
  check_finite(st.x, "server update");
  return st;
}

// RoundDelta holds theta_after - theta_before, i.e. the direction of client
// progress. The server's pseudo-gradient is the negated unweighted mean of
// the deltas, so a step against it moves x toward the clients.
inline ParamVector pseudo_gradient(std::span<const RoundDelta> deltas, std::size_t d) {
  if (deltas.empty()) throw ContractError("no client deltas");
  ParamVector g(d, 0.0);
  for (const auto& rd : deltas) {
    if (rd.delta.size() != d) throw ContractError("client delta has the wrong shape");
    for (std::size_t i = 0; i < d; ++i) g[i] -= rd.delta[i];
  }
  for (auto& v : g) v /= static_cast<double>(deltas.size());
  return g;
}

inline ServerOptState server_adam_step(ServerOptState st, std::span<const RoundDelta> deltas) {
  const auto g = pseudo_gradient(deltas, st.x.size());
  return adaptive_server_update(std::move(st), g, SecondMomentRule::kAdam);
}

inline ServerOptState server_yogi_step(ServerOptState st, std::span<const RoundDelta> deltas) {
  const auto g = pseudo_gradient(deltas, st.x.size());
  return adaptive_server_update(std::move(st), g, SecondMomentRule::kYogi);
}

// One SCAFFOLD round with full participation. Each client takes K corrected
// steps, refreshes c_i by option (i) or (ii), then the server moves
// x <- x + (eta_g/|S|) sum(y_i - x) and c <- c + (1/N) sum(c_i+ - c_i).
inline std::pair<std::vector<ClientState>, ServerOptState> scaffold_round(
    std::vector<ClientState> clients, ServerOptState st, ScaffoldOption option, std::size_t k_steps,
    const Hyperparams& hp, std::uint64_t seed) {
  if (clients.empty()) throw ContractError("SCAFFOLD needs at least one client");
  if (option == ScaffoldOption::kReuseLocalSteps && k_steps == 0)
    throw ContractError("SCAFFOLD option (ii) divides by K * lr; K must be positive");
  const std::size_t d = st.x.size();
  if (st.c.size() != d) throw ContractError("global control variate has the wrong shape");
  const std::size_t n_clients = st.num_clients ? st.num_clients : clients.size();

  ParamVector x_sum(d, 0.0);
  ParamVector c_sum(d, 0.0);
  for (std::size_t k = 0; k < clients.size(); ++k) {
    auto& cs = clients[k];
    if (cs.control.size() != d) cs.control.assign(d, 0.0);
    ParamVector corr(d);
    for (std::size_t i = 0; i < d; ++i) corr[i] = st.c[i] - cs.control[i];
    const RoundDelta rd = local_steps(cs, st.x, k_steps, hp, std::span<const double>(corr),
                                      derive_seed(seed, k));
    ParamVector c_plus(d);
    if (option == ScaffoldOption::kGradientAtServer) {
      c_plus = full_local_gradient(cs, st.x, hp);
    } else {
      const double scale = 1.0 / (static_cast<double>(k_steps) * cs.local_lr);
      // x - y_i = -delta
      for (std::size_t i = 0; i < d; ++i)
        c_plus[i] = cs.control[i] - st.c[i] - scale * rd.delta[i];
    }
    for (std::size_t i = 0; i < d; ++i) {
      x_sum[i] += rd.delta[i];
      c_sum[i] += c_plus[i] - cs.control[i];
    }
    cs.params.resize(d);
    for (std::size_t i = 0; i < d; ++i) cs.params[i] = st.x[i] + rd.delta[i];
    cs.control = std::move(c_plus);
  }
  const double step = st.eta_g / static_cast<double>(clients.size());
  for (std::size_t i = 0; i < d; ++i) {
    st.x[i] += step * x_sum[i];
    st.c[i] += c_sum[i] / static_cast<double>(n_clients);
  }
  check_finite(st.x, "SCAFFOLD round");
  return {std::move(clients), std::move(st)};
}

// ---------------------------------------------------------------------------
// Full simulation
// ---------------------------------------------------------------------------

struct ServerHyper {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eta = 0.01;
  double tau = 1e-3;
  double eta_g = 1.0;
};

struct FedConfig {
  Hyperparams hp;  // family, local step size, batch size, model-specific knobs
  Strategy strategy = Strategy::kFedAvg;
  std::size_t rounds = 30;
  std::size_t local_steps = 50;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  ServerHyper server;
  ScaffoldOption scaffold_option = ScaffoldOption::kReuseLocalSteps;
  double train_frac = 0.66;
  bool record_trace = false;
  std::size_t threads = 0;  // seeds run in parallel
};

struct RoundTrace {
  std::size_t round = 0;
  Strategy strategy = Strategy::kFedAvg;
  std::uint64_t checksum = 0;
  std::vector<std::pair<Center, double>> client_accuracy;
};

struct FedRunResult {
  std::uint64_t seed = 0;
  std::vector<std::pair<Center, double>> client_accuracy;  // Acc_k in client order
  std::vector<std::size_t> client_sizes;                   // n_k in client order
  double acc_avg = 0.0;                                    // sum (n_k/n) Acc_k
  std::vector<RoundTrace> trace;
  ParamVector final_params;
};

struct FedSummary {
  std::vector<FedRunResult> runs;  // seed order
  MeanStd acc_avg;
};

// FNV-1a over the IEEE-754 bytes of the parameters.
inline std::uint64_t params_checksum(std::span<const double> params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : params) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

// One client per center, in fixed center order. Each center is split with a
// seed derived from the run seed and standardized with its own training
// statistics. Centers with fewer than two rows are left out.
inline std::vector<ClientState> make_clients(const TabularDataset& pooled, const Hyperparams& hp,
                                             std::uint64_t seed, double train_frac = 0.66) {
  std::vector<ClientState> clients;
  for (const auto& [center, ds] : partition_by_center(pooled)) {
    if (ds.size() < 2) continue;
    const auto [tr, te] =
        split_train_test(ds, derive_seed(seed, 0x63656eULL, static_cast<std::uint64_t>(center)), train_frac);
    auto s = standardize(tr, te);
    ClientState cs;
    cs.id = center;
    cs.n_k = s.train.size();
    cs.train = std::move(s.train);
    cs.test = std::move(s.test);
    cs.local_lr = hp.learning_rate;
    clients.push_back(std::move(cs));
  }
  if (clients.empty()) throw ConfigError("no center has enough rows to form a client");
  return clients;
}

// Evaluates the shared model on every client's test split.
inline std::vector<std::pair<Center, double>> client_accuracies(const std::vector<ClientState>& clients,
                                                                const DenseShape& shape,
                                                                const ParamVector& x) {
  const TrainedModel m = TrainedModel::dense(shape, x);
  std::vector<std::pair<Center, double>> out;
  for (const auto& cs : clients) out.emplace_back(cs.id, evaluate(m, cs.test));
  return out;
}

inline double weighted_accuracy(const std::vector<ClientState>& clients,
                                const std::vector<std::pair<Center, double>>& acc) {
  double n = 0.0, s = 0.0;
  for (std::size_t k = 0; k < clients.size(); ++k) {
    n += static_cast<double>(clients[k].n_k);
    s += static_cast<double>(clients[k].n_k) * acc[k].second;
  }
  return s / n;
}

inline FedRunResult run_federated_seed(const TabularDataset& pooled, const FedConfig& cfg,
                                       std::uint64_t seed) {
  const Hyperparams& hp = cfg.hp;
  if (!is_differentiable(hp.family))
    throw UnsupportedFamilyError(std::string(family_name(hp.family)) +
                                 " cannot be trained federatedly");
  auto clients = make_clients(pooled, hp, seed, cfg.train_frac);
  const DenseShape shape = dense_shape(hp.family, pooled.dim(), hp.hidden_units);
  ServerOptState st =
      ServerOptState::zeros(init_params(shape, derive_seed(seed, 0x696e6974ULL)), clients.size());
  st.beta1 = cfg.server.beta1;
  st.beta2 = cfg.server.beta2;
  st.eta = cfg.server.eta;
  st.tau = cfg.server.tau;
  st.eta_g = cfg.server.eta_g;
  for (auto& cs : clients) cs.control.assign(st.x.size(), 0.0);

  FedRunResult res;
  res.seed = seed;
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    const std::uint64_t round_seed = derive_seed(seed, 0x726f756eULL, r);
    if (cfg.strategy == Strategy::kScaffold) {
      std::tie(clients, st) =
          scaffold_round(std::move(clients), std::move(st), cfg.scaffold_option, cfg.local_steps, hp, round_seed);
    } else {
      std::vector<RoundDelta> deltas;
      for (std::size_t k = 0; k < clients.size(); ++k)
        deltas.push_back(local_steps(clients[k], st.x, cfg.local_steps, hp, std::nullopt,
                                     derive_seed(round_seed, k)));
      if (cfg.strategy == Strategy::kFedAvg) {
        std::vector<std::pair<ParamVector, std::size_t>> items;
        for (const auto& rd : deltas) {
          ParamVector theta(st.x.size());
          for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = st.x[i] + rd.delta[i];
          items.emplace_back(std::move(theta), rd.n_k);
        }
        st.x = aggregate_fedavg(items);
      } else if (cfg.strategy == Strategy::kFedAdam) {
        st = server_adam_step(std::move(st), deltas);
      } else {
        st = server_yogi_step(std::move(st), deltas);
      }
    }
    if (cfg.record_trace)
      res.trace.push_back({r + 1, cfg.strategy, params_checksum(st.x), client_accuracies(clients, shape, st.x)});
  }
  res.client_accuracy = client_accuracies(clients, shape, st.x);
  for (const auto& cs : clients) res.client_sizes.push_back(cs.n_k);
  res.acc_avg = weighted_accuracy(clients, res.client_accuracy);
  res.final_params = st.x;
  return res;
}

inline FedSummary run_federated(const TabularDataset& pooled, const FedConfig& cfg) {
  if (cfg.seeds.empty()) throw ConfigError("seed list is empty");
  FedSummary out;
  out.runs.resize(cfg.seeds.size());
  parallel_for(
      cfg.seeds.size(), [&](std::size_t i) { out.runs[i] = run_federated_seed(pooled, cfg, cfg.seeds[i]); },
      cfg.threads);
  std::vector<double> acc;
  for (const auto& r : out.runs) acc.push_back(r.acc_avg);
  out.acc_avg = mean_std(acc);
  return out;
}

// Centralized training restricted to one center's rows.
inline MeanStd run_local_baseline(const TabularDataset& pooled, Center center, const Hyperparams& hp,
                                  std::span<const std::uint64_t> seeds, bool allow_switzerland = false,
                                  double train_frac = 0.66) {
  if (center == Center::kSwitzerland && !allow_switzerland)
    throw ConfigError("Switzerland is excluded from local baselines (single-class after preprocessing)");
  if (seeds.empty()) throw ConfigError("seed list is empty");
  const auto parts = partition_by_center(pooled);
  const auto& ds = parts.at(center);
  std::vector<double> acc(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t i) { acc[i] = holdout_accuracy(hp, ds, seeds[i], train_frac); });
  return mean_std(acc);
}

// One JSON object per line: round, strategy, checksum, per-client accuracy.
inline void write_trace_jsonl(std::ostream& os, std::uint64_t seed, std::span<const RoundTrace> trace) {
  for (const auto& t : trace) {
    os << "{\"seed\":" << seed << ",\"round\":" << t.round << ",\"strategy\":\""
       << strategy_name(t.strategy) << "\",\"checksum\":\"";
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(t.checksum));
    os << buf << "\",\"client_accuracy\":{";
    for (std::size_t k = 0; k < t.client_accuracy.size(); ++k) {
      if (k) os << ',';
      char acc[32];
      std::snprintf(acc, sizeof(acc), "%.6f", t.client_accuracy[k].second);
      os << '"' << center_name(t.client_accuracy[k].first) << "\":" << acc;
    }
    os << "}}\n";
  }
}

}  // namespace heartfl
