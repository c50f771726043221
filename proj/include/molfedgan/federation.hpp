//
// Project molfedgan - Copyright 2026 The molfedgan Authors
// SPDX-License-Identifier: Apache-2.0
//

// Federated training simulation: dataset splits, client partitioning,
// global rounds and FedAvg aggregation.

#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "molfedgan/errors.hpp"
#include "molfedgan/gan.hpp"
#include "molfedgan/metrics.hpp"
#include "molfedgan/molgraph.hpp"
#include "molfedgan/optim.hpp"
#include "molfedgan/sampling.hpp"

namespace molfedgan {

// Stream tags for derive_rng.
inline constexpr std::uint64_t kSplitStream = 0x5311;
inline constexpr std::uint64_t kPartitionStream = 0x9a27;
inline constexpr std::uint64_t kInitStream = 0x1417;
inline constexpr std::uint64_t kClientStream = 0xc11e;
inline constexpr std::uint64_t kEvalStream = 0xe7a1;

// ---------------------------------------------------------------------------
// Splitting and partitioning
// ---------------------------------------------------------------------------

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

/// Seeded shuffle of [0, n) followed by a contiguous cut. Train and
/// validation sizes are rounded to nearest; test takes the rest.
inline SplitIndices split_dataset(std::size_t n, std::array<double, 3> ratios, std::uint64_t seed) {
  for (double r : ratios) {
    if (!(r >= 0.0) || r > 1.0) throw BadRatios("split ratios must lie in [0, 1]");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw BadRatios("split ratios must sum to 1");
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = derive_rng(seed, kSplitStream);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = std::min(n, static_cast<std::size_t>(std::llround(ratios[0] * n)));
  const auto n_val =
      std::min(n - n_train, static_cast<std::size_t>(std::llround(ratios[1] * n)));
  SplitIndices s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.validation.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                      idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
  return s;
}

namespace detail {

/// Items grouped by label, classes in label order, items in input order.
inline std::map<std::string, std::vector<std::size_t>> group_by_label(
    const std::vector<std::size_t> &items, const std::vector<std::string> &labels) {
  if (items.size() != labels.size()) {
    throw Error("partition: " + std::to_string(items.size()) + " items but "
                + std::to_string(labels.size()) + " labels");
  }
  std::map<std::string, std::vector<std::size_t>> classes;
  for (std::size_t i = 0; i < items.size(); ++i) classes[labels[i]].push_back(items[i]);
  return classes;
}

inline void sort_groups(std::vector<std::vector<std::size_t>> &groups) {
  for (auto &g : groups) std::sort(g.begin(), g.end());
}

}  // namespace detail

/// Within each label class the items are shuffled and dealt round-robin.
/// The starting client rotates between classes so that totals stay balanced.
/// Each returned group is sorted ascending.
inline std::vector<std::vector<std::size_t>> partition_iid(const std::vector<std::size_t> &items,
                                                           const std::vector<std::string> &labels,
                                                           std::size_t k, std::uint64_t seed) {
  if (k == 0) throw ConfigError("num_clients must be >= 1");
  Rng rng = derive_rng(seed, kPartitionStream, 1);
  std::vector<std::vector<std::size_t>> groups(k);
  std::size_t offset = 0;
  for (auto &[label, members] : detail::group_by_label(items, labels)) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t i = 0; i < members.size(); ++i) groups[(offset + i) % k].push_back(members[i]);
    offset = (offset + members.size()) % k;
  }
  detail::sort_groups(groups);
  return groups;
}

/// Per class, client shares p ~ Dirichlet(alpha) (normalized gamma draws);
/// each item then goes to a client drawn from p.
inline std::vector<std::vector<std::size_t>> partition_noniid(
    const std::vector<std::size_t> &items, const std::vector<std::string> &labels, std::size_t k,
    double alpha, std::uint64_t seed) {
  if (k == 0) throw ConfigError("num_clients must be >= 1");
  if (!(alpha > 0.0)) throw ConfigError("dirichlet alpha must be > 0");
  Rng rng = derive_rng(seed, kPartitionStream, 2);
  std::vector<std::vector<std::size_t>> groups(k);
  std::gamma_distribution<double> gamma(alpha, 1.0);
  for (auto &[label, members] : detail::group_by_label(items, labels)) {
    std::vector<double> share(k);
    double total = 0.0;
    for (auto &s : share) total += (s = gamma(rng));
    if (!(total > 0.0)) {
      // Every draw underflowed (tiny alpha); put the class on one client.
      std::fill(share.begin(), share.end(), 0.0);
      share[std::uniform_int_distribution<std::size_t>(0, k - 1)(rng)] = 1.0;
    }
    std::discrete_distribution<std::size_t> pick(share.begin(), share.end());
    for (std::size_t item : members) groups[pick(rng)].push_back(item);
  }
  detail::sort_groups(groups);
  return groups;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

/// Per-parameter weighted mean with weights w_k / sum(w), accumulated in
/// double precision.
template <typename T>
ParameterList<T> fedavg(const std::vector<const ParameterList<T> *> &models,
                        const std::vector<double> &weights) {
  if (models.empty()) throw Error("fedavg: no models");
  if (weights.size() != models.size()) throw Error("fedavg: weight count differs from model count");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error("fedavg: negative weight");
    total += w;
  }
  if (!(total > 0.0)) throw Error("fedavg: weights sum to zero");
  for (const auto *m : models) Generator<T>::check_same_architecture(*models.front(), *m);

  ParameterList<T> out = *models.front();
  for (std::size_t p = 0; p < out.size(); ++p) {
    std::vector<double> acc(out[p].value.size(), 0.0);
    for (std::size_t k = 0; k < models.size(); ++k) {
      const double w = weights[k] / total;
      const auto src = (*models[k])[p].value.values();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w * static_cast<double>(src[i]);
    }
    auto dst = out[p].value.values();
    for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<T>(acc[i]);
  }
  return out;
}

template <typename T>
ParameterList<T> fedavg(const std::vector<ParameterList<T>> &models,
                        const std::vector<double> &weights) {
  std::vector<const ParameterList<T> *> ptrs;
  for (const auto &m : models) ptrs.push_back(&m);
  return fedavg(ptrs, weights);
}

// ---------------------------------------------------------------------------
// Simulation state
// ---------------------------------------------------------------------------

enum class PartitionMode { Iid, NonIid };
enum class Weighting { SampleCount, Uniform };

struct ModelConfig {
  std::vector<std::size_t> generator_dims{32, 128};
  DiscriminatorDims discriminator_dims{{64, 128}, 64, 128};
  std::size_t noise_dim = kDefaultNoiseDim;
  std::size_t n_max = kDefaultMaxAtoms;
  double dropout_gen = 0.0;
  double dropout_disc = 0.0;
};

struct FederationConfig {
  std::size_t num_clients = 1;
  std::size_t epochs_per_round = 1;
  std::size_t batch_size = 16;
  std::size_t rounds = 1;
  PartitionMode partition = PartitionMode::Iid;
  double alpha = 0.5;
  Weighting weighting = Weighting::SampleCount;
  std::array<double, 3> split{0.8, 0.1, 0.1};
  std::size_t resample_epochs = 1000;
  AdamConfig adam;
  TrainOptions train;
  ModelConfig model;
  // Metrics on `eval_samples` generated molecules every `eval_interval`
  // rounds (0 = final round only).
  std::size_t eval_interval = 0;
  std::size_t eval_samples = 256;
  MetricsConfig metrics;
  // Plateau detector applied to the global loss curves.
  std::size_t plateau_window = 10;
  double plateau_delta = 0.05;
  bool deterministic = true;
  std::uint64_t seed = 0;
};

template <typename T>
struct ClientState {
  std::size_t id = 0;
  std::vector<std::size_t> indices;         // into the training split
  std::vector<MolecularGraph> local_data;   // the client's own molecules
  Generator<T> gen;
  Discriminator<T> disc;
  TrainerState<T> trainer;
  Rng rng;
  std::size_t sample_count() const { return local_data.size(); }
};

struct ClientRoundLoss {
  std::size_t client = 0;
  bool skipped = false;
  double generator = 0.0;
  double discriminator = 0.0;
};

struct RoundLog {
  std::size_t round = 0;
  std::vector<ClientRoundLoss> client_losses;
  double generator_loss = 0.0;
  double discriminator_loss = 0.0;
  double wall_ms = 0.0;
  std::vector<std::string> warnings;
};

template <typename T>
struct FederationState {
  std::size_t round = 0;
  Generator<T> gen;
  Discriminator<T> disc;
  std::vector<ClientState<T>> clients;
  std::vector<RoundLog> history;

  std::vector<double> generator_curve() const {
    std::vector<double> c;
    for (const auto &h : history) c.push_back(h.generator_loss);
    return c;
  }
  std::vector<double> discriminator_curve() const {
    std::vector<double> c;
    for (const auto &h : history) c.push_back(h.discriminator_loss);
    return c;
  }
};

inline Rng client_rng(std::uint64_t seed, std::size_t client) {
  return derive_rng(seed, kClientStream, client);
}

inline Rng init_rng(std::uint64_t seed) { return derive_rng(seed, kInitStream); }

template <typename T>
std::pair<Generator<T>, Discriminator<T>> init_models(const ModelConfig &m, std::uint64_t seed) {
  Rng rng = init_rng(seed);
  auto gen = Generator<T>::init(m.generator_dims, m.noise_dim, m.n_max, m.dropout_gen, rng);
  auto disc = Discriminator<T>::init(m.discriminator_dims, m.dropout_disc, rng);
  return {std::move(gen), std::move(disc)};
}

template <typename T>
TrainerState<T> make_trainer_state(const FederationConfig &cfg) {
  TrainerState<T> t;
  t.gen_opt = AdamState<T>(cfg.adam);
  t.disc_opt = AdamState<T>(cfg.adam);
  t.resample_epochs = cfg.resample_epochs;
  return t;
}

/// Global models from `init_models`, one client per group. Each client
/// receives a copy of its own molecules only.
template <typename T>
FederationState<T> init_federation(const FederationConfig &cfg,
                                   const std::vector<MolecularGraph> &train_graphs,
                                   const std::vector<std::vector<std::size_t>> &groups) {
  FederationState<T> s;
  std::tie(s.gen, s.disc) = init_models<T>(cfg.model, cfg.seed);
  for (std::size_t c = 0; c < groups.size(); ++c) {
    ClientState<T> client;
    client.id = c;
    client.indices = groups[c];
    for (std::size_t i : groups[c]) client.local_data.push_back(train_graphs.at(i));
    client.gen = s.gen;
    client.disc = s.disc;
    client.trainer = make_trainer_state<T>(cfg);
    client.rng = client_rng(cfg.seed, c);
    s.clients.push_back(std::move(client));
  }
  return s;
}

namespace detail {

struct LocalResult {
  bool skipped = false;
  double generator = 0.0;
  double discriminator = 0.0;
};

inline double mean_of(const std::vector<double> &v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// E local epochs, re-batching the client's data each epoch.
template <typename T>
LocalResult train_client(ClientState<T> &client, const FederationConfig &cfg) {
  std::vector<std::size_t> local(client.local_data.size());
  std::iota(local.begin(), local.end(), 0);
  LocalResult r;
  if (local.size() < cfg.batch_size) {
    r.skipped = true;
    return r;
  }
  std::vector<double> g, d;
  for (std::size_t e = 0; e < cfg.epochs_per_round; ++e) {
    const auto batches =
        make_batches<T>(client.local_data, local, cfg.batch_size, cfg.model.n_max, client.rng);
    const auto trace = local_epoch(client.gen, client.disc, client.trainer, batches, cfg.train,
                                   client.rng);
    g.insert(g.end(), trace.generator.begin(), trace.generator.end());
    d.insert(d.end(), trace.discriminator.begin(), trace.discriminator.end());
  }
  r.generator = mean_of(g);
  r.discriminator = mean_of(d);
  return r;
}

}  // namespace detail

/// One global round: broadcast, E local epochs per client, collect, FedAvg.
/// Clients with fewer molecules than one batch are skipped and excluded
/// from the aggregation.
template <typename T>
const RoundLog &run_round(FederationState<T> &state, const FederationConfig &cfg) {
  const auto start = std::chrono::steady_clock::now();
  for (auto &c : state.clients) {
    c.gen.params = state.gen.params;
    c.disc.params = state.disc.params;
  }

  std::vector<detail::LocalResult> results(state.clients.size());
  if (cfg.deterministic || state.clients.size() < 2) {
    for (std::size_t c = 0; c < state.clients.size(); ++c) {
      results[c] = detail::train_client(state.clients[c], cfg);
    }
  } else {
    std::vector<std::future<detail::LocalResult>> jobs;
    for (auto &c : state.clients) {
      jobs.push_back(std::async(std::launch::async,
                                [&c, &cfg] { return detail::train_client(c, cfg); }));
    }
    for (std::size_t c = 0; c < jobs.size(); ++c) results[c] = jobs[c].get();
  }

  RoundLog log;
  log.round = state.round + 1;
  std::vector<const ParameterList<T> *> gens, discs;
  std::vector<double> weights;
  for (std::size_t c = 0; c < state.clients.size(); ++c) {
    const auto &client = state.clients[c];
    log.client_losses.push_back({client.id, results[c].skipped, results[c].generator,
                                 results[c].discriminator});
    if (results[c].skipped) {
      log.warnings.push_back("client " + std::to_string(client.id) + " has "
                             + std::to_string(client.sample_count())
                             + " molecules, fewer than one batch; skipped");
      continue;
    }
    gens.push_back(&client.gen.params);
    discs.push_back(&client.disc.params);
    weights.push_back(cfg.weighting == Weighting::Uniform
                          ? 1.0
                          : static_cast<double>(client.sample_count()));
  }
  if (gens.empty()) throw EmptyDataset("no client has a full batch of training data");

  state.gen.params = fedavg(gens, weights);
  state.disc.params = fedavg(discs, weights);
  double total = 0.0;
  for (std::size_t c = 0, j = 0; c < results.size(); ++c) {
    if (results[c].skipped) continue;
    log.generator_loss += weights[j] * results[c].generator;
    log.discriminator_loss += weights[j] * results[c].discriminator;
    total += weights[j++];
  }
  log.generator_loss /= total;
  log.discriminator_loss /= total;
  ++state.round;
  log.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                    .count();
  state.history.push_back(std::move(log));
  return state.history.back();
}

/// True when each of the last `window` round-over-round changes is below
/// `delta` times the range of the whole curve.
inline bool plateaued(const std::vector<double> &curve, std::size_t window, double delta) {
  if (window == 0 || curve.size() < window + 1) return false;
  const auto [lo, hi] = std::minmax_element(curve.begin(), curve.end());
  const double range = *hi - *lo;
  if (range == 0.0) return true;
  for (std::size_t i = curve.size() - window; i < curve.size(); ++i) {
    if (!(std::abs(curve[i] - curve[i - 1]) < delta * range)) return false;
  }
  return true;
}

/// Largest |delta| over the last `window` steps divided by the curve range.
inline double plateau_ratio(const std::vector<double> &curve, std::size_t window) {
  if (window == 0 || curve.size() < window + 1) return INFINITY;
  const auto [lo, hi] = std::minmax_element(curve.begin(), curve.end());
  const double range = *hi - *lo;
  double worst = 0.0;
  for (std::size_t i = curve.size() - window; i < curve.size(); ++i) {
    worst = std::max(worst, std::abs(curve[i] - curve[i - 1]));
  }
  return range == 0.0 ? 0.0 : worst / range;
}

// ---------------------------------------------------------------------------
// Full training runs
// ---------------------------------------------------------------------------

struct PreparedData {
  SplitIndices split;
  std::vector<MolecularGraph> train;
  std::vector<std::string> labels;
  std::vector<std::vector<std::size_t>> groups;
};

inline PreparedData prepare_data(const std::vector<MolecularGraph> &graphs,
                                 const FederationConfig &cfg) {
  if (graphs.empty()) throw EmptyDataset("dataset has no usable molecules");
  PreparedData p;
  p.split = split_dataset(graphs.size(), cfg.split, cfg.seed);
  std::sort(p.split.train.begin(), p.split.train.end());
  std::vector<std::size_t> local(p.split.train.size());
  std::iota(local.begin(), local.end(), 0);
  for (std::size_t i : p.split.train) {
    p.train.push_back(graphs[i]);
    p.labels.push_back(molecular_formula(graphs[i]));
  }
  p.groups = cfg.partition == PartitionMode::Iid
                 ? partition_iid(local, p.labels, cfg.num_clients, cfg.seed)
                 : partition_noniid(local, p.labels, cfg.num_clients, cfg.alpha, cfg.seed);
  return p;
}

struct RoundEvaluation {
  std::size_t round = 0;
  MetricsReport report;
};

template <typename T>
struct TrainingResult {
  FederationState<T> state;
  std::vector<RoundEvaluation> evaluations;
  std::optional<std::size_t> plateau_round;
};

/// Hard samples from the global generator, evaluated against `reference`.
template <typename T>
MetricsReport evaluate_generator(const Generator<T> &gen, const ReferenceSet &reference,
                                 std::size_t n_samples, double temperature,
                                 const MetricsConfig &metrics, Rng &rng,
                                 std::vector<MolecularGraph> *samples = nullptr) {
  auto graphs = sample_graphs(gen, n_samples, temperature, rng);
  auto report = evaluate(graphs, reference, metrics);
  if (samples) *samples = std::move(graphs);
  return report;
}

template <typename T>
using RoundCallback =
    std::function<void(const FederationState<T> &, const RoundLog &, const MetricsReport *)>;

/// Runs cfg.rounds global rounds. Metrics are computed every eval_interval
/// rounds and after the last one. The plateau detector only records the
/// first round at which both curves satisfy it; training is never cut short.
template <typename T>
TrainingResult<T> run_training(const FederationConfig &cfg,
                               const std::vector<MolecularGraph> &graphs,
                               const RoundCallback<T> &on_round = {}) {
  const PreparedData data = prepare_data(graphs, cfg);
  TrainingResult<T> result{init_federation<T>(cfg, data.train, data.groups), {}, {}};
  if (cfg.rounds == 0) return result;
  const ReferenceSet reference = make_reference(data.train, cfg.metrics);
  for (std::size_t r = 1; r <= cfg.rounds; ++r) {
    const RoundLog &log = run_round(result.state, cfg);
    const MetricsReport *report = nullptr;
    const bool due = r == cfg.rounds || (cfg.eval_interval > 0 && r % cfg.eval_interval == 0);
    if (due) {
      Rng rng = derive_rng(cfg.seed, kEvalStream, r);
      result.evaluations.push_back(
          {r, evaluate_generator(result.state.gen, reference, cfg.eval_samples,
                                 cfg.train.temperature, cfg.metrics, rng)});
      report = &result.evaluations.back().report;
    }
    if (!result.plateau_round
        && plateaued(result.state.generator_curve(), cfg.plateau_window, cfg.plateau_delta)
        && plateaued(result.state.discriminator_curve(), cfg.plateau_window,
                     cfg.plateau_delta)) {
      result.plateau_round = r;
    }
    if (on_round) on_round(result.state, log, report);
  }
  return result;
}

}  // namespace molfedgan
