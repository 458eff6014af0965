// Copyright 2026 The adagg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "adagg/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

#include "adagg/adaptive.hpp"
#include "adagg/error.hpp"
#include "adagg/seed.hpp"

namespace adagg::sim {

namespace {

constexpr int kMaxPartitionDraws = 100;

Eigen::MatrixXd to_columns(const std::vector<data::Sample>& samples, std::size_t begin, std::size_t end) {
  Eigen::MatrixXd x(data::kPixels, static_cast<Eigen::Index>(end - begin));
  for (std::size_t k = begin; k < end; ++k) {
    x.col(static_cast<Eigen::Index>(k - begin)) =
        Eigen::Map<const Eigen::VectorXd>(samples[k].pixels.data(), data::kPixels);
  }
  return x;
}

std::vector<data::ClientShard> attacked_shards(const SimConfig& config, const std::vector<data::ClientShard>& clean) {
  std::vector<data::ClientShard> out = clean;
  for (auto& s : out) {
    if (!config.attack.is_attacker(s.client_id)) continue;
    switch (config.attack.kind) {
      case attacks::AttackKind::kBackdoor:
        s = attacks::poison_shard(
            s, config.attack.backdoor,
            derive_seed({config.seeds.attack, static_cast<std::uint64_t>(s.client_id), 0x706f69736f6eULL}));
        break;
      case attacks::AttackKind::kLabelFlip:
        s = attacks::apply_label_flip(s, config.attack.flip_a, config.attack.flip_b);
        break;
      default:
        break;
    }
  }
  return out;
}

}  // namespace

void SimConfig::validate() const {
  if (n_clients < 2) throw UsageError("sim.clients must be >= 2");
  if (!(alpha > 0.0)) throw UsageError("partition.alpha must be > 0");
  if (batch < 1) throw UsageError("partition.batch must be >= 1");
  if (local_epochs != 1) throw UsageError("local training runs exactly one epoch");
  if (rounds < 1) throw UsageError("sim.rounds must be >= 1");
  if (!(lr > 0.0)) throw UsageError("sim.lr must be > 0");
  if (hidden < 1) throw UsageError("model.hidden must be >= 1");
  if (threads < 1) throw UsageError("sim.threads must be >= 1");
  if (data.samples < 1) throw UsageError("data.samples must be >= 1");
  if (!(data.test_fraction > 0.0 && data.test_fraction < 1.0)) throw UsageError("data.test_fraction must be in (0, 1)");
  for (int id : attack.attacker_ids) {
    if (id < 0 || id >= n_clients) throw UsageError("attacker id " + std::to_string(id) + " is not a client");
  }
  if (attack.kind != attacks::AttackKind::kNone && attack.attacker_ids.empty()) {
    throw UsageError("attack configured without attackers");
  }
  if (attack.kind == attacks::AttackKind::kBackdoor) {
    const auto& b = attack.backdoor;
    (void)attacks::backdoor_pixels(b.shift_y, b.shift_x, b.gap);
    if (b.target_label < 0 || b.target_label >= data::kClasses) throw UsageError("attack.target out of range");
    if (b.poison_fraction < 0.0 || b.poison_fraction > 1.0) throw UsageError("attack.poison_fraction must be in [0, 1]");
  }
  if (attack.kind == attacks::AttackKind::kLabelFlip) {
    if (attack.flip_a == attack.flip_b) throw UsageError("attack.flip_a and attack.flip_b must differ");
    for (int l : {attack.flip_a, attack.flip_b})
      if (l < 0 || l >= data::kClasses) throw UsageError("label flip class out of range");
  }
}

SimData partition_pool(const SimConfig& config, const data::Dataset& pool, const data::Dataset& eval,
                       std::uint64_t seed) {
  for (int draw = 0; draw < kMaxPartitionDraws; ++draw) {
    auto shards = data::dirichlet_partition(pool, config.n_clients, config.alpha, config.batch,
                                            derive_seed({seed, static_cast<std::uint64_t>(draw)}));
    if (shards.size() == static_cast<std::size_t>(config.n_clients)) return {std::move(shards), eval};
  }
  throw UsageError("could not draw a partition giving every client at least one batch");
}

SimData prepare_data(const SimConfig& config) {
  data::Dataset all;
  if (!config.data.csv_path.empty()) {
    all = data::load_digits_csv(config.data.csv_path);
  } else {
    all = data::make_surrogate_digits({config.data.samples, config.data.noise, config.seeds.data});
  }
  auto split = data::split_train_test(all, config.data.test_fraction, derive_seed({config.seeds.data, 1}));
  return partition_pool(config, split.train, split.test, derive_seed({config.seeds.data, 2}));
}

Schema task_schema(std::size_t hidden) {
  return {{"fc1.weight", hidden * data::kPixels},
          {"fc1.bias", hidden},
          {"fc2.weight", data::kClasses * hidden},
          {"fc2.bias", static_cast<std::size_t>(data::kClasses)}};
}

nn::Mlp init_task_model(std::size_t hidden, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::vector<std::size_t> dims{data::kPixels, hidden, data::kClasses};
  return nn::Mlp::random(dims, rng);
}

LayeredVector model_to_vector(const nn::Mlp& m) {
  const std::size_t hidden = m.layers().front().weight.rows();
  return LayeredVector::unflatten(task_schema(hidden), m.flatten());
}

void vector_to_model(const LayeredVector& v, nn::Mlp& m) {
  const std::size_t hidden = m.layers().front().weight.rows();
  if (v.schema() != task_schema(hidden)) throw StructuralError("vector does not match the task model schema");
  const auto flat = v.flatten();
  m.assign(flat);
}

void train_local(nn::Mlp& model, const std::vector<data::Sample>& samples, int batch, int epochs, double lr,
                 std::uint64_t seed, bool shuffle) {
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::vector<data::Sample> view(samples.size());
  std::vector<int> labels;
  for (int e = 0; e < epochs; ++e) {
    if (shuffle) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k < order.size(); ++k) view[k] = samples[order[k]];
    for (std::size_t b = 0; b < view.size(); b += static_cast<std::size_t>(batch)) {
      const std::size_t end = std::min(view.size(), b + static_cast<std::size_t>(batch));
      const Eigen::MatrixXd x = to_columns(view, b, end);
      labels.clear();
      for (std::size_t k = b; k < end; ++k) labels.push_back(view[k].label);
      nn::Mlp::Tape tape;
      const Eigen::MatrixXd logits = model.forward_batch(x, tape);
      const nn::LossResult loss = nn::softmax_cross_entropy(logits, labels);
      nn::MlpGrads grads = model.zero_grads();
      model.backward(tape, loss.grad, grads);
      nn::sgd_step(model, grads, lr);
    }
  }
}

double eval_accuracy(const nn::Mlp& model, const data::Dataset& test) {
  if (test.samples.empty()) return 0.0;
  const auto pred = nn::argmax_columns(model.forward_batch(to_columns(test.samples, 0, test.size())));
  std::size_t correct = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) correct += pred[k] == test.samples[k].label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

double eval_asr(const nn::Mlp& model, const data::Dataset& test, const attacks::BackdoorParams& params) {
  std::vector<data::Sample> stamped;
  for (const auto& s : test.samples) {
    if (s.label == params.target_label) continue;
    data::Sample t = s;
    t.pixels = attacks::apply_backdoor_pattern(s.pixels, params.shift_y, params.shift_x, params.gap);
    stamped.push_back(t);
  }
  if (stamped.empty()) return 0.0;
  const auto pred = nn::argmax_columns(model.forward_batch(to_columns(stamped, 0, stamped.size())));
  std::size_t hit = 0;
  for (int p : pred) hit += p == params.target_label ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

std::unique_ptr<Aggregator> make_aggregator(const AggregatorSpec& spec) {
  if (spec.kind == "fedavg") return baselines::make_fedavg();
  if (spec.kind == "coord_median") return baselines::make_coord_median();
  if (spec.kind == "geo_median") return baselines::make_geo_median();
  if (spec.kind == "multi_krum") return baselines::make_multi_krum(spec.krum_m);
  if (spec.kind == "foolsgold") return baselines::make_foolsgold(spec.kappa);
  if (spec.kind == "residual") return baselines::make_residual({spec.lambda, spec.delta});
  if (spec.kind == "robust_mean") return baselines::make_robust_mean();
  if (spec.kind == "adaptive") {
    if (spec.model_path.empty()) throw UsageError("agg.model is required for the adaptive aggregator");
    AttentionModel m = load_model_file(spec.model_path);
    if (spec.c) m.c = *spec.c;
    if (spec.eps) m.eps = *spec.eps;
    return make_adaptive(std::move(m), spec.passes);
  }
  throw UsageError("unknown aggregator '" + spec.kind + "'");
}

SimResult run(const SimConfig& config, const SimData& data, Aggregator& aggregator, const RoundObserver& observer) {
  config.validate();
  const std::size_t n = data.shards.size();
  if (n < 2) throw UsageError("simulation needs at least 2 client shards");
  const auto shards = attacked_shards(config, data.shards);
  const bool backdoor = config.attack.kind == attacks::AttackKind::kBackdoor;

  SimResult result;
  nn::Mlp global = init_task_model(config.hidden, config.seeds.init);
  result.initial_acc = eval_accuracy(global, data.eval);
  aggregator.reset();

  std::vector<bool> labels(n);
  std::vector<int> ids(n);
  bool any_benign = false;
  for (std::size_t i = 0; i < n; ++i) {
    ids[i] = shards[i].client_id;
    labels[i] = !config.attack.is_attacker(ids[i]) || config.attack.kind == attacks::AttackKind::kNone;
    any_benign = any_benign || labels[i];
  }

  for (int r = 1; r <= config.rounds; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const LayeredVector global_vec = model_to_vector(global);
    std::vector<LayeredVector> updates(n);
    auto work = [&](std::size_t i) {
      nn::Mlp local = global;
      const std::uint64_t seed = derive_seed(
          {config.seeds.attack, static_cast<std::uint64_t>(ids[i]), static_cast<std::uint64_t>(r)});
      train_local(local, shards[i].samples, config.batch, config.local_epochs, config.lr, seed,
                  config.shuffle_local);
      LayeredVector u = axpy(-1.0, global_vec, model_to_vector(local));
      if (config.attack.kind == attacks::AttackKind::kOmniscient && config.attack.is_attacker(ids[i])) {
        u = attacks::apply_omniscient(u);
      }
      updates[i] = std::move(u);
    };
    const auto threads = static_cast<std::size_t>(std::max(1, config.threads));
    if (threads == 1) {
      for (std::size_t i = 0; i < n; ++i) work(i);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
          for (std::size_t i = t; i < n; i += threads) work(i);
        });
      }
      for (auto& th : pool) th.join();
    }

    RoundBatch batch;
    batch.updates = std::move(updates);
    batch.client_ids = ids;
    if (any_benign) batch.truth_labels = labels;
    batch.validate();

    AggregateOutput agg = aggregator.aggregate(batch);
    if (!agg.aggregate.all_finite()) {
      throw SimulationAborted(r, "round " + std::to_string(r) + ": aggregate is not finite");
    }
    const LayeredVector next = axpy(1.0, agg.aggregate, global_vec);
    vector_to_model(next, global);
    if (!global.all_finite()) {
      throw SimulationAborted(r, "round " + std::to_string(r) + ": global model is not finite");
    }
    if (observer) observer(r, batch, agg);

    RoundMetrics m;
    m.round = r;
    m.acc = eval_accuracy(global, data.eval);
    if (backdoor) m.asr = eval_asr(global, data.eval, config.attack.backdoor);
    m.weights = std::move(agg.weights);
    m.flagged = agg.flagged;
    m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.metrics.push_back(std::move(m));
  }
  result.final_model = std::move(global);
  return result;
}

SimResult run(const SimConfig& config) {
  config.validate();
  const SimData data = prepare_data(config);
  auto agg = make_aggregator(config.aggregator);
  return run(config, data, *agg);
}

void write_metrics_csv(std::ostream& out, const std::vector<RoundMetrics>& metrics, const std::string& aggregator,
                       int n_attackers, int n_clients, const std::string& run_id) {
  auto fmt = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << "round,acc,asr,aggregator,n_attackers";
  for (int i = 0; i < n_clients; ++i) out << ",w" << i;
  out << ",run_id\n";
  for (const auto& m : metrics) {
    out << m.round << ',' << fmt(m.acc) << ',' << (m.asr ? fmt(*m.asr) : std::string()) << ',' << aggregator << ','
        << n_attackers;
    for (int i = 0; i < n_clients; ++i) {
      out << ',';
      if (static_cast<std::size_t>(i) < m.weights.size()) out << fmt(m.weights[static_cast<std::size_t>(i)]);
    }
    out << ',' << run_id << '\n';
  }
}

}  // namespace adagg::sim
