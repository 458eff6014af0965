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

#pragma once

// Federated training loop: every round all clients start from the global
// model, train one local epoch, attackers apply their behaviour, the server
// aggregates the update vectors and evaluates the new global model.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "adagg/attacks.hpp"
#include "adagg/baselines.hpp"
#include "adagg/data.hpp"
#include "adagg/nn.hpp"
#include "adagg/param_space.hpp"

namespace adagg::sim {

struct DataSpec {
  std::size_t samples = 10000;
  double noise = 0.10;
  /// When set, samples come from this CSV instead of the surrogate generator.
  std::string csv_path;
  double test_fraction = 0.2;
};

struct AggregatorSpec {
  std::string kind = "fedavg";
  int krum_m = 0;  // <= 0: floor(n/2) - 2
  double kappa = 1.0;
  double lambda = 2.0;
  double delta = 0.1;
  std::string model_path;
  /// Overrides of the checkpoint's c / eps / passes (ablations).
  std::optional<double> c;
  std::optional<double> eps;
  int passes = 0;
};

struct Seeds {
  std::uint64_t data = 1;
  std::uint64_t init = 2;
  std::uint64_t attack = 3;
};

struct SimConfig {
  DataSpec data;
  std::size_t hidden = 32;
  int n_clients = 10;
  double alpha = 0.9;
  int batch = 16;
  int local_epochs = 1;
  int rounds = 30;
  double lr = 0.1;
  bool shuffle_local = true;
  int threads = 1;
  AggregatorSpec aggregator;
  attacks::AttackScenario attack;
  Seeds seeds;

  /// Throws UsageError describing the first invalid field.
  void validate() const;
};

struct RoundMetrics {
  int round = 0;  // 1-based
  double acc = 0.0;
  std::optional<double> asr;
  std::vector<double> weights;  // empty for weightless aggregators
  bool flagged = false;
  double wall_ms = 0.0;
};

struct SimData {
  std::vector<data::ClientShard> shards;  // clean shards, before attacks
  data::Dataset eval;                     // server-held evaluation split
};

/// Thrown when the global model stops being finite.
class SimulationAborted : public std::runtime_error {
 public:
  SimulationAborted(int round, const std::string& what) : std::runtime_error(what), round_(round) {}
  [[nodiscard]] int round() const { return round_; }

 private:
  int round_;
};

/// Client-visible training set and server evaluation split. The train split
/// is Dirichlet-partitioned; partitions leaving a client empty are redrawn.
SimData prepare_data(const SimConfig& config);

/// Same partitioning applied to an explicit pool (used when the server
/// simulates on its own held-out data).
SimData partition_pool(const SimConfig& config, const data::Dataset& pool, const data::Dataset& eval,
                       std::uint64_t seed);

/// Task model schema: fc1.weight, fc1.bias, fc2.weight, fc2.bias.
Schema task_schema(std::size_t hidden);
nn::Mlp init_task_model(std::size_t hidden, std::uint64_t seed);
LayeredVector model_to_vector(const nn::Mlp& m);
void vector_to_model(const LayeredVector& v, nn::Mlp& m);

/// One local pass of minibatch SGD over `samples`.
void train_local(nn::Mlp& model, const std::vector<data::Sample>& samples, int batch, int epochs, double lr,
                 std::uint64_t seed, bool shuffle);

double eval_accuracy(const nn::Mlp& model, const data::Dataset& test);

/// Fraction of non-target test samples classified as the target once the
/// pattern is stamped on them.
double eval_asr(const nn::Mlp& model, const data::Dataset& test, const attacks::BackdoorParams& params);

std::unique_ptr<Aggregator> make_aggregator(const AggregatorSpec& spec);

using RoundObserver = std::function<void(int round, const RoundBatch& batch, const AggregateOutput& out)>;

struct SimResult {
  std::vector<RoundMetrics> metrics;
  nn::Mlp final_model;
  double initial_acc = 0.0;
};

SimResult run(const SimConfig& config, const SimData& data, Aggregator& aggregator,
              const RoundObserver& observer = {});

/// prepare_data + make_aggregator + run.
SimResult run(const SimConfig& config);

/// "round,acc,asr,aggregator,n_attackers,w0..w{n-1},run_id" with one row per
/// round; fixed 17-digit float formatting so identical runs are byte-equal.
void write_metrics_csv(std::ostream& out, const std::vector<RoundMetrics>& metrics, const std::string& aggregator,
                       int n_attackers, int n_clients, const std::string& run_id);

}  // namespace adagg::sim
