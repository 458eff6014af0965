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

// Self-supervised training of the attention aggregator: collect rounds of
// projected updates with known attacker labels from server-side simulations,
// then fit the encoders so the iteration output matches the benign mean.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "adagg/adaptive.hpp"
#include "adagg/attacks.hpp"
#include "adagg/data.hpp"
#include "adagg/nn.hpp"
#include "adagg/simulator.hpp"

namespace adagg::defense {

struct UpdateInstance {
  Eigen::MatrixXd feats;     // n x F, unscaled projection coefficients
  std::vector<bool> labels;  // true = benign
  std::vector<double> raw_norms;
  int run = 0;
  int round = 0;
};

struct UpdateDatasetMeta {
  std::string task = "digits8x8";
  std::vector<std::string> attack_kinds;
  std::vector<std::uint64_t> seeds;
  std::size_t k_pc = 0;
  Schema schema;
  /// Runs whose instances are held out for validation.
  std::vector<int> validation_runs;
  std::size_t dropped = 0;
};

struct UpdateDataset {
  std::vector<UpdateInstance> instances;
  UpdateDatasetMeta meta;

  [[nodiscard]] std::size_t n() const { return instances.empty() ? 0 : instances.front().feats.rows(); }
  [[nodiscard]] std::size_t width() const { return instances.empty() ? 0 : instances.front().feats.cols(); }
  [[nodiscard]] bool is_validation(const UpdateInstance& inst) const;
  [[nodiscard]] UpdateDataset train_split() const;
  [[nodiscard]] UpdateDataset validation_split() const;
  /// Throws StructuralError/PreconditionError on inconsistent instances.
  void validate() const;
};

/// Concatenation; metadata must agree on k_pc and schema.
UpdateDataset merge(const std::vector<UpdateDataset>& parts);

struct CollectOptions {
  int runs = 3;
  /// Attack kinds simulated; each gets `runs` runs.
  std::vector<attacks::AttackKind> kinds{attacks::AttackKind::kBackdoor};
  int attackers_min = 1;
  int attackers_max = 4;
  std::size_t k_pc = 10;
  std::uint64_t seed = 11;
  /// Server aggregator used while collecting.
  std::string aggregator = "robust_mean";
};

/// Runs the simulations on the server's held-out split. Attacker count
/// cycles attackers_min..attackers_max over runs; identities are drawn per
/// run. Runs with index % 3 == 2 are validation runs.
UpdateDataset collect(const sim::SimConfig& base, const CollectOptions& options);

/// Synthetic outlier instances as a dataset of single-coordinate layers with
/// k_pc = 1, so every feature is one raw coordinate. Instance i is a
/// validation instance when i >= count - validation_count.
UpdateDataset synthetic_dataset(const std::vector<data::SyntheticInstance>& instances, std::size_t validation_count);

/// Mean of the benign rows.
Eigen::VectorXd benign_mean(const Eigen::MatrixXd& feats, const std::vector<bool>& labels);

struct InstanceLoss {
  double loss = 0.0;
  Eigen::VectorXd q_final;
  std::vector<double> weights;
};

/// Forward of the iteration on one scaled instance with L1 loss to `target`.
/// When grad_q / grad_k are given, accumulates the gradients (straight-through
/// across the eps/n cut, exact elsewhere).
InstanceLoss instance_loss(const AttentionModel& model, const Eigen::MatrixXd& feats, const Eigen::VectorXd& target,
                           int passes, nn::MlpGrads* grad_q, nn::MlpGrads* grad_k);

struct ValidationReport {
  double detection_accuracy = 0.0;
  double mean_l1 = 0.0;
  std::size_t instances = 0;
};

struct ValidateOptions {
  int passes = 0;  // <= 0: model.passes
  /// Shuffle client order inside every instance before scoring.
  bool shuffle_clients = false;
  std::uint64_t seed = 0;
};

/// A client is predicted attacker iff its final weight is 0.
ValidationReport validate(const AttentionModel& model, const UpdateDataset& dataset, const ValidateOptions& options = {});

struct TrainOptions {
  int epochs = 500;
  std::size_t hidden = 128;
  std::size_t latent = 64;
  double c = 10.0;
  double eps = 0.5;
  int passes = 5;
  double lr = 1e-3;
  int batch = 16;
  std::uint64_t seed = 7;
  FeatureScaling scaling = FeatureScaling::kNone;
  int validate_every = 1;
  std::function<void(int epoch, double train_loss, const ValidationReport&)> progress;
};

struct TrainResult {
  AttentionModel model;  // best checkpoint
  int best_epoch = 0;
  ValidationReport best;
  std::vector<double> epoch_loss;
  std::size_t skipped = 0;
};

/// epochs = 0 returns the random initialisation.
TrainResult train_defense(const UpdateDataset& train, const UpdateDataset& val, const TrainOptions& options);

// "UPDS" v1: u32 n, u32 F, u64 count, u64 schema digest, str meta json; per
// instance n*F f64 row-major, n u8 labels, n f64 norms, u32 run, u32 round.
void save_dataset(std::ostream& out, const UpdateDataset& ds);
UpdateDataset load_dataset(std::istream& in);
void save_dataset_file(const std::filesystem::path& path, const UpdateDataset& ds);
UpdateDataset load_dataset_file(const std::filesystem::path& path);

}  // namespace adagg::defense
