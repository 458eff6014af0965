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

// Attention-based robust aggregation: a query encoder embeds the current
// estimate, a key encoder embeds each projected update, and a truncated
// temperature softmax over their cosine alignments reweights the clients.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "adagg/baselines.hpp"
#include "adagg/nn.hpp"
#include "adagg/param_space.hpp"
#include "adagg/projection.hpp"

namespace adagg {

/// Per-instance rescaling of the projected feature matrix before the
/// encoders see it. Weights, not features, reach the original updates, so
/// this only changes what the encoders are invariant to.
enum class FeatureScaling : std::uint8_t {
  kNone = 0,
  kZScore = 1,   // per-column standardisation across clients
  kMaxNorm = 2,  // divide by the largest client row norm
};

const char* to_string(FeatureScaling s);
FeatureScaling feature_scaling_from_string(const std::string& name);

/// In-place; a zero matrix (or zero-variance column) is left untouched.
void scale_features(Eigen::MatrixXd& feats, FeatureScaling scaling);

struct AttentionModel {
  nn::Mlp query;
  nn::Mlp key;
  double c = 10.0;
  double eps = 0.5;
  int passes = 5;
  std::size_t k_pc = 10;
  FeatureScaling scaling = FeatureScaling::kNone;

  /// Q and K as F -> hidden -> latent with ReLU on the hidden layer.
  static AttentionModel random(std::size_t feature_width, std::size_t hidden, std::size_t latent, std::mt19937_64& rng);

  [[nodiscard]] std::size_t feature_width() const { return key.input_dim(); }
  /// Throws UsageError/StructuralError when an invariant does not hold.
  void validate() const;
};

/// cos(Q(q), K(x_i)) for every row of `feats`; 0 when either embedding is zero.
Eigen::VectorXd alignment_scores(const AttentionModel& model, const Eigen::VectorXd& q_feat, const Eigen::MatrixXd& feats);

struct Reweighting {
  std::vector<double> weights;
  bool fallback = false;  // every weight fell below eps/n
};

/// Scaled softmax followed by the eps/n cut.
Reweighting reweight_from_scores(std::span<const double> scores, double c, double eps);

struct FeatureRun {
  std::vector<double> weights;  // final pass
  std::vector<double> scores;   // final pass
  std::vector<std::vector<double>> pass_weights;
  Eigen::VectorXd q0;
  Eigen::VectorXd q_final;  // in (scaled) feature space
  bool fallback = false;
};

/// The reweighting iteration on an already projected (and scaled) n x F
/// feature matrix, starting from its coordinate-wise median.
FeatureRun run_on_features(const AttentionModel& model, const Eigen::MatrixXd& feats, int passes);

struct AggregationResult {
  LayeredVector q_T;  // final weights applied to the original updates
  std::vector<double> weights;
  std::vector<double> scores;
  std::vector<std::vector<double>> pass_trace;
  bool fallback = false;
};

/// Projects with model.k_pc (capped at n), scales, iterates, reweights the
/// original updates. passes <= 0 uses model.passes.
AggregationResult aggregate_adaptive(const AttentionModel& model, const RoundBatch& batch, int passes = 0);

/// Projected and scaled feature matrix exactly as the aggregator sees it.
Eigen::MatrixXd prepare_features(const RoundBatch& batch, std::size_t k_pc, FeatureScaling scaling);

/// sum_h |W_key1(h, i)| for each input feature i.
std::vector<double> feature_importance(const AttentionModel& model);

/// Feature importance summed over each layer's k_pc slots.
std::vector<std::pair<std::string, double>> layer_importance(const AttentionModel& model, const Schema& schema);

// "ATTN" v1: f64 c, f64 eps, u32 passes, u32 k_pc, u8 scaling, then the
// query and key networks (layer dims, activation, row-major f64 weights,
// biases).
void save_model(std::ostream& out, const AttentionModel& model);
AttentionModel load_model(std::istream& in);
void save_model_file(const std::filesystem::path& path, const AttentionModel& model);
AttentionModel load_model_file(const std::filesystem::path& path);

/// Server aggregator wrapping a trained model.
std::unique_ptr<Aggregator> make_adaptive(AttentionModel model, int passes = 0);

}  // namespace adagg
