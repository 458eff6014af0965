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

// Small dense-network kernel: affine layers with optional ReLU, analytic
// backprop, SGD and Adam. Used for the federated task model and for the
// query/key encoders of the attention aggregator.
//
// Batched calls take samples as COLUMNS (in_dim x batch).

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace adagg::io {
class Writer;
class Reader;
}  // namespace adagg::io

namespace adagg::nn {

enum class Activation : std::uint8_t { kNone = 0, kRelu = 1 };

struct Dense {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::kNone;
};

struct MlpGrads {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;

  void set_zero();
  MlpGrads& operator+=(const MlpGrads& other);
  MlpGrads& operator*=(double s);
  [[nodiscard]] std::vector<double> flatten() const;
};

class Mlp {
 public:
  /// Per-call activations kept for backward().
  struct Tape {
    std::vector<Eigen::MatrixXd> inputs;  // input of each layer
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
  };

  Mlp() = default;
  /// Throws StructuralError when consecutive dims do not chain.
  explicit Mlp(std::vector<Dense> layers);

  /// dims = {in, h1, ..., out}; ReLU on every hidden layer, none on the output.
  /// Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static Mlp random(std::span<const std::size_t> dims, std::mt19937_64& rng);

  [[nodiscard]] std::size_t input_dim() const;
  [[nodiscard]] std::size_t output_dim() const;
  [[nodiscard]] const std::vector<Dense>& layers() const { return layers_; }
  [[nodiscard]] std::vector<Dense>& layers() { return layers_; }
  [[nodiscard]] std::size_t parameter_count() const;
  [[nodiscard]] bool all_finite() const;
  [[nodiscard]] MlpGrads zero_grads() const;

  [[nodiscard]] Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  [[nodiscard]] Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x, Tape& tape) const;

  /// Accumulates parameter gradients into `grads` and returns dL/dx.
  Eigen::MatrixXd backward(const Tape& tape, const Eigen::MatrixXd& upstream, MlpGrads& grads) const;

  /// Flat parameter view, layer by layer (W row-major, then b).
  [[nodiscard]] std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

 private:
  std::vector<Dense> layers_;
};

struct BackwardResult {
  MlpGrads grads;
  Eigen::VectorXd input_grad;
};

/// Single-sample convenience wrapper around forward_batch/backward.
BackwardResult backward(const Mlp& m, const Eigen::VectorXd& x, const Eigen::VectorXd& upstream);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(const Mlp& shape, AdamConfig config);
  void step(Mlp& params, const MlpGrads& grads);
  [[nodiscard]] std::uint64_t steps() const { return step_; }
  [[nodiscard]] const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::uint64_t step_ = 0;
  MlpGrads m_;
  MlpGrads v_;
};

void sgd_step(Mlp& params, const MlpGrads& grads, double lr);

/// exp(c*s_i) / sum_j exp(c*s_j), max-shifted.
std::vector<double> scaled_softmax(std::span<const double> scores, double c);

struct LossResult {
  double value = 0.0;
  Eigen::MatrixXd grad;  // same shape as the prediction
};

/// Mean absolute error over all entries.
LossResult l1_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);

/// Mean over the batch of softmax cross-entropy; logits are classes x batch.
LossResult softmax_cross_entropy(const Eigen::MatrixXd& logits, std::span<const int> labels);

/// Column-wise argmax.
std::vector<int> argmax_columns(const Eigen::MatrixXd& logits);

void write_mlp(io::Writer& w, const Mlp& m);
Mlp read_mlp(io::Reader& r);

}  // namespace adagg::nn
