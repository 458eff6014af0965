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

#include "adagg/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "adagg/binary_io.hpp"
#include "adagg/error.hpp"

namespace adagg::nn {

void MlpGrads::set_zero() {
  for (auto& w : weight) w.setZero();
  for (auto& b : bias) b.setZero();
}

MlpGrads& MlpGrads::operator+=(const MlpGrads& other) {
  if (other.weight.size() != weight.size()) throw StructuralError("gradient layer count mismatch");
  for (std::size_t l = 0; l < weight.size(); ++l) {
    weight[l] += other.weight[l];
    bias[l] += other.bias[l];
  }
  return *this;
}

MlpGrads& MlpGrads::operator*=(double s) {
  for (auto& w : weight) w *= s;
  for (auto& b : bias) b *= s;
  return *this;
}

std::vector<double> MlpGrads::flatten() const {
  std::vector<double> out;
  for (std::size_t l = 0; l < weight.size(); ++l) {
    for (Eigen::Index r = 0; r < weight[l].rows(); ++r)
      for (Eigen::Index c = 0; c < weight[l].cols(); ++c) out.push_back(weight[l](r, c));
    for (Eigen::Index r = 0; r < bias[l].size(); ++r) out.push_back(bias[l](r));
  }
  return out;
}

Mlp::Mlp(std::vector<Dense> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw StructuralError("mlp needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].bias.size() != layers_[l].weight.rows()) {
      throw StructuralError("layer " + std::to_string(l) + ": bias length differs from output width");
    }
    if (l > 0 && layers_[l].weight.cols() != layers_[l - 1].weight.rows()) {
      throw StructuralError("layer " + std::to_string(l) + ": input width does not chain");
    }
  }
}

Mlp Mlp::random(std::span<const std::size_t> dims, std::mt19937_64& rng) {
  if (dims.size() < 2) throw UsageError("mlp needs at least input and output dims");
  std::vector<Dense> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(dims[l]);
    const auto out = static_cast<Eigen::Index>(dims[l + 1]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Dense d;
    d.weight.resize(out, in);
    d.bias.resize(out);
    // row-major fill order so the draw sequence is layout independent
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) d.weight(r, c) = u(rng);
    for (Eigen::Index r = 0; r < out; ++r) d.bias(r) = u(rng);
    d.activation = (l + 2 < dims.size()) ? Activation::kRelu : Activation::kNone;
    layers.push_back(std::move(d));
  }
  return Mlp(std::move(layers));
}

std::size_t Mlp::input_dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.cols()); }
std::size_t Mlp::output_dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weight.rows()); }

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

bool Mlp::all_finite() const {
  for (const auto& l : layers_) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

MlpGrads Mlp::zero_grads() const {
  MlpGrads g;
  for (const auto& l : layers_) {
    g.weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
  }
  return g;
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != input_dim()) {
    throw StructuralError("mlp forward: input length " + std::to_string(x.size()) + ", expected " +
                          std::to_string(input_dim()));
  }
  Eigen::VectorXd h = x;
  for (const auto& l : layers_) {
    Eigen::VectorXd z = l.weight * h + l.bias;
    if (l.activation == Activation::kRelu) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  return h;
}

Eigen::MatrixXd Mlp::forward_batch(const Eigen::MatrixXd& x) const {
  if (static_cast<std::size_t>(x.rows()) != input_dim()) throw StructuralError("mlp forward: input rows mismatch");
  Eigen::MatrixXd h = x;
  for (const auto& l : layers_) {
    Eigen::MatrixXd z = l.weight * h;
    z.colwise() += l.bias;
    if (l.activation == Activation::kRelu) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  return h;
}

Eigen::MatrixXd Mlp::forward_batch(const Eigen::MatrixXd& x, Tape& tape) const {
  if (static_cast<std::size_t>(x.rows()) != input_dim()) throw StructuralError("mlp forward: input rows mismatch");
  tape.inputs.clear();
  tape.pre.clear();
  Eigen::MatrixXd h = x;
  for (const auto& l : layers_) {
    tape.inputs.push_back(h);
    Eigen::MatrixXd z = l.weight * h;
    z.colwise() += l.bias;
    tape.pre.push_back(z);
    if (l.activation == Activation::kRelu) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  return h;
}

Eigen::MatrixXd Mlp::backward(const Tape& tape, const Eigen::MatrixXd& upstream, MlpGrads& grads) const {
  if (tape.inputs.size() != layers_.size()) throw StructuralError("mlp backward: tape does not match network");
  if (grads.weight.size() != layers_.size()) throw StructuralError("mlp backward: gradient buffer mismatch");
  if (static_cast<std::size_t>(upstream.rows()) != output_dim() || upstream.cols() != tape.inputs.front().cols()) {
    throw StructuralError("mlp backward: upstream shape mismatch");
  }
  Eigen::MatrixXd delta = upstream;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& l = layers_[k];
    if (l.activation == Activation::kRelu) {
      delta = (tape.pre[k].array() > 0.0).select(delta, 0.0);
    }
    grads.weight[k].noalias() += delta * tape.inputs[k].transpose();
    grads.bias[k] += delta.rowwise().sum();
    delta = l.weight.transpose() * delta;
  }
  return delta;
}

std::vector<double> Mlp::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) out.push_back(l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) out.push_back(l.bias(r));
  }
  return out;
}

void Mlp::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw StructuralError("mlp assign: parameter count mismatch");
  std::size_t k = 0;
  for (auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = flat[k++];
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = flat[k++];
  }
}

BackwardResult backward(const Mlp& m, const Eigen::VectorXd& x, const Eigen::VectorXd& upstream) {
  Mlp::Tape tape;
  Eigen::MatrixXd xin = x;
  const Eigen::MatrixXd out = m.forward_batch(xin, tape);
  if (upstream.size() != out.rows()) throw StructuralError("backward: upstream length mismatch");
  BackwardResult res{m.zero_grads(), {}};
  res.input_grad = m.backward(tape, upstream, res.grads).col(0);
  return res;
}

Adam::Adam(const Mlp& shape, AdamConfig config) : config_(config), m_(shape.zero_grads()), v_(shape.zero_grads()) {}

void Adam::step(Mlp& params, const MlpGrads& grads) {
  auto& layers = params.layers();
  if (grads.weight.size() != layers.size() || m_.weight.size() != layers.size()) {
    throw StructuralError("adam: parameter/gradient shape mismatch");
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(config_.beta1, t);
  const double bc2 = 1.0 - std::pow(config_.beta2, t);
  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    if (p.rows() != g.rows() || p.cols() != g.cols()) throw StructuralError("adam: gradient shape mismatch");
    m = config_.beta1 * m + (1.0 - config_.beta1) * g;
    v = config_.beta2 * v + (1.0 - config_.beta2) * g.cwiseProduct(g);
    p.array() -= config_.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + config_.eps);
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weight, grads.weight[l], m_.weight[l], v_.weight[l]);
    update(layers[l].bias, grads.bias[l], m_.bias[l], v_.bias[l]);
  }
}

void sgd_step(Mlp& params, const MlpGrads& grads, double lr) {
  auto& layers = params.layers();
  if (grads.weight.size() != layers.size()) throw StructuralError("sgd: parameter/gradient shape mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].weight -= lr * grads.weight[l];
    layers[l].bias -= lr * grads.bias[l];
  }
}

std::vector<double> scaled_softmax(std::span<const double> scores, double c) {
  std::vector<double> w(scores.size());
  if (scores.empty()) return w;
  double top = -std::numeric_limits<double>::infinity();
  for (double s : scores) top = std::max(top, c * s);
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    w[i] = std::exp(c * scores[i] - top);
    z += w[i];
  }
  for (double& x : w) x /= z;
  return w;
}

LossResult l1_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw StructuralError("l1_loss: shape mismatch");
  const double n = static_cast<double>(pred.size());
  const Eigen::ArrayXXd diff = (pred - target).array();
  LossResult r;
  r.value = diff.abs().sum() / n;
  r.grad = diff.sign().matrix() / n;
  return r;
}

LossResult softmax_cross_entropy(const Eigen::MatrixXd& logits, std::span<const int> labels) {
  if (static_cast<std::size_t>(logits.cols()) != labels.size()) {
    throw StructuralError("cross entropy: label count differs from batch size");
  }
  const double b = static_cast<double>(labels.size());
  LossResult r;
  r.grad.resize(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double top = logits.col(j).maxCoeff();
    Eigen::VectorXd p = (logits.col(j).array() - top).exp().matrix();
    const double z = p.sum();
    p /= z;
    const auto y = labels[static_cast<std::size_t>(j)];
    if (y < 0 || y >= logits.rows()) throw UsageError("cross entropy: label out of range");
    r.value += -(logits(y, j) - top - std::log(z));
    p(y) -= 1.0;
    r.grad.col(j) = p / b;
  }
  r.value /= b;
  return r;
}

std::vector<int> argmax_columns(const Eigen::MatrixXd& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    Eigen::Index arg = 0;
    logits.col(j).maxCoeff(&arg);
    out[static_cast<std::size_t>(j)] = static_cast<int>(arg);
  }
  return out;
}

void write_mlp(io::Writer& w, const Mlp& m) {
  w.u32(static_cast<std::uint32_t>(m.layers().size()));
  for (const auto& l : m.layers()) {
    w.u32(static_cast<std::uint32_t>(l.weight.rows()));
    w.u32(static_cast<std::uint32_t>(l.weight.cols()));
    w.u8(static_cast<std::uint8_t>(l.activation));
  }
  for (const auto& l : m.layers()) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.f64(l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) w.f64(l.bias(r));
  }
}

Mlp read_mlp(io::Reader& r) {
  const auto count = r.u32();
  if (count == 0 || count > 64) throw FormatError("mlp layer count out of range");
  std::vector<Dense> layers(count);
  for (auto& l : layers) {
    const auto rows = r.u32();
    const auto cols = r.u32();
    const auto act = r.u8();
    if (act > 1) throw FormatError("unknown activation tag");
    l.weight.resize(rows, cols);
    l.bias.resize(rows);
    l.activation = static_cast<Activation>(act);
  }
  for (auto& l : layers) {
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) l.weight(i, j) = r.f64();
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = r.f64();
  }
  return Mlp(std::move(layers));
}

}  // namespace adagg::nn
