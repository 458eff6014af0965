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

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "adagg/binary_io.hpp"
#include "adagg/error.hpp"
#include "adagg/nn.hpp"

namespace adagg::nn {
namespace {

// Central differences on a scalar function of the flat parameter vector.
template <typename F>
std::vector<double> numeric_grad(Mlp m, F&& f) {
  auto flat = m.flatten();
  std::vector<double> g(flat.size());
  const double h = 1e-6;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double keep = flat[i];
    flat[i] = keep + h;
    m.assign(flat);
    const double up = f(m);
    flat[i] = keep - h;
    m.assign(flat);
    const double down = f(m);
    flat[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

TEST(Nn, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  const std::vector<std::size_t> dims = {5, 7, 3};
  const Mlp m = Mlp::random(dims, rng);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 4);
  Eigen::MatrixXd target = Eigen::MatrixXd::Random(3, 4);
  const auto loss = [&](const Mlp& net) { return l1_loss(net.forward_batch(x), target).value; };

  Mlp::Tape tape;
  const Eigen::MatrixXd y = m.forward_batch(x, tape);
  const auto l = l1_loss(y, target);
  MlpGrads g = m.zero_grads();
  const Eigen::MatrixXd dx = m.backward(tape, l.grad, g);
  const auto analytic = g.flatten();
  const auto numeric = numeric_grad(m, loss);
  ASSERT_EQ(analytic.size(), numeric.size());
  for (std::size_t i = 0; i < analytic.size(); ++i) EXPECT_NEAR(analytic[i], numeric[i], 1e-6) << i;

  // input gradient
  const double h = 1e-6;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double keep = x(r, c);
      x(r, c) = keep + h;
      const double up = loss(m);
      x(r, c) = keep - h;
      const double down = loss(m);
      x(r, c) = keep;
      EXPECT_NEAR(dx(r, c), (up - down) / (2 * h), 1e-6);
    }
  }
}

TEST(Nn, CrossEntropyGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  const std::vector<std::size_t> dims = {4, 6, 3};
  const Mlp m = Mlp::random(dims, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 5);
  const std::vector<int> labels = {0, 2, 1, 1, 0};
  const auto loss = [&](const Mlp& net) { return softmax_cross_entropy(net.forward_batch(x), labels).value; };
  Mlp::Tape tape;
  const auto l = softmax_cross_entropy(m.forward_batch(x, tape), labels);
  MlpGrads g = m.zero_grads();
  m.backward(tape, l.grad, g);
  const auto analytic = g.flatten();
  const auto numeric = numeric_grad(m, loss);
  for (std::size_t i = 0; i < analytic.size(); ++i) EXPECT_NEAR(analytic[i], numeric[i], 1e-7) << i;
}

TEST(Nn, AdamMatchesScalarRecurrence) {
  // one weight, no bias contribution: compare against the textbook update
  Dense d;
  d.weight = Eigen::MatrixXd::Constant(1, 1, 0.5);
  d.bias = Eigen::VectorXd::Zero(1);
  Mlp m({d});
  AdamConfig cfg;
  cfg.lr = 0.01;
  Adam opt(m, cfg);
  double w = 0.5, mom = 0.0, vel = 0.0;
  const std::vector<double> grads = {0.3, -1.2, 0.7, 0.05, -0.4};
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    MlpGrads g = m.zero_grads();
    g.weight[0](0, 0) = grads[t - 1];
    opt.step(m, g);
    mom = cfg.beta1 * mom + (1 - cfg.beta1) * grads[t - 1];
    vel = cfg.beta2 * vel + (1 - cfg.beta2) * grads[t - 1] * grads[t - 1];
    const double mh = mom / (1 - std::pow(cfg.beta1, static_cast<double>(t)));
    const double vh = vel / (1 - std::pow(cfg.beta2, static_cast<double>(t)));
    w -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    EXPECT_NEAR(m.layers()[0].weight(0, 0), w, 1e-14);
  }
  EXPECT_EQ(opt.steps(), grads.size());
}

TEST(Nn, ScaledSoftmaxProperties) {
  const std::vector<double> s = {0.1, -0.5, 0.9, 0.3};
  const auto u = scaled_softmax(s, 0.0);
  for (double v : u) EXPECT_DOUBLE_EQ(v, 0.25);
  const auto w = scaled_softmax(s, 10.0);
  double total = 0.0;
  for (double v : w) total += v;
  EXPECT_NEAR(total, 1.0, 1e-15);
  EXPECT_GT(w[2], w[3]);
  // direct formula
  double z = 0.0;
  for (double v : s) z += std::exp(10.0 * v);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(w[i], std::exp(10.0 * s[i]) / z, 1e-15);
  // huge scale stays finite
  const auto big = scaled_softmax(s, 1e6);
  EXPECT_DOUBLE_EQ(big[2], 1.0);
}

TEST(Nn, L1LossValue) {
  Eigen::MatrixXd p(2, 1), t(2, 1);
  p << 1.0, -2.0;
  t << 0.0, 0.0;
  const auto l = l1_loss(p, t);
  EXPECT_DOUBLE_EQ(l.value, 1.5);
  EXPECT_DOUBLE_EQ(l.grad(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(l.grad(1, 0), -0.5);
}

TEST(Nn, MismatchedLayersThrow) {
  Dense a{Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Zero(3), Activation::kRelu};
  Dense b{Eigen::MatrixXd::Zero(1, 4), Eigen::VectorXd::Zero(1), Activation::kNone};
  EXPECT_THROW(Mlp({a, b}), StructuralError);
}

TEST(Nn, SerializationRoundTrip) {
  std::mt19937_64 rng(4);
  const std::vector<std::size_t> dims = {3, 4, 2};
  const Mlp m = Mlp::random(dims, rng);
  std::stringstream ss;
  io::Writer w(ss);
  write_mlp(w, m);
  io::Reader r(ss);
  const Mlp back = read_mlp(r);
  EXPECT_EQ(back.flatten(), m.flatten());
  const Eigen::VectorXd x = Eigen::VectorXd::Random(3);
  EXPECT_EQ(back.forward(x), m.forward(x));
}

TEST(Nn, ArgmaxColumns) {
  Eigen::MatrixXd l(3, 2);
  l << 0, 5, 2, 1, 1, 1;
  EXPECT_EQ(argmax_columns(l), (std::vector<int>{1, 0}));
}

}  // namespace
}  // namespace adagg::nn
