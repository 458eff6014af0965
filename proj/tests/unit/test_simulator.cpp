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

#include <sstream>

#include "adagg/error.hpp"
#include "adagg/simulator.hpp"

namespace adagg::sim {
namespace {

SimConfig small_config() {
  SimConfig c;
  c.data.samples = 3000;
  c.rounds = 4;
  return c;
}

TEST(Simulator, SchemaAndVectorRoundTrip) {
  const Schema s = task_schema(32);
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(schema_dim(s), 64u * 32 + 32 + 32 * 10 + 10);
  const nn::Mlp m = init_task_model(32, 5);
  const LayeredVector v = model_to_vector(m);
  EXPECT_EQ(v.schema(), s);
  nn::Mlp back = init_task_model(32, 6);
  vector_to_model(v, back);
  EXPECT_EQ(back.flatten(), m.flatten());
  EXPECT_THROW(vector_to_model(LayeredVector::zeros(task_schema(8)), back), StructuralError);
}

TEST(Simulator, RunsAreDeterministic) {
  const SimConfig c = small_config();
  const SimResult a = run(c);
  const SimResult b = run(c);
  ASSERT_EQ(a.metrics.size(), 4u);
  for (std::size_t i = 0; i < a.metrics.size(); ++i) EXPECT_EQ(a.metrics[i].acc, b.metrics[i].acc);
  EXPECT_EQ(a.final_model.flatten(), b.final_model.flatten());
}

TEST(Simulator, ThreadCountDoesNotChangeResults) {
  SimConfig c = small_config();
  c.attack.kind = attacks::AttackKind::kBackdoor;
  c.attack.attacker_ids = {0, 3};
  const SimResult a = run(c);
  c.threads = 3;
  const SimResult b = run(c);
  EXPECT_EQ(a.final_model.flatten(), b.final_model.flatten());
}

TEST(Simulator, FedAvgLearnsWithoutAttack) {
  SimConfig c = small_config();
  c.rounds = 8;
  const SimResult r = run(c);
  EXPECT_GT(r.metrics.back().acc, r.initial_acc + 0.3);
  EXPECT_FALSE(r.metrics.back().asr.has_value());
}

TEST(Simulator, OmniscientAttackersHurtFedAvg) {
  SimConfig c = small_config();
  c.rounds = 8;
  const double clean = run(c).metrics.back().acc;
  c.attack.kind = attacks::AttackKind::kOmniscient;
  c.attack.attacker_ids = {0, 1, 2, 3};
  EXPECT_LT(run(c).metrics.back().acc, clean - 0.2);
}

TEST(Simulator, AsrOfAConstantTargetPredictorIsOne) {
  // zero weights, bias picking class 2: every stamped sample lands on 2
  nn::Mlp m = init_task_model(8, 1);
  for (auto& l : m.layers()) {
    l.weight.setZero();
    l.bias.setZero();
  }
  m.layers().back().bias(2) = 1.0;
  const data::Dataset test = data::make_surrogate_digits({.samples = 200, .noise = 0.1, .seed = 3});
  EXPECT_DOUBLE_EQ(eval_asr(m, test, {}), 1.0);
  EXPECT_DOUBLE_EQ(eval_accuracy(m, test), 0.1);
  m.layers().back().bias(2) = 0.0;
  m.layers().back().bias(5) = 1.0;
  EXPECT_DOUBLE_EQ(eval_asr(m, test, {}), 0.0);
}

TEST(Simulator, InvalidConfigsAreRejected) {
  SimConfig c = small_config();
  c.alpha = 0.0;
  EXPECT_THROW(c.validate(), UsageError);
  c = small_config();
  c.n_clients = 1;
  EXPECT_THROW(c.validate(), UsageError);
  c = small_config();
  c.attack.kind = attacks::AttackKind::kBackdoor;
  EXPECT_THROW(c.validate(), UsageError);  // no attackers
  c.attack.attacker_ids = {10};
  EXPECT_THROW(c.validate(), UsageError);
  c = small_config();
  c.aggregator.kind = "trimmed_mean";
  EXPECT_THROW(make_aggregator(c.aggregator), UsageError);
  c.aggregator.kind = "adaptive";
  EXPECT_THROW(make_aggregator(c.aggregator), UsageError);
}

TEST(Simulator, DivergenceAborts) {
  SimConfig c = small_config();
  c.lr = 1e200;
  EXPECT_THROW(run(c), SimulationAborted);
}

TEST(Simulator, EveryBaselineRunsUnderAttack) {
  for (const char* kind : {"fedavg", "coord_median", "geo_median", "multi_krum", "foolsgold", "residual", "robust_mean"}) {
    SimConfig c = small_config();
    c.rounds = 2;
    c.aggregator.kind = kind;
    c.attack.kind = attacks::AttackKind::kLabelFlip;
    c.attack.attacker_ids = {1};
    const SimResult r = run(c);
    EXPECT_EQ(r.metrics.size(), 2u) << kind;
  }
}

TEST(Simulator, MetricsCsvHasOneRowPerRound) {
  const SimResult r = run(small_config());
  std::ostringstream out;
  write_metrics_csv(out, r.metrics, "fedavg", 0, 10, "abc");
  const std::string s = out.str();
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 5);
  EXPECT_EQ(s.find('\r'), std::string::npos);
  EXPECT_EQ(s.substr(0, 14), "round,acc,asr,");
}

}  // namespace
}  // namespace adagg::sim
