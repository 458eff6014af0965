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
#include "adagg/param_space.hpp"
#include "helpers.hpp"

namespace adagg {
namespace {

TEST(ParamSpace, FlattenUnflattenRoundTrip) {
  std::mt19937_64 rng(1);
  const Schema s = {{"a", 3}, {"b", 1}, {"c", 5}};
  const auto v = testing::random_vector(rng, s);
  EXPECT_EQ(v.total_dim(), 9u);
  EXPECT_EQ(v.schema(), s);
  EXPECT_EQ(LayeredVector::unflatten(s, v.flatten()), v);
}

TEST(ParamSpace, DuplicateNamesRejected) {
  EXPECT_THROW(LayeredVector({{"a", {1.0}}, {"a", {2.0}}}), StructuralError);
}

TEST(ParamSpace, EmptyVectorRejected) { EXPECT_THROW(LayeredVector(std::vector<LayeredVector::Block>{}), UsageError); }

TEST(ParamSpace, UnflattenLengthMismatch) {
  const std::vector<double> flat(4, 0.0);
  EXPECT_THROW(LayeredVector::unflatten({{"a", 3}}, flat), StructuralError);
}

TEST(ParamSpace, NormsMatchHandComputation) {
  const LayeredVector v({{"a", {3.0, -4.0}}, {"b", {1.0}}});
  EXPECT_DOUBLE_EQ(v.l1_norm(), 8.0);
  EXPECT_DOUBLE_EQ(v.l2_norm(), std::sqrt(26.0));
  EXPECT_TRUE(v.all_finite());
}

TEST(ParamSpace, AxpyAndWeightedSum) {
  const LayeredVector x({{"a", {1.0, 2.0}}});
  const LayeredVector y({{"a", {10.0, 20.0}}});
  EXPECT_EQ(axpy(2.0, x, y), LayeredVector({{"a", {12.0, 24.0}}}));
  const auto b = RoundBatch::from_updates({x, y});
  const std::vector<double> w = {0.5, 0.25};
  EXPECT_EQ(weighted_sum(b, w), LayeredVector({{"a", {3.0, 6.0}}}));
}

TEST(ParamSpace, AxpySchemaMismatchThrows) {
  const LayeredVector x({{"a", {1.0}}});
  const LayeredVector y({{"b", {1.0}}});
  EXPECT_THROW(axpy(1.0, x, y), StructuralError);
}

TEST(ParamSpace, RobustMeanUsesBenignOnly) {
  const auto b = RoundBatch::from_updates(
      {LayeredVector({{"a", {1.0}}}), LayeredVector({{"a", {100.0}}}), LayeredVector({{"a", {3.0}}})},
      std::vector<bool>{true, false, true});
  EXPECT_EQ(robust_mean(b), LayeredVector({{"a", {2.0}}}));
  const auto w = robust_weights(*b.truth_labels);
  EXPECT_DOUBLE_EQ(w[0], 0.5);
  EXPECT_DOUBLE_EQ(w[1], 0.0);
}

TEST(ParamSpace, RobustMeanWithoutBenignThrows) {
  const auto b = RoundBatch::from_updates({LayeredVector({{"a", {1.0}}})}, std::vector<bool>{false});
  EXPECT_THROW(robust_mean(b), PreconditionError);
}

TEST(ParamSpace, BatchValidateCatchesMixedSchemas) {
  RoundBatch b = RoundBatch::from_updates({LayeredVector({{"a", {1.0}}}), LayeredVector({{"a", {1.0}}})});
  b.updates[1] = LayeredVector({{"z", {1.0}}});
  EXPECT_THROW(b.validate(), StructuralError);
}

TEST(ParamSpace, CheckpointRoundTripIsBitExact) {
  std::mt19937_64 rng(3);
  const auto v = testing::random_vector(rng, {{"fc1.weight", 12}, {"fc1.bias", 3}});
  std::stringstream ss;
  save_layered(ss, v);
  EXPECT_EQ(load_layered(ss), v);
}

TEST(ParamSpace, TruncatedCheckpointIsFormatError) {
  std::mt19937_64 rng(3);
  const auto v = testing::random_vector(rng, {{"a", 8}});
  std::stringstream ss;
  save_layered(ss, v);
  std::string bytes = ss.str();
  bytes.resize(bytes.size() - 5);
  std::stringstream cut(bytes);
  EXPECT_THROW(load_layered(cut), FormatError);
}

TEST(ParamSpace, SchemaDigestDependsOnNamesAndLengths) {
  EXPECT_NE(schema_digest({{"a", 2}}), schema_digest({{"a", 3}}));
  EXPECT_NE(schema_digest({{"a", 2}}), schema_digest({{"b", 2}}));
  EXPECT_EQ(schema_digest({{"a", 2}}), schema_digest({{"a", 2}}));
}

}  // namespace
}  // namespace adagg
