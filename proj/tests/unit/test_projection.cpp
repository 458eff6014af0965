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

#include "adagg/error.hpp"
#include "adagg/projection.hpp"
#include "helpers.hpp"

namespace adagg {
namespace {

TEST(Projection, ComponentRowsAreOrthonormalOrZero) {
  std::mt19937_64 rng(5);
  const auto b = testing::random_batch(rng, 10, {{"w", 40}, {"b", 7}});
  const auto p = project(b, 5);
  ASSERT_EQ(p.features.rows(), 10);
  ASSERT_EQ(p.features.cols(), 10);
  for (const auto& c : p.basis.components) {
    const Eigen::MatrixXd g = c * c.transpose();
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      for (Eigen::Index j = 0; j < g.cols(); ++j) {
        const double want = (i == j && g(i, i) > 0.5) ? 1.0 : 0.0;
        EXPECT_NEAR(g(i, j), want, 1e-10);
      }
    }
  }
}

TEST(Projection, FullRankReconstructionIsExact) {
  std::mt19937_64 rng(6);
  const auto b = testing::random_batch(rng, 6, {{"w", 20}, {"b", 9}});
  const auto p = project(b, 6);
  for (std::size_t i = 0; i < b.size(); ++i) {
    const auto r = reconstruct(p.features.row(static_cast<Eigen::Index>(i)).transpose(), p.basis);
    EXPECT_LT(testing::max_abs_diff(r, b.updates[i]), 1e-10);
  }
}

TEST(Projection, QueryOfClientUpdateEqualsItsFeatureRow) {
  std::mt19937_64 rng(7);
  const auto b = testing::random_batch(rng, 8, {{"w", 30}});
  const auto p = project(b, 4);
  for (std::size_t i = 0; i < b.size(); ++i) {
    const Eigen::VectorXd q = project_query(b.updates[i], p.basis);
    EXPECT_LT((q - p.features.row(static_cast<Eigen::Index>(i)).transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Projection, RowPermutationPermutesFeatures) {
  std::mt19937_64 rng(8);
  const auto b = testing::random_batch(rng, 7, {{"w", 25}, {"b", 5}});
  const std::vector<std::size_t> perm = {3, 0, 6, 1, 5, 2, 4};
  const auto p = project(b, 5);
  const auto pp = project(testing::permuted(b, perm), 5);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const auto row_a = pp.features.row(static_cast<Eigen::Index>(i));
    const auto row_b = p.features.row(static_cast<Eigen::Index>(perm[i]));
    EXPECT_LT((row_a - row_b).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Projection, LowRankLayerPadsWithZeros) {
  // all clients identical up to scale: rank one
  std::mt19937_64 rng(9);
  const auto base = testing::random_vector(rng, {{"w", 12}});
  std::vector<LayeredVector> ups;
  for (int i = 1; i <= 5; ++i) ups.push_back(axpy(static_cast<double>(i) - 1.0, base, base));
  const auto p = project(RoundBatch::from_updates(ups), 4);
  EXPECT_GT(p.features.col(0).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(p.features.rightCols(3).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Projection, KpcOutOfRangeThrows) {
  std::mt19937_64 rng(10);
  const auto b = testing::random_batch(rng, 4, {{"w", 10}});
  EXPECT_THROW(project(b, 5), UsageError);
  EXPECT_THROW(project(b, 0), UsageError);
}

TEST(Projection, CenteringSubtractsMean) {
  std::mt19937_64 rng(11);
  const auto b = testing::random_batch(rng, 6, {{"w", 10}});
  const auto p = project(b, 5, {.center = true});
  EXPECT_LT(p.features.colwise().sum().cwiseAbs().maxCoeff(), 1e-10);
}

}  // namespace
}  // namespace adagg
