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

// Layer-wise PCA of a round of updates. Each layer's stacked n x d block is
// decomposed on its own, and the per-layer coefficients are concatenated into
// one fixed-width feature row per client.

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "adagg/param_space.hpp"

namespace adagg {

struct ProjectionOptions {
  /// Subtract the per-layer client mean before the SVD. Off by default:
  /// update vectors are treated as already centred.
  bool center = false;
};

struct ProjectionBasis {
  Schema schema;
  std::size_t k_pc = 0;
  /// One k_pc x d_layer matrix per layer with orthonormal (or zero) rows.
  std::vector<Eigen::MatrixXd> components;
  /// Per-layer centres; all zero unless ProjectionOptions::center was set.
  std::vector<Eigen::VectorXd> centers;

  [[nodiscard]] std::size_t feature_width() const { return k_pc * schema.size(); }
};

struct ProjectedBatch {
  /// n x (k_pc * L), client rows in batch order, layer blocks in schema order.
  Eigen::MatrixXd features;
  ProjectionBasis basis;
  std::size_t k_pc = 0;
};

/// Throws UsageError unless 1 <= k_pc <= n.
ProjectedBatch project(const RoundBatch& batch, std::size_t k_pc, const ProjectionOptions& options = {});

/// Coefficients of an arbitrary vector over the same schema in `basis`.
Eigen::VectorXd project_query(const LayeredVector& q, const ProjectionBasis& basis);

/// Maps a feature row back to parameter space (exact when no component was
/// dropped).
LayeredVector reconstruct(const Eigen::Ref<const Eigen::VectorXd>& features, const ProjectionBasis& basis);

}  // namespace adagg
