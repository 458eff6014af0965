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

#include "adagg/projection.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <limits>
#include <string>

#include "adagg/error.hpp"

namespace adagg {

namespace {

// Top-k right singular vectors of `stacked` (n x d) as rows of a k x d
// matrix; rows beyond the numerical rank stay zero.
Eigen::MatrixXd layer_components(const Eigen::MatrixXd& stacked, std::size_t k_pc) {
  const auto d = stacked.cols();
  Eigen::MatrixXd comps = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k_pc), d);
  if (stacked.size() == 0 || stacked.cwiseAbs().maxCoeff() == 0.0) return comps;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(stacked, Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const Eigen::MatrixXd& v = svd.matrixV();  // d x r
  const double tol = sv(0) * static_cast<double>(std::max(stacked.rows(), d)) *
                     std::numeric_limits<double>::epsilon();
  const auto usable = std::min<Eigen::Index>(static_cast<Eigen::Index>(k_pc), sv.size());
  for (Eigen::Index k = 0; k < usable; ++k) {
    if (sv(k) <= tol) break;
    Eigen::VectorXd col = v.col(k);
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index j = 0; j < col.size(); ++j) {
      // strict > keeps the first index among equal magnitudes
      if (std::abs(col(j)) > best) {
        best = std::abs(col(j));
        arg = j;
      }
    }
    if (col(arg) < 0.0) col = -col;
    comps.row(k) = col.transpose();
  }
  return comps;
}

}  // namespace

ProjectedBatch project(const RoundBatch& batch, std::size_t k_pc, const ProjectionOptions& options) {
  const std::size_t n = batch.size();
  if (n == 0) throw UsageError("project: empty batch");
  if (k_pc < 1 || k_pc > n) {
    throw UsageError("project: k_pc=" + std::to_string(k_pc) + " outside [1, " + std::to_string(n) + "]");
  }
  const Schema schema = batch.schema();
  for (const auto& u : batch.updates) {
    if (!u.same_schema(batch.updates.front())) throw StructuralError("project: schema mismatch in batch");
  }

  ProjectedBatch out;
  out.k_pc = k_pc;
  out.basis.schema = schema;
  out.basis.k_pc = k_pc;
  out.features = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k_pc * schema.size()));

  for (std::size_t l = 0; l < schema.size(); ++l) {
    const auto d = static_cast<Eigen::Index>(schema[l].length);
    Eigen::MatrixXd stacked(static_cast<Eigen::Index>(n), d);
    for (std::size_t i = 0; i < n; ++i) {
      const auto vals = batch.updates[i].values(l);
      stacked.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(vals.data(), d);
    }
    Eigen::VectorXd center = Eigen::VectorXd::Zero(d);
    if (options.center) {
      center = stacked.colwise().mean().transpose();
      stacked.rowwise() -= center.transpose();
    }
    Eigen::MatrixXd comps = layer_components(stacked, k_pc);
    out.features.block(0, static_cast<Eigen::Index>(l * k_pc), static_cast<Eigen::Index>(n),
                       static_cast<Eigen::Index>(k_pc)) = stacked * comps.transpose();
    out.basis.components.push_back(std::move(comps));
    out.basis.centers.push_back(std::move(center));
  }
  return out;
}

Eigen::VectorXd project_query(const LayeredVector& q, const ProjectionBasis& basis) {
  if (q.schema() != basis.schema) throw StructuralError("project_query: schema mismatch");
  Eigen::VectorXd f(static_cast<Eigen::Index>(basis.feature_width()));
  for (std::size_t l = 0; l < basis.schema.size(); ++l) {
    const auto vals = q.values(l);
    const Eigen::Map<const Eigen::VectorXd> x(vals.data(), static_cast<Eigen::Index>(vals.size()));
    f.segment(static_cast<Eigen::Index>(l * basis.k_pc), static_cast<Eigen::Index>(basis.k_pc)) =
        basis.components[l] * (x - basis.centers[l]);
  }
  return f;
}

LayeredVector reconstruct(const Eigen::Ref<const Eigen::VectorXd>& features, const ProjectionBasis& basis) {
  if (static_cast<std::size_t>(features.size()) != basis.feature_width()) {
    throw StructuralError("reconstruct: feature width mismatch");
  }
  std::vector<LayeredVector::Block> blocks;
  for (std::size_t l = 0; l < basis.schema.size(); ++l) {
    const Eigen::VectorXd coef =
        features.segment(static_cast<Eigen::Index>(l * basis.k_pc), static_cast<Eigen::Index>(basis.k_pc));
    const Eigen::VectorXd x = basis.components[l].transpose() * coef + basis.centers[l];
    blocks.push_back({basis.schema[l].name, std::vector<double>(x.data(), x.data() + x.size())});
  }
  return LayeredVector(std::move(blocks));
}

}  // namespace adagg
