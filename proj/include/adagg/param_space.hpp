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

// Layered parameter vectors: model weights, client updates and aggregates
// are all stored as an ordered list of named float blocks. Weight and bias
// of one layer are separate blocks.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace adagg {

/// (name, length) pairs in canonical model-definition order.
struct LayerSpec {
  std::string name;
  std::size_t length = 0;
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};
using Schema = std::vector<LayerSpec>;

std::size_t schema_dim(const Schema& schema);
std::uint64_t schema_digest(const Schema& schema);

class LayeredVector {
 public:
  struct Block {
    std::string name;
    std::vector<double> values;
  };

  LayeredVector() = default;
  /// Throws StructuralError on duplicate names, UsageError if total_dim == 0.
  explicit LayeredVector(std::vector<Block> blocks);

  static LayeredVector zeros(const Schema& schema);
  /// Splits `flat` along `schema`. Inverse of flatten().
  static LayeredVector unflatten(const Schema& schema, std::span<const double> flat);

  [[nodiscard]] std::size_t layer_count() const { return blocks_.size(); }
  [[nodiscard]] std::size_t total_dim() const { return total_dim_; }
  [[nodiscard]] const std::vector<Block>& blocks() const { return blocks_; }
  [[nodiscard]] const Block& block(std::size_t i) const { return blocks_.at(i); }
  [[nodiscard]] std::span<double> values(std::size_t i) { return blocks_.at(i).values; }
  [[nodiscard]] std::span<const double> values(std::size_t i) const { return blocks_.at(i).values; }
  [[nodiscard]] Schema schema() const;
  [[nodiscard]] bool same_schema(const LayeredVector& other) const;

  [[nodiscard]] std::vector<double> flatten() const;

  [[nodiscard]] double l1_norm() const;
  [[nodiscard]] double l2_norm() const;
  [[nodiscard]] bool all_finite() const;

  friend bool operator==(const LayeredVector& a, const LayeredVector& b);

 private:
  std::vector<Block> blocks_;
  std::size_t total_dim_ = 0;
};

/// One communication round worth of client updates.
struct RoundBatch {
  std::vector<LayeredVector> updates;
  std::vector<int> client_ids;
  /// true = benign. Absent when the server has no ground truth.
  std::optional<std::vector<bool>> truth_labels;

  [[nodiscard]] std::size_t size() const { return updates.size(); }
  [[nodiscard]] Schema schema() const;

  /// Checks the batch invariants; throws StructuralError/PreconditionError.
  void validate() const;

  /// Builds a batch with client ids 0..n-1.
  static RoundBatch from_updates(std::vector<LayeredVector> updates,
                                 std::optional<std::vector<bool>> labels = std::nullopt);
};

/// a*x + y.
LayeredVector axpy(double a, const LayeredVector& x, const LayeredVector& y);

/// Sum_i w_i x_i, no renormalisation.
LayeredVector weighted_sum(const RoundBatch& batch, std::span<const double> weights);

/// Mean of the updates whose truth label is benign.
LayeredVector robust_mean(const RoundBatch& batch);

/// Indicator-of-benign weights divided by the benign count.
std::vector<double> robust_weights(const std::vector<bool>& truth_labels);

// Checkpoint container: "LVEC", u32 version, u32 layer count,
// (str name, u64 length) per layer, then each block as LE f64.
void save_layered(std::ostream& out, const LayeredVector& v);
LayeredVector load_layered(std::istream& in);

}  // namespace adagg
