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

// Desk-scale image data (8x8, 10 classes), Dirichlet client partitioning,
// and the synthetic outlier-set generator used to demonstrate the aggregator
// outside federated training.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace adagg::data {

inline constexpr int kSide = 8;
inline constexpr int kPixels = kSide * kSide;
inline constexpr int kClasses = 10;

struct Sample {
  std::array<double, kPixels> pixels{};  // row-major, values in [0, 1]
  int label = 0;
  std::uint32_t id = 0;  // index in the full generated/loaded corpus
};

struct Dataset {
  std::vector<Sample> samples;
  [[nodiscard]] std::size_t size() const { return samples.size(); }
  [[nodiscard]] std::array<std::size_t, kClasses> label_counts() const;
};

struct SurrogateOptions {
  std::size_t samples = 10000;
  /// Standard deviation of the additive pixel noise.
  double noise = 0.10;
  std::uint64_t seed = 1;
};

/// Procedural seven-segment digits: fixed per-class segment sets drawn in a
/// 5-wide glyph box with random stroke intensity, +-1 column jitter, a 0/1
/// row jitter and Gaussian pixel noise. Row 0 is never part of a glyph.
Dataset make_surrogate_digits(const SurrogateOptions& options);

/// CSV with 64 pixel columns followed by the label. Pixel values above 1 are
/// rescaled by the file maximum (so 0..16 digit corpora load directly).
Dataset load_digits_csv(const std::filesystem::path& path);

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

/// Seeded shuffle, then the first round(fraction * N) samples go to test.
TrainTestSplit split_train_test(const Dataset& all, double test_fraction, std::uint64_t seed);

struct ClientShard {
  int client_id = 0;
  std::vector<Sample> samples;
  [[nodiscard]] std::size_t sample_count() const { return samples.size(); }
};

/// Per-label Dirichlet(alpha) allocation into disjoint shards, each truncated
/// down to a multiple of `batch`. Clients left with no sample are omitted.
std::vector<ClientShard> dirichlet_partition(const Dataset& dataset, int n_clients, double alpha, int batch,
                                             std::uint64_t seed);

/// clients x classes table.
std::vector<std::array<std::size_t, kClasses>> shard_label_counts(const std::vector<ClientShard>& shards);

struct SyntheticOptions {
  int rows = 10;
  int cols = 30;
  int outliers_min = 3;
  int outliers_max = 3;
  /// Shift added to the first third of an outlier's coordinates, in units of
  /// the inlier standard deviation (which is 1).
  double offset = 3.0;
};

struct SyntheticInstance {
  Eigen::MatrixXd points;          // rows x cols
  std::vector<bool> outlier_mask;  // true = outlier
};

/// Inlier mean for a generator seed. The last third of the coordinates has
/// mean zero (pure noise).
Eigen::VectorXd synthetic_inlier_mean(std::uint64_t seed, const SyntheticOptions& options = {});

std::vector<SyntheticInstance> gen_synthetic_instances(std::size_t count, std::uint64_t seed,
                                                       const SyntheticOptions& options = {});

// Export containers (LE f64 like the parameter checkpoints).
// "SHRD" v1: u32 shard count; per shard u32 client id, u64 count, then per
// sample u32 id, u8 label, 64 f64 pixels.
void save_shards(std::ostream& out, const std::vector<ClientShard>& shards);
std::vector<ClientShard> load_shards(std::istream& in);

// "SYNI" v1: u64 count, u32 rows, u32 cols; per instance rows*cols f64
// row-major then rows u8 mask bytes.
void save_synthetic(std::ostream& out, const std::vector<SyntheticInstance>& instances);
std::vector<SyntheticInstance> load_synthetic(std::istream& in);

}  // namespace adagg::data
