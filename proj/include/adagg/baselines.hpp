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

// Comparison aggregators. Each maps a RoundBatch to one LayeredVector;
// those that reweight clients also report the weights they used.

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "adagg/param_space.hpp"

namespace adagg {

struct AggregateOutput {
  LayeredVector aggregate;
  /// Per-client weights in batch order; empty for aggregators without them.
  std::vector<double> weights;
  /// Set when the aggregator hit a fallback path (non-converged Weiszfeld,
  /// uniform FoolsGold fallback, all-truncated adaptive pass).
  bool flagged = false;
};

/// Server-side aggregation rule. Stateless rules ignore reset().
class Aggregator {
 public:
  virtual ~Aggregator() = default;
  [[nodiscard]] virtual std::string name() const = 0;
  virtual AggregateOutput aggregate(const RoundBatch& batch) = 0;
  virtual void reset() {}
};

/// n x D matrix of flattened updates, one row per client.
Eigen::MatrixXd stack_updates(const RoundBatch& batch);
LayeredVector from_row(const Schema& schema, const Eigen::Ref<const Eigen::RowVectorXd>& row);

/// Median of the values (mean of the two middle ones for even sizes).
double median_of(std::vector<double> values);

namespace baselines {

LayeredVector fedavg(const RoundBatch& batch);

/// Sample-count-weighted mean; counts must be positive.
LayeredVector fedavg_weighted(const RoundBatch& batch, const std::vector<double>& sample_counts);

LayeredVector coord_median(const RoundBatch& batch);
/// Row-wise matrix version: coordinate-wise median over the rows of `x`.
Eigen::RowVectorXd coord_median_rows(const Eigen::MatrixXd& x);

struct GeoMedianOptions {
  double tol = 1e-8;
  int max_iter = 1000;
  double nu = 1e-10;
};

struct GeoMedianResult {
  LayeredVector point;
  bool converged = false;
  int iterations = 0;
};

/// Smoothed Weiszfeld started at the mean; returns the iterate with the
/// lowest objective seen.
GeoMedianResult geo_median(const RoundBatch& batch, const GeoMedianOptions& options = {});

struct KrumResult {
  LayeredVector aggregate;
  std::vector<double> scores;
  std::vector<std::size_t> selected;  // batch positions, ascending score
};

/// Default m for n clients: floor(n/2) - 2, at least 1.
int default_krum_m(std::size_t n);

KrumResult multi_krum(const RoundBatch& batch, int m);

/// Cumulative per-client update sums, keyed by client id.
class FoolsGoldHistory {
 public:
  void add(int client_id, const std::vector<double>& update);
  [[nodiscard]] const std::vector<double>* find(int client_id) const;
  void clear() { sums_.clear(); }

 private:
  std::map<int, std::vector<double>> sums_;
};

struct WeightedOutput {
  LayeredVector aggregate;
  std::vector<double> weights;
  bool fallback = false;
};

/// FoolsGold weighting from the given history rows (one per client).
std::vector<double> foolsgold_weights(const Eigen::MatrixXd& history, double kappa, bool* fallback = nullptr);

/// Adds the round to `history`, then weights clients by FoolsGold on the
/// cumulative sums.
WeightedOutput foolsgold(const RoundBatch& batch, FoolsGoldHistory& history, double kappa);

struct ResidualOptions {
  double lambda = 2.0;
  double delta = 0.1;
};

/// Per-client confidences before the delta cut (mean over coordinates).
std::vector<double> residual_confidence(const Eigen::MatrixXd& x, double lambda);

WeightedOutput residual_reweigh(const RoundBatch& batch, const ResidualOptions& options = {});

// Aggregator wrappers.
std::unique_ptr<Aggregator> make_fedavg();
std::unique_ptr<Aggregator> make_coord_median();
std::unique_ptr<Aggregator> make_geo_median(GeoMedianOptions options = {});
/// m <= 0 selects default_krum_m(n) per round.
std::unique_ptr<Aggregator> make_multi_krum(int m);
std::unique_ptr<Aggregator> make_foolsgold(double kappa);
std::unique_ptr<Aggregator> make_residual(ResidualOptions options);
/// Oracle robust mean; needs truth labels on every batch.
std::unique_ptr<Aggregator> make_robust_mean();

}  // namespace baselines
}  // namespace adagg
