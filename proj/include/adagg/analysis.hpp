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

// Post-hoc tooling: one-pass error bound harness for the truncated scaled
// softmax, the improvement condition on score accuracy, backdoor-pattern
// transfer sweeps and the ablation drivers (including a permutation-sensitive
// MLP weighting baseline).

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "adagg/adaptive.hpp"
#include "adagg/defense_train.hpp"
#include "adagg/nn.hpp"
#include "adagg/simulator.hpp"

namespace adagg::analysis {

struct BoundCase {
  int n = 0;
  int m = 0;  // attackers
  double c = 10.0;
  double eps = 0.5;
  double eps_prime = 0.0;
  double gamma = 0.0;  // recorded for reproducers, unused by the check
  double delta = 0.0;
  std::vector<double> scores;
  std::vector<bool> benign;
  Eigen::MatrixXd x;  // n x d

  /// Throws PreconditionError when a score is outside its eps' band.
  void validate() const;
};

struct BoundSampling {
  int n_min = 2;
  int n_max = 20;
  int d_min = 4;
  int d_max = 32;
  double eps = 0.5;
  double eps_prime_max = 0.1;
  double c_min = 1.0;
  double c_max = 10.0;
};

/// n uniform, m < n/2, eps' in (0, eps_prime_max), c uniform, scores uniform
/// inside their bands, vectors with i.i.d. N(0, 1) entries.
BoundCase sample_bound_case(std::mt19937_64& rng, const BoundSampling& sampling = {});

/// max(e^{c eps'} - 1, n / ((n - m) e^{c (2 - eps')} + m)).
double lemma_factor(int n, int m, double c, double eps_prime);
/// max((n - m) e^{c (2 - eps')} (e^{c eps'} - 1), n) / ((n - m) e^{c (2 - eps')} + m).
double lemma_factor_tight(int n, int m, double c, double eps_prime);

struct BoundResult {
  double lhs = 0.0;
  double rhs = 0.0;
  double rhs_tight = 0.0;
  double max_surviving_l1 = 0.0;
  bool holds = false;
  bool holds_tight = false;
  /// A benign client fell under eps/n; the factor only covers survivors.
  bool benign_truncated = false;
  std::vector<double> weights;  // after truncation
};

BoundResult check_bound(const BoundCase& bc);

/// JSON reproducer for a failing case.
void write_bound_case(std::ostream& out, const BoundCase& bc, const BoundResult& result);

struct FuzzSummary {
  std::size_t cases = 0;
  std::size_t violations = 0;
  std::size_t violations_tight = 0;
  std::size_t benign_truncations = 0;
  double worst_ratio = 0.0;  // max lhs / rhs
  std::vector<BoundCase> failures;
};

FuzzSummary fuzz_bounds(std::size_t cases, std::uint64_t seed, const BoundSampling& sampling = {});

struct ImprovementBranches {
  double first = 0.0;   // (1/c) ln(gamma delta + 1)
  double second = 0.0;  // 2 - (1/c) ln((1/(gamma delta) - m/n) / (1 - m/n))
  double value = 0.0;   // min of the two
};

/// Largest eps' for which one pass shrinks the relative error by gamma.
/// Throws UsageError outside 0 < gamma < 1, delta > 0, c > 0, 0 <= m < n and
/// PreconditionError naming the branch whose log argument is not positive.
ImprovementBranches improvement_condition(double gamma, double delta, double c, int n, int m);

struct TransferPoint {
  int shift_y = 0;
  int shift_x = 0;
  int gap = 0;
  int attackers = 1;
};

struct TransferRow {
  TransferPoint point;
  bool skipped = false;
  std::string note;
  double acc = 0.0;
  double asr = 0.0;
  double control_acc = 0.0;  // FedAvg under the same attack and seeds
  double control_asr = 0.0;
};

/// Runs every grid point with the fixed defense and a FedAvg control.
/// Attackers are clients 0..attackers-1.
std::vector<TransferRow> sweep_transfer(const sim::SimConfig& base, const AttentionModel& model,
                                        const std::vector<TransferPoint>& grid);

void write_transfer_csv(std::ostream& out, const std::vector<TransferRow>& rows, const std::string& run_id);

struct AblationRow {
  std::string variant;
  double acc = 0.0;  // final round, mean over runs
  double asr = 0.0;
};

/// adaptive, no_eps (eps = 0), no_c (unscaled softmax, c = 1) and fedavg on the same attacked
/// runs; `runs` seeds are derived from base.seeds.
std::vector<AblationRow> ablation(const sim::SimConfig& base, const AttentionModel& model, int runs);

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows, const std::string& run_id);

/// Permutation-sensitive weighting network on the concatenated n x F
/// features: n*F -> hidden -> n logits, softmax, eps/n cut.
struct MlpBaseline {
  nn::Mlp net;
  double eps = 0.5;
  std::size_t n = 0;
  std::size_t width = 0;
  FeatureScaling scaling = FeatureScaling::kNone;
};

struct MlpBaselineOptions {
  int epochs = 50;
  std::size_t hidden = 128;
  double lr = 1e-3;
  int batch = 16;
  double eps = 0.5;
  std::uint64_t seed = 5;
  FeatureScaling scaling = FeatureScaling::kNone;
};

std::vector<double> mlp_baseline_weights(const MlpBaseline& model, const Eigen::MatrixXd& feats);

/// Same L1-to-benign-mean objective as the attention model.
MlpBaseline train_mlp_baseline(const defense::UpdateDataset& train, const MlpBaselineOptions& options);

defense::ValidationReport validate_mlp_baseline(const MlpBaseline& model, const defense::UpdateDataset& dataset,
                                                bool shuffle_clients, std::uint64_t seed);

}  // namespace adagg::analysis
