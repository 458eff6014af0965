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

#include "adagg/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "adagg/baselines.hpp"
#include "adagg/error.hpp"
#include "adagg/seed.hpp"
#include "json.hpp"

namespace adagg::analysis {

void BoundCase::validate() const {
  if (n < 2 || m < 0 || m >= n) throw PreconditionError("bound case needs 0 <= m < n, n >= 2");
  if (scores.size() != static_cast<std::size_t>(n) || benign.size() != static_cast<std::size_t>(n) ||
      x.rows() != n) {
    throw StructuralError("bound case arrays do not have n entries");
  }
  int attackers = 0;
  for (int i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double centre = benign[k] ? 1.0 : -1.0;
    attackers += benign[k] ? 0 : 1;
    if (!(std::abs(centre - scores[k]) <= eps_prime)) {
      throw PreconditionError("score " + std::to_string(i) + " is outside its eps' band");
    }
  }
  if (attackers != m) throw PreconditionError("bound case attacker count differs from m");
  if (!x.allFinite()) throw PreconditionError("bound case vectors are not finite");
}

BoundCase sample_bound_case(std::mt19937_64& rng, const BoundSampling& s) {
  std::uniform_int_distribution<int> n_dist(s.n_min, s.n_max);
  std::uniform_int_distribution<int> d_dist(s.d_min, s.d_max);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  BoundCase bc;
  bc.n = n_dist(rng);
  bc.m = std::uniform_int_distribution<int>(0, (bc.n - 1) / 2)(rng);  // m < n/2
  bc.c = s.c_min + (s.c_max - s.c_min) * unit(rng);
  bc.eps = s.eps;
  // open interval (0, eps_prime_max)
  do {
    bc.eps_prime = s.eps_prime_max * unit(rng);
  } while (bc.eps_prime == 0.0);
  const int d = d_dist(rng);
  std::vector<int> order(static_cast<std::size_t>(bc.n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  bc.benign.assign(static_cast<std::size_t>(bc.n), true);
  for (int k = 0; k < bc.m; ++k) bc.benign[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = false;
  for (int i = 0; i < bc.n; ++i) {
    const double off = bc.eps_prime * unit(rng);  // in [0, eps'), strictly inside the band
    bc.scores.push_back(bc.benign[static_cast<std::size_t>(i)] ? 1.0 - off : -1.0 + off);
  }
  bc.x.resize(bc.n, d);
  for (int i = 0; i < bc.n; ++i)
    for (int j = 0; j < d; ++j) bc.x(i, j) = gauss(rng);
  return bc;
}

double lemma_factor(int n, int m, double c, double eps_prime) {
  const double big = static_cast<double>(n - m) * std::exp(c * (2.0 - eps_prime)) + static_cast<double>(m);
  return std::max(std::expm1(c * eps_prime), static_cast<double>(n) / big);
}

double lemma_factor_tight(int n, int m, double c, double eps_prime) {
  const double e2 = static_cast<double>(n - m) * std::exp(c * (2.0 - eps_prime));
  const double big = e2 + static_cast<double>(m);
  return std::max(e2 * std::expm1(c * eps_prime), static_cast<double>(n)) / big;
}

BoundResult check_bound(const BoundCase& bc) {
  bc.validate();
  BoundResult out;
  const auto w = nn::scaled_softmax(bc.scores, bc.c);
  const double cut = bc.eps / static_cast<double>(bc.n);
  Eigen::RowVectorXd agg = Eigen::RowVectorXd::Zero(bc.x.cols());
  Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(bc.x.cols());
  out.weights.resize(w.size());
  for (int i = 0; i < bc.n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double l1 = bc.x.row(i).lpNorm<1>();
    if (w[k] >= cut) {
      out.weights[k] = w[k];
      agg += w[k] * bc.x.row(i);
      out.max_surviving_l1 = std::max(out.max_surviving_l1, l1);
    } else {
      out.weights[k] = 0.0;
      if (bc.benign[k]) out.benign_truncated = true;
    }
    if (bc.benign[k]) mu += bc.x.row(i);
  }
  mu /= static_cast<double>(bc.n - bc.m);
  out.lhs = (agg - mu).lpNorm<1>();
  out.rhs = lemma_factor(bc.n, bc.m, bc.c, bc.eps_prime) * out.max_surviving_l1;
  out.rhs_tight = lemma_factor_tight(bc.n, bc.m, bc.c, bc.eps_prime) * out.max_surviving_l1;
  out.holds = out.lhs <= out.rhs;
  out.holds_tight = out.lhs <= out.rhs_tight;
  return out;
}

void write_bound_case(std::ostream& out, const BoundCase& bc, const BoundResult& result) {
  nlohmann::json j;
  j["n"] = bc.n;
  j["m"] = bc.m;
  j["c"] = bc.c;
  j["eps"] = bc.eps;
  j["eps_prime"] = bc.eps_prime;
  j["gamma"] = bc.gamma;
  j["delta"] = bc.delta;
  j["scores"] = bc.scores;
  j["benign"] = bc.benign;
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < bc.x.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(bc.x.cols()));
    for (Eigen::Index k = 0; k < bc.x.cols(); ++k) row[static_cast<std::size_t>(k)] = bc.x(i, k);
    rows.push_back(std::move(row));
  }
  j["x"] = rows;
  j["lhs"] = result.lhs;
  j["rhs"] = result.rhs;
  j["rhs_tight"] = result.rhs_tight;
  j["weights"] = result.weights;
  out << j.dump(2) << '\n';
}

FuzzSummary fuzz_bounds(std::size_t cases, std::uint64_t seed, const BoundSampling& sampling) {
  FuzzSummary s;
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < cases; ++k) {
    BoundCase bc = sample_bound_case(rng, sampling);
    const BoundResult r = check_bound(bc);
    ++s.cases;
    if (r.benign_truncated) ++s.benign_truncations;
    if (r.rhs > 0.0) s.worst_ratio = std::max(s.worst_ratio, r.lhs / r.rhs);
    if (!r.holds_tight) ++s.violations_tight;
    if (!r.holds) {
      ++s.violations;
      s.failures.push_back(std::move(bc));
    }
  }
  return s;
}

ImprovementBranches improvement_condition(double gamma, double delta, double c, int n, int m) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw UsageError("gamma must be in (0, 1)");
  if (!(delta > 0.0)) throw UsageError("delta must be > 0");
  if (!(c > 0.0)) throw UsageError("c must be > 0");
  if (n < 1 || m < 0 || m >= n) throw UsageError("need 0 <= m < n");
  const double gd = gamma * delta;
  const double ratio = static_cast<double>(m) / static_cast<double>(n);
  ImprovementBranches b;
  b.first = std::log1p(gd) / c;
  const double arg = (1.0 / gd - ratio) / (1.0 - ratio);
  if (!(arg > 0.0)) throw PreconditionError("second branch: log argument is not positive");
  b.second = 2.0 - std::log(arg) / c;
  b.value = std::min(b.first, b.second);
  return b;
}

namespace {

double final_asr(const sim::SimResult& r) { return r.metrics.back().asr.value_or(0.0); }

}  // namespace

std::vector<TransferRow> sweep_transfer(const sim::SimConfig& base, const AttentionModel& model,
                                        const std::vector<TransferPoint>& grid) {
  const sim::SimData data = sim::prepare_data(base);
  std::vector<TransferRow> rows;
  for (const auto& p : grid) {
    TransferRow row;
    row.point = p;
    try {
      (void)attacks::backdoor_pixels(p.shift_y, p.shift_x, p.gap);
    } catch (const UsageError& e) {
      row.skipped = true;
      row.note = "pattern does not fit";
      rows.push_back(row);
      continue;
    }
    if (p.attackers < 1 || p.attackers >= base.n_clients) {
      row.skipped = true;
      row.note = "attacker count out of range";
      rows.push_back(row);
      continue;
    }
    sim::SimConfig cfg = base;
    cfg.attack.kind = attacks::AttackKind::kBackdoor;
    cfg.attack.attacker_ids.clear();
    for (int i = 0; i < p.attackers; ++i) cfg.attack.attacker_ids.insert(i);
    cfg.attack.backdoor.shift_y = p.shift_y;
    cfg.attack.backdoor.shift_x = p.shift_x;
    cfg.attack.backdoor.gap = p.gap;
    auto defended = make_adaptive(model);
    const auto r = sim::run(cfg, data, *defended);
    auto control = baselines::make_fedavg();
    const auto rc = sim::run(cfg, data, *control);
    row.acc = r.metrics.back().acc;
    row.asr = final_asr(r);
    row.control_acc = rc.metrics.back().acc;
    row.control_asr = final_asr(rc);
    rows.push_back(row);
  }
  return rows;
}

void write_transfer_csv(std::ostream& out, const std::vector<TransferRow>& rows, const std::string& run_id) {
  out << "shift_y,shift_x,gap,attackers,acc,asr,fedavg_acc,fedavg_asr,note,run_id\n";
  char buf[256];
  for (const auto& r : rows) {
    if (r.skipped) {
      std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,,,,,", r.point.shift_y, r.point.shift_x, r.point.gap,
                    r.point.attackers);
    } else {
      std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%.17g,%.17g,%.17g,%.17g,", r.point.shift_y, r.point.shift_x,
                    r.point.gap, r.point.attackers, r.acc, r.asr, r.control_acc, r.control_asr);
    }
    out << buf << r.note << ',' << run_id << '\n';
  }
}

std::vector<AblationRow> ablation(const sim::SimConfig& base, const AttentionModel& model, int runs) {
  if (runs < 1) throw UsageError("ablation needs at least one run");
  const sim::SimData data = sim::prepare_data(base);
  std::vector<AblationRow> rows{{"adaptive", 0, 0}, {"no_eps", 0, 0}, {"no_c", 0, 0}, {"fedavg", 0, 0}};
  for (int r = 0; r < runs; ++r) {
    sim::SimConfig cfg = base;
    cfg.seeds.init = derive_seed({base.seeds.init, static_cast<std::uint64_t>(r)});
    cfg.seeds.attack = derive_seed({base.seeds.attack, static_cast<std::uint64_t>(r)});
    for (auto& row : rows) {
      std::unique_ptr<Aggregator> agg;
      AttentionModel m = model;
      if (row.variant == "fedavg") {
        agg = baselines::make_fedavg();
      } else {
        if (row.variant == "no_eps") m.eps = 0.0;
        if (row.variant == "no_c") m.c = 1.0;
        agg = make_adaptive(m);
      }
      const auto res = sim::run(cfg, data, *agg);
      row.acc += res.metrics.back().acc / runs;
      row.asr += final_asr(res) / runs;
    }
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows, const std::string& run_id) {
  out << "variant,acc,asr,run_id\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", r.acc, r.asr);
    out << r.variant << ',' << buf << ',' << run_id << '\n';
  }
}

namespace {

Eigen::VectorXd flat_rows(const Eigen::MatrixXd& feats) {
  Eigen::VectorXd v(feats.size());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < feats.rows(); ++i)
    for (Eigen::Index j = 0; j < feats.cols(); ++j) v(k++) = feats(i, j);
  return v;
}

struct MaskedWeights {
  Eigen::VectorXd w;     // softmax
  Eigen::VectorXd mask;  // survivors of the eps/n cut (all ones on fallback)
};

MaskedWeights mlp_forward(const MlpBaseline& model, const Eigen::MatrixXd& feats, nn::Mlp::Tape* tape) {
  const Eigen::VectorXd in = flat_rows(feats);
  const Eigen::VectorXd logits = tape ? Eigen::VectorXd(model.net.forward_batch(in, *tape).col(0))
                                      : model.net.forward(in);
  const auto sw = nn::scaled_softmax(std::span<const double>(logits.data(), static_cast<std::size_t>(logits.size())), 1.0);
  MaskedWeights out;
  out.w = Eigen::Map<const Eigen::VectorXd>(sw.data(), logits.size());
  const double cut = model.eps / static_cast<double>(model.n);
  out.mask = (out.w.array() >= cut).cast<double>().matrix();
  if (out.mask.sum() == 0.0) out.mask.setOnes();
  return out;
}

}  // namespace

std::vector<double> mlp_baseline_weights(const MlpBaseline& model, const Eigen::MatrixXd& feats) {
  if (static_cast<std::size_t>(feats.rows()) != model.n || static_cast<std::size_t>(feats.cols()) != model.width) {
    throw StructuralError("MLP baseline input shape mismatch");
  }
  Eigen::MatrixXd f = feats;
  scale_features(f, model.scaling);
  const MaskedWeights mw = mlp_forward(model, f, nullptr);
  const Eigen::VectorXd w = mw.w.cwiseProduct(mw.mask);
  return {w.data(), w.data() + w.size()};
}

MlpBaseline train_mlp_baseline(const defense::UpdateDataset& train, const MlpBaselineOptions& options) {
  if (train.instances.empty()) throw UsageError("MLP baseline: empty training set");
  std::mt19937_64 rng(options.seed);
  MlpBaseline model;
  model.n = train.n();
  model.width = train.width();
  model.eps = options.eps;
  model.scaling = options.scaling;
  const std::vector<std::size_t> dims{model.n * model.width, options.hidden, model.n};
  model.net = nn::Mlp::random(dims, rng);

  std::vector<Eigen::MatrixXd> feats;
  std::vector<Eigen::VectorXd> targets;
  for (const auto& inst : train.instances) {
    if (std::none_of(inst.labels.begin(), inst.labels.end(), [](bool b) { return b; })) continue;
    Eigen::MatrixXd f = inst.feats;
    scale_features(f, options.scaling);
    targets.push_back(defense::benign_mean(f, inst.labels));
    feats.push_back(std::move(f));
  }
  std::vector<std::size_t> order(feats.size());
  std::iota(order.begin(), order.end(), 0);
  nn::Adam adam(model.net, {options.lr, 0.9, 0.999, 1e-8});
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(options.batch)) {
      const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(options.batch));
      nn::MlpGrads g = model.net.zero_grads();
      for (std::size_t k = b; k < end; ++k) {
        const auto& f = feats[order[k]];
        nn::Mlp::Tape tape;
        const MaskedWeights mw = mlp_forward(model, f, &tape);
        const Eigen::VectorXd q = f.transpose() * mw.w.cwiseProduct(mw.mask);
        const nn::LossResult loss = nn::l1_loss(q, targets[order[k]]);
        const Eigen::VectorXd gw = (f * loss.grad.col(0)).cwiseProduct(mw.mask);
        const Eigen::VectorXd gz = mw.w.cwiseProduct((gw.array() - mw.w.dot(gw)).matrix());
        model.net.backward(tape, gz, g);
      }
      g *= 1.0 / static_cast<double>(end - b);
      adam.step(model.net, g);
    }
  }
  return model;
}

defense::ValidationReport validate_mlp_baseline(const MlpBaseline& model, const defense::UpdateDataset& dataset,
                                                bool shuffle_clients, std::uint64_t seed) {
  defense::ValidationReport rep;
  std::mt19937_64 rng(seed);
  std::size_t correct = 0, total = 0;
  double l1 = 0.0;
  for (const auto& inst : dataset.instances) {
    if (std::none_of(inst.labels.begin(), inst.labels.end(), [](bool b) { return b; })) continue;
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(inst.feats.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    if (shuffle_clients) std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd f(inst.feats.rows(), inst.feats.cols());
    std::vector<bool> labels(inst.labels.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
      f.row(static_cast<Eigen::Index>(i)) = inst.feats.row(perm[i]);
      labels[i] = inst.labels[static_cast<std::size_t>(perm[i])];
    }
    const auto w = mlp_baseline_weights(model, f);
    for (std::size_t i = 0; i < w.size(); ++i) {
      correct += (w[i] == 0.0) != labels[i] ? 1 : 0;
      ++total;
    }
    Eigen::MatrixXd scaled = f;
    scale_features(scaled, model.scaling);
    const Eigen::VectorXd q = scaled.transpose() * Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    l1 += nn::l1_loss(q, defense::benign_mean(scaled, labels)).value;
    ++rep.instances;
  }
  if (total > 0) rep.detection_accuracy = static_cast<double>(correct) / static_cast<double>(total);
  if (rep.instances > 0) rep.mean_l1 = l1 / static_cast<double>(rep.instances);
  return rep;
}

}  // namespace adagg::analysis
