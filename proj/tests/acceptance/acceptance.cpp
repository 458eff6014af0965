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

// End-to-end acceptance suite: one PASS/FAIL line per criterion, exit code 1
// if any criterion fails. Tolerances and runtime limits are fixed here.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>

#include "adagg/adaptive.hpp"
#include "adagg/analysis.hpp"
#include "adagg/baselines.hpp"
#include "adagg/commands.hpp"
#include "adagg/defense_train.hpp"
#include "adagg/simulator.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

namespace {

using namespace adagg;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool in_time = secs < limit_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::printf("[%s] %2d %-34s %s | %.1f s (limit %.0f s)%s\n", pass ? "PASS" : "FAIL", id, title.c_str(),
              o.detail.c_str(), secs, limit_s, in_time ? "" : " TIMEOUT");
  std::fflush(stdout);
}

std::string f(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

// ---- shared fixtures ----

sim::SimConfig scaled_task() { return sim::SimConfig{}; }

sim::SimConfig with_attack(sim::SimConfig c, attacks::AttackKind kind, int attackers) {
  c.attack.kind = kind;
  c.attack.attacker_ids.clear();
  for (int i = 0; i < attackers; ++i) c.attack.attacker_ids.insert(i);
  return c;
}

struct TrainedDefense {
  AttentionModel model;
  defense::UpdateDataset data;
  defense::ValidationReport val;
};

TrainedDefense train_for(attacks::AttackKind kind, int runs) {
  defense::CollectOptions co;
  co.runs = runs;
  co.kinds = {kind};
  TrainedDefense out;
  out.data = defense::collect(scaled_task(), co);
  defense::TrainOptions to;
  to.epochs = 50;
  const auto r = defense::train_defense(out.data.train_split(), out.data.validation_split(), to);
  out.model = r.model;
  out.val = r.best;
  return out;
}

sim::SimResult run_with(const sim::SimConfig& c, const sim::SimData& data, std::unique_ptr<Aggregator> agg) {
  return sim::run(c, data, *agg);
}

// ---- criteria ----

Outcome c1_bounds() {
  const auto s = analysis::fuzz_bounds(1000, 2024);
  analysis::BoundCase bc;
  bc.n = 10;
  bc.m = 4;
  bc.c = 10.0;
  bc.eps_prime = 0.0;
  bc.x = Eigen::MatrixXd::Ones(10, 8);
  for (int i = 0; i < 10; ++i) {
    bc.benign.push_back(i >= 4);
    bc.scores.push_back(i >= 4 ? 1.0 : -1.0);
    if (i < 4) bc.x.row(i) *= -25.0;
  }
  const auto r = analysis::check_bound(bc);
  const double rel = r.lhs / 8.0;
  const double limit = 2.0 * std::exp(-20.0);
  return {s.violations == 0 && rel <= limit,
          std::to_string(s.violations) + " violations in " + std::to_string(s.cases) + " cases, worst lhs/rhs " +
              f("%.3g", s.worst_ratio) + "; best-case rel err " + f("%.3g", rel) + " <= " + f("%.3g", limit)};
}

Outcome c2_degeneracy() {
  std::mt19937_64 rng(77);
  AttentionModel m = AttentionModel::random(20, 32, 16, rng);
  m.c = 0.0;
  m.k_pc = 10;
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto b = testing::random_batch(rng, 10, {{"w", 50}, {"b", 12}});
    const auto r = aggregate_adaptive(m, b);
    const auto mean = baselines::fedavg(b);
    worst = std::max(worst, axpy(-1.0, mean, r.q_T).l1_norm() / mean.l1_norm());
  }
  return {worst <= 1e-9, "max relative L1 diff " + f("%.3g", worst) + " over 100 batches"};
}

Outcome c3_synthetic() {
  const auto inst = data::gen_synthetic_instances(2048 + 256, 5);
  const auto ds = defense::synthetic_dataset(inst, 256);
  defense::TrainOptions to;
  to.epochs = 60;
  const auto tr = defense::train_defense(ds.train_split(), ds.validation_split(), to);
  const auto val = ds.validation_split();
  std::size_t good = 0;
  for (const auto& v : val.instances) {
    Eigen::MatrixXd feats = v.feats;
    scale_features(feats, tr.model.scaling);
    const auto run = run_on_features(tr.model, feats, tr.model.passes);
    const double k = static_cast<double>(std::count(v.labels.begin(), v.labels.end(), true));
    bool ok = true;
    for (std::size_t i = 0; i < v.labels.size(); ++i) {
      const double w = run.weights[i];
      ok = ok && (v.labels[i] ? (w >= 0.9 / k && w <= 1.1 / k) : w == 0.0);
    }
    good += ok;
  }
  const double frac = static_cast<double>(good) / static_cast<double>(val.instances.size());
  const auto imp = feature_importance(tr.model);
  const double head = std::accumulate(imp.begin(), imp.begin() + 10, 0.0);
  const double tail = std::accumulate(imp.begin() + 10, imp.end(), 0.0);
  const double head_mean = head / 10.0, tail_mean = tail / 20.0;
  return {frac >= 0.95 && head_mean > tail_mean,
          "exact-truncation fraction " + f("%.4f", frac) + " (>= 0.95); importance per coord 0-9 " +
              f("%.3f", head_mean) + " vs 10-29 " + f("%.3f", tail_mean) + " (totals " + f("%.1f", head) + " / " +
              f("%.1f", tail) + ")"};
}

Outcome c4_backdoor(const TrainedDefense& d) {
  const sim::SimConfig clean = scaled_task();
  const sim::SimData data = sim::prepare_data(clean);
  const double clean_acc = run_with(clean, data, baselines::make_fedavg()).metrics.back().acc;
  const sim::SimConfig atk = with_attack(clean, attacks::AttackKind::kBackdoor, 4);
  const auto fed = run_with(atk, data, baselines::make_fedavg()).metrics.back();
  const auto ada = run_with(atk, data, make_adaptive(d.model)).metrics.back();
  const bool pass = *fed.asr >= 0.5 && *ada.asr <= 0.15 && ada.acc >= clean_acc - 0.05;
  return {pass, "FedAvg ASR " + f("%.3f", *fed.asr) + " (>= 0.50); adaptive ASR " + f("%.3f", *ada.asr) +
                    " (<= 0.15), ACC " + f("%.4f", ada.acc) + " vs clean " + f("%.4f", clean_acc) +
                    "; defense val detection " + f("%.4f", d.val.detection_accuracy)};
}

Outcome c5_omniscient(const TrainedDefense& d) {
  const sim::SimConfig clean = scaled_task();
  const sim::SimData data = sim::prepare_data(clean);
  const double clean_acc = run_with(clean, data, baselines::make_fedavg()).metrics.back().acc;
  const sim::SimConfig atk = with_attack(clean, attacks::AttackKind::kOmniscient, 4);
  const double fed = run_with(atk, data, baselines::make_fedavg()).metrics.back().acc;
  const double ada = run_with(atk, data, make_adaptive(d.model)).metrics.back().acc;
  const bool pass = fed <= clean_acc - 0.20 && ada >= clean_acc - 0.05;
  return {pass, "clean ACC " + f("%.4f", clean_acc) + "; FedAvg " + f("%.4f", fed) + " (drop >= 0.20); adaptive " +
                    f("%.4f", ada) + " (within 0.05); defense val detection " + f("%.4f", d.val.detection_accuracy)};
}

Outcome c6_oracles() {
  std::mt19937_64 rng(606);
  std::uniform_int_distribution<int> nd(4, 8), dd(2, 16);
  double worst_med = 0, worst_geo = 0, worst_krum = 0;
  const auto diff = [](const LayeredVector& v, const std::vector<long double>& o) {
    const auto x = v.flatten();
    double m = 0;
    for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, static_cast<double>(std::fabs(x[i] - o[i])));
    return m;
  };
  for (int t = 0; t < 50; ++t) {
    const int n = nd(rng);
    const auto d = static_cast<std::size_t>(dd(rng));
    const auto b = testing::random_batch(rng, n, testing::two_layer_schema(d));
    const auto rows = oracle::rows_of(b);
    worst_med = std::max(worst_med, diff(baselines::coord_median(b), oracle::oracle_coord_median(rows)));
    worst_geo = std::max(worst_geo, diff(baselines::geo_median(b).point, oracle::oracle_geo_median(rows)));
    const int m = baselines::default_krum_m(b.size());
    worst_krum = std::max(worst_krum, diff(baselines::multi_krum(b, m).aggregate, oracle::oracle_multi_krum(rows, m)));
  }
  const double worst = std::max({worst_med, worst_geo, worst_krum});
  return {worst <= 1e-6, "max abs diff: median " + f("%.2g", worst_med) + ", geometric " + f("%.2g", worst_geo) +
                             ", multi-krum " + f("%.2g", worst_krum)};
}

Outcome c7_permutation(const AttentionModel& trained) {
  std::mt19937_64 rng(707);
  const Schema schema = sim::task_schema(32);
  double worst_agg = 0, worst_w = 0;
  std::string worst_name = "-";
  std::vector<std::size_t> perm(10);
  std::iota(perm.begin(), perm.end(), 0);
  for (int t = 0; t < 20; ++t) {
    auto b = testing::random_batch(rng, 10, schema, 0.01);
    b.truth_labels = std::vector<bool>{false, false, true, true, true, true, true, true, true, true};
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto pb = testing::permuted(b, perm);
    std::vector<std::pair<std::string, std::function<std::unique_ptr<Aggregator>()>>> makers = {
        {"fedavg", [] { return baselines::make_fedavg(); }},
        {"coord_median", [] { return baselines::make_coord_median(); }},
        {"geo_median", [] { return baselines::make_geo_median(); }},
        {"multi_krum", [] { return baselines::make_multi_krum(0); }},
        {"foolsgold", [] { return baselines::make_foolsgold(1.0); }},
        {"residual", [] { return baselines::make_residual({}); }},
        {"robust_mean", [] { return baselines::make_robust_mean(); }},
        {"adaptive", [&] { return make_adaptive(trained); }},
    };
    for (auto& [name, make] : makers) {
      const auto a = make()->aggregate(b);
      const auto p = make()->aggregate(pb);
      const double d = testing::max_abs_diff(a.aggregate, p.aggregate) / std::max(1.0, a.aggregate.l2_norm());
      if (d > worst_agg) {
        worst_agg = d;
        worst_name = name;
      }
      if (!a.weights.empty()) {
        for (std::size_t i = 0; i < perm.size(); ++i) worst_w = std::max(worst_w, std::abs(p.weights[i] - a.weights[perm[i]]));
      }
    }
  }
  return {worst_agg <= 1e-8 && worst_w <= 1e-8, "8 aggregators x 20 batches: max aggregate diff " +
                                                    f("%.2g", worst_agg) + " (" + worst_name + "), max weight diff " +
                                                    f("%.2g", worst_w)};
}

Outcome c8_ablation(const TrainedDefense& d) {
  const sim::SimConfig atk = with_attack(scaled_task(), attacks::AttackKind::kBackdoor, 2);
  const auto rows = analysis::ablation(atk, d.model, 3);
  double a = 0, ne = 0, nc = 0;
  for (const auto& r : rows) {
    if (r.variant == "adaptive") a = r.asr;
    if (r.variant == "no_eps") ne = r.asr;
    if (r.variant == "no_c") nc = r.asr;
  }
  const auto train = d.data.train_split();
  const auto val = d.data.validation_split();
  analysis::MlpBaselineOptions mo;
  mo.epochs = 50;
  const auto mlp = analysis::train_mlp_baseline(train, mo);
  const auto mlp_orig = analysis::validate_mlp_baseline(mlp, val, false, 3);
  const auto mlp_shuf = analysis::validate_mlp_baseline(mlp, val, true, 3);
  const auto att_shuf = defense::validate(d.model, val, {.passes = 0, .shuffle_clients = true, .seed = 3});
  const bool order = a < ne && ne < nc;
  const bool perm = mlp_shuf.detection_accuracy < att_shuf.detection_accuracy;
  return {order && perm, "final ASR adaptive " + f("%.4f", a) + " < no_eps " + f("%.4f", ne) + " < no_c " +
                             f("%.4f", nc) + (order ? "" : " [ordering not strict]") +
                             "; shuffled detection MLP " + f("%.4f", mlp_shuf.detection_accuracy) + " (ordered " +
                             f("%.4f", mlp_orig.detection_accuracy) + ") vs attention " +
                             f("%.4f", att_shuf.detection_accuracy)};
}

Outcome c9_improvement() {
  const auto b = analysis::improvement_condition(0.1, 1.0, 10.0, 10, 0);
  const double target = 0.1 * 1.0 / 10.0;
  const double rel = std::abs(b.value - target) / target;
  return {rel <= 0.10, "eps' bound " + f("%.5f", b.value) + " vs first-order " + f("%.3f", target) + " (rel diff " +
                           f("%.3f", rel) + ")"};
}

Outcome c10_determinism(const fs::path& model_path) {
  const fs::path dir = fs::temp_directory_path() / "adagg_acceptance_det";
  fs::remove_all(dir);
  const std::vector<std::string> configs = {
      "",
      "attack.kind=backdoor\nattack.attackers=3\nagg.kind=geo_median\nsim.threads=2\n",
      "attack.kind=omniscient\nattack.attackers=2\nagg.kind=foolsgold\n",
      "attack.kind=backdoor\nattack.attackers=4\nagg.kind=adaptive\nagg.model=" + model_path.string() + "\n",
  };
  std::size_t same = 0;
  std::ostringstream sink;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const Config cfg = Config::parse(configs[i] + "out.dir=" + (dir / std::to_string(i)).string() + "\n");
    std::string bytes[2];
    for (auto& b : bytes) {
      if (cli::run_command("simulate", cfg, sink, sink) != cli::kOk) return {false, "simulate failed: " + sink.str()};
      std::ifstream in(dir / std::to_string(i) / "metrics.csv", std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      b = ss.str();
    }
    same += bytes[0] == bytes[1] && !bytes[0].empty();
  }
  fs::remove_all(dir);
  return {same == configs.size(), std::to_string(same) + "/" + std::to_string(configs.size()) +
                                      " configs byte-identical across two runs"};
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  report(1, "bound fuzz + best case", 10, c1_bounds);
  report(2, "c=0 reduces to the mean", 5, c2_degeneracy);
  report(3, "synthetic outlier reproduction", 300, c3_synthetic);

  TrainedDefense backdoor;
  report(4, "scaled backdoor run", 600, [&] {
    backdoor = train_for(attacks::AttackKind::kBackdoor, 30);
    return c4_backdoor(backdoor);
  });
  report(5, "scaled omniscient run", 600, [] {
    const TrainedDefense omni = train_for(attacks::AttackKind::kOmniscient, 30);
    return c5_omniscient(omni);
  });
  report(6, "baseline oracle equivalence", 10, c6_oracles);
  report(7, "permutation equivariance", 10, [&] { return c7_permutation(backdoor.model); });
  report(8, "ablation ordering", 900, [&] { return c8_ablation(backdoor); });
  report(9, "improvement condition", 1, c9_improvement);
  const fs::path model_path = fs::temp_directory_path() / "adagg_acceptance_backdoor.attn";
  save_model_file(model_path, backdoor.model);
  report(10, "simulate determinism", 120, [&] { return c10_determinism(model_path); });
  fs::remove(model_path);

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
