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

#include "adagg/defense_train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "adagg/baselines.hpp"
#include "adagg/binary_io.hpp"
#include "adagg/error.hpp"
#include "adagg/seed.hpp"
#include "json.hpp"

namespace adagg::defense {

namespace {

constexpr std::uint32_t kDatasetVersion = 1;

std::vector<Eigen::MatrixXd> scaled_copies(const UpdateDataset& ds, FeatureScaling scaling) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(ds.instances.size());
  for (const auto& inst : ds.instances) {
    Eigen::MatrixXd f = inst.feats;
    scale_features(f, scaling);
    out.push_back(std::move(f));
  }
  return out;
}

bool has_benign(const std::vector<bool>& labels) {
  return std::any_of(labels.begin(), labels.end(), [](bool b) { return b; });
}

}  // namespace

bool UpdateDataset::is_validation(const UpdateInstance& inst) const {
  return std::find(meta.validation_runs.begin(), meta.validation_runs.end(), inst.run) != meta.validation_runs.end();
}

UpdateDataset UpdateDataset::train_split() const {
  UpdateDataset out;
  out.meta = meta;
  out.meta.validation_runs.clear();
  for (const auto& inst : instances)
    if (!is_validation(inst)) out.instances.push_back(inst);
  return out;
}

UpdateDataset UpdateDataset::validation_split() const {
  UpdateDataset out;
  out.meta = meta;
  for (const auto& inst : instances)
    if (is_validation(inst)) out.instances.push_back(inst);
  return out;
}

void UpdateDataset::validate() const {
  for (const auto& inst : instances) {
    if (inst.feats.rows() != static_cast<Eigen::Index>(n()) || inst.feats.cols() != static_cast<Eigen::Index>(width())) {
      throw StructuralError("update dataset instances have different shapes");
    }
    if (inst.labels.size() != n() || inst.raw_norms.size() != n()) {
      throw StructuralError("update dataset labels or norms have the wrong length");
    }
    if (!has_benign(inst.labels)) throw PreconditionError("update dataset instance without a benign client");
  }
}

UpdateDataset merge(const std::vector<UpdateDataset>& parts) {
  if (parts.empty()) throw UsageError("merge: no datasets");
  UpdateDataset out;
  out.meta = parts.front().meta;
  out.meta.validation_runs.clear();
  out.meta.attack_kinds.clear();
  out.meta.seeds.clear();
  out.meta.dropped = 0;
  int run_offset = 0;
  for (const auto& p : parts) {
    if (p.meta.k_pc != out.meta.k_pc || p.meta.schema != out.meta.schema) {
      throw StructuralError("merge: datasets disagree on k_pc or schema");
    }
    int max_run = -1;
    for (const auto& inst : p.instances) {
      UpdateInstance copy = inst;
      copy.run += run_offset;
      max_run = std::max(max_run, inst.run);
      out.instances.push_back(std::move(copy));
    }
    for (int r : p.meta.validation_runs) {
      out.meta.validation_runs.push_back(r + run_offset);
      max_run = std::max(max_run, r);
    }
    out.meta.attack_kinds.insert(out.meta.attack_kinds.end(), p.meta.attack_kinds.begin(), p.meta.attack_kinds.end());
    out.meta.seeds.insert(out.meta.seeds.end(), p.meta.seeds.begin(), p.meta.seeds.end());
    out.meta.dropped += p.meta.dropped;
    run_offset += max_run + 1;
  }
  out.validate();
  return out;
}

UpdateDataset collect(const sim::SimConfig& base, const CollectOptions& options) {
  if (options.runs < 1) throw UsageError("collect: runs must be >= 1");
  if (options.kinds.empty()) throw UsageError("collect: no attack kinds");
  if (options.attackers_min < 0 || options.attackers_max < options.attackers_min ||
      options.attackers_max >= base.n_clients) {
    throw UsageError("collect: attacker count range must lie in [0, n_clients)");
  }
  if (options.k_pc < 1) throw UsageError("collect: k_pc must be >= 1");
  const sim::SimData server = sim::prepare_data(base);

  UpdateDataset ds;
  ds.meta.k_pc = options.k_pc;
  ds.meta.seeds = {base.seeds.data, options.seed};
  int run = 0;
  for (const auto kind : options.kinds) {
    ds.meta.attack_kinds.emplace_back(attacks::to_string(kind));
    for (int r = 0; r < options.runs; ++r, ++run) {
      const auto urun = static_cast<std::uint64_t>(run);
      sim::SimConfig cfg = base;
      cfg.aggregator = {};
      cfg.aggregator.kind = options.aggregator;
      cfg.attack.kind = kind;
      cfg.attack.attacker_ids.clear();
      if (kind != attacks::AttackKind::kNone) {
        const int span = options.attackers_max - options.attackers_min + 1;
        const int count = std::max(1, options.attackers_min + r % span);
        std::vector<int> ids(static_cast<std::size_t>(base.n_clients));
        std::iota(ids.begin(), ids.end(), 0);
        std::mt19937_64 rng(derive_seed({options.seed, urun, 0}));
        std::shuffle(ids.begin(), ids.end(), rng);
        cfg.attack.attacker_ids.insert(ids.begin(), ids.begin() + count);
      }
      cfg.seeds.init = derive_seed({options.seed, urun, 1});
      cfg.seeds.attack = derive_seed({options.seed, urun, 2});
      const sim::SimData data = sim::partition_pool(cfg, server.eval, server.eval, derive_seed({options.seed, urun, 3}));
      auto agg = sim::make_aggregator(cfg.aggregator);
      if (r % 3 == 2) ds.meta.validation_runs.push_back(run);

      sim::run(cfg, data, *agg, [&](int round, const RoundBatch& batch, const AggregateOutput&) {
        if (ds.meta.schema.empty()) ds.meta.schema = batch.schema();
        bool finite = true;
        for (const auto& u : batch.updates) finite = finite && u.all_finite();
        if (!finite) {
          ++ds.meta.dropped;
          return;
        }
        UpdateInstance inst;
        inst.feats = prepare_features(batch, options.k_pc, FeatureScaling::kNone);
        inst.labels = batch.truth_labels ? *batch.truth_labels : std::vector<bool>(batch.size(), true);
        for (const auto& u : batch.updates) inst.raw_norms.push_back(u.l2_norm());
        inst.run = run;
        inst.round = round;
        ds.instances.push_back(std::move(inst));
      });
    }
  }
  ds.validate();
  return ds;
}

UpdateDataset synthetic_dataset(const std::vector<data::SyntheticInstance>& instances, std::size_t validation_count) {
  if (instances.empty()) throw UsageError("synthetic_dataset: no instances");
  if (validation_count >= instances.size()) throw UsageError("synthetic_dataset: nothing left for training");
  UpdateDataset ds;
  ds.meta.task = "synthetic";
  ds.meta.attack_kinds = {"outlier"};
  ds.meta.k_pc = 1;
  const std::size_t first_val = instances.size() - validation_count;
  for (std::size_t k = 0; k < instances.size(); ++k) {
    const auto& src = instances[k];
    const auto cols = static_cast<std::size_t>(src.points.cols());
    std::vector<LayeredVector> updates;
    for (Eigen::Index i = 0; i < src.points.rows(); ++i) {
      std::vector<LayeredVector::Block> blocks;
      for (std::size_t j = 0; j < cols; ++j) {
        blocks.push_back({"x" + std::to_string(j), {src.points(i, static_cast<Eigen::Index>(j))}});
      }
      updates.emplace_back(std::move(blocks));
    }
    std::vector<bool> labels(src.outlier_mask.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = !src.outlier_mask[i];
    RoundBatch batch = RoundBatch::from_updates(std::move(updates), labels);
    if (ds.meta.schema.empty()) ds.meta.schema = batch.schema();
    UpdateInstance inst;
    inst.feats = prepare_features(batch, 1, FeatureScaling::kNone);
    inst.labels = std::move(labels);
    for (const auto& u : batch.updates) inst.raw_norms.push_back(u.l2_norm());
    inst.run = static_cast<int>(k);
    inst.round = 0;
    if (k >= first_val) ds.meta.validation_runs.push_back(static_cast<int>(k));
    ds.instances.push_back(std::move(inst));
  }
  ds.validate();
  return ds;
}

Eigen::VectorXd benign_mean(const Eigen::MatrixXd& feats, const std::vector<bool>& labels) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(feats.cols());
  double count = 0.0;
  for (Eigen::Index i = 0; i < feats.rows(); ++i) {
    if (!labels[static_cast<std::size_t>(i)]) continue;
    acc += feats.row(i).transpose();
    count += 1.0;
  }
  if (count == 0.0) throw PreconditionError("benign_mean: no benign row");
  return acc / count;
}

InstanceLoss instance_loss(const AttentionModel& model, const Eigen::MatrixXd& feats, const Eigen::VectorXd& target,
                           int passes, nn::MlpGrads* grad_q, nn::MlpGrads* grad_k) {
  const Eigen::Index n = feats.rows();
  const auto un = static_cast<std::size_t>(n);
  const double cut = model.eps / static_cast<double>(n);

  nn::Mlp::Tape key_tape;
  const Eigen::MatrixXd kx = model.key.forward_batch(feats.transpose(), key_tape);  // latent x n
  const Eigen::VectorXd kn = kx.colwise().norm().transpose();

  struct Pass {
    nn::Mlp::Tape tape;
    Eigen::VectorXd a;       // Q(q_t)
    double an = 0.0;
    Eigen::VectorXd s;
    Eigen::VectorXd w;       // untruncated softmax
    Eigen::VectorXd mask;
  };
  std::vector<Pass> trace(static_cast<std::size_t>(passes));
  Eigen::VectorXd q = baselines::coord_median_rows(feats).transpose();
  for (auto& p : trace) {
    p.a = model.query.forward_batch(q, p.tape).col(0);
    p.an = p.a.norm();
    p.s.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p.s(i) = (p.an == 0.0 || kn(i) == 0.0) ? 0.0 : std::clamp(p.a.dot(kx.col(i)) / (p.an * kn(i)), -1.0, 1.0);
    }
    const auto sw = nn::scaled_softmax(std::span<const double>(p.s.data(), un), model.c);
    p.w = Eigen::Map<const Eigen::VectorXd>(sw.data(), n);
    p.mask = (p.w.array() >= cut).cast<double>().matrix();
    if (p.mask.sum() == 0.0) p.mask.setOnes();
    q = feats.transpose() * p.w.cwiseProduct(p.mask);
  }

  const nn::LossResult loss = nn::l1_loss(q, target);
  InstanceLoss out;
  out.loss = loss.value;
  out.q_final = q;
  const Eigen::VectorXd wf = trace.back().w.cwiseProduct(trace.back().mask);
  out.weights.assign(wf.data(), wf.data() + wf.size());
  if (!grad_q && !grad_k) return out;

  nn::MlpGrads sink_q = model.query.zero_grads();
  nn::MlpGrads& gq = grad_q ? *grad_q : sink_q;
  Eigen::MatrixXd dkx = Eigen::MatrixXd::Zero(kx.rows(), kx.cols());
  Eigen::VectorXd g = loss.grad.col(0);
  for (int t = passes - 1; t >= 0; --t) {
    const Pass& p = trace[static_cast<std::size_t>(t)];
    // q_{t+1} = feats^T (w .* mask); straight-through across the mask
    const Eigen::VectorXd gw = (feats * g).cwiseProduct(p.mask);
    const double wg = p.w.dot(gw);
    const Eigen::VectorXd gs = model.c * p.w.cwiseProduct((gw.array() - wg).matrix());
    Eigen::VectorXd da = Eigen::VectorXd::Zero(p.a.size());
    if (p.an > 0.0) {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (kn(i) == 0.0 || gs(i) == 0.0) continue;
        const double inv = 1.0 / (p.an * kn(i));
        da += gs(i) * (kx.col(i) * inv - p.s(i) * p.a / (p.an * p.an));
        dkx.col(i) += gs(i) * (p.a * inv - p.s(i) * kx.col(i) / (kn(i) * kn(i)));
      }
    }
    const Eigen::MatrixXd dq = model.query.backward(p.tape, da, gq);
    g = dq.col(0);  // q_0 is the median: no gradient flows past it
  }
  if (grad_k) model.key.backward(key_tape, dkx, *grad_k);
  return out;
}

ValidationReport validate(const AttentionModel& model, const UpdateDataset& dataset, const ValidateOptions& options) {
  model.validate();
  ValidationReport rep;
  const int passes = options.passes > 0 ? options.passes : model.passes;
  std::mt19937_64 rng(options.seed);
  std::size_t correct = 0, total = 0;
  double l1 = 0.0;
  for (const auto& inst : dataset.instances) {
    if (!has_benign(inst.labels)) continue;
    Eigen::MatrixXd f = inst.feats;
    std::vector<bool> labels = inst.labels;
    if (options.shuffle_clients) {
      std::vector<Eigen::Index> perm(static_cast<std::size_t>(f.rows()));
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      Eigen::MatrixXd pf(f.rows(), f.cols());
      std::vector<bool> pl(labels.size());
      for (std::size_t i = 0; i < perm.size(); ++i) {
        pf.row(static_cast<Eigen::Index>(i)) = f.row(perm[i]);
        pl[i] = labels[static_cast<std::size_t>(perm[i])];
      }
      f = std::move(pf);
      labels = std::move(pl);
    }
    scale_features(f, model.scaling);
    const FeatureRun run = run_on_features(model, f, passes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const bool predicted_attacker = run.weights[i] == 0.0;
      correct += predicted_attacker != labels[i] ? 1 : 0;
      ++total;
    }
    l1 += nn::l1_loss(run.q_final, benign_mean(f, labels)).value;
    ++rep.instances;
  }
  if (total > 0) rep.detection_accuracy = static_cast<double>(correct) / static_cast<double>(total);
  if (rep.instances > 0) rep.mean_l1 = l1 / static_cast<double>(rep.instances);
  return rep;
}

TrainResult train_defense(const UpdateDataset& train, const UpdateDataset& val, const TrainOptions& options) {
  if (train.instances.empty()) throw UsageError("train_defense: empty training set");
  if (options.epochs < 0 || options.batch < 1 || options.passes < 1) throw UsageError("train_defense: bad options");
  std::mt19937_64 rng(options.seed);
  TrainResult result;
  AttentionModel model = AttentionModel::random(train.width(), options.hidden, options.latent, rng);
  model.c = options.c;
  model.eps = options.eps;
  model.passes = options.passes;
  model.k_pc = train.meta.k_pc;
  model.scaling = options.scaling;
  model.validate();

  const auto feats = scaled_copies(train, options.scaling);
  std::vector<Eigen::VectorXd> targets(feats.size());
  std::vector<std::size_t> usable;
  for (std::size_t k = 0; k < feats.size(); ++k) {
    if (!has_benign(train.instances[k].labels)) {
      ++result.skipped;
      continue;
    }
    targets[k] = benign_mean(feats[k], train.instances[k].labels);
    usable.push_back(k);
  }
  if (usable.empty()) throw UsageError("train_defense: no usable instance");

  const UpdateDataset& val_set = val.instances.empty() ? train : val;
  result.model = model;
  result.best = validate(model, val_set);
  result.best_epoch = 0;

  nn::Adam adam_q(model.query, {options.lr, 0.9, 0.999, 1e-8});
  nn::Adam adam_k(model.key, {options.lr, 0.9, 0.999, 1e-8});
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    std::shuffle(usable.begin(), usable.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < usable.size(); b += static_cast<std::size_t>(options.batch)) {
      const std::size_t end = std::min(usable.size(), b + static_cast<std::size_t>(options.batch));
      nn::MlpGrads gq = model.query.zero_grads();
      nn::MlpGrads gk = model.key.zero_grads();
      for (std::size_t k = b; k < end; ++k) {
        const std::size_t idx = usable[k];
        epoch_loss += instance_loss(model, feats[idx], targets[idx], options.passes, &gq, &gk).loss;
      }
      const double inv = 1.0 / static_cast<double>(end - b);
      gq *= inv;
      gk *= inv;
      adam_q.step(model.query, gq);
      adam_k.step(model.key, gk);
    }
    epoch_loss /= static_cast<double>(usable.size());
    result.epoch_loss.push_back(epoch_loss);
    if (!model.query.all_finite() || !model.key.all_finite()) {
      throw PreconditionError("train_defense: encoders diverged at epoch " + std::to_string(epoch));
    }
    const bool check = epoch == options.epochs || (options.validate_every > 0 && epoch % options.validate_every == 0);
    if (check) {
      const ValidationReport rep = validate(model, val_set);
      if (rep.detection_accuracy > result.best.detection_accuracy ||
          (rep.detection_accuracy == result.best.detection_accuracy && rep.mean_l1 < result.best.mean_l1)) {
        result.best = rep;
        result.best_epoch = epoch;
        result.model = model;
      }
      if (options.progress) options.progress(epoch, epoch_loss, rep);
    }
  }
  return result;
}

namespace {

nlohmann::json meta_to_json(const UpdateDatasetMeta& m) {
  nlohmann::json schema = nlohmann::json::array();
  for (const auto& l : m.schema) schema.push_back({{"name", l.name}, {"length", l.length}});
  return {{"task", m.task},          {"attack_kinds", m.attack_kinds}, {"seeds", m.seeds},
          {"k_pc", m.k_pc},          {"schema", schema},               {"validation_runs", m.validation_runs},
          {"dropped", m.dropped}};
}

UpdateDatasetMeta meta_from_json(const nlohmann::json& j) {
  UpdateDatasetMeta m;
  m.task = j.at("task").get<std::string>();
  m.attack_kinds = j.at("attack_kinds").get<std::vector<std::string>>();
  m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  m.k_pc = j.at("k_pc").get<std::size_t>();
  for (const auto& l : j.at("schema")) m.schema.push_back({l.at("name").get<std::string>(), l.at("length").get<std::size_t>()});
  m.validation_runs = j.at("validation_runs").get<std::vector<int>>();
  m.dropped = j.at("dropped").get<std::size_t>();
  return m;
}

}  // namespace

void save_dataset(std::ostream& out, const UpdateDataset& ds) {
  io::Writer w(out);
  w.magic("UPDS");
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(ds.n()));
  w.u32(static_cast<std::uint32_t>(ds.width()));
  w.u64(ds.instances.size());
  w.u64(schema_digest(ds.meta.schema));
  w.str(meta_to_json(ds.meta).dump());
  for (const auto& inst : ds.instances) {
    for (Eigen::Index i = 0; i < inst.feats.rows(); ++i)
      for (Eigen::Index j = 0; j < inst.feats.cols(); ++j) w.f64(inst.feats(i, j));
    for (bool b : inst.labels) w.u8(b ? 1 : 0);
    w.f64s(inst.raw_norms);
    w.u32(static_cast<std::uint32_t>(inst.run));
    w.u32(static_cast<std::uint32_t>(inst.round));
  }
}

UpdateDataset load_dataset(std::istream& in) {
  io::Reader r(in);
  r.expect_magic("UPDS");
  if (r.u32() != kDatasetVersion) throw FormatError("unsupported UPDS version");
  const auto n = static_cast<Eigen::Index>(r.u32());
  const auto f = static_cast<Eigen::Index>(r.u32());
  const auto count = r.u64();
  const auto digest = r.u64();
  UpdateDataset ds;
  try {
    ds.meta = meta_from_json(nlohmann::json::parse(r.str()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad UPDS metadata: ") + e.what());
  }
  if (schema_digest(ds.meta.schema) != digest) throw FormatError("UPDS schema digest mismatch");
  ds.instances.resize(count);
  for (auto& inst : ds.instances) {
    inst.feats.resize(n, f);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < f; ++j) inst.feats(i, j) = r.f64();
    inst.labels.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) inst.labels[static_cast<std::size_t>(i)] = r.u8() != 0;
    inst.raw_norms.resize(static_cast<std::size_t>(n));
    r.f64s(inst.raw_norms);
    inst.run = static_cast<int>(r.u32());
    inst.round = static_cast<int>(r.u32());
  }
  return ds;
}

void save_dataset_file(const std::filesystem::path& path, const UpdateDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path.string() + "'");
  save_dataset(out, ds);
}

UpdateDataset load_dataset_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read '" + path.string() + "'");
  return load_dataset(in);
}

}  // namespace adagg::defense
