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

#include "adagg/commands.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <map>
#include <ostream>

#include "adagg/analysis.hpp"
#include "adagg/binary_io.hpp"
#include "adagg/defense_train.hpp"
#include "adagg/error.hpp"
#include "adagg/simulator.hpp"

namespace adagg::cli {

namespace fs = std::filesystem;

namespace {

/// An input produced by an earlier command is absent or unreadable.
class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Context {
  const Config& cfg;
  std::string command;
  std::string run_id;
  fs::path out_dir;
  std::vector<std::string> outputs;
  std::ostream& out;

  fs::path output(const std::string& name) {
    const fs::path p = out_dir / name;
    outputs.push_back(p.string());
    return p;
  }

  void add_output(const fs::path& p) { outputs.push_back(p.string()); }
};

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw UsageError("cannot write '" + p.string() + "'");
  return f;
}

fs::path require_file(const fs::path& p, const std::string& what) {
  if (p.empty() || !fs::is_regular_file(p)) {
    throw MissingArtifact(what + " not found: '" + p.string() + "'");
  }
  return p;
}

fs::path path_or(const Config& cfg, const std::string& key, const fs::path& fallback) {
  return cfg.is_set(key) ? fs::path(cfg.get(key)) : fallback;
}

fs::path dataset_path(const Context& ctx) {
  return path_or(ctx.cfg, "train.dataset", path_or(ctx.cfg, "collect.out", ctx.out_dir / "updates.upds"));
}

fs::path defense_path(const Context& ctx) {
  return path_or(ctx.cfg, "agg.model", path_or(ctx.cfg, "train.out", ctx.out_dir / "defense.attn"));
}

AttentionModel load_defense(const fs::path& p) {
  require_file(p, "defense checkpoint");
  try {
    return load_model_file(p);
  } catch (const FormatError& e) {
    throw MissingArtifact("unreadable defense checkpoint '" + p.string() + "': " + e.what());
  }
}

defense::UpdateDataset load_updates(const fs::path& p) {
  require_file(p, "update dataset");
  try {
    return defense::load_dataset_file(p);
  } catch (const FormatError& e) {
    throw MissingArtifact("unreadable update dataset '" + p.string() + "': " + e.what());
  }
}

int attacker_count(const sim::SimConfig& sc) { return static_cast<int>(sc.attack.attacker_ids.size()); }

// ---- commands ----

int cmd_partition(Context& ctx) {
  const sim::SimConfig sc = to_sim_config(ctx.cfg);
  const sim::SimData data = sim::prepare_data(sc);
  {
    auto f = open_out(ctx.output("shards.bin"));
    data::save_shards(f, data.shards);
  }
  auto f = open_out(ctx.output("partition_counts.csv"));
  f << "client";
  for (int l = 0; l < data::kClasses; ++l) f << ",label" << l;
  f << ",total,run_id\n";
  const auto counts = data::shard_label_counts(data.shards);
  for (std::size_t i = 0; i < data.shards.size(); ++i) {
    std::size_t total = 0;
    f << data.shards[i].client_id;
    for (const auto c : counts[i]) {
      f << ',' << c;
      total += c;
    }
    f << ',' << total << ',' << ctx.run_id << '\n';
  }
  ctx.out << "partition: " << data.shards.size() << " shards, " << data.eval.size() << " server samples\n";
  return kOk;
}

void check_adaptive_model(const sim::AggregatorSpec& spec) {
  if (spec.kind == "adaptive") {
    if (spec.model_path.empty()) throw MissingArtifact("agg.model is required for agg.kind=adaptive");
    load_defense(spec.model_path);
  }
}

int cmd_simulate(Context& ctx) {
  const sim::SimConfig sc = to_sim_config(ctx.cfg);
  check_adaptive_model(sc.aggregator);
  const sim::SimResult res = sim::run(sc);
  {
    auto f = open_out(ctx.output("metrics.csv"));
    sim::write_metrics_csv(f, res.metrics, sc.aggregator.kind, attacker_count(sc), sc.n_clients, ctx.run_id);
  }
  {
    auto f = open_out(ctx.output("final_model.lvec"));
    save_layered(f, sim::model_to_vector(res.final_model));
  }
  const auto& last = res.metrics.back();
  ctx.out << "simulate: " << res.metrics.size() << " rounds, final acc " << fmt(last.acc);
  if (last.asr) ctx.out << ", asr " << fmt(*last.asr);
  ctx.out << '\n';
  return kOk;
}

int cmd_collect(Context& ctx) {
  const fs::path target = path_or(ctx.cfg, "collect.out", ctx.out_dir / "updates.upds");
  defense::UpdateDataset ds;
  const std::string source = ctx.cfg.get("collect.source");
  if (source == "simulation") {
    sim::SimConfig sc = to_sim_config(ctx.cfg);
    defense::CollectOptions opts;
    opts.runs = static_cast<int>(ctx.cfg.get_int("collect.runs"));
    opts.kinds.clear();
    for (const auto& k : ctx.cfg.get_list("collect.kinds")) opts.kinds.push_back(attacks::attack_kind_from_string(k));
    opts.attackers_min = static_cast<int>(ctx.cfg.get_int("collect.attackers_min"));
    opts.attackers_max = static_cast<int>(ctx.cfg.get_int("collect.attackers_max"));
    const auto k_pc = ctx.cfg.get_int("collect.k_pc");
    if (k_pc < 1) throw UsageError("collect.k_pc must be >= 1");
    opts.k_pc = static_cast<std::size_t>(k_pc);
    opts.seed = ctx.cfg.get_u64("collect.seed");
    opts.aggregator = ctx.cfg.get("collect.aggregator");
    ds = defense::collect(sc, opts);
  } else if (source == "synthetic") {
    data::SyntheticOptions so;
    so.outliers_min = static_cast<int>(ctx.cfg.get_int("synthetic.outliers_min"));
    so.outliers_max = static_cast<int>(ctx.cfg.get_int("synthetic.outliers_max"));
    so.offset = ctx.cfg.get_double("synthetic.offset");
    const auto count = ctx.cfg.get_int("synthetic.count");
    const auto val = ctx.cfg.get_int("synthetic.validation");
    if (count < 1 || val < 0) throw UsageError("synthetic.count must be >= 1 and synthetic.validation >= 0");
    const auto instances = data::gen_synthetic_instances(static_cast<std::size_t>(count + val),
                                                         ctx.cfg.get_u64("synthetic.seed"), so);
    {
      auto f = open_out(ctx.output("synthetic.syni"));
      data::save_synthetic(f, instances);
    }
    ds = defense::synthetic_dataset(instances, static_cast<std::size_t>(val));
  } else {
    throw UsageError("collect.source must be simulation or synthetic");
  }
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  defense::save_dataset_file(target, ds);
  ctx.add_output(target);
  ctx.out << "collect: " << ds.instances.size() << " instances of " << ds.n() << " x " << ds.width()
          << " features, " << ds.meta.dropped << " dropped\n";
  return kOk;
}

defense::TrainOptions train_options(const Config& cfg) {
  defense::TrainOptions o;
  o.epochs = static_cast<int>(cfg.get_int("defense.epochs"));
  o.hidden = static_cast<std::size_t>(cfg.get_int("defense.hidden"));
  o.latent = static_cast<std::size_t>(cfg.get_int("defense.latent"));
  o.c = cfg.get_double("defense.c");
  o.eps = cfg.get_double("defense.eps");
  o.passes = static_cast<int>(cfg.get_int("defense.passes"));
  o.lr = cfg.get_double("defense.lr");
  o.batch = static_cast<int>(cfg.get_int("defense.batch"));
  o.seed = cfg.get_u64("defense.seed");
  o.scaling = feature_scaling_from_string(cfg.get("defense.scaling"));
  o.validate_every = static_cast<int>(cfg.get_int("defense.validate_every"));
  if (o.epochs < 0 || o.hidden < 1 || o.latent < 1 || o.batch < 1 || o.passes < 1 || o.validate_every < 1 ||
      !(o.lr > 0.0)) {
    throw UsageError("defense.*: epochs >= 0, hidden/latent/batch/passes/validate_every >= 1 and lr > 0 required");
  }
  return o;
}

int cmd_train_defense(Context& ctx) {
  defense::TrainOptions opts = train_options(ctx.cfg);
  const defense::UpdateDataset ds = load_updates(dataset_path(ctx));
  const defense::UpdateDataset train = ds.train_split();
  const defense::UpdateDataset val = ds.validation_split();
  if (train.instances.empty() || val.instances.empty()) {
    throw UsageError("update dataset needs both training and validation instances");
  }
  std::vector<std::string> rows;
  opts.progress = [&](int epoch, double loss, const defense::ValidationReport& r) {
    rows.push_back(std::to_string(epoch) + ',' + fmt(loss) + ',' + fmt(r.detection_accuracy) + ',' +
                   fmt(r.mean_l1) + ',' + ctx.run_id);
  };
  const defense::TrainResult res = defense::train_defense(train, val, opts);

  const fs::path ckpt = path_or(ctx.cfg, "train.out", ctx.out_dir / "defense.attn");
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  save_model_file(ckpt, res.model);
  ctx.add_output(ckpt);
  {
    auto f = open_out(ctx.output("training.csv"));
    f << "epoch,train_loss,val_detection_accuracy,val_mean_l1,run_id\n";
    for (const auto& r : rows) f << r << '\n';
  }
  const defense::ValidationReport shuffled =
      defense::validate(res.model, val, {.passes = 0, .shuffle_clients = true, .seed = opts.seed});
  {
    auto f = open_out(ctx.output("validation.csv"));
    f << "split,best_epoch,detection_accuracy,mean_l1,instances,run_id\n";
    f << "validation," << res.best_epoch << ',' << fmt(res.best.detection_accuracy) << ',' << fmt(res.best.mean_l1)
      << ',' << res.best.instances << ',' << ctx.run_id << '\n';
    f << "validation_shuffled," << res.best_epoch << ',' << fmt(shuffled.detection_accuracy) << ','
      << fmt(shuffled.mean_l1) << ',' << shuffled.instances << ',' << ctx.run_id << '\n';
  }
  ctx.out << "train-defense: best epoch " << res.best_epoch << ", validation detection "
          << fmt(res.best.detection_accuracy) << ", mean L1 " << fmt(res.best.mean_l1) << '\n';
  return kOk;
}

int cmd_evaluate(Context& ctx) {
  const sim::SimConfig base = to_sim_config(ctx.cfg);
  const auto kinds = ctx.cfg.get_list("evaluate.aggregators");
  if (kinds.empty()) throw UsageError("evaluate.aggregators is empty");
  const sim::SimData data = sim::prepare_data(base);
  std::vector<std::string> summary;
  for (const auto& kind : kinds) {
    sim::SimConfig sc = base;
    sc.aggregator.kind = kind;
    if (kind == "adaptive" && sc.aggregator.model_path.empty()) sc.aggregator.model_path = defense_path(ctx).string();
    check_adaptive_model(sc.aggregator);
    sc.validate();
    auto agg = sim::make_aggregator(sc.aggregator);
    const sim::SimResult res = sim::run(sc, data, *agg);
    {
      auto f = open_out(ctx.output("metrics_" + kind + ".csv"));
      sim::write_metrics_csv(f, res.metrics, kind, attacker_count(sc), sc.n_clients, ctx.run_id);
    }
    double asr_sum = 0.0;
    int asr_n = 0;
    for (const auto& m : res.metrics) {
      if (m.asr) {
        asr_sum += *m.asr;
        ++asr_n;
      }
    }
    const auto& last = res.metrics.back();
    summary.push_back(kind + ',' + fmt(last.acc) + ',' + (last.asr ? fmt(*last.asr) : "") + ',' +
                      (asr_n ? fmt(asr_sum / asr_n) : "") + ',' + ctx.run_id);
    ctx.out << "evaluate: " << kind << " final acc " << fmt(last.acc);
    if (last.asr) ctx.out << ", asr " << fmt(*last.asr);
    ctx.out << '\n';
  }
  auto f = open_out(ctx.output("evaluate.csv"));
  f << "aggregator,final_acc,final_asr,mean_asr,run_id\n";
  for (const auto& s : summary) f << s << '\n';
  return kOk;
}

int cmd_importance(Context& ctx) {
  const AttentionModel model = load_defense(defense_path(ctx));
  const auto imp = feature_importance(model);
  {
    auto f = open_out(ctx.output("importance.csv"));
    f << "feature,importance,run_id\n";
    for (std::size_t i = 0; i < imp.size(); ++i) f << i << ',' << fmt(imp[i]) << ',' << ctx.run_id << '\n';
  }
  // Layer grouping needs the schema the features came from.
  Schema schema;
  const fs::path ds = dataset_path(ctx);
  if (fs::is_regular_file(ds)) {
    schema = load_updates(ds).meta.schema;
  } else {
    schema = sim::task_schema(static_cast<std::size_t>(ctx.cfg.get_int("model.hidden")));
  }
  if (schema.size() * model.k_pc == model.feature_width()) {
    auto f = open_out(ctx.output("layer_importance.csv"));
    f << "layer,mean_importance,run_id\n";
    for (const auto& [name, v] : layer_importance(model, schema)) f << name << ',' << fmt(v) << ',' << ctx.run_id << '\n';
  } else {
    ctx.out << "importance: no schema matches the checkpoint width; layer table skipped\n";
  }
  ctx.out << "importance: " << imp.size() << " features\n";
  return kOk;
}

int cmd_verify_bounds(Context& ctx) {
  const auto cases = ctx.cfg.get_int("bounds.cases");
  if (cases < 1) throw UsageError("bounds.cases must be >= 1");
  const bool tight = ctx.cfg.get_bool("bounds.tight");
  const analysis::FuzzSummary s = analysis::fuzz_bounds(static_cast<std::size_t>(cases), ctx.cfg.get_u64("bounds.seed"));
  {
    auto f = open_out(ctx.output("bounds.csv"));
    f << "cases,violations,violations_tight,benign_truncations,worst_ratio,run_id\n";
    f << s.cases << ',' << s.violations << ',' << s.violations_tight << ',' << s.benign_truncations << ','
      << fmt(s.worst_ratio) << ',' << ctx.run_id << '\n';
  }
  for (std::size_t i = 0; i < s.failures.size(); ++i) {
    auto f = open_out(ctx.output("bound_failure_" + std::to_string(i) + ".json"));
    analysis::write_bound_case(f, s.failures[i], analysis::check_bound(s.failures[i]));
  }
  const std::size_t bad = s.violations + (tight ? s.violations_tight : 0);
  ctx.out << "verify-bounds: " << s.cases << " cases, " << s.violations << " violations";
  if (tight) ctx.out << ", " << s.violations_tight << " tight violations";
  ctx.out << ", worst lhs/rhs " << fmt(s.worst_ratio) << '\n';
  return bad == 0 ? kOk : kBoundViolation;
}

int cmd_sweep(Context& ctx) {
  const sim::SimConfig base = to_sim_config(ctx.cfg);
  const AttentionModel model = load_defense(defense_path(ctx));
  std::vector<analysis::TransferPoint> grid;
  for (int sy : ctx.cfg.get_int_list("sweep.shift_y")) {
    for (int sx : ctx.cfg.get_int_list("sweep.shift_x")) {
      for (int g : ctx.cfg.get_int_list("sweep.gap")) {
        for (int a : ctx.cfg.get_int_list("sweep.attackers")) grid.push_back({sy, sx, g, a});
      }
    }
  }
  if (grid.empty()) throw UsageError("sweep grid is empty");
  const auto rows = analysis::sweep_transfer(base, model, grid);
  auto f = open_out(ctx.output("transfer.csv"));
  analysis::write_transfer_csv(f, rows, ctx.run_id);
  ctx.out << "sweep: " << rows.size() << " grid points\n";
  return kOk;
}

int cmd_ablation(Context& ctx) {
  const sim::SimConfig base = to_sim_config(ctx.cfg);
  const AttentionModel model = load_defense(defense_path(ctx));
  const auto runs = ctx.cfg.get_int("ablation.runs");
  if (runs < 1) throw UsageError("ablation.runs must be >= 1");
  const auto rows = analysis::ablation(base, model, static_cast<int>(runs));
  {
    auto f = open_out(ctx.output("ablation.csv"));
    analysis::write_ablation_csv(f, rows, ctx.run_id);
  }
  for (const auto& r : rows) ctx.out << "ablation: " << r.variant << " acc " << fmt(r.acc) << " asr " << fmt(r.asr) << '\n';

  // Permutation sensitivity: only when the update dataset is around.
  const fs::path ds_path = dataset_path(ctx);
  if (fs::is_regular_file(ds_path)) {
    const defense::UpdateDataset ds = load_updates(ds_path);
    const auto train = ds.train_split();
    const auto val = ds.validation_split();
    if (!train.instances.empty() && !val.instances.empty()) {
      analysis::MlpBaselineOptions mo;
      mo.epochs = static_cast<int>(ctx.cfg.get_int("ablation.mlp_epochs"));
      mo.eps = model.eps;
      mo.scaling = model.scaling;
      const auto mlp = analysis::train_mlp_baseline(train, mo);
      const std::uint64_t seed = ctx.cfg.get_u64("defense.seed");
      auto f = open_out(ctx.output("ablation_permutation.csv"));
      f << "model,order,detection_accuracy,mean_l1,run_id\n";
      const auto emit = [&](const char* name, const char* order, const defense::ValidationReport& r) {
        f << name << ',' << order << ',' << fmt(r.detection_accuracy) << ',' << fmt(r.mean_l1) << ',' << ctx.run_id
          << '\n';
      };
      emit("attention", "original", defense::validate(model, val, {.passes = 0, .shuffle_clients = false, .seed = seed}));
      emit("attention", "shuffled", defense::validate(model, val, {.passes = 0, .shuffle_clients = true, .seed = seed}));
      emit("mlp", "original", analysis::validate_mlp_baseline(mlp, val, false, seed));
      emit("mlp", "shuffled", analysis::validate_mlp_baseline(mlp, val, true, seed));
    }
  }
  return kOk;
}

const std::map<std::string, std::function<int(Context&)>>& table() {
  static const std::map<std::string, std::function<int(Context&)>> t = {
      {"partition", cmd_partition},       {"simulate", cmd_simulate},     {"collect", cmd_collect},
      {"train-defense", cmd_train_defense}, {"evaluate", cmd_evaluate},   {"importance", cmd_importance},
      {"verify-bounds", cmd_verify_bounds}, {"sweep", cmd_sweep},         {"ablation", cmd_ablation},
  };
  return t;
}

void write_manifest(const Context& ctx, const std::string& started, int code) {
  nlohmann::ordered_json j;
  j["id"] = ctx.run_id;
  j["command"] = ctx.command;
  j["config_digest"] = io::hex64(ctx.cfg.digest());
  j["tool_version"] = kToolVersion;
  j["seeds"] = {{"data", ctx.cfg.get_u64("seeds.data")},
                {"init", ctx.cfg.get_u64("seeds.init")},
                {"attack", ctx.cfg.get_u64("seeds.attack")}};
  j["started"] = started;
  j["finished"] = utc_now();
  j["exit_code"] = code;
  j["outputs"] = ctx.outputs;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& k : config_keys()) cfg[k.key] = ctx.cfg.get(k.key);
  j["config"] = cfg;
  auto f = open_out(ctx.out_dir / ("manifest_" + ctx.command + ".json"));
  f << j.dump(2) << '\n';
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [k, _] : table()) v.push_back(k);
    return v;
  }();
  return names;
}

std::string manifest_id(const std::string& command, const Config& config) {
  return io::hex64(io::fnv1a(command + '\n' + config.canonical()));
}

int run_command(const std::string& command, const Config& config, std::ostream& out, std::ostream& err) {
  const auto it = table().find(command);
  if (it == table().end()) {
    err << "error: unknown command '" << command << "'\n";
    return kInvalidConfig;
  }
  const std::string started = utc_now();
  Context ctx{config, command, manifest_id(command, config), fs::path(config.get("out.dir")), {}, out};
  int code = kOk;
  try {
    fs::create_directories(ctx.out_dir);
    code = it->second(ctx);
  } catch (const MissingArtifact& e) {
    err << "error: " << e.what() << '\n';
    return kMissingArtifact;
  } catch (const sim::SimulationAborted& e) {
    err << "error: run aborted at round " << e.round() << ": " << e.what() << '\n';
    code = kAborted;
  } catch (const std::invalid_argument& e) {  // UsageError, StructuralError
    err << "error: invalid config: " << e.what() << '\n';
    return kInvalidConfig;
  } catch (const std::domain_error& e) {  // PreconditionError
    err << "error: invalid config: " << e.what() << '\n';
    return kInvalidConfig;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kInvalidConfig;
  }
  write_manifest(ctx, started, code);
  return code;
}

int run_command(const std::string& command, const fs::path& config_path, const std::vector<std::string>& overrides,
                std::ostream& out, std::ostream& err) {
  Config cfg;
  try {
    cfg = Config::load(config_path);
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw UsageError("override '" + o + "' is not key=value");
      cfg.set(o.substr(0, eq), o.substr(eq + 1));
    }
  } catch (const std::invalid_argument& e) {
    err << "error: invalid config: " << e.what() << '\n';
    return kInvalidConfig;
  }
  return run_command(command, cfg, out, err);
}

}  // namespace adagg::cli
