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

#include "adagg/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "adagg/binary_io.hpp"
#include "adagg/error.hpp"

namespace adagg {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> k = {
      {"data.samples", "10000", "surrogate digit samples generated"},
      {"data.noise", "0.1", "pixel noise standard deviation of the surrogate digits"},
      {"data.csv", "", "optional CSV with 64 pixel columns and a label column"},
      {"data.test_fraction", "0.2", "fraction held by the server for evaluation and defense collection"},
      {"partition.alpha", "0.9", "Dirichlet concentration per label"},
      {"partition.batch", "16", "local batch size; shards are truncated to a multiple of it"},
      {"model.hidden", "32", "hidden width of the 64-h-10 task model"},
      {"sim.clients", "10", "number of clients, all selected every round"},
      {"sim.rounds", "30", "communication rounds"},
      {"sim.lr", "0.1", "client SGD learning rate"},
      {"sim.local_epochs", "1", "local epochs per round (must be 1)"},
      {"sim.shuffle_local", "true", "shuffle each client's samples every local epoch"},
      {"sim.threads", "1", "worker threads for client training"},
      {"agg.kind", "fedavg",
       "fedavg|coord_median|geo_median|multi_krum|foolsgold|residual|adaptive|robust_mean"},
      {"agg.m", "0", "Multi-Krum selection count; 0 means floor(n/2)-2"},
      {"agg.kappa", "1", "FoolsGold confidence"},
      {"agg.lambda", "2", "residual reweighing interval multiplier"},
      {"agg.delta", "0.1", "residual reweighing confidence cut"},
      {"agg.model", "", "attention model checkpoint for agg.kind=adaptive"},
      {"agg.c", "", "override of the checkpoint's softmax scale"},
      {"agg.eps", "", "override of the checkpoint's truncation factor"},
      {"agg.passes", "0", "reweighting passes at inference; 0 uses the checkpoint value"},
      {"attack.kind", "none", "none|omniscient|label_flip|backdoor"},
      {"attack.attackers", "0", "attackers are clients 0..k-1 unless attack.ids is set"},
      {"attack.ids", "", "explicit comma-separated attacker client ids"},
      {"attack.target", "2", "backdoor target label"},
      {"attack.poison_fraction", "0.5", "fraction of each attacker shard that is stamped"},
      {"attack.shift_y", "0", "backdoor pattern row offset"},
      {"attack.shift_x", "0", "backdoor pattern column offset"},
      {"attack.gap", "0", "extra columns between the two bar columns"},
      {"attack.flip_a", "1", "label flip class a"},
      {"attack.flip_b", "7", "label flip class b"},
      {"seeds.data", "1", "dataset, split and partition seed"},
      {"seeds.init", "2", "global model initialisation seed"},
      {"seeds.attack", "3", "attacker selection, poisoning and client shuffling seed"},
      {"out.dir", "out", "output directory"},
      {"collect.source", "simulation", "simulation|synthetic"},
      {"collect.runs", "3", "simulations per attack kind; runs with index%3==2 are validation"},
      {"collect.kinds", "backdoor", "comma-separated attack kinds to simulate"},
      {"collect.attackers_min", "1", "smallest attacker count in the cycle"},
      {"collect.attackers_max", "4", "largest attacker count in the cycle"},
      {"collect.k_pc", "10", "principal components kept per layer"},
      {"collect.seed", "11", "collection seed"},
      {"collect.aggregator", "robust_mean", "server aggregator while collecting"},
      {"collect.out", "", "dataset path; default <out.dir>/updates.upds"},
      {"synthetic.count", "2048", "synthetic training instances"},
      {"synthetic.validation", "256", "additional held-out synthetic instances"},
      {"synthetic.seed", "5", "synthetic generator seed"},
      {"synthetic.outliers_min", "3", "fewest outliers per instance"},
      {"synthetic.outliers_max", "3", "most outliers per instance"},
      {"synthetic.offset", "3", "outlier shift of the first third of the coordinates"},
      {"defense.hidden", "128", "encoder hidden width"},
      {"defense.latent", "64", "encoder output width"},
      {"defense.c", "10", "softmax scale"},
      {"defense.eps", "0.5", "truncation factor (cut at eps/n)"},
      {"defense.passes", "5", "reweighting passes during training"},
      {"defense.epochs", "500", "training epochs"},
      {"defense.lr", "0.001", "Adam learning rate"},
      {"defense.batch", "16", "instances per Adam step"},
      {"defense.seed", "7", "encoder initialisation and shuffling seed"},
      {"defense.scaling", "none", "none|zscore|max_norm per-instance feature scaling"},
      {"defense.validate_every", "1", "epochs between validation passes"},
      {"train.dataset", "", "dataset for train-defense; default <out.dir>/updates.upds"},
      {"train.out", "", "checkpoint path; default <out.dir>/defense.attn"},
      {"bounds.cases", "1000", "random cases for verify-bounds"},
      {"bounds.seed", "2024", "verify-bounds seed"},
      {"bounds.tight", "false", "also require the tighter pre-simplification bound"},
      {"sweep.shift_y", "0", "comma-separated shift_y values"},
      {"sweep.shift_x", "0", "comma-separated shift_x values"},
      {"sweep.gap", "0", "comma-separated gap values"},
      {"sweep.attackers", "1,2,3,4", "comma-separated attacker counts"},
      {"ablation.runs", "3", "seeded runs averaged per variant"},
      {"ablation.mlp_epochs", "50", "epochs for the MLP weighting baseline"},
      {"evaluate.aggregators", "fedavg,adaptive", "aggregators compared by evaluate"},
  };
  std::sort(k.begin(), k.end(), [](const ConfigKey& a, const ConfigKey& b) { return a.key < b.key; });
  return k;
}

const ConfigKey* find_key(const std::string& key) {
  const auto& keys = config_keys();
  const auto it = std::lower_bound(keys.begin(), keys.end(), key,
                                   [](const ConfigKey& k, const std::string& name) { return k.key < name; });
  return (it != keys.end() && it->key == key) ? &*it : nullptr;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* b = text.data();
  const char* e = b + text.size();
  const auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e) throw UsageError("config key '" + key + "': '" + text + "' is not a number");
  return v;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

Config Config::parse(std::string_view text) {
  Config cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw UsageError("config line " + std::to_string(lineno) + ": empty key");
    if (!find_key(key)) throw UsageError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (cfg.values_.count(key)) {
      throw UsageError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string Config::get(const std::string& key) const {
  const ConfigKey* k = find_key(key);
  if (!k) throw UsageError("unknown config key '" + key + "'");
  const auto it = values_.find(key);
  return it == values_.end() ? k->default_value : it->second;
}

bool Config::is_set(const std::string& key) const { return !get(key).empty(); }

double Config::get_double(const std::string& key) const {
  const std::string v = get(key);
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::logic_error&) {
    throw UsageError("config key '" + key + "': '" + v + "' is not a number");
  }
}

long long Config::get_int(const std::string& key) const { return parse_number<long long>(key, get(key)); }

std::uint64_t Config::get_u64(const std::string& key) const { return parse_number<std::uint64_t>(key, get(key)); }

bool Config::get_bool(const std::string& key) const {
  std::string v = get(key);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw UsageError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<std::string> Config::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<int> Config::get_int_list(const std::string& key) const {
  std::vector<int> out;
  for (const auto& s : get_list(key)) out.push_back(parse_number<int>(key, s));
  return out;
}

void Config::set(const std::string& key, const std::string& value) {
  if (!find_key(key)) throw UsageError("unknown config key '" + key + "'");
  values_[key] = trim(value);
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& k : config_keys()) {
    out += k.key;
    out += '=';
    out += get(k.key);
    out += '\n';
  }
  return out;
}

std::uint64_t Config::digest() const { return io::fnv1a(canonical()); }

sim::SimConfig to_sim_config(const Config& c) {
  sim::SimConfig s;
  s.data.samples = static_cast<std::size_t>(c.get_int("data.samples"));
  s.data.noise = c.get_double("data.noise");
  s.data.csv_path = c.get("data.csv");
  s.data.test_fraction = c.get_double("data.test_fraction");
  s.alpha = c.get_double("partition.alpha");
  s.batch = static_cast<int>(c.get_int("partition.batch"));
  const auto hidden = c.get_int("model.hidden");
  if (hidden < 1) throw UsageError("model.hidden must be >= 1");
  s.hidden = static_cast<std::size_t>(hidden);
  s.n_clients = static_cast<int>(c.get_int("sim.clients"));
  s.rounds = static_cast<int>(c.get_int("sim.rounds"));
  s.lr = c.get_double("sim.lr");
  s.local_epochs = static_cast<int>(c.get_int("sim.local_epochs"));
  s.shuffle_local = c.get_bool("sim.shuffle_local");
  s.threads = static_cast<int>(c.get_int("sim.threads"));

  s.aggregator.kind = c.get("agg.kind");
  s.aggregator.krum_m = static_cast<int>(c.get_int("agg.m"));
  s.aggregator.kappa = c.get_double("agg.kappa");
  s.aggregator.lambda = c.get_double("agg.lambda");
  s.aggregator.delta = c.get_double("agg.delta");
  s.aggregator.model_path = c.get("agg.model");
  if (c.is_set("agg.c")) s.aggregator.c = c.get_double("agg.c");
  if (c.is_set("agg.eps")) s.aggregator.eps = c.get_double("agg.eps");
  s.aggregator.passes = static_cast<int>(c.get_int("agg.passes"));
  static const std::vector<std::string> kinds = {"fedavg",   "coord_median", "geo_median", "multi_krum",
                                                 "foolsgold", "residual",     "adaptive",   "robust_mean"};
  if (std::find(kinds.begin(), kinds.end(), s.aggregator.kind) == kinds.end()) {
    throw UsageError("unknown agg.kind '" + s.aggregator.kind + "'");
  }
  if (s.aggregator.kappa <= 0.0) throw UsageError("agg.kappa must be > 0");
  if (s.aggregator.lambda <= 0.0) throw UsageError("agg.lambda must be > 0");
  if (!(s.aggregator.delta > 0.0 && s.aggregator.delta < 1.0)) throw UsageError("agg.delta must be in (0, 1)");
  if (s.aggregator.c && *s.aggregator.c < 0.0) throw UsageError("agg.c must be >= 0");
  if (s.aggregator.eps && !(*s.aggregator.eps >= 0.0 && *s.aggregator.eps <= 1.0)) {
    throw UsageError("agg.eps must be in [0, 1]");
  }

  s.attack.kind = attacks::attack_kind_from_string(c.get("attack.kind"));
  const auto ids = c.get_int_list("attack.ids");
  if (!ids.empty()) {
    s.attack.attacker_ids.insert(ids.begin(), ids.end());
  } else {
    const auto k = c.get_int("attack.attackers");
    if (k < 0 || k >= s.n_clients) throw UsageError("attack.attackers must be in [0, sim.clients)");
    for (int i = 0; i < k; ++i) s.attack.attacker_ids.insert(i);
  }
  if (s.attack.kind == attacks::AttackKind::kNone) s.attack.attacker_ids.clear();
  s.attack.backdoor.target_label = static_cast<int>(c.get_int("attack.target"));
  s.attack.backdoor.poison_fraction = c.get_double("attack.poison_fraction");
  s.attack.backdoor.shift_y = static_cast<int>(c.get_int("attack.shift_y"));
  s.attack.backdoor.shift_x = static_cast<int>(c.get_int("attack.shift_x"));
  s.attack.backdoor.gap = static_cast<int>(c.get_int("attack.gap"));
  s.attack.flip_a = static_cast<int>(c.get_int("attack.flip_a"));
  s.attack.flip_b = static_cast<int>(c.get_int("attack.flip_b"));

  s.seeds.data = c.get_u64("seeds.data");
  s.seeds.init = c.get_u64("seeds.init");
  s.seeds.attack = c.get_u64("seeds.attack");
  s.validate();
  return s;
}

}  // namespace adagg
