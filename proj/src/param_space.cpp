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

#include "adagg/param_space.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <unordered_set>

#include "adagg/binary_io.hpp"
#include "adagg/error.hpp"

namespace adagg {

namespace {
constexpr std::uint32_t kLayeredVersion = 1;
}

std::size_t schema_dim(const Schema& schema) {
  std::size_t d = 0;
  for (const auto& s : schema) d += s.length;
  return d;
}

std::uint64_t schema_digest(const Schema& schema) {
  std::string canon;
  for (const auto& s : schema) {
    canon += s.name;
    canon += ':';
    canon += std::to_string(s.length);
    canon += ';';
  }
  return io::fnv1a(canon);
}

LayeredVector::LayeredVector(std::vector<Block> blocks) : blocks_(std::move(blocks)) {
  std::unordered_set<std::string> seen;
  for (const auto& b : blocks_) {
    if (!seen.insert(b.name).second) {
      throw StructuralError("duplicate layer name '" + b.name + "'");
    }
    total_dim_ += b.values.size();
  }
  if (total_dim_ == 0) throw UsageError("layered vector must have total_dim > 0");
}

LayeredVector LayeredVector::zeros(const Schema& schema) {
  std::vector<Block> blocks;
  blocks.reserve(schema.size());
  for (const auto& s : schema) blocks.push_back({s.name, std::vector<double>(s.length, 0.0)});
  return LayeredVector(std::move(blocks));
}

LayeredVector LayeredVector::unflatten(const Schema& schema, std::span<const double> flat) {
  if (flat.size() != schema_dim(schema)) {
    throw StructuralError("flat length " + std::to_string(flat.size()) + " does not match schema dim " +
                          std::to_string(schema_dim(schema)));
  }
  std::vector<Block> blocks;
  blocks.reserve(schema.size());
  std::size_t off = 0;
  for (const auto& s : schema) {
    blocks.push_back({s.name, std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(off),
                                                  flat.begin() + static_cast<std::ptrdiff_t>(off + s.length))});
    off += s.length;
  }
  return LayeredVector(std::move(blocks));
}

Schema LayeredVector::schema() const {
  Schema s;
  s.reserve(blocks_.size());
  for (const auto& b : blocks_) s.push_back({b.name, b.values.size()});
  return s;
}

bool LayeredVector::same_schema(const LayeredVector& other) const {
  if (blocks_.size() != other.blocks_.size()) return false;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i].name != other.blocks_[i].name ||
        blocks_[i].values.size() != other.blocks_[i].values.size()) {
      return false;
    }
  }
  return true;
}

std::vector<double> LayeredVector::flatten() const {
  std::vector<double> flat;
  flat.reserve(total_dim_);
  for (const auto& b : blocks_) flat.insert(flat.end(), b.values.begin(), b.values.end());
  return flat;
}

double LayeredVector::l1_norm() const {
  double s = 0.0;
  for (const auto& b : blocks_)
    for (double v : b.values) s += std::abs(v);
  return s;
}

double LayeredVector::l2_norm() const {
  double s = 0.0;
  for (const auto& b : blocks_)
    for (double v : b.values) s += v * v;
  return std::sqrt(s);
}

bool LayeredVector::all_finite() const {
  for (const auto& b : blocks_)
    for (double v : b.values)
      if (!std::isfinite(v)) return false;
  return true;
}

bool operator==(const LayeredVector& a, const LayeredVector& b) {
  if (!a.same_schema(b)) return false;
  for (std::size_t i = 0; i < a.blocks_.size(); ++i) {
    if (a.blocks_[i].values != b.blocks_[i].values) return false;
  }
  return true;
}

Schema RoundBatch::schema() const {
  if (updates.empty()) return {};
  return updates.front().schema();
}

void RoundBatch::validate() const {
  if (updates.size() < 2) throw PreconditionError("round batch needs at least 2 updates");
  if (client_ids.size() != updates.size()) throw StructuralError("client_ids length differs from update count");
  for (const auto& u : updates) {
    if (!u.same_schema(updates.front())) throw StructuralError("round batch updates have different schemas");
  }
  if (truth_labels) {
    if (truth_labels->size() != updates.size()) throw StructuralError("truth_labels length differs from update count");
    bool any_benign = false;
    for (bool b : *truth_labels) any_benign = any_benign || b;
    if (!any_benign) throw PreconditionError("round batch has no benign client");
  }
}

RoundBatch RoundBatch::from_updates(std::vector<LayeredVector> updates, std::optional<std::vector<bool>> labels) {
  RoundBatch batch;
  batch.client_ids.resize(updates.size());
  for (std::size_t i = 0; i < updates.size(); ++i) batch.client_ids[i] = static_cast<int>(i);
  batch.updates = std::move(updates);
  batch.truth_labels = std::move(labels);
  return batch;
}

LayeredVector axpy(double a, const LayeredVector& x, const LayeredVector& y) {
  if (!x.same_schema(y)) throw StructuralError("axpy: schema mismatch");
  LayeredVector out = y;
  for (std::size_t l = 0; l < x.layer_count(); ++l) {
    auto dst = out.values(l);
    auto src = x.values(l);
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += a * src[k];
  }
  return out;
}

LayeredVector weighted_sum(const RoundBatch& batch, std::span<const double> weights) {
  if (weights.size() != batch.size()) {
    throw StructuralError("weighted_sum: " + std::to_string(weights.size()) + " weights for " +
                          std::to_string(batch.size()) + " updates");
  }
  if (batch.updates.empty()) throw StructuralError("weighted_sum: empty batch");
  LayeredVector out = LayeredVector::zeros(batch.schema());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch.updates[i].same_schema(out)) throw StructuralError("weighted_sum: schema mismatch");
    if (weights[i] == 0.0) continue;
    for (std::size_t l = 0; l < out.layer_count(); ++l) {
      auto dst = out.values(l);
      auto src = batch.updates[i].values(l);
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += weights[i] * src[k];
    }
  }
  return out;
}

std::vector<double> robust_weights(const std::vector<bool>& truth_labels) {
  std::size_t benign = 0;
  for (bool b : truth_labels) benign += b ? 1 : 0;
  if (benign == 0) throw PreconditionError("robust mean undefined: no benign client");
  std::vector<double> w(truth_labels.size(), 0.0);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = truth_labels[i] ? 1.0 / static_cast<double>(benign) : 0.0;
  return w;
}

LayeredVector robust_mean(const RoundBatch& batch) {
  if (!batch.truth_labels) throw UsageError("robust_mean requires truth labels");
  if (batch.truth_labels->size() != batch.size()) throw StructuralError("truth_labels length differs from update count");
  const auto w = robust_weights(*batch.truth_labels);
  return weighted_sum(batch, w);
}

void save_layered(std::ostream& out, const LayeredVector& v) {
  io::Writer w(out);
  w.magic("LVEC");
  w.u32(kLayeredVersion);
  w.u32(static_cast<std::uint32_t>(v.layer_count()));
  for (const auto& b : v.blocks()) {
    w.str(b.name);
    w.u64(b.values.size());
  }
  for (const auto& b : v.blocks()) w.f64s(b.values);
}

LayeredVector load_layered(std::istream& in) {
  io::Reader r(in);
  r.expect_magic("LVEC");
  const auto version = r.u32();
  if (version != kLayeredVersion) throw FormatError("unsupported LVEC version " + std::to_string(version));
  const auto layers = r.u32();
  Schema schema;
  for (std::uint32_t i = 0; i < layers; ++i) {
    LayerSpec s;
    s.name = r.str();
    s.length = r.u64();
    schema.push_back(std::move(s));
  }
  std::vector<double> flat(schema_dim(schema));
  r.f64s(flat);
  return LayeredVector::unflatten(schema, flat);
}

}  // namespace adagg
