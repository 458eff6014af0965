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

#include <random>
#include <vector>

#include "adagg/param_space.hpp"

namespace adagg::testing {

/// Two layers splitting d coordinates roughly in half.
inline Schema two_layer_schema(std::size_t d) {
  const std::size_t a = d / 2 == 0 ? 1 : d / 2;
  if (a >= d) return {{"w", d}};
  return {{"w", a}, {"b", d - a}};
}

inline LayeredVector random_vector(std::mt19937_64& rng, const Schema& schema, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> flat(schema_dim(schema));
  for (auto& v : flat) v = g(rng);
  return LayeredVector::unflatten(schema, flat);
}

inline RoundBatch random_batch(std::mt19937_64& rng, int n, const Schema& schema, double scale = 1.0) {
  std::vector<LayeredVector> ups;
  for (int i = 0; i < n; ++i) ups.push_back(random_vector(rng, schema, scale));
  return RoundBatch::from_updates(std::move(ups));
}

/// Same batch with rows reordered: position i holds original perm[i].
inline RoundBatch permuted(const RoundBatch& b, const std::vector<std::size_t>& perm) {
  RoundBatch out;
  for (auto p : perm) {
    out.updates.push_back(b.updates[p]);
    out.client_ids.push_back(b.client_ids[p]);
  }
  if (b.truth_labels) {
    std::vector<bool> l;
    for (auto p : perm) l.push_back((*b.truth_labels)[p]);
    out.truth_labels = l;
  }
  return out;
}

inline double max_abs_diff(const LayeredVector& a, const LayeredVector& b) {
  const auto x = a.flatten();
  const auto y = b.flatten();
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

}  // namespace adagg::testing
