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

#include "adagg/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "adagg/error.hpp"

namespace adagg::attacks {

const char* to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::kNone:
      return "none";
    case AttackKind::kOmniscient:
      return "omniscient";
    case AttackKind::kLabelFlip:
      return "label_flip";
    case AttackKind::kBackdoor:
      return "backdoor";
  }
  return "none";
}

AttackKind attack_kind_from_string(const std::string& name) {
  if (name == "none") return AttackKind::kNone;
  if (name == "omniscient") return AttackKind::kOmniscient;
  if (name == "label_flip") return AttackKind::kLabelFlip;
  if (name == "backdoor") return AttackKind::kBackdoor;
  throw UsageError("unknown attack kind '" + name + "'");
}

LayeredVector apply_omniscient(const LayeredVector& update) {
  std::vector<LayeredVector::Block> blocks = update.blocks();
  for (auto& b : blocks)
    for (auto& v : b.values) v = -v;
  return LayeredVector(std::move(blocks));
}

std::vector<std::pair<int, int>> backdoor_pixels(int shift_y, int shift_x, int gap) {
  if (shift_y < 0 || shift_x < 0 || gap < 0 || shift_y + 2 >= data::kSide || shift_x + 4 + gap >= data::kSide) {
    throw UsageError("backdoor pattern (shift_y=" + std::to_string(shift_y) + ", shift_x=" + std::to_string(shift_x) +
                     ", gap=" + std::to_string(gap) + ") leaves the image");
  }
  std::vector<std::pair<int, int>> px;
  for (int row : {shift_y, shift_y + 2}) {
    for (int col : {shift_x, shift_x + 1, shift_x + 3 + gap, shift_x + 4 + gap}) px.emplace_back(row, col);
  }
  return px;
}

Image apply_backdoor_pattern(const Image& image, int shift_y, int shift_x, int gap) {
  Image out = image;
  for (const auto& [r, c] : backdoor_pixels(shift_y, shift_x, gap)) {
    out[static_cast<std::size_t>(r * data::kSide + c)] = 1.0;
  }
  return out;
}

data::ClientShard poison_shard(const data::ClientShard& shard, const BackdoorParams& params, std::uint64_t seed) {
  if (params.poison_fraction < 0.0 || params.poison_fraction > 1.0) {
    throw UsageError("poison fraction must be in [0, 1]");
  }
  if (params.target_label < 0 || params.target_label >= data::kClasses) throw UsageError("target label out of range");
  const auto pixels = backdoor_pixels(params.shift_y, params.shift_x, params.gap);
  data::ClientShard out = shard;
  const auto count = static_cast<std::size_t>(std::floor(params.poison_fraction * static_cast<double>(shard.samples.size())));
  std::vector<std::size_t> idx(shard.samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  for (std::size_t k = 0; k < count; ++k) {
    auto& s = out.samples[idx[k]];
    for (const auto& [r, c] : pixels) s.pixels[static_cast<std::size_t>(r * data::kSide + c)] = 1.0;
    s.label = params.target_label;
  }
  return out;
}

data::ClientShard apply_label_flip(const data::ClientShard& shard, int a, int b) {
  if (a == b) throw PreconditionError("label flip needs two distinct labels");
  data::ClientShard out = shard;
  for (auto& s : out.samples) {
    if (s.label == a) {
      s.label = b;
    } else if (s.label == b) {
      s.label = a;
    }
  }
  return out;
}

}  // namespace adagg::attacks
