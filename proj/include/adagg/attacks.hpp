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

// Client-side adversarial behaviours: update negation, pixel-pattern
// backdoor poisoning and label swapping.

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "adagg/data.hpp"
#include "adagg/param_space.hpp"

namespace adagg::attacks {

enum class AttackKind { kNone, kOmniscient, kLabelFlip, kBackdoor };

const char* to_string(AttackKind kind);
/// Throws UsageError for unknown names.
AttackKind attack_kind_from_string(const std::string& name);

struct BackdoorParams {
  int target_label = 2;
  double poison_fraction = 0.5;
  int shift_y = 0;
  int shift_x = 0;
  int gap = 0;
};

struct AttackScenario {
  AttackKind kind = AttackKind::kNone;
  std::set<int> attacker_ids;
  BackdoorParams backdoor;
  int flip_a = 1;
  int flip_b = 7;

  [[nodiscard]] bool is_attacker(int client_id) const { return attacker_ids.count(client_id) > 0; }
};

/// Every coordinate negated.
LayeredVector apply_omniscient(const LayeredVector& update);

/// Pixel (row, col) pairs stamped by the scaled bar pattern: four 1x2 bars
/// on rows shift_y and shift_y+2, columns [shift_x, shift_x+1] and
/// [shift_x+3+gap, shift_x+4+gap]. Throws UsageError when the footprint
/// leaves the 8x8 image.
std::vector<std::pair<int, int>> backdoor_pixels(int shift_y, int shift_x, int gap);

using Image = std::array<double, data::kPixels>;

Image apply_backdoor_pattern(const Image& image, int shift_y, int shift_x, int gap);

/// Stamps floor(poison_fraction * count) samples chosen by `seed` and sets
/// their label to the target. Returns the poisoned copy.
data::ClientShard poison_shard(const data::ClientShard& shard, const BackdoorParams& params, std::uint64_t seed);

/// Swaps labels a and b. Throws PreconditionError when a == b.
data::ClientShard apply_label_flip(const data::ClientShard& shard, int a, int b);

}  // namespace adagg::attacks
