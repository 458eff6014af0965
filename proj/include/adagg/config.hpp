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

// Flat experiment configuration: one `dotted.key = value` per line, `#`
// starts a comment. Every key has a documented default; unknown keys are
// rejected so typos cannot silently fall back to defaults.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "adagg/simulator.hpp"

namespace adagg {

struct ConfigKey {
  std::string key;
  std::string default_value;
  std::string help;
};

/// All recognised keys, sorted by name.
const std::vector<ConfigKey>& config_keys();

class Config {
 public:
  /// Throws UsageError naming the line for malformed or unknown entries.
  static Config parse(std::string_view text);
  static Config load(const std::filesystem::path& path);

  /// Explicit value if set, else the documented default.
  [[nodiscard]] std::string get(const std::string& key) const;
  [[nodiscard]] bool is_set(const std::string& key) const;
  [[nodiscard]] double get_double(const std::string& key) const;
  [[nodiscard]] long long get_int(const std::string& key) const;
  [[nodiscard]] std::uint64_t get_u64(const std::string& key) const;
  [[nodiscard]] bool get_bool(const std::string& key) const;
  /// Comma-separated list; empty value gives an empty list.
  [[nodiscard]] std::vector<std::string> get_list(const std::string& key) const;
  [[nodiscard]] std::vector<int> get_int_list(const std::string& key) const;

  /// Throws UsageError for unknown keys.
  void set(const std::string& key, const std::string& value);

  /// Sorted `key=value` lines over every key with defaults filled in.
  [[nodiscard]] std::string canonical() const;
  /// FNV-1a of canonical(); independent of key order, spacing and comments.
  [[nodiscard]] std::uint64_t digest() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Builds and validates the simulation description.
sim::SimConfig to_sim_config(const Config& config);

}  // namespace adagg
