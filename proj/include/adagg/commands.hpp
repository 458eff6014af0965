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

// Subcommand drivers behind the `adagg` executable. Each command reads one
// config file, writes its artifacts plus a manifest under out.dir and
// returns a process exit code.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "adagg/config.hpp"

namespace adagg::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int {
  kOk = 0,
  kBoundViolation = 1,
  kInvalidConfig = 2,
  kAborted = 3,
  kMissingArtifact = 4,
};

const std::vector<std::string>& command_names();

/// Stable id shared by the manifest and every CSV row of one invocation:
/// FNV-1a over the command name and the canonical config. Re-running the
/// same config overwrites the same manifest instead of emitting a new id.
std::string manifest_id(const std::string& command, const Config& config);

/// `overrides` are `key=value` strings applied after the file.
int run_command(const std::string& command, const std::filesystem::path& config_path,
                const std::vector<std::string>& overrides, std::ostream& out, std::ostream& err);

/// Same, with the config already loaded.
int run_command(const std::string& command, const Config& config, std::ostream& out, std::ostream& err);

}  // namespace adagg::cli
