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

// adagg: federated attack/defense simulation driver.

#include <CLI11.hpp>
#include <iomanip>
#include <iostream>

#include "adagg/commands.hpp"
#include "adagg/config.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Federated learning attack/defense simulator with an attention-based robust aggregator"};
  app.set_version_flag("--version", adagg::cli::kToolVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  for (const auto& name : adagg::cli::command_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("config", config_path, "config file (dotted key=value lines)")->required();
    sub->add_option("-s,--set", overrides, "override a config entry, key=value");
  }
  app.add_subcommand("keys", "list every config key with its default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : adagg::cli::kInvalidConfig;
  }

  const auto* sub = app.get_subcommands().front();
  if (sub->get_name() == "keys") {
    for (const auto& k : adagg::config_keys()) {
      std::cout << std::left << std::setw(24) << k.key << ' ' << std::setw(12)
                << (k.default_value.empty() ? "(unset)" : k.default_value) << ' ' << k.help << '\n';
    }
    return 0;
  }
  return adagg::cli::run_command(sub->get_name(), config_path, overrides, std::cout, std::cerr);
}
