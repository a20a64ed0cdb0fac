// SPDX-License-Identifier: Apache-2.0
#pragma once

// Run-config files: one `key = value` per line, dotted keys for sections,
// `#` starts a comment. Every key has a default, so an empty file is valid.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sspam/harness.hpp"

namespace sspam::config {

struct FileConfig {
  harness::RunConfig run;
  std::vector<double> lr_grid;  // empty: sweep uses the "fine" preset
  std::optional<double> target_loss;
};

/// Throws harness::ConfigError naming the key and line for unknown keys,
/// malformed values and constraint violations.
FileConfig parse_config_text(const std::string& text);
FileConfig parse_config(const std::filesystem::path& path);

/// Every key with its effective value, formatted canonically.
std::map<std::string, std::string> entries(const FileConfig& cfg);

/// Keys accepted by the parser, in documentation order.
const std::vector<std::string>& known_keys();

}  // namespace sspam::config
