// SPDX-License-Identifier: Apache-2.0
#pragma once

// Side-by-side runs of configs that differ only in their optimizer block.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sspam/config.hpp"

namespace sspam::compare {

struct Row {
  std::string label;  // config file stem, or "config<i>"
  std::string optimizer;
  bool diverged = false;
  std::optional<double> final_loss;  // last training loss
  std::optional<double> final_val_loss;
  std::optional<std::int64_t> steps_to_target;
  std::string records_path;
};

struct Table {
  double target_loss = 0.0;
  std::vector<Row> rows;
};

struct Input {
  std::string label;
  config::FileConfig config;
};

/// Keys whose effective values differ between any two configs, excluding
/// optimizer.*, sweep.* and harness.target_loss. Empty means the configs are
/// comparable.
std::vector<std::string> non_optimizer_differences(const std::vector<Input>& inputs);

/// Throws harness::ConfigError when fewer than two configs are given or they
/// differ outside the optimizer block. The target loss is the first config's
/// harness.target_loss, else the largest final training loss among runs that
/// did not diverge.
Table run(const std::vector<Input>& inputs, const std::optional<std::filesystem::path>& out_dir);

/// First step whose training loss is at or below target.
std::optional<std::int64_t> steps_to_target(const std::vector<harness::StepRecord>& records,
                                            double target);

/// Aligned plain-text table; missing values print as "n/a".
std::string format_table(const Table& table);
std::string table_to_csv(const Table& table);

}  // namespace sspam::compare
