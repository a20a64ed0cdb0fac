// SPDX-License-Identifier: Apache-2.0
#include "sspam/compare.hpp"

#include <algorithm>
#include <sstream>

namespace sspam::compare {
namespace {

std::string cell(const std::optional<double>& v) {
  return v ? harness::format_real(*v) : "n/a";
}

std::string describe(const optim::OptimizerSpec& spec) {
  std::string s(optim::to_string(spec.base));
  for (auto t : spec.transforms) s += "+" + std::string(optim::to_string(t));
  return s;
}

}  // namespace

std::vector<std::string> non_optimizer_differences(const std::vector<Input>& inputs) {
  std::vector<std::string> keys;
  if (inputs.empty()) return keys;
  const auto first = config::entries(inputs.front().config);
  for (std::size_t i = 1; i < inputs.size(); ++i) {
    const auto other = config::entries(inputs[i].config);
    for (const auto& [key, value] : first) {
      if (key.rfind("optimizer.", 0) == 0 || key.rfind("sweep.", 0) == 0) continue;
      if (key == "harness.target_loss") continue;  // only compare reads it
      auto it = other.find(key);
      if (it != other.end() && it->second == value) continue;
      if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
    }
  }
  return keys;
}

std::optional<std::int64_t> steps_to_target(const std::vector<harness::StepRecord>& records,
                                            double target) {
  for (const auto& r : records) {
    if (r.diverged) break;
    if (r.loss <= target) return r.step;
  }
  return std::nullopt;
}

Table run(const std::vector<Input>& inputs, const std::optional<std::filesystem::path>& out_dir) {
  if (inputs.size() < 2) {
    throw harness::ConfigError("--config", 0, "compare needs at least two configs");
  }
  const auto diff = non_optimizer_differences(inputs);
  if (!diff.empty()) {
    std::string list;
    for (const auto& k : diff) list += (list.empty() ? "" : ", ") + k;
    throw harness::ConfigError(diff.front(), 0,
                               "configs differ outside the optimizer block: " + list);
  }
  if (out_dir) std::filesystem::create_directories(*out_dir);

  std::vector<harness::RunResult> results;
  Table table;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Input& in = inputs[i];
    results.push_back(harness::run(in.config.run));
    const auto& r = results.back();
    Row row;
    row.label = in.label.empty() ? "config" + std::to_string(i) : in.label;
    row.optimizer = describe(in.config.run.optimizer);
    row.diverged = r.diverged;
    if (!r.diverged) row.final_loss = r.final_train_loss();
    row.final_val_loss = r.final_val_loss;
    if (out_dir) {
      const std::string name = "compare_" + std::to_string(i) + "_" + row.label + ".csv";
      harness::write_file_atomic(*out_dir / name, harness::records_to_csv(r.records));
      row.records_path = (*out_dir / name).string();
    }
    table.rows.push_back(std::move(row));
  }

  if (inputs.front().config.target_loss) {
    table.target_loss = *inputs.front().config.target_loss;
  } else {
    bool any = false;
    for (const Row& row : table.rows) {
      if (!row.final_loss) continue;
      table.target_loss = any ? std::max(table.target_loss, *row.final_loss) : *row.final_loss;
      any = true;
    }
  }
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    table.rows[i].steps_to_target = steps_to_target(results[i].records, table.target_loss);
  }
  if (out_dir) harness::write_file_atomic(*out_dir / "compare.csv", table_to_csv(table));
  return table;
}

std::string format_table(const Table& table) {
  std::vector<std::vector<std::string>> cells;
  cells.push_back({"config", "optimizer", "final_loss", "final_val_loss", "steps_to_target"});
  for (const Row& r : table.rows) {
    cells.push_back({r.label, r.optimizer, r.diverged ? "diverged" : cell(r.final_loss),
                     cell(r.final_val_loss),
                     r.steps_to_target ? std::to_string(*r.steps_to_target) : "n/a"});
  }
  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  std::ostringstream out;
  out << "target_loss " << harness::format_real(table.target_loss) << '\n';
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      out << line[c];
      if (c + 1 < line.size()) out << std::string(width[c] - line[c].size() + 2, ' ');
    }
    out << '\n';
  }
  return out.str();
}

std::string table_to_csv(const Table& table) {
  std::ostringstream out;
  out << "config,optimizer,final_loss,final_val_loss,steps_to_target,records_path\n";
  for (const Row& r : table.rows) {
    out << r.label << ',' << r.optimizer << ',' << (r.diverged ? "diverged" : cell(r.final_loss))
        << ',' << cell(r.final_val_loss) << ','
        << (r.steps_to_target ? std::to_string(*r.steps_to_target) : "n/a") << ','
        << r.records_path << '\n';
  }
  return out.str();
}

}  // namespace sspam::compare
