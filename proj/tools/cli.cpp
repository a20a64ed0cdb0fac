// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sspam/compare.hpp"
#include "sspam/config.hpp"
#include "sspam/harness.hpp"
#include "sspam/kernels.hpp"
#include "sspam/reference.hpp"

namespace sspam::cli {
namespace {

namespace fs = std::filesystem;
using harness::format_real;

struct Options {
  std::vector<std::string> configs;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 0;
  std::string lr_grid;
  bool verbose = false;
};

config::FileConfig load(const std::string& path, const Options& opt) {
  config::FileConfig cfg = config::parse_config(path);
  if (opt.seed) cfg.run.seed = *opt.seed;
  return cfg;
}

void print_entries(const config::FileConfig& cfg, std::ostream& out) {
  for (const auto& [key, value] : config::entries(cfg)) out << "  " << key << " = " << value << '\n';
}

int cmd_run(const Options& opt, std::ostream& out) {
  const config::FileConfig cfg = load(opt.configs.front(), opt);
  if (opt.verbose) {
    out << "kernels: " << kernels::active_name() << '\n';
    print_entries(cfg, out);
  }
  const harness::RunResult result = harness::run(cfg.run);
  const fs::path dir(opt.out_dir);
  fs::create_directories(dir);
  const fs::path csv = dir / (fs::path(opt.configs.front()).stem().string() + ".csv");
  harness::write_file_atomic(csv, harness::records_to_csv(result.records));

  out << "steps " << result.records.size() << '\n';
  if (result.diverged) {
    out << "diverged at step " << (result.records.empty() ? 0 : result.records.back().step)
        << '\n';
  } else {
    out << "final_loss " << format_real(*result.final_train_loss()) << '\n';
    out << "final_val_loss " << format_real(*result.final_val_loss) << '\n';
  }
  out << "loss_spikes " << result.loss_spikes << '\n';
  out << "records " << csv.string() << '\n';
  return result.diverged ? kAllDiverged : kOk;
}

int cmd_sweep(const Options& opt, std::ostream& out) {
  const config::FileConfig cfg = load(opt.configs.front(), opt);
  std::vector<double> grid = cfg.lr_grid;
  if (!opt.lr_grid.empty()) {
    try {
      grid = harness::parse_lr_grid(opt.lr_grid);
    } catch (const harness::ConfigError& e) {
      throw harness::ConfigError("--lr-grid", 0, e.what());
    }
  }
  if (grid.empty()) grid = harness::parse_lr_grid("fine");
  if (opt.verbose) {
    out << "kernels: " << kernels::active_name() << '\n';
    print_entries(cfg, out);
  }
  harness::SweepOptions so;
  so.jobs = opt.jobs;
  so.out_dir = fs::path(opt.out_dir);
  so.stem = fs::path(opt.configs.front()).stem().string();
  const harness::SweepResult result = harness::sweep(cfg.run, grid, so);

  std::size_t diverged = 0;
  out << "lr,final_loss,final_val_loss,records_path\n";
  for (const auto& pt : result.points) {
    diverged += pt.diverged ? 1 : 0;
    out << format_real(pt.lr) << ','
        << (pt.diverged ? "diverged" : format_real(*pt.final_train_loss)) << ','
        << (pt.final_val_loss ? format_real(*pt.final_val_loss) : "n/a") << ','
        << pt.records_path << '\n';
  }
  if (auto best = result.best_lr()) out << "best_lr " << format_real(*best) << '\n';
  return diverged == result.points.size() ? kAllDiverged : kOk;
}

int cmd_compare(const Options& opt, std::ostream& out) {
  std::vector<compare::Input> inputs;
  for (const auto& path : opt.configs) {
    inputs.push_back({fs::path(path).stem().string(), load(path, opt)});
  }
  const compare::Table table = compare::run(inputs, fs::path(opt.out_dir));
  out << compare::format_table(table);
  std::size_t diverged = 0;
  for (const auto& row : table.rows) diverged += row.diverged ? 1 : 0;
  return diverged == table.rows.size() ? kAllDiverged : kOk;
}

int cmd_selftest(std::ostream& out) {
  const auto checks = reference::run_selftest();
  std::size_t failed = 0;
  for (const auto& c : checks) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name << "  " << c.detail << '\n';
    failed += c.passed ? 0 : 1;
  }
  out << checks.size() - failed << "/" << checks.size() << " checks passed\n";
  return failed == 0 ? kOk : kInternalError;
}

}  // namespace

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stable-SPAM optimizer experiments on small quantized models"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub, bool many_configs) {
    auto* c = sub->add_option("--config", opt.configs, "config file (key = value lines)");
    c->required();
    if (!many_configs) c->expected(1);
    sub->add_option("--out", opt.out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", opt.seed, "override the config seed");
    sub->add_flag("-v,--verbose", opt.verbose, "print the resolved configuration");
  };
  CLI::App* run = app.add_subcommand("run", "train once and write the step records");
  add_common(run, false);
  CLI::App* sweep = app.add_subcommand("sweep", "train once per learning rate");
  add_common(sweep, false);
  sweep->add_option("--jobs", opt.jobs, "parallel runs (0: one per grid point, capped)");
  sweep->add_option("--lr-grid", opt.lr_grid, "a:b:step, comma list, wide or fine");
  CLI::App* cmp = app.add_subcommand("compare", "run configs that differ only in optimizer.*");
  add_common(cmp, true);
  app.add_subcommand("selftest", "check the library against the reference implementations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return e.get_exit_code() == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_run(opt, out);
    if (*sweep) return cmd_sweep(opt, out);
    if (*cmp) return cmd_compare(opt, out);
    return cmd_selftest(out);
  } catch (const harness::ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternalError;
  }
}

}  // namespace sspam::cli
