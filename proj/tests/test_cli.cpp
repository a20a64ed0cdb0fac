// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "sspam/compare.hpp"
#include "sspam/harness.hpp"
#include "sspam/reference.hpp"

using namespace sspam;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "sspam");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class Workdir {
 public:
  explicit Workdir(const std::string& name)
      : path_(fs::temp_directory_path() / ("sspam_test_cli_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~Workdir() { fs::remove_all(path_); }

  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path_ / name) << text;
    return (path_ / name).string();
  }
  std::string str() const { return path_.string(); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

const char* kSmall =
    "model.input_dim = 6\nmodel.hidden = 8\nmodel.ffn = 12\nmodel.depth = 1\nmodel.classes = 3\n"
    "data.train_size = 128\ndata.val_size = 32\ndata.batch_size = 8\n"
    "schedule.total_steps = 40\n";

std::string last_line_of(const std::string& text) {
  std::string trimmed = text;
  while (!trimmed.empty() && trimmed.back() == '\n') trimmed.pop_back();
  return trimmed.substr(trimmed.rfind('\n') + 1);
}

}  // namespace

TEST_CASE("run writes records and reports the final loss") {
  Workdir wd("run");
  const auto cfg = wd.write("small.conf", std::string(kSmall) + "optimizer.name = stable_spam\n");
  const Outcome o = invoke({"run", "--config", cfg, "--out", wd.str()});
  CHECK(o.code == cli::kOk);
  CHECK(o.out.find("steps 40") != std::string::npos);
  CHECK(o.out.find("final_val_loss ") != std::string::npos);
  const auto records = harness::records_from_csv(harness::read_file(wd / "small.csv"));
  CHECK(records.size() == 40);

  // Same config, same bytes; a different seed changes them.
  const std::string first = harness::read_file(wd / "small.csv");
  CHECK(invoke({"run", "--config", cfg, "--out", wd.str()}).code == cli::kOk);
  CHECK(harness::read_file(wd / "small.csv") == first);
  CHECK(invoke({"run", "--config", cfg, "--out", wd.str(), "--seed", "99"}).code == cli::kOk);
  CHECK(harness::read_file(wd / "small.csv") != first);
}

TEST_CASE("verbose prints kernels and resolved keys") {
  Workdir wd("verbose");
  const auto cfg = wd.write("v.conf", kSmall);
  const Outcome o = invoke({"run", "--config", cfg, "--out", wd.str(), "-v"});
  CHECK(o.out.find("kernels: ") != std::string::npos);
  CHECK(o.out.find("optimizer.name = adam") != std::string::npos);
}

TEST_CASE("exit codes") {
  Workdir wd("codes");
  CHECK(invoke({}).code == cli::kConfigError);
  CHECK(invoke({"frobnicate"}).code == cli::kConfigError);
  CHECK(invoke({"run"}).code == cli::kConfigError);

  const Outcome missing = invoke({"run", "--config", (wd / "nope.conf").string()});
  CHECK(missing.code == cli::kConfigError);
  CHECK(missing.err.find("nope.conf") != std::string::npos);

  const auto bad = wd.write("bad.conf", "seed = 1\nquant.format = int5\n");
  const Outcome b = invoke({"run", "--config", bad, "--out", wd.str()});
  CHECK(b.code == cli::kConfigError);
  CHECK(b.err.find("quant.format") != std::string::npos);
  CHECK(b.err.find("line 2") != std::string::npos);

  const auto boom = wd.write("boom.conf",
                             "model.kind = quadratic\noptimizer.name = sgd\noptimizer.lr = 1e6\n"
                             "schedule.total_steps = 50\nschedule.warmup_steps = 0\n");
  const Outcome d = invoke({"run", "--config", boom, "--out", wd.str()});
  CHECK(d.code == cli::kAllDiverged);
  CHECK(d.out.find("diverged at step") != std::string::npos);

  CHECK(invoke({"sweep", "--config", boom, "--out", wd.str(), "--lr-grid", "1e5,1e6"}).code ==
        cli::kAllDiverged);
  CHECK(invoke({"sweep", "--config", boom, "--out", wd.str(), "--lr-grid", "x"}).code ==
        cli::kConfigError);
}

TEST_CASE("sweep prints one row per lr and the best") {
  Workdir wd("sweep");
  const auto cfg = wd.write("s.conf", kSmall);
  const Outcome o =
      invoke({"sweep", "--config", cfg, "--out", wd.str(), "--lr-grid", "1e-3,1e-2", "--jobs", "2"});
  CHECK(o.code == cli::kOk);
  CHECK(o.out.find("lr,final_loss,final_val_loss,records_path") != std::string::npos);
  CHECK(o.out.find("best_lr ") != std::string::npos);
  CHECK(fs::exists(wd / "s_sweep.json"));
}

TEST_CASE("compare against itself gives identical rows") {
  Workdir wd("cmp_self");
  const auto a = wd.write("a.conf", kSmall);
  const auto b = wd.write("b.conf", kSmall);
  const Outcome o = invoke({"compare", "--config", a, "--config", b, "--out", wd.str()});
  REQUIRE(o.code == cli::kOk);
  const std::string csv = harness::read_file(wd / "compare.csv");
  std::istringstream lines(csv);
  std::string header, row_a, row_b;
  std::getline(lines, header);
  std::getline(lines, row_a);
  std::getline(lines, row_b);
  // Rows differ only in label and records path.
  auto strip = [](const std::string& r) {
    const auto first = r.find(',');
    const auto last = r.rfind(',');
    return r.substr(first, last - first);
  };
  CHECK(strip(row_a) == strip(row_b));
  CHECK(harness::read_file(wd / "compare_0_a.csv") == harness::read_file(wd / "compare_1_b.csv"));
}

TEST_CASE("compare table matches the per-run CSVs") {
  Workdir wd("cmp_table");
  std::vector<compare::Input> inputs{
      {"adam", config::parse_config_text(kSmall)},
      {"stable", config::parse_config_text(std::string(kSmall) + "optimizer.name = stable_spam\n")}};
  const compare::Table t = compare::run(inputs, fs::path(wd.str()));
  REQUIRE(t.rows.size() == 2);
  for (const auto& row : t.rows) {
    const auto recs = harness::records_from_csv(harness::read_file(row.records_path));
    CHECK(row.final_loss == recs.back().loss);
    CHECK(row.steps_to_target == compare::steps_to_target(recs, t.target_loss));
  }
  // The default target is the worst final loss, so every run reaches it.
  for (const auto& row : t.rows) CHECK(row.steps_to_target.has_value());
  CHECK(compare::format_table(t).find("stable") != std::string::npos);
}

TEST_CASE("steps_to_target") {
  std::vector<harness::StepRecord> recs(3);
  recs[0].step = 1, recs[0].loss = 3.0;
  recs[1].step = 2, recs[1].loss = 1.0;
  recs[2].step = 3, recs[2].loss = 0.5;
  CHECK(compare::steps_to_target(recs, 1.0) == 2);
  CHECK_FALSE(compare::steps_to_target(recs, 0.1).has_value());
  compare::Table t{0.1, {{"x", "adam", false, 0.5, 0.6, std::nullopt, "x.csv"}}};
  CHECK(compare::format_table(t).find("n/a") != std::string::npos);
}

TEST_CASE("compare refuses configs that differ outside the optimizer") {
  Workdir wd("cmp_diff");
  const auto a = wd.write("a.conf", kSmall);
  const auto b = wd.write("b.conf", std::string(kSmall) + "seed = 3\nquant.format = int4\n");
  const Outcome o = invoke({"compare", "--config", a, "--config", b, "--out", wd.str()});
  CHECK(o.code == cli::kConfigError);
  CHECK(o.err.find("seed") != std::string::npos);
  CHECK(o.err.find("quant.format") != std::string::npos);
  CHECK(invoke({"compare", "--config", a, "--out", wd.str()}).code == cli::kConfigError);

  // Keys that do not change a single run are ignored.
  const auto c = wd.write("c.conf", std::string(kSmall) + "sweep.lr_grid = wide\n");
  CHECK(compare::non_optimizer_differences(
            {{"a", config::parse_config(a)}, {"c", config::parse_config(c)}})
            .empty());
}

TEST_CASE("selftest passes, and catches a corrupted adaclip") {
  const Outcome o = invoke({"selftest"});
  CHECK(o.code == cli::kOk);
  CHECK(last_line_of(o.out).find("checks passed") != std::string::npos);
  CHECK(o.out.find("FAIL") == std::string::npos);

  reference::SelftestHooks broken;
  broken.adaclip = [](Matrix& g, optim::AdaClipState& s, double gamma3) {
    return optim::adaclip(g, s, gamma3 - 0.099);
  };
  std::vector<std::string> failed;
  for (const auto& c : reference::run_selftest(broken)) {
    if (!c.passed) failed.push_back(c.name);
  }
  CHECK(failed == std::vector<std::string>{"adaclip_trace", "adaclip_worked_example",
                                           "bias_correction_constants"});
}

TEST_CASE("installed binary honours the exit-code contract") {
  const char* bin = std::getenv("SSPAM_CLI");
  if (!bin) return;
  Workdir wd("binary");
  const auto bad = wd.write("bad.conf", "nonsense = 1\n");
  const std::string quiet = " >/dev/null 2>&1";
  auto status = [](int raw) { return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1; };
  CHECK(status(std::system((std::string(bin) + " --help" + quiet).c_str())) == 0);
  CHECK(status(std::system((std::string(bin) + " run --config " + bad + quiet).c_str())) == 1);
  const auto boom = wd.write("boom.conf",
                             "model.kind = quadratic\noptimizer.name = sgd\noptimizer.lr = 1e6\n"
                             "schedule.total_steps = 20\nschedule.warmup_steps = 0\n");
  CHECK(status(std::system(
            (std::string(bin) + " run --out " + wd.str() + " --config " + boom + quiet).c_str())) ==
        2);
}
