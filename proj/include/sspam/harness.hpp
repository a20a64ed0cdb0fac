// SPDX-License-Identifier: Apache-2.0
#pragma once

// Experiment runner: LR schedule, training loop with telemetry, LR sweeps.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sspam/models.hpp"
#include "sspam/optim.hpp"
#include "sspam/quant.hpp"

namespace sspam::harness {

/// Invalid configuration; `key` names the offending entry, `line` is its
/// line in the config file (0 when not from a file).
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, int line, const std::string& message);
  const std::string& key() const noexcept { return key_; }
  int line() const noexcept { return line_; }

 private:
  std::string key_;
  int line_;
};

enum class ModelKind { Mlp, Quadratic };

struct DataConfig {
  std::size_t train_size = 2048;
  std::size_t val_size = 512;
  std::size_t batch_size = 32;
  double center_scale = 1.0;
};

struct ScheduleConfig {
  std::int64_t total_steps = 2000;
  /// Negative means "10% of total_steps".
  std::int64_t warmup_steps = -1;
  double final_ratio = 0.1;

  std::int64_t resolved_warmup() const {
    return warmup_steps >= 0 ? warmup_steps : total_steps / 10;
  }
};

struct SpikeConfig {
  double probability = 0.0;
  double severity = 0.0;
};

struct RunConfig {
  ModelKind model = ModelKind::Mlp;
  models::MlpConfig mlp;
  DataConfig data;
  std::size_t quadratic_dim = 6;

  optim::OptimizerSpec optimizer;
  double lr_peak = 1e-3;
  quant::QuantSpec quant;
  ScheduleConfig schedule;
  SpikeConfig spikes;
  std::uint64_t seed = 42;

  /// A finite loss above this also counts as divergence.
  double divergence_loss = 1e12;
  std::size_t spike_window = 50;
  double spike_factor = 2.0;

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// Linear warmup 0 → lr_peak over the warmup steps, then cosine decay to
/// final_ratio · lr_peak at total_steps.
double lr_schedule(std::int64_t step, double lr_peak, const ScheduleConfig& cfg);

struct StepRecord {
  std::int64_t step = 0;
  double loss = 0.0;
  double grad_norm_pre = 0.0;
  double grad_norm_post = 0.0;
  double clipped_fraction = 0.0;
  double effective_lr = 0.0;
  bool reset = false;
  bool diverged = false;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct RunResult {
  std::vector<StepRecord> records;
  bool diverged = false;
  /// Held-out loss after the last step; nullopt when diverged.
  std::optional<double> final_val_loss;
  std::size_t loss_spikes = 0;

  std::optional<double> final_train_loss() const;
};

/// Sees the raw gradients of every step before the optimizer consumes them.
struct RunObserver {
  virtual ~RunObserver() = default;
  virtual void on_gradients(std::int64_t step, std::span<const Matrix> raw) = 0;
};

/// Executes the training loop. Divergence halts the run and is reported in
/// the result; invalid configs throw before any step.
RunResult run(const RunConfig& cfg, RunObserver* observer = nullptr);

/// True when the last loss exceeds factor × the median of the `window`
/// finite losses before it. False until `window` earlier finite losses exist.
bool detect_loss_spike(std::span<const double> losses, double factor = 2.0,
                       std::size_t window = 50);

struct SweepPoint {
  double lr = 0.0;
  bool diverged = false;
  std::optional<double> final_val_loss;
  std::optional<double> final_train_loss;
  std::string records_path;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  std::optional<std::size_t> best;

  std::optional<double> best_lr() const;
};

struct SweepOptions {
  std::size_t jobs = 0;  // 0: one per grid point, capped at hardware threads
  std::optional<std::filesystem::path> out_dir;
  std::string stem = "run";
};

/// Runs every LR with the same seed; the best point has the lowest finite
/// final validation loss. Writes one CSV per run and sweep.json when
/// out_dir is set.
SweepResult sweep(const RunConfig& base, std::span<const double> lr_grid,
                  const SweepOptions& options = {});

/// "a:b:step" (inclusive), a comma list, or a preset name ("wide", "fine").
std::vector<double> parse_lr_grid(const std::string& text);

// Telemetry files -----------------------------------------------------------

inline constexpr const char* kCsvHeader =
    "step,loss,grad_norm_pre,grad_norm_post,clipped_fraction,effective_lr,reset,diverged";

std::string records_to_csv(std::span<const StepRecord> records);
std::vector<StepRecord> records_from_csv(const std::string& text);
std::string sweep_to_json(const SweepResult& result);

/// Writes through a temporary file in the same directory and renames it
/// into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

/// Round-trippable decimal form used in every output file.
std::string format_real(double v);

}  // namespace sspam::harness
