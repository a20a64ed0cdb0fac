// SPDX-License-Identifier: Apache-2.0
#include "sspam/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

namespace sspam::harness {
namespace {

// Independent streams for each consumer of the run seed.
enum class Stream : std::uint64_t {
  Centers = 0x63656e74657273ULL,
  Init = 0x696e6974ULL,
  Batches = 0x62617463686573ULL,
  Spikes = 0x7370696b6573ULL,
};

std::uint64_t derive_seed(std::uint64_t seed, Stream stream) {
  Rng rng(seed ^ static_cast<std::uint64_t>(stream));
  return rng.next_u64();
}

void require(bool ok, const char* key, const std::string& message) {
  if (!ok) throw ConfigError(key, 0, message);
}

// Training problem behind a uniform loss/gradient interface.
class Problem {
 public:
  virtual ~Problem() = default;
  virtual std::vector<Matrix>& params() = 0;
  virtual models::ModelGrads step_gradients(std::int64_t step) = 0;
  virtual double validation_loss() = 0;
};

class QuadraticTask final : public Problem {
 public:
  explicit QuadraticTask(const RunConfig& cfg)
      : problem_(models::QuadraticProblem::random(cfg.quadratic_dim, cfg.seed)) {
    params_.push_back(problem_.w);
  }
  std::vector<Matrix>& params() override { return params_; }
  models::ModelGrads step_gradients(std::int64_t) override {
    problem_.w = params_[0];
    auto lg = models::quadratic_loss_grad(problem_);
    models::ModelGrads out;
    out.loss = lg.loss;
    out.grads.push_back(std::move(lg.grad));
    return out;
  }
  double validation_loss() override {
    problem_.w = params_[0];
    return models::quadratic_loss(problem_);
  }

 private:
  models::QuadraticProblem problem_;
  std::vector<Matrix> params_;
};

class MlpTask final : public Problem {
 public:
  explicit MlpTask(const RunConfig& cfg)
      : cfg_(cfg),
        model_(models::MlpModel::init(cfg.mlp, derive_seed(cfg.seed, Stream::Init))),
        batch_rng_(derive_seed(cfg.seed, Stream::Batches)),
        spike_rng_(derive_seed(cfg.seed, Stream::Spikes)) {
    const auto mixture =
        models::GaussianMixture::random(cfg.mlp.input_dim, cfg.mlp.classes,
                                        derive_seed(cfg.seed, Stream::Centers),
                                        cfg.data.center_scale);
    train_ = models::sample(mixture, cfg.data.train_size, cfg.seed);
    val_ = models::sample(mixture, cfg.data.val_size, cfg.seed + 1);
  }
  std::vector<Matrix>& params() override { return model_.params(); }
  models::ModelGrads step_gradients(std::int64_t) override {
    models::Batch batch = models::draw_batch(train_, cfg_.data.batch_size, batch_rng_);
    const Matrix inputs = models::inject_spikes(batch.inputs, cfg_.spikes.probability,
                                                cfg_.spikes.severity, spike_rng_);
    return models::mlp_forward_backward(model_, inputs, batch.labels, cfg_.quant);
  }
  double validation_loss() override {
    return models::mlp_loss(model_, val_.inputs, val_.labels, cfg_.quant);
  }

 private:
  const RunConfig& cfg_;
  models::MlpModel model_;
  models::SyntheticDataset train_;
  models::SyntheticDataset val_;
  Rng batch_rng_;
  Rng spike_rng_;
};

std::unique_ptr<Problem> make_problem(const RunConfig& cfg) {
  if (cfg.model == ModelKind::Quadratic) return std::make_unique<QuadraticTask>(cfg);
  return std::make_unique<MlpTask>(cfg);
}

}  // namespace

ConfigError::ConfigError(std::string key, int line, const std::string& message)
    : std::invalid_argument(line > 0 ? key + " (line " + std::to_string(line) + "): " + message
                                     : key + ": " + message),
      key_(std::move(key)),
      line_(line) {}

void RunConfig::validate() const {
  require(lr_peak > 0.0 && std::isfinite(lr_peak), "optimizer.lr", "must be a positive number");
  require(schedule.total_steps >= 0, "schedule.total_steps", "must be >= 0");
  require(schedule.warmup_steps <= schedule.total_steps, "schedule.warmup_steps",
          "must not exceed schedule.total_steps");
  require(schedule.final_ratio >= 0.0 && schedule.final_ratio <= 1.0, "schedule.final_ratio",
          "must lie in [0, 1]");
  require(spikes.probability >= 0.0 && spikes.probability <= 1.0, "spike.probability",
          "must lie in [0, 1]");
  require(spikes.severity >= 0.0, "spike.severity", "must be >= 0");
  require(divergence_loss > 0.0, "harness.divergence_loss", "must be > 0");
  require(spike_window > 0, "harness.spike_window", "must be > 0");
  require(spike_factor > 0.0, "harness.spike_factor", "must be > 0");
  if (model == ModelKind::Quadratic) {
    require(quadratic_dim > 0, "model.quadratic_dim", "must be > 0");
    require(quant.format == quant::Format::None, "quant.format",
            "the quadratic testbed has no quantized forward pass");
    require(spikes.probability == 0.0 || spikes.severity == 0.0, "spike.probability",
            "the quadratic testbed has no inputs to perturb");
  } else {
    require(mlp.input_dim > 0, "model.input_dim", "must be > 0");
    require(mlp.hidden > 0, "model.hidden", "must be > 0");
    require(mlp.ffn > 0, "model.ffn", "must be > 0");
    require(mlp.classes >= 2, "model.classes", "must be >= 2");
    require(data.train_size > 0, "data.train_size", "must be > 0");
    require(data.val_size > 0, "data.val_size", "must be > 0");
    require(data.batch_size > 0, "data.batch_size", "must be > 0");
  }
  const auto& o = optimizer;
  require(o.spam.theta > 0.0, "optimizer.theta", "must be > 0");
  require(o.clip_threshold > 0.0, "optimizer.clip_threshold", "must be > 0");
}

std::optional<double> RunResult::final_train_loss() const {
  if (records.empty()) return std::nullopt;
  return records.back().loss;
}

bool detect_loss_spike(std::span<const double> losses, double factor, std::size_t window) {
  if (losses.empty()) return false;
  const double current = losses.back();
  std::vector<double> previous;
  previous.reserve(window);
  for (std::size_t i = losses.size() - 1; i-- > 0 && previous.size() < window;) {
    if (std::isfinite(losses[i])) previous.push_back(losses[i]);
  }
  if (previous.size() < window) return false;
  std::sort(previous.begin(), previous.end());
  const std::size_t n = previous.size();
  const double median =
      n % 2 ? previous[n / 2] : 0.5 * (previous[n / 2 - 1] + previous[n / 2]);
  return current > factor * median;
}

RunResult run(const RunConfig& cfg, RunObserver* observer) {
  cfg.validate();
  RunResult result;
  auto problem = make_problem(cfg);
  optim::Optimizer opt = optim::make_optimizer(cfg.optimizer);
  std::vector<Matrix>& params = problem->params();
  opt.init(params);
  std::vector<double> losses;

  for (std::int64_t step = 1; step <= cfg.schedule.total_steps; ++step) {
    models::ModelGrads mg = problem->step_gradients(step);
    StepRecord rec;
    rec.step = step;
    rec.loss = mg.loss;
    rec.grad_norm_pre = global_grad_norm(mg.grads);
    if (!std::isfinite(mg.loss) || mg.loss > cfg.divergence_loss ||
        !std::isfinite(rec.grad_norm_pre)) {
      rec.diverged = true;
      result.records.push_back(rec);
      result.diverged = true;
      break;
    }
    if (observer) observer->on_gradients(step, mg.grads);

    const double lr = lr_schedule(step, cfg.lr_peak, cfg.schedule);
    try {
      const optim::StepReport report = opt.step(params, mg.grads, lr, step);
      rec.grad_norm_post = report.post_norm;
      rec.clipped_fraction = report.clipped_fraction();
      rec.effective_lr = lr * report.lr_multiplier;
      rec.reset = report.reset;
    } catch (const optim::DivergenceError&) {
      rec.diverged = true;
      result.records.push_back(rec);
      result.diverged = true;
      break;
    }
    result.records.push_back(rec);
    losses.push_back(rec.loss);
    if (detect_loss_spike(losses, cfg.spike_factor, cfg.spike_window)) ++result.loss_spikes;
  }

  if (!result.diverged) {
    bool finite_params = true;
    for (const Matrix& p : params) finite_params = finite_params && all_finite(p);
    const double val = finite_params ? problem->validation_loss() : std::nan("");
    if (std::isfinite(val)) {
      result.final_val_loss = val;
    } else {
      result.diverged = true;
    }
  }
  return result;
}

std::optional<double> SweepResult::best_lr() const {
  if (!best) return std::nullopt;
  return points[*best].lr;
}

SweepResult sweep(const RunConfig& base, std::span<const double> lr_grid,
                  const SweepOptions& options) {
  if (lr_grid.empty()) throw ConfigError("sweep.lr_grid", 0, "grid is empty");
  base.validate();
  for (double lr : lr_grid) {
    if (!(lr > 0.0)) throw ConfigError("sweep.lr_grid", 0, "learning rates must be positive");
  }
  if (options.out_dir) std::filesystem::create_directories(*options.out_dir);

  SweepResult result;
  result.points.resize(lr_grid.size());
  std::size_t jobs = options.jobs;
  if (jobs == 0) {
    jobs = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  }
  jobs = std::min(jobs, lr_grid.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < lr_grid.size(); i = next++) {
      try {
        RunConfig cfg = base;
        cfg.lr_peak = lr_grid[i];
        const RunResult r = run(cfg);
        SweepPoint& pt = result.points[i];
        pt.lr = lr_grid[i];
        pt.diverged = r.diverged;
        pt.final_val_loss = r.final_val_loss;
        pt.final_train_loss = r.final_train_loss();
        if (options.out_dir) {
          const std::string name = options.stem + "_lr" + std::to_string(i) + ".csv";
          write_file_atomic(*options.out_dir / name, records_to_csv(r.records));
          pt.records_path = (*options.out_dir / name).string();
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < jobs; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);

  for (std::size_t i = 0; i < result.points.size(); ++i) {
    const SweepPoint& pt = result.points[i];
    if (pt.diverged || !pt.final_val_loss) continue;
    if (!result.best || *pt.final_val_loss < *result.points[*result.best].final_val_loss) {
      result.best = i;
    }
  }
  if (options.out_dir) {
    write_file_atomic(*options.out_dir / (options.stem + "_sweep.json"), sweep_to_json(result));
  }
  return result;
}

std::vector<double> parse_lr_grid(const std::string& text) {
  if (text == "wide") return {1e-4, 3e-4, 6e-4, 1e-3, 3e-3};
  if (text == "fine") return {1e-4, 3e-4, 5e-4, 7e-4, 9e-4};
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty() || !(v > 0.0) || !std::isfinite(v)) {
      throw ConfigError("sweep.lr_grid", 0, "bad learning rate '" + s + "' in '" + text + "'");
    }
    return v;
  };
  std::vector<double> grid;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
    if (parts.size() != 3) throw ConfigError("sweep.lr_grid", 0, "expected a:b:step");
    const double lo = number(parts[0]);
    const double hi = number(parts[1]);
    const double step = number(parts[2]);
    if (hi < lo) throw ConfigError("sweep.lr_grid", 0, "upper bound below lower bound");
    for (std::size_t i = 0;; ++i) {
      const double v = lo + static_cast<double>(i) * step;
      if (v > hi + 1e-9 * step) break;
      grid.push_back(v);
    }
    return grid;
  }
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) {
    part.erase(0, part.find_first_not_of(" \t"));
    part.erase(part.find_last_not_of(" \t") + 1);
    grid.push_back(number(part));
  }
  if (grid.empty()) throw ConfigError("sweep.lr_grid", 0, "grid is empty");
  return grid;
}

}  // namespace sspam::harness
