// SPDX-License-Identifier: Apache-2.0
#include "sspam/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace sspam::config {
namespace {

using harness::ConfigError;

struct Entry {
  std::string value;
  int line = 0;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const std::vector<std::string> kKeys = {
    "seed",
    "model.kind",
    "model.input_dim",
    "model.hidden",
    "model.ffn",
    "model.depth",
    "model.classes",
    "model.quadratic_dim",
    "data.train_size",
    "data.val_size",
    "data.batch_size",
    "data.center_scale",
    "quant.format",
    "schedule.total_steps",
    "schedule.warmup_steps",
    "schedule.final_ratio",
    "spike.probability",
    "spike.severity",
    "harness.divergence_loss",
    "harness.spike_window",
    "harness.spike_factor",
    "harness.target_loss",
    "sweep.lr_grid",
    "optimizer.name",
    "optimizer.lr",
    "optimizer.transforms",
    "optimizer.profile",
    "optimizer.beta1",
    "optimizer.beta2",
    "optimizer.eps",
    "optimizer.gamma1",
    "optimizer.gamma2",
    "optimizer.gamma3",
    "optimizer.adagn_eps",
    "optimizer.moret_interval",
    "optimizer.theta",
    "optimizer.reset_interval",
    "optimizer.warmup_steps",
    "optimizer.clip_threshold",
    "optimizer.eps1",
    "optimizer.eps2",
    "optimizer.clip_d",
    "optimizer.decay_rate",
    "optimizer.scale_parameter",
    "optimizer.weight_decay",
};

class Reader {
 public:
  explicit Reader(std::map<std::string, Entry> entries) : entries_(std::move(entries)) {}

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  int line(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.line;
  }

  std::optional<std::string> text(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second.value;
  }

  template <typename Check>
  void real(const std::string& key, double& out, Check ok, const char* constraint) const {
    auto v = text(key);
    if (!v) return;
    double parsed = 0.0;
    std::size_t used = 0;
    try {
      parsed = std::stod(*v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != v->size()) fail(key, "expected a real number, got '" + *v + "'");
    if (!ok(parsed)) fail(key, std::string("value ") + *v + " violates: " + constraint);
    out = parsed;
  }

  template <typename Int, typename Check>
  void integer(const std::string& key, Int& out, Check ok, const char* constraint) const {
    auto v = text(key);
    if (!v) return;
    long long parsed = 0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), parsed);
    if (ec != std::errc() || ptr != v->data() + v->size()) {
      fail(key, "expected an integer, got '" + *v + "'");
    }
    if (!ok(parsed)) fail(key, std::string("value ") + *v + " violates: " + constraint);
    out = static_cast<Int>(parsed);
  }

  void boolean(const std::string& key, bool& out) const {
    auto v = text(key);
    if (!v) return;
    if (*v == "true" || *v == "1") {
      out = true;
    } else if (*v == "false" || *v == "0") {
      out = false;
    } else {
      fail(key, "expected true or false, got '" + *v + "'");
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& message) const {
    throw ConfigError(key, line(key), message);
  }

 private:
  std::map<std::string, Entry> entries_;
};

const auto positive = [](auto v) { return v > 0; };
const auto non_negative = [](auto v) { return v >= 0; };
const auto unit_open = [](double v) { return v > 0.0 && v < 1.0; };
const auto unit_half_open = [](double v) { return v >= 0.0 && v < 1.0; };
const auto unit_closed = [](double v) { return v >= 0.0 && v <= 1.0; };
const auto positive_real = [](double v) { return v > 0.0 && !std::isnan(v); };

void read_optimizer(const Reader& r, harness::RunConfig& run) {
  using optim::BaseKind;
  using optim::TransformKind;
  optim::OptimizerSpec& o = run.optimizer;

  std::string name = r.text("optimizer.name").value_or("adam");
  bool gradclip_alias = false;
  if (name == "adam_gradclip") {
    name = "adam";
    gradclip_alias = true;
  }
  const auto base = optim::parse_base(name);
  if (!base) r.fail("optimizer.name", "unknown optimizer '" + name + "'");
  o.base = *base;

  std::string profile = r.text("optimizer.profile").value_or("low_precision");
  if (profile == "low_precision") {
    o.stable_spam = optim::StableSpamConfig::low_precision();
  } else if (profile == "full_precision") {
    o.stable_spam = optim::StableSpamConfig::full_precision();
  } else {
    r.fail("optimizer.profile", "expected low_precision or full_precision, got '" + profile + "'");
  }
  o.adagn_gamma1 = o.stable_spam.gamma1;
  o.adagn_gamma2 = o.stable_spam.gamma2;
  o.adaclip_gamma3 = o.stable_spam.gamma3;

  if (gradclip_alias) o.transforms.push_back(TransformKind::GradClip);
  if (auto list = r.text("optimizer.transforms")) {
    std::stringstream ss(*list);
    for (std::string item; std::getline(ss, item, ',');) {
      item = trim(item);
      if (item.empty()) continue;
      const auto kind = optim::parse_transform(item);
      if (!kind) r.fail("optimizer.transforms", "unknown transform '" + item + "'");
      if (std::find(o.transforms.begin(), o.transforms.end(), *kind) != o.transforms.end()) {
        r.fail("optimizer.transforms", "duplicate transform '" + item + "'");
      }
      o.transforms.push_back(*kind);
    }
  }
  const bool has_spikeclip = std::find(o.transforms.begin(), o.transforms.end(),
                                       TransformKind::SpikeClip) != o.transforms.end();
  if (has_spikeclip && o.base != BaseKind::Adam && o.base != BaseKind::Spam &&
      o.base != BaseKind::StableSpam) {
    r.fail("optimizer.transforms", "spikeclip needs a base with an element-wise second moment");
  }

  r.real("optimizer.lr", run.lr_peak, positive_real, "> 0");

  // Generic moment keys go to whichever base is selected.
  double* beta1 = nullptr;
  double* beta2 = nullptr;
  double* eps = nullptr;
  switch (o.base) {
    case BaseKind::Adam:
      beta1 = &o.adam.beta1, beta2 = &o.adam.beta2, eps = &o.adam.eps;
      break;
    case BaseKind::Spam:
      beta1 = &o.spam.beta1, beta2 = &o.spam.beta2, eps = &o.spam.eps;
      break;
    case BaseKind::StableSpam:
      beta1 = &o.stable_spam.beta1, beta2 = &o.stable_spam.beta2, eps = &o.stable_spam.eps;
      break;
    case BaseKind::Lion:
      beta1 = &o.lion.beta1, beta2 = &o.lion.beta2;
      break;
    case BaseKind::AdamMini:
      beta1 = &o.adam_mini.beta1, beta2 = &o.adam_mini.beta2, eps = &o.adam_mini.eps;
      break;
    case BaseKind::Sgd:
    case BaseKind::Adafactor:
      break;
  }
  double scratch = 0.0;
  r.real("optimizer.beta1", beta1 ? *beta1 : scratch, unit_half_open, "0 <= beta1 < 1");
  r.real("optimizer.beta2", beta2 ? *beta2 : scratch, unit_half_open, "0 <= beta2 < 1");
  r.real("optimizer.eps", eps ? *eps : scratch, non_negative, ">= 0");

  r.real("optimizer.gamma1", o.stable_spam.gamma1, unit_open, "0 < gamma1 < 1");
  r.real("optimizer.gamma2", o.stable_spam.gamma2, unit_open, "0 < gamma2 < 1");
  r.real("optimizer.gamma3", o.stable_spam.gamma3, unit_open, "0 < gamma3 < 1");
  o.adagn_gamma1 = o.stable_spam.gamma1;
  o.adagn_gamma2 = o.stable_spam.gamma2;
  o.adaclip_gamma3 = o.stable_spam.gamma3;
  r.real("optimizer.adagn_eps", o.adagn_eps, non_negative, ">= 0");

  std::int64_t moret = o.base == BaseKind::StableSpam ? o.stable_spam.moret_interval : 0;
  r.integer("optimizer.moret_interval", moret, non_negative, ">= 0 (0 disables)");
  o.stable_spam.moret_interval = o.base == BaseKind::StableSpam ? moret : o.stable_spam.moret_interval;
  o.adam.moret_interval = o.base == BaseKind::Adam ? moret : 0;

  r.real("optimizer.theta", o.spam.theta, positive_real, "> 0");
  o.spike_theta = o.spam.theta;
  r.integer("optimizer.reset_interval", o.spam.reset_interval, non_negative, ">= 0 (0 disables)");
  r.integer("optimizer.warmup_steps", o.spam.warmup_steps, non_negative, ">= 0");
  r.real("optimizer.clip_threshold", o.clip_threshold, positive_real, "> 0");

  r.real("optimizer.eps1", o.adafactor.eps1, non_negative, ">= 0");
  r.real("optimizer.eps2", o.adafactor.eps2, non_negative, ">= 0");
  r.real("optimizer.clip_d", o.adafactor.clip_d, positive_real, "> 0");
  r.real("optimizer.decay_rate", o.adafactor.decay_rate, positive_real, "> 0");
  r.boolean("optimizer.scale_parameter", o.adafactor.scale_parameter);
  r.real("optimizer.weight_decay", o.lion.weight_decay, non_negative, ">= 0");
}

}  // namespace

const std::vector<std::string>& known_keys() { return kKeys; }

FileConfig parse_config_text(const std::string& text) {
  std::map<std::string, Entry> raw;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(line, lineno, "expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
      throw ConfigError(key, lineno, "unknown key");
    }
    if (raw.count(key)) throw ConfigError(key, lineno, "key given twice");
    raw[key] = {value, lineno};
  }

  const Reader r(std::move(raw));
  FileConfig cfg;
  harness::RunConfig& run = cfg.run;

  r.integer("seed", run.seed, non_negative, ">= 0");
  if (auto kind = r.text("model.kind")) {
    if (*kind == "mlp") {
      run.model = harness::ModelKind::Mlp;
    } else if (*kind == "quadratic") {
      run.model = harness::ModelKind::Quadratic;
    } else {
      r.fail("model.kind", "expected mlp or quadratic, got '" + *kind + "'");
    }
  }
  r.integer("model.input_dim", run.mlp.input_dim, positive, "> 0");
  r.integer("model.hidden", run.mlp.hidden, positive, "> 0");
  r.integer("model.ffn", run.mlp.ffn, positive, "> 0");
  r.integer("model.depth", run.mlp.depth, non_negative, ">= 0");
  r.integer("model.classes", run.mlp.classes, [](auto v) { return v >= 2; }, ">= 2");
  r.integer("model.quadratic_dim", run.quadratic_dim, positive, "> 0");
  r.integer("data.train_size", run.data.train_size, positive, "> 0");
  r.integer("data.val_size", run.data.val_size, positive, "> 0");
  r.integer("data.batch_size", run.data.batch_size, positive, "> 0");
  r.real("data.center_scale", run.data.center_scale, non_negative, ">= 0");

  if (auto fmt = r.text("quant.format")) {
    const auto parsed = quant::parse_format(*fmt);
    if (!parsed) {
      r.fail("quant.format", "expected none, int2, int3, int4 or fp4_e1m2, got '" + *fmt + "'");
    }
    run.quant.format = *parsed;
  }

  r.integer("schedule.total_steps", run.schedule.total_steps, non_negative, ">= 0");
  r.integer("schedule.warmup_steps", run.schedule.warmup_steps, non_negative, ">= 0");
  r.real("schedule.final_ratio", run.schedule.final_ratio, unit_closed, "0 <= ratio <= 1");
  r.real("spike.probability", run.spikes.probability, unit_closed, "0 <= p <= 1");
  r.real("spike.severity", run.spikes.severity, non_negative, ">= 0");
  r.real("harness.divergence_loss", run.divergence_loss, positive_real, "> 0");
  r.integer("harness.spike_window", run.spike_window, positive, "> 0");
  r.real("harness.spike_factor", run.spike_factor, positive_real, "> 0");
  if (r.has("harness.target_loss")) {
    double target = 0.0;
    r.real("harness.target_loss", target, [](double v) { return std::isfinite(v); }, "finite");
    cfg.target_loss = target;
  }
  if (auto grid = r.text("sweep.lr_grid")) {
    try {
      cfg.lr_grid = harness::parse_lr_grid(*grid);
    } catch (const ConfigError& e) {
      r.fail("sweep.lr_grid", e.what());
    }
  }

  read_optimizer(r, run);

  try {
    run.validate();
  } catch (const ConfigError& e) {
    // Attach the line of the offending key when it came from the file.
    if (r.line(e.key()) > 0) throw ConfigError(e.key(), r.line(e.key()), e.what());
    throw;
  }
  return cfg;
}

FileConfig parse_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError("--config", 0, "file not found: " + path.string());
  }
  return parse_config_text(harness::read_file(path));
}

std::map<std::string, std::string> entries(const FileConfig& cfg) {
  using harness::format_real;
  const harness::RunConfig& run = cfg.run;
  const optim::OptimizerSpec& o = run.optimizer;
  std::map<std::string, std::string> e;
  e["seed"] = std::to_string(run.seed);
  e["model.kind"] = run.model == harness::ModelKind::Mlp ? "mlp" : "quadratic";
  e["model.input_dim"] = std::to_string(run.mlp.input_dim);
  e["model.hidden"] = std::to_string(run.mlp.hidden);
  e["model.ffn"] = std::to_string(run.mlp.ffn);
  e["model.depth"] = std::to_string(run.mlp.depth);
  e["model.classes"] = std::to_string(run.mlp.classes);
  e["model.quadratic_dim"] = std::to_string(run.quadratic_dim);
  e["data.train_size"] = std::to_string(run.data.train_size);
  e["data.val_size"] = std::to_string(run.data.val_size);
  e["data.batch_size"] = std::to_string(run.data.batch_size);
  e["data.center_scale"] = format_real(run.data.center_scale);
  e["quant.format"] = std::string(quant::to_string(run.quant.format));
  e["schedule.total_steps"] = std::to_string(run.schedule.total_steps);
  e["schedule.warmup_steps"] = std::to_string(run.schedule.resolved_warmup());
  e["schedule.final_ratio"] = format_real(run.schedule.final_ratio);
  e["spike.probability"] = format_real(run.spikes.probability);
  e["spike.severity"] = format_real(run.spikes.severity);
  e["harness.divergence_loss"] = format_real(run.divergence_loss);
  e["harness.spike_window"] = std::to_string(run.spike_window);
  e["harness.spike_factor"] = format_real(run.spike_factor);
  e["harness.target_loss"] = cfg.target_loss ? format_real(*cfg.target_loss) : "auto";
  std::string grid;
  for (double lr : cfg.lr_grid) grid += (grid.empty() ? "" : ",") + format_real(lr);
  e["sweep.lr_grid"] = grid.empty() ? "fine" : grid;

  e["optimizer.name"] = std::string(optim::to_string(o.base));
  e["optimizer.lr"] = format_real(run.lr_peak);
  std::string transforms;
  for (auto t : o.transforms) transforms += (transforms.empty() ? "" : ",") + std::string(optim::to_string(t));
  e["optimizer.transforms"] = transforms;
  e["optimizer.gamma1"] = format_real(o.stable_spam.gamma1);
  e["optimizer.gamma2"] = format_real(o.stable_spam.gamma2);
  e["optimizer.gamma3"] = format_real(o.stable_spam.gamma3);
  e["optimizer.adagn_eps"] = format_real(o.adagn_eps);
  e["optimizer.moret_interval"] = std::to_string(
      o.base == optim::BaseKind::StableSpam ? o.stable_spam.moret_interval : o.adam.moret_interval);
  e["optimizer.theta"] = format_real(o.spam.theta);
  e["optimizer.reset_interval"] = std::to_string(o.spam.reset_interval);
  e["optimizer.warmup_steps"] = std::to_string(o.spam.warmup_steps);
  e["optimizer.clip_threshold"] = format_real(o.clip_threshold);
  e["optimizer.eps1"] = format_real(o.adafactor.eps1);
  e["optimizer.eps2"] = format_real(o.adafactor.eps2);
  e["optimizer.clip_d"] = format_real(o.adafactor.clip_d);
  e["optimizer.decay_rate"] = format_real(o.adafactor.decay_rate);
  e["optimizer.scale_parameter"] = o.adafactor.scale_parameter ? "true" : "false";
  e["optimizer.weight_decay"] = format_real(o.lion.weight_decay);
  switch (o.base) {
    case optim::BaseKind::Adam:
      e["optimizer.beta1"] = format_real(o.adam.beta1);
      e["optimizer.beta2"] = format_real(o.adam.beta2);
      e["optimizer.eps"] = format_real(o.adam.eps);
      break;
    case optim::BaseKind::Spam:
      e["optimizer.beta1"] = format_real(o.spam.beta1);
      e["optimizer.beta2"] = format_real(o.spam.beta2);
      e["optimizer.eps"] = format_real(o.spam.eps);
      break;
    case optim::BaseKind::StableSpam:
      e["optimizer.beta1"] = format_real(o.stable_spam.beta1);
      e["optimizer.beta2"] = format_real(o.stable_spam.beta2);
      e["optimizer.eps"] = format_real(o.stable_spam.eps);
      break;
    case optim::BaseKind::Lion:
      e["optimizer.beta1"] = format_real(o.lion.beta1);
      e["optimizer.beta2"] = format_real(o.lion.beta2);
      break;
    case optim::BaseKind::AdamMini:
      e["optimizer.beta1"] = format_real(o.adam_mini.beta1);
      e["optimizer.beta2"] = format_real(o.adam_mini.beta2);
      e["optimizer.eps"] = format_real(o.adam_mini.eps);
      break;
    case optim::BaseKind::Sgd:
    case optim::BaseKind::Adafactor:
      break;
  }
  return e;
}

}  // namespace sspam::config
