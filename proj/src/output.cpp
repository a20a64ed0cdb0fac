// SPDX-License-Identifier: Apache-2.0
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "sspam/harness.hpp"

namespace sspam::harness {

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string records_to_csv(std::span<const StepRecord> records) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const StepRecord& r : records) {
    out += std::to_string(r.step);
    for (double v : {r.loss, r.grad_norm_pre, r.grad_norm_post, r.clipped_fraction,
                     r.effective_lr}) {
      out += ',';
      out += format_real(v);
    }
    out += r.reset ? ",1" : ",0";
    out += r.diverged ? ",1\n" : ",0\n";
  }
  return out;
}

std::vector<StepRecord> records_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw std::runtime_error("records_from_csv: missing or unexpected header");
  }
  std::vector<StepRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 8) throw std::runtime_error("records_from_csv: bad row '" + line + "'");
    StepRecord r;
    r.step = std::stoll(cells[0]);
    r.loss = std::strtod(cells[1].c_str(), nullptr);
    r.grad_norm_pre = std::strtod(cells[2].c_str(), nullptr);
    r.grad_norm_post = std::strtod(cells[3].c_str(), nullptr);
    r.clipped_fraction = std::strtod(cells[4].c_str(), nullptr);
    r.effective_lr = std::strtod(cells[5].c_str(), nullptr);
    r.reset = cells[6] == "1";
    r.diverged = cells[7] == "1";
    records.push_back(r);
  }
  return records;
}

std::string sweep_to_json(const SweepResult& result) {
  nlohmann::ordered_json doc;
  doc["points"] = nlohmann::ordered_json::array();
  for (const SweepPoint& p : result.points) {
    nlohmann::ordered_json pt;
    pt["lr"] = p.lr;
    if (p.diverged || !p.final_val_loss) {
      pt["final_loss"] = "diverged";
    } else {
      pt["final_loss"] = *p.final_val_loss;
    }
    pt["records_path"] = p.records_path;
    doc["points"].push_back(std::move(pt));
  }
  if (auto lr = result.best_lr()) {
    doc["best_lr"] = *lr;
  } else {
    doc["best_lr"] = nullptr;
  }
  return doc.dump(2) + "\n";
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace sspam::harness
