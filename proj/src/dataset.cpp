// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <stdexcept>

#include "sspam/models.hpp"

namespace sspam::models {

GaussianMixture GaussianMixture::random(std::size_t dim, std::size_t classes, std::uint64_t seed,
                                        double center_scale) {
  Rng rng(seed);
  return {random_normal(classes, dim, rng, center_scale)};
}

SyntheticDataset sample(const GaussianMixture& mixture, std::size_t n, std::uint64_t seed) {
  const std::size_t k = mixture.centers.rows();
  const std::size_t d = mixture.centers.cols();
  if (k == 0) throw std::invalid_argument("sample: mixture has no classes");
  Rng rng(seed);
  SyntheticDataset ds{Matrix(n, d), std::vector<int>(n), seed};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % k;
    ds.labels[i] = static_cast<int>(label);
    for (std::size_t j = 0; j < d; ++j) ds.inputs(i, j) = mixture.centers(label, j) + rng.normal();
  }
  return ds;
}

Batch draw_batch(const SyntheticDataset& data, std::size_t size, Rng& rng) {
  if (data.size() == 0) throw std::invalid_argument("draw_batch: empty dataset");
  const std::size_t d = data.inputs.cols();
  Batch b{Matrix(size, d), std::vector<int>(size)};
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t idx = rng.below(data.size());
    b.labels[i] = data.labels[idx];
    for (std::size_t j = 0; j < d; ++j) b.inputs(i, j) = data.inputs(idx, j);
  }
  return b;
}

Matrix inject_spikes(const Matrix& batch, double probability, double severity, Rng& rng) {
  if (!(probability >= 0.0 && probability <= 1.0)) {
    throw std::invalid_argument("inject_spikes: probability must lie in [0, 1]");
  }
  if (!(severity >= 0.0)) throw std::invalid_argument("inject_spikes: severity must be >= 0");
  Matrix out = batch;
  if (probability == 0.0 || severity == 0.0 || batch.empty()) return out;
  double top = batch[0];
  for (double v : batch.data()) top = std::max(top, v);
  const double stddev = std::fabs(severity * top);
  for (double& v : out.data()) {
    if (rng.bernoulli(probability)) v += stddev * rng.normal();
  }
  return out;
}

}  // namespace sspam::models
