#include "pcfed/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pcfed/errors.hpp"

namespace pcfed {

void Dataset::validate(const char* where) const {
  const std::string tag(where);
  if (n_samples == 0 || n_features == 0 || n_classes == 0) {
    throw ValidationError(tag + ": empty dataset");
  }
  if (features.size() != n_samples * n_features) {
    throw ValidationError(tag + ": feature buffer size mismatch");
  }
  if (labels.size() != n_samples) {
    throw ValidationError(tag + ": label count mismatch");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= n_classes) {
      throw ValidationError(tag + ": label " + std::to_string(int(labels[i])) +
                            " at row " + std::to_string(i) + " out of range");
    }
  }
  for (double v : features) {
    if (!std::isfinite(v)) throw ValidationError(tag + ": non-finite feature");
  }
}

PersonalizationWeights PersonalizationWeights::constant(double sigma, std::size_t m) {
  return PersonalizationWeights(std::vector<double>(m, sigma));
}

double PersonalizationWeights::max_value() const {
  double best = 0.0;
  for (double v : values) best = std::max(best, v);
  return best;
}

void PersonalizationWeights::validate(std::size_t m) const {
  if (values.size() != m) {
    throw ValidationError("personalization weights: need one sigma per agent (" +
                          std::to_string(values.size()) + " given, " + std::to_string(m) +
                          " agents)");
  }
  for (double v : values) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ValidationError("personalization weights: sigma must be finite and >= 0");
    }
  }
}

namespace {

void check_batch_fraction(double f) {
  if (!(f > 0.0) || f > 1.0 || !std::isfinite(f)) {
    throw ValidationError("batch_fraction must lie in (0, 1]");
  }
}

std::size_t batch_size_for(double fraction, std::size_t n) {
  const double raw = fraction * static_cast<double>(n);
  auto b = static_cast<std::size_t>(std::llround(raw));
  if (b < 1) b = 1;
  if (b > n) b = n;
  return b;
}

}  // namespace

QuadraticObjective::QuadraticObjective(Matrix q, ParamVector b)
    : q_(std::move(q)), b_(std::move(b)) {
  if (q_.rows != q_.cols || q_.rows != b_.size() || b_.empty()) {
    throw ValidationError("quadratic: Q must be square and match b");
  }
  require_finite(b_, "quadratic b");
  require_finite(q_.data, "quadratic Q");
  for (std::size_t r = 0; r < q_.rows; ++r) {
    for (std::size_t c = r + 1; c < q_.cols; ++c) {
      if (q_.at(r, c) != q_.at(c, r)) {
        throw ValidationError("quadratic: Q must be symmetric, grad assumes Qx - b");
      }
    }
  }
  l_bound_ = symmetric_max_eigenvalue(
      [this](const ParamVector& v) { return matvec(q_, v); }, q_.rows, 1e-12, 200000);
  l_bound_ = std::max(l_bound_, 0.0);
}

double QuadraticObjective::value(const ParamVector& x) const {
  const ParamVector qx = matvec(q_, x);
  return 0.5 * dot(x, qx) - dot(b_, x);
}

ParamVector QuadraticObjective::grad(const ParamVector& x) const {
  ParamVector g = matvec(q_, x);
  add_scaled_inplace(g, -1.0, b_);
  return g;
}

ParamVector QuadraticObjective::grad_stochastic(const ParamVector& x, RngStream&,
                                                double batch_fraction) const {
  check_batch_fraction(batch_fraction);
  return grad(x);
}

std::string QuadraticObjective::describe() const {
  return "quadratic(dim=" + std::to_string(dim()) + ")";
}

NoisyQuadraticObjective::NoisyQuadraticObjective(Matrix q, ParamVector b, double noise_level)
    : base_(std::move(q), std::move(b)), noise_level_(noise_level) {
  if (!(noise_level >= 0.0) || !std::isfinite(noise_level)) {
    throw ValidationError("noisy quadratic: noise level must be finite and >= 0");
  }
}

ParamVector NoisyQuadraticObjective::grad_stochastic(const ParamVector& x, RngStream& stream,
                                                     double batch_fraction) const {
  check_batch_fraction(batch_fraction);
  ParamVector g = base_.grad(x);
  if (noise_level_ > 0.0) {
    const double per_coord = noise_level_ / std::sqrt(static_cast<double>(g.size()));
    for (double& v : g) v += per_coord * stream.next_gaussian();
  }
  return g;
}

std::string NoisyQuadraticObjective::describe() const {
  return "noisy_quadratic(dim=" + std::to_string(dim()) +
         ", noise=" + std::to_string(noise_level_) + ")";
}

SoftmaxRegressionObjective::SoftmaxRegressionObjective(std::shared_ptr<const Dataset> data)
    : data_(std::move(data)) {
  if (!data_) throw ValidationError("softmax: null dataset");
  data_->validate("softmax dataset");
  if (data_->n_classes < 2) throw ValidationError("softmax: need at least 2 classes");

  // L <= lambda_max(Phi' Phi) / (2N): the per-sample hessian factor
  // diag(p) - p p' never exceeds 1/2 in spectral norm.
  const Dataset& ds = *data_;
  const auto apply = [&ds](const ParamVector& v) {
    ParamVector out(ds.n_features, 0.0);
    for (std::size_t s = 0; s < ds.n_samples; ++s) {
      const double* row = ds.row(s);
      double proj = 0.0;
      for (std::size_t d = 0; d < ds.n_features; ++d) proj += row[d] * v[d];
      for (std::size_t d = 0; d < ds.n_features; ++d) out[d] += row[d] * proj;
    }
    const double inv_n = 1.0 / static_cast<double>(ds.n_samples);
    for (double& x : out) x *= inv_n;
    return out;
  };
  const double lam = symmetric_max_eigenvalue(apply, ds.n_features, 1e-7, 2000);
  l_bound_ = 0.5 * std::max(lam, 0.0);
}

std::size_t SoftmaxRegressionObjective::dim() const {
  return data_->n_features * data_->n_classes;
}

void SoftmaxRegressionObjective::accumulate_sample(std::size_t row, const ParamVector& x,
                                                   double* value_acc,
                                                   ParamVector* grad_acc) const {
  const Dataset& ds = *data_;
  const std::size_t kc = ds.n_classes;
  const double* phi = ds.row(row);

  std::vector<double> logits(kc, 0.0);
  for (std::size_t d = 0; d < ds.n_features; ++d) {
    const double f = phi[d];
    if (f == 0.0) continue;
    const double* w = x.data() + d * kc;
    for (std::size_t k = 0; k < kc; ++k) logits[k] += f * w[k];
  }

  double peak = logits[0];
  for (std::size_t k = 1; k < kc; ++k) peak = std::max(peak, logits[k]);
  double expsum = 0.0;
  for (std::size_t k = 0; k < kc; ++k) expsum += std::exp(logits[k] - peak);
  const double lse = peak + std::log(expsum);
  const std::size_t label = ds.labels[row];

  if (value_acc) *value_acc += lse - logits[label];
  if (grad_acc) {
    std::vector<double> coef(kc);
    for (std::size_t k = 0; k < kc; ++k) {
      coef[k] = std::exp(logits[k] - lse) - (k == label ? 1.0 : 0.0);
    }
    for (std::size_t d = 0; d < ds.n_features; ++d) {
      const double f = phi[d];
      if (f == 0.0) continue;
      double* g = grad_acc->data() + d * kc;
      for (std::size_t k = 0; k < kc; ++k) g[k] += f * coef[k];
    }
  }
}

double SoftmaxRegressionObjective::value(const ParamVector& x) const {
  if (x.size() != dim()) throw ValidationError("softmax.value: wrong parameter size");
  double acc = 0.0;
  for (std::size_t s = 0; s < data_->n_samples; ++s) accumulate_sample(s, x, &acc, nullptr);
  return acc / static_cast<double>(data_->n_samples);
}

ParamVector SoftmaxRegressionObjective::grad(const ParamVector& x) const {
  if (x.size() != dim()) throw ValidationError("softmax.grad: wrong parameter size");
  ParamVector g(dim(), 0.0);
  for (std::size_t s = 0; s < data_->n_samples; ++s) accumulate_sample(s, x, nullptr, &g);
  scale_inplace(g, 1.0 / static_cast<double>(data_->n_samples));
  return g;
}

ParamVector SoftmaxRegressionObjective::grad_stochastic(const ParamVector& x, RngStream& stream,
                                                        double batch_fraction) const {
  check_batch_fraction(batch_fraction);
  if (x.size() != dim()) throw ValidationError("softmax.grad_stochastic: wrong parameter size");
  const std::size_t batch = batch_size_for(batch_fraction, data_->n_samples);
  if (batch == data_->n_samples) return grad(x);
  const auto indices = sample_indices(stream, data_->n_samples, batch);
  ParamVector g(dim(), 0.0);
  for (std::size_t idx : indices) accumulate_sample(idx, x, nullptr, &g);
  scale_inplace(g, 1.0 / static_cast<double>(batch));
  return g;
}

std::string SoftmaxRegressionObjective::describe() const {
  return "softmax(n=" + std::to_string(data_->n_samples) +
         ", d=" + std::to_string(data_->n_features) +
         ", classes=" + std::to_string(data_->n_classes) + ")";
}

double SoftmaxRegressionObjective::accuracy(const ParamVector& x, const Dataset& data) const {
  if (x.size() != data.n_features * data.n_classes) {
    throw ValidationError("softmax.accuracy: wrong parameter size");
  }
  std::size_t hits = 0;
  const std::size_t kc = data.n_classes;
  std::vector<double> logits(kc);
  for (std::size_t s = 0; s < data.n_samples; ++s) {
    std::fill(logits.begin(), logits.end(), 0.0);
    const double* phi = data.row(s);
    for (std::size_t d = 0; d < data.n_features; ++d) {
      const double f = phi[d];
      if (f == 0.0) continue;
      const double* w = x.data() + d * kc;
      for (std::size_t k = 0; k < kc; ++k) logits[k] += f * w[k];
    }
    std::size_t arg = 0;
    for (std::size_t k = 1; k < kc; ++k) {
      if (logits[k] > logits[arg]) arg = k;
    }
    hits += (arg == data.labels[s]) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(data.n_samples);
}

}  // namespace pcfed
