#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pcfed/numerics.hpp"
#include "pcfed/rng.hpp"

namespace pcfed {

// Labeled feature matrix, row-major. Features are expected to be scaled to
// [0, 1] by the loaders; labels index classes 0..n_classes-1.
struct Dataset {
  std::size_t n_samples = 0;
  std::size_t n_features = 0;
  std::size_t n_classes = 0;
  std::vector<double> features;        // n_samples * n_features
  std::vector<std::uint8_t> labels;    // n_samples

  const double* row(std::size_t i) const { return features.data() + i * n_features; }
  void validate(const char* where) const;
};

// Per-agent coupling weights sigma_i >= 0 between an agent's private block
// and the shared average.
struct PersonalizationWeights {
  std::vector<double> values;

  PersonalizationWeights() = default;
  explicit PersonalizationWeights(std::vector<double> v) : values(std::move(v)) {}
  static PersonalizationWeights constant(double sigma, std::size_t m);

  double operator[](std::size_t i) const { return values[i]; }
  std::size_t size() const { return values.size(); }
  double max_value() const;
  void validate(std::size_t m) const;
};

// Smooth local loss f_i. grad_stochastic must be unbiased for grad and must
// draw all of its randomness from the supplied stream.
class ObjectiveOracle {
 public:
  virtual ~ObjectiveOracle() = default;
  virtual std::size_t dim() const = 0;
  virtual double value(const ParamVector& x) const = 0;
  virtual ParamVector grad(const ParamVector& x) const = 0;
  virtual ParamVector grad_stochastic(const ParamVector& x, RngStream& stream,
                                      double batch_fraction) const = 0;
  // Upper bound on the gradient Lipschitz constant.
  virtual double smoothness_bound() const = 0;
  virtual std::string describe() const = 0;
};

// f(x) = 0.5 x'Qx - b'x with Q symmetric PSD. The deterministic case of the
// oracle; grad_stochastic is exact.
class QuadraticObjective : public ObjectiveOracle {
 public:
  QuadraticObjective(Matrix q, ParamVector b);

  std::size_t dim() const override { return b_.size(); }
  double value(const ParamVector& x) const override;
  ParamVector grad(const ParamVector& x) const override;
  ParamVector grad_stochastic(const ParamVector& x, RngStream& stream,
                              double batch_fraction) const override;
  double smoothness_bound() const override { return l_bound_; }
  std::string describe() const override;

  const Matrix& q() const { return q_; }
  const ParamVector& b() const { return b_; }

 private:
  Matrix q_;
  ParamVector b_;
  double l_bound_ = 0.0;
};

// Quadratic plus additive white gaussian gradient noise with
// E||noise||^2 = noise_level^2 (noise_level / sqrt(dim) per coordinate).
class NoisyQuadraticObjective : public ObjectiveOracle {
 public:
  NoisyQuadraticObjective(Matrix q, ParamVector b, double noise_level);

  std::size_t dim() const override { return base_.dim(); }
  double value(const ParamVector& x) const override { return base_.value(x); }
  ParamVector grad(const ParamVector& x) const override { return base_.grad(x); }
  ParamVector grad_stochastic(const ParamVector& x, RngStream& stream,
                              double batch_fraction) const override;
  double smoothness_bound() const override { return base_.smoothness_bound(); }
  std::string describe() const override;

  const QuadraticObjective& base() const { return base_; }
  double noise_level() const { return noise_level_; }

 private:
  QuadraticObjective base_;
  double noise_level_;
};

// Multinomial logistic regression over a fixed dataset. The parameter vector
// stacks W in R^{D x K} row-major: index d * K + k. Log-sum-exp is shifted by
// the row max for stability. Minibatches are drawn uniformly without
// replacement and averaged in draw order.
class SoftmaxRegressionObjective : public ObjectiveOracle {
 public:
  explicit SoftmaxRegressionObjective(std::shared_ptr<const Dataset> data);

  std::size_t dim() const override;
  double value(const ParamVector& x) const override;
  ParamVector grad(const ParamVector& x) const override;
  ParamVector grad_stochastic(const ParamVector& x, RngStream& stream,
                              double batch_fraction) const override;
  double smoothness_bound() const override { return l_bound_; }
  std::string describe() const override;

  const Dataset& data() const { return *data_; }

  // Fraction of rows of data classified correctly by the stacked weights.
  double accuracy(const ParamVector& x, const Dataset& data) const;

 private:
  void accumulate_sample(std::size_t row, const ParamVector& x, double* value_acc,
                         ParamVector* grad_acc) const;

  std::shared_ptr<const Dataset> data_;
  double l_bound_ = 0.0;
};

}  // namespace pcfed
