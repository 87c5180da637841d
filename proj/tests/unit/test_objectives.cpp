#include <doctest.h>

#include <cmath>
#include <memory>

#include "../support/oracles.hpp"
#include "pcfed/data.hpp"
#include "pcfed/errors.hpp"
#include "pcfed/objectives.hpp"
#include "pcfed/rng.hpp"

using namespace pcfed;

namespace {

std::shared_ptr<const Dataset> tiny_dataset() {
  auto ds = std::make_shared<Dataset>();
  ds->n_samples = 4;
  ds->n_features = 3;
  ds->n_classes = 2;
  ds->features = {0.1, 0.5, 1.0, 0.9, 0.2, 0.0, 0.4, 0.4, 0.3, 0.8, 0.1, 0.6};
  ds->labels = {0, 1, 0, 1};
  return ds;
}

}  // namespace

TEST_CASE("personalization weights validate") {
  PersonalizationWeights w({0.1, 0.2});
  w.validate(2);
  CHECK(w.max_value() == doctest::Approx(0.2));
  CHECK(PersonalizationWeights::constant(0.5, 3).size() == 3);
  CHECK_THROWS_AS(w.validate(3), ValidationError);
  CHECK_THROWS_AS(PersonalizationWeights({-0.1}).validate(1), ValidationError);
  CHECK_THROWS_AS(PersonalizationWeights({std::nan("")}).validate(1), ValidationError);
}

TEST_CASE("quadratic value and gradient on a hand example") {
  Matrix q(2, 2);
  q.at(0, 0) = 2.0;
  q.at(0, 1) = 0.5;
  q.at(1, 0) = 0.5;
  q.at(1, 1) = 1.0;
  QuadraticObjective f(q, {1.0, -1.0});
  // f(x) = 0.5 x'Qx - b'x at x = (1, 2): 0.5*(2 + 0.5*2 + 0.5*2 + 4) - (1 - 2) = 5
  const ParamVector x{1.0, 2.0};
  CHECK(f.value(x) == doctest::Approx(5.0));
  // grad = Qx - b = (2 + 1 - 1, 0.5 + 2 + 1) = (2, 3.5)
  const ParamVector g = f.grad(x);
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == doctest::Approx(3.5));
}

TEST_CASE("quadratic gradient matches finite differences") {
  RngStream stream(17, 0);
  Matrix q = Matrix::identity(5);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = 0.2 * stream.next_gaussian() + (i == j ? 2.0 : 0.0);
      q.at(i, j) = v;
      q.at(j, i) = v;
    }
  }
  ParamVector b(5);
  for (auto& v : b) v = stream.next_gaussian();
  QuadraticObjective f(q, b);
  ParamVector x(5);
  for (auto& v : x) v = stream.next_gaussian();
  const auto fd = testsupport::finite_diff_grad(
      [&f](const std::vector<double>& y) { return f.value(y); }, x);
  CHECK(testsupport::rel_err(f.grad(x), fd) < 1e-6);
}

TEST_CASE("quadratic smoothness bound is the top eigenvalue") {
  Matrix q = Matrix::identity(3);
  q.at(0, 0) = 4.0;
  QuadraticObjective f(q, {0.0, 0.0, 0.0});
  CHECK(f.smoothness_bound() == doctest::Approx(4.0).epsilon(1e-8));
}

TEST_CASE("quadratic rejects asymmetric or mismatched inputs") {
  Matrix q = Matrix::identity(2);
  q.at(0, 1) = 1.0;  // asymmetric
  CHECK_THROWS_AS(QuadraticObjective(q, ParamVector{0.0, 0.0}), ValidationError);
  CHECK_THROWS_AS(QuadraticObjective(Matrix::identity(2), ParamVector{0.0}), ValidationError);
}

TEST_CASE("noisy quadratic is unbiased and controls its second moment") {
  Matrix q = Matrix::identity(4);
  QuadraticObjective base(q, {1.0, 0.0, -1.0, 0.5});
  NoisyQuadraticObjective noisy(q, {1.0, 0.0, -1.0, 0.5}, 0.7);
  const ParamVector x{0.3, -0.2, 0.9, 0.0};
  const ParamVector g = base.grad(x);

  RngStream stream(404, 0);
  const int draws = 20000;
  ParamVector mean(4, 0.0);
  double second = 0.0;
  for (int i = 0; i < draws; ++i) {
    const ParamVector s = noisy.grad_stochastic(x, stream, 1.0);
    for (std::size_t j = 0; j < 4; ++j) mean[j] += s[j] / draws;
    double dev = 0.0;
    for (std::size_t j = 0; j < 4; ++j) dev += (s[j] - g[j]) * (s[j] - g[j]);
    second += dev / draws;
  }
  // stderr of each mean coordinate ~ 0.7/2/sqrt(draws) ~ 0.0025
  CHECK(testsupport::max_abs_diff(mean, g) < 0.02);
  CHECK(second == doctest::Approx(0.49).epsilon(0.05));
}

TEST_CASE("noise level zero draws nothing and is exact") {
  Matrix q = Matrix::identity(2);
  NoisyQuadraticObjective noisy(q, ParamVector{1.0, 2.0}, 0.0);
  RngStream a(5, 0);
  RngStream b(5, 0);
  const ParamVector x{0.5, 0.5};
  const ParamVector g = noisy.grad_stochastic(x, a, 1.0);
  CHECK(testsupport::max_abs_diff(g, noisy.grad(x)) == 0.0);
  CHECK(a.next_u64() == b.next_u64());  // stream untouched
}

TEST_CASE("softmax value and gradient match finite differences") {
  SoftmaxRegressionObjective f(tiny_dataset());
  CHECK(f.dim() == 6);
  RngStream stream(11, 0);
  ParamVector w(6);
  for (auto& v : w) v = 0.5 * stream.next_gaussian();
  const auto fd = testsupport::finite_diff_grad(
      [&f](const std::vector<double>& y) { return f.value(y); }, w);
  CHECK(testsupport::rel_err(f.grad(w), fd) < 1e-6);
}

TEST_CASE("softmax minibatch gradient is unbiased") {
  SoftmaxRegressionObjective f(tiny_dataset());
  ParamVector w(6, 0.1);
  const ParamVector g = f.grad(w);
  RngStream stream(2025, 0);
  const int draws = 40000;
  ParamVector mean(6, 0.0);
  for (int i = 0; i < draws; ++i) {
    const ParamVector s = f.grad_stochastic(w, stream, 0.5);
    for (std::size_t j = 0; j < 6; ++j) mean[j] += s[j] / draws;
  }
  CHECK(testsupport::max_abs_diff(mean, g) < 0.01);
}

TEST_CASE("softmax full batch short-circuits to the exact gradient") {
  SoftmaxRegressionObjective f(tiny_dataset());
  ParamVector w(6, -0.2);
  RngStream stream(1, 0);
  CHECK(testsupport::max_abs_diff(f.grad_stochastic(w, stream, 1.0), f.grad(w)) == 0.0);
}

TEST_CASE("softmax loss is the mean cross entropy at zero weights") {
  SoftmaxRegressionObjective f(tiny_dataset());
  const ParamVector w(6, 0.0);
  CHECK(f.value(w) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("softmax is numerically stable under large logits") {
  SoftmaxRegressionObjective f(tiny_dataset());
  ParamVector w(6, 500.0);
  CHECK(std::isfinite(f.value(w)));
  for (const double g : f.grad(w)) CHECK(std::isfinite(g));
}

TEST_CASE("softmax accuracy counts argmax hits") {
  const auto data = tiny_dataset();
  SoftmaxRegressionObjective f(data);
  const ParamVector w(6, 0.0);
  const double acc = f.accuracy(w, *data);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
}

TEST_CASE("batch fraction outside (0, 1] is rejected") {
  SoftmaxRegressionObjective f(tiny_dataset());
  RngStream stream(3, 0);
  const ParamVector w(6, 0.0);
  CHECK_THROWS_AS(f.grad_stochastic(w, stream, 0.0), ValidationError);
  CHECK_THROWS_AS(f.grad_stochastic(w, stream, 1.5), ValidationError);
}
