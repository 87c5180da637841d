#include <doctest.h>

#include <cmath>

#include "pcfed/errors.hpp"
#include "pcfed/numerics.hpp"

using namespace pcfed;

TEST_CASE("dot and norms agree on a hand example") {
  const ParamVector a{1.0, -2.0, 3.0};
  const ParamVector b{4.0, 0.5, -1.0};
  CHECK(dot(a, b) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(norm_sq(a) == doctest::Approx(14.0));
  CHECK(norm(a) == doctest::Approx(std::sqrt(14.0)));
  CHECK(l1_norm(a) == doctest::Approx(6.0));
  CHECK(linf_norm(a) == doctest::Approx(3.0));
}

TEST_CASE("size mismatch is rejected") {
  CHECK_THROWS_AS(dot({1.0}, {1.0, 2.0}), ValidationError);
  CHECK_THROWS_AS(add({1.0}, {1.0, 2.0}), ValidationError);
}

TEST_CASE("non-finite values are rejected where promised") {
  ParamVector bad{1.0, std::nan("")};
  CHECK_FALSE(all_finite(bad));
  CHECK_THROWS_AS(require_finite(bad, "x"), RuntimeFailure);
}

TEST_CASE("vector arithmetic helpers") {
  ParamVector x{1.0, 2.0};
  const ParamVector y{10.0, 20.0};
  CHECK(add(x, y) == ParamVector{11.0, 22.0});
  CHECK(sub(y, x) == ParamVector{9.0, 18.0});
  CHECK(scaled(x, 3.0) == ParamVector{3.0, 6.0});
  add_scaled_inplace(x, 0.1, y);
  CHECK(x[0] == doctest::Approx(2.0));
  CHECK(x[1] == doctest::Approx(4.0));
  scale_inplace(x, 0.5);
  CHECK(x[0] == doctest::Approx(1.0));
}

TEST_CASE("mean_of averages in fixed order") {
  const std::vector<ParamVector> vs{{1.0, 0.0}, {3.0, 6.0}};
  const ParamVector m = mean_of(vs);
  CHECK(m[0] == doctest::Approx(2.0));
  CHECK(m[1] == doctest::Approx(3.0));
}

TEST_CASE("matvec and matmul on small matrices") {
  Matrix a(2, 2);
  a.at(0, 0) = 1.0;
  a.at(0, 1) = 2.0;
  a.at(1, 0) = 3.0;
  a.at(1, 1) = 4.0;
  const ParamVector v{1.0, 1.0};
  const ParamVector av = matvec(a, v);
  CHECK(av[0] == doctest::Approx(3.0));
  CHECK(av[1] == doctest::Approx(7.0));

  const Matrix a2 = matmul(a, Matrix::identity(2));
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 2; ++c) CHECK(a2.at(r, c) == doctest::Approx(a.at(r, c)));
  }

  const Matrix at = transpose(a);
  CHECK(at.at(0, 1) == doctest::Approx(3.0));
  const ParamVector atv = matvec_transposed(a, v);
  CHECK(atv[0] == doctest::Approx(4.0));
  CHECK(atv[1] == doctest::Approx(6.0));
}

TEST_CASE("linear solve recovers a known solution and rejects singularity") {
  Matrix a(2, 2);
  a.at(0, 0) = 2.0;
  a.at(0, 1) = 1.0;
  a.at(1, 0) = 1.0;
  a.at(1, 1) = 3.0;
  // solution (1, -1): rhs = A [1, -1]^T = (1, -2)
  const ParamVector x = solve_linear(a, {1.0, -2.0});
  CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(x[1] == doctest::Approx(-1.0).epsilon(1e-12));

  Matrix s(2, 2);
  s.at(0, 0) = 1.0;
  s.at(0, 1) = 2.0;
  s.at(1, 0) = 2.0;
  s.at(1, 1) = 4.0;
  CHECK_THROWS_AS(solve_linear(s, {1.0, 1.0}), RuntimeFailure);
}

TEST_CASE("power iteration finds the top eigenvalue of a diagonal matrix") {
  Matrix d = Matrix::identity(4);
  d.at(2, 2) = 7.5;
  const double top = symmetric_max_eigenvalue(
      [&d](const ParamVector& v) { return matvec(d, v); }, 4);
  CHECK(top == doctest::Approx(7.5).epsilon(1e-8));
}

TEST_CASE("format_double round-trips through parsing") {
  for (const double v : {0.1, 1.0 / 3.0, 1e-300, 12345.6789, -0.0}) {
    const std::string s = format_double(v);
    CHECK(std::stod(s) == v);
  }
}
