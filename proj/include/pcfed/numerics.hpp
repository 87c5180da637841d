#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace pcfed {

// Dense vector of model parameters. All accumulation helpers below reduce
// strictly left to right so results are reproducible across runs and builds.
using ParamVector = std::vector<double>;

void require_same_size(const ParamVector& a, const ParamVector& b, const char* where);
void require_finite(const ParamVector& v, const char* where);
bool all_finite(const ParamVector& v);

double dot(const ParamVector& a, const ParamVector& b);
double norm_sq(const ParamVector& v);
double norm(const ParamVector& v);
double l1_norm(const ParamVector& v);
double linf_norm(const ParamVector& v);

ParamVector add(const ParamVector& a, const ParamVector& b);
ParamVector sub(const ParamVector& a, const ParamVector& b);
ParamVector scaled(const ParamVector& v, double a);

// y += a * x
void add_scaled_inplace(ParamVector& y, double a, const ParamVector& x);
void scale_inplace(ParamVector& v, double a);

// Mean of equally sized vectors, fixed accumulation order (index 0,1,...).
ParamVector mean_of(const std::vector<ParamVector>& vs);

// Row-major dense matrix. Only used for small problems (synthetic quadratics,
// reference solves), so there is no blocking or clever storage.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  static Matrix identity(std::size_t n);
};

ParamVector matvec(const Matrix& m, const ParamVector& x);
ParamVector matvec_transposed(const Matrix& m, const ParamVector& x);
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

// Solves A x = b by Gaussian elimination with partial pivoting. Throws
// RuntimeFailure on a (numerically) singular system.
ParamVector solve_linear(Matrix a, ParamVector b);

// Largest eigenvalue of a symmetric PSD operator given only matvec access.
// Power iteration with a deterministic start vector; converges when the
// Rayleigh quotient moves less than tol between sweeps.
double symmetric_max_eigenvalue(const std::function<ParamVector(const ParamVector&)>& apply,
                                std::size_t dim, double tol = 1e-9,
                                std::size_t max_iters = 100000);

// Formats with enough digits to round-trip a double exactly ("%.17g").
std::string format_double(double x);

}  // namespace pcfed
