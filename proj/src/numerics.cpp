#include "pcfed/numerics.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "pcfed/errors.hpp"

namespace pcfed {

void require_same_size(const ParamVector& a, const ParamVector& b, const char* where) {
  if (a.size() != b.size()) {
    throw ValidationError(std::string(where) + ": size mismatch " +
                          std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
}

bool all_finite(const ParamVector& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void require_finite(const ParamVector& v, const char* where) {
  if (!all_finite(v)) {
    throw RuntimeFailure(std::string(where) + ": non-finite value encountered");
  }
}

double dot(const ParamVector& a, const ParamVector& b) {
  require_same_size(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm_sq(const ParamVector& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return acc;
}

double norm(const ParamVector& v) { return std::sqrt(norm_sq(v)); }

double l1_norm(const ParamVector& v) {
  double acc = 0.0;
  for (double x : v) acc += std::fabs(x);
  return acc;
}

double linf_norm(const ParamVector& v) {
  double best = 0.0;
  for (double x : v) best = std::max(best, std::fabs(x));
  return best;
}

ParamVector add(const ParamVector& a, const ParamVector& b) {
  require_same_size(a, b, "add");
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

ParamVector sub(const ParamVector& a, const ParamVector& b) {
  require_same_size(a, b, "sub");
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

ParamVector scaled(const ParamVector& v, double a) {
  ParamVector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = a * v[i];
  return out;
}

void add_scaled_inplace(ParamVector& y, double a, const ParamVector& x) {
  require_same_size(y, x, "add_scaled_inplace");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

void scale_inplace(ParamVector& v, double a) {
  for (double& x : v) x *= a;
}

ParamVector mean_of(const std::vector<ParamVector>& vs) {
  if (vs.empty()) throw ValidationError("mean_of: empty list");
  ParamVector acc(vs[0].size(), 0.0);
  for (const auto& v : vs) {
    require_same_size(acc, v, "mean_of");
    for (std::size_t i = 0; i < v.size(); ++i) acc[i] += v[i];
  }
  const double inv = 1.0 / static_cast<double>(vs.size());
  for (double& x : acc) x *= inv;
  return acc;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

ParamVector matvec(const Matrix& m, const ParamVector& x) {
  if (m.cols != x.size()) throw ValidationError("matvec: dimension mismatch");
  ParamVector out(m.rows, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    double acc = 0.0;
    const double* row = m.data.data() + r * m.cols;
    for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * x[c];
    out[r] = acc;
  }
  return out;
}

ParamVector matvec_transposed(const Matrix& m, const ParamVector& x) {
  if (m.rows != x.size()) throw ValidationError("matvec_transposed: dimension mismatch");
  ParamVector out(m.cols, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = m.data.data() + r * m.cols;
    const double xr = x[r];
    for (std::size_t c = 0; c < m.cols; ++c) out[c] += row[c] * xr;
  }
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw ValidationError("matmul: dimension mismatch");
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j) out.at(i, j) += aik * b.at(k, j);
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols, m.rows);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) out.at(c, r) = m.at(r, c);
  return out;
}

ParamVector solve_linear(Matrix a, ParamVector b) {
  if (a.rows != a.cols || a.rows != b.size()) {
    throw ValidationError("solve_linear: need square system matching rhs");
  }
  const std::size_t n = a.rows;
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;

  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    double best = std::fabs(a.at(col, col));
    for (std::size_t r = col + 1; r < n; ++r) {
      const double cand = std::fabs(a.at(r, col));
      if (cand > best) {
        best = cand;
        pivot = r;
      }
    }
    if (!(best > 0.0) || !std::isfinite(best)) {
      throw RuntimeFailure("solve_linear: singular matrix at column " + std::to_string(col));
    }
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a.at(col, c), a.at(pivot, c));
      std::swap(b[col], b[pivot]);
    }
    const double inv_piv = 1.0 / a.at(col, col);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double factor = a.at(r, col) * inv_piv;
      if (factor == 0.0) continue;
      a.at(r, col) = 0.0;
      for (std::size_t c = col + 1; c < n; ++c) a.at(r, c) -= factor * a.at(col, c);
      b[r] -= factor * b[col];
    }
  }

  ParamVector x(n, 0.0);
  for (std::size_t ri = n; ri-- > 0;) {
    double acc = b[ri];
    for (std::size_t c = ri + 1; c < n; ++c) acc -= a.at(ri, c) * x[c];
    x[ri] = acc / a.at(ri, ri);
  }
  require_finite(x, "solve_linear");
  return x;
}

double symmetric_max_eigenvalue(const std::function<ParamVector(const ParamVector&)>& apply,
                                std::size_t dim, double tol, std::size_t max_iters) {
  if (dim == 0) throw ValidationError("symmetric_max_eigenvalue: empty operator");
  ParamVector v(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    v[i] = 1.0 + static_cast<double>(i % 7) / 8.0;
  }
  double nv = norm(v);
  scale_inplace(v, 1.0 / nv);

  double lambda = 0.0;
  for (std::size_t it = 0; it < max_iters; ++it) {
    ParamVector w = apply(v);
    require_finite(w, "symmetric_max_eigenvalue");
    const double next = dot(v, w);
    const double wn = norm(w);
    if (wn == 0.0) return 0.0;
    scale_inplace(w, 1.0 / wn);
    v = std::move(w);
    if (it > 0 && std::fabs(next - lambda) <= tol * std::max(1.0, std::fabs(next))) {
      return next;
    }
    lambda = next;
  }
  return lambda;
}

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return std::string(buf);
}

}  // namespace pcfed
