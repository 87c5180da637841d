#pragma once

// Independent re-implementations used as test oracles. Kept deliberately
// simple and slow; they must not share code with the library under test.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

namespace testsupport {

// L1-ball projection by bisection on the shrinkage threshold.
inline std::vector<double> l1_project_bisection(const std::vector<double>& x, double radius) {
  double l1 = 0.0;
  for (double v : x) l1 += std::abs(v);
  if (l1 <= radius) return x;
  double lo = 0.0, hi = 0.0;
  for (double v : x) hi = std::max(hi, std::abs(v));
  const auto shrunk_l1 = [&x](double theta) {
    double s = 0.0;
    for (double v : x) s += std::max(std::abs(v) - theta, 0.0);
    return s;
  };
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (shrunk_l1(mid) > radius) lo = mid;
    else hi = mid;
  }
  const double theta = 0.5 * (lo + hi);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double mag = std::max(std::abs(x[i]) - theta, 0.0);
    out[i] = std::copysign(mag, x[i]);
  }
  return out;
}

// Central finite difference of a scalar function along every coordinate.
inline std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                            const std::vector<double>& x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<double> xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::logic_error("size mismatch in max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline double rel_err(const std::vector<double>& got, const std::vector<double>& want) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    num += (got[i] - want[i]) * (got[i] - want[i]);
    den += want[i] * want[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

}  // namespace testsupport
