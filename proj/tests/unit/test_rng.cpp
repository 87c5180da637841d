#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "pcfed/rng.hpp"

using namespace pcfed;

TEST_CASE("same seed and stream replay exactly") {
  RngStream a(123, 5);
  RngStream b(123, 5);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different stream ids decorrelate") {
  RngStream a(123, 0);
  RngStream b(123, 1);
  int equal = 0;
  for (int i = 0; i < 64; ++i) equal += (a.next_u64() == b.next_u64());
  CHECK(equal == 0);
}

TEST_CASE("unit draws stay inside [0, 1)") {
  RngStream s(7, 0);
  for (int i = 0; i < 10000; ++i) {
    const double u = s.next_unit();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("unit draws fill bins roughly uniformly") {
  RngStream s(2024, 3);
  const int bins = 16, draws = 160000;
  std::vector<int> counts(bins, 0);
  for (int i = 0; i < draws; ++i) {
    ++counts[static_cast<int>(s.next_unit() * bins)];
  }
  // chi-square with 15 dof; 99.9th percentile ~ 37.7
  const double expected = static_cast<double>(draws) / bins;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 37.7);
}

TEST_CASE("gaussian draws have plausible first two moments") {
  RngStream s(99, 1);
  const int n = 200000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = s.next_gaussian();
    sum += g;
    sum_sq += g * g;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("next_below is unbiased over a small modulus") {
  RngStream s(5, 2);
  std::vector<int> counts(7, 0);
  const int draws = 70000;
  for (int i = 0; i < draws; ++i) ++counts[s.next_below(7)];
  for (int c : counts) {
    CHECK(c > 9500);
    CHECK(c < 10500);
  }
}

TEST_CASE("sample_indices draws distinct members below the bound") {
  RngStream s(31, 4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto picked = sample_indices(s, 10, 4);
    CHECK(picked.size() == 4);
    std::set<std::size_t> uniq(picked.begin(), picked.end());
    CHECK(uniq.size() == 4);
    for (const auto idx : picked) CHECK(idx < 10);
  }
}

TEST_CASE("sample_indices with k equal to n covers everything") {
  RngStream s(8, 6);
  const auto picked = sample_indices(s, 5, 5);
  std::set<std::size_t> uniq(picked.begin(), picked.end());
  CHECK(uniq.size() == 5);
}

TEST_CASE("frozen draw sequence is stable across builds") {
  // First draws for fixed (seed, stream), recorded when the generator was
  // first wired in. Any change here silently breaks reproducibility.
  RngStream s(1, 0);
  CHECK(s.next_u64() == 13313326839509515920ULL);
  CHECK(s.next_u64() == 9689670279651556119ULL);
  CHECK(s.next_u64() == 2918292514338324460ULL);
  RngStream g(42, 7);
  CHECK(g.next_gaussian() == doctest::Approx(0.46676648635577295).epsilon(1e-15));
  CHECK(g.next_gaussian() == doctest::Approx(0.59449793732699874).epsilon(1e-15));
}
