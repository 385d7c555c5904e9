#pragma once

#include "blockpd/block_core.hpp"
#include "blockpd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace testing {

inline std::vector<double> random_vector(std::size_t n, blockpd::SplitMix64 &rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto &x : v) { x = scale * rng.normal(); }
  return v;
}

// |<Ax, y> - <x, A*y>| / (|Ax||y| + |x||A*y|), worst over `trials` random pairs
inline double worst_adjoint_error(blockpd::LinearMap const &A, std::size_t trials, std::uint64_t seed) {
  blockpd::SplitMix64 rng(seed);
  std::vector<double> ax(A.rows), aty(A.cols);
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    auto const x = random_vector(A.cols, rng);
    auto const y = random_vector(A.rows, rng);
    A.forward(x, ax);
    A.adjoint(y, aty);
    double const lhs = blockpd::dot(ax, y), rhs = blockpd::dot(x, aty);
    double const scale = blockpd::norm2(ax) * blockpd::norm2(y) + blockpd::norm2(x) * blockpd::norm2(aty);
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(scale, 1e-300));
  }
  return worst;
}

inline double max_rel_diff(std::span<double const> a, std::span<double const> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    num = std::max(num, std::abs(a[k] - b[k]));
    den = std::max(den, std::max(std::abs(a[k]), std::abs(b[k])));
  }
  return den > 0.0 ? num / den : num;
}

}  // namespace testing
