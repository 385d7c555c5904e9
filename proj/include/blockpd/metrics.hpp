#pragma once

#include "blockpd/problems.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace blockpd {

inline constexpr double db_floor = -300.0;

// sup_{|z| <= radius} <z, q> - G(z) for the diagonal quadratic G, with the maximiser in `z` if given.
double ball_conjugate(DiagonalQuadratic const &G, std::span<double const> q, double radius,
                      std::vector<double> *z = nullptr);

// Duality gap of the problem with G replaced by G + indicator of B(0, cx):
// G(x) + F(Kx) + Gt*(-K*y) + F*(y). Infinite when |x| > cx or y leaves the dual balls.
double pseudo_gap(SaddleProblem const &problem, std::span<double const> x, std::span<double const> y, double cx);

// The same gap with the conjugate term evaluated from sums of squares grouped by equal c_k^2, so a
// snapshot taken once can be re-evaluated for any later C_x.
class GapEvaluator {
 public:
  struct Snapshot {
    double base = 0.0;    // G(x) + F(Kx)
    double x_norm = 0.0;
    bool feasible = true;  // y inside the dual balls
    std::vector<double> b2;  // per group: sum of (c_k d_k - (K*y)_k)^2
  };

  explicit GapEvaluator(SaddleProblem const &problem);
  std::size_t groups() const { return c2_.size(); }
  Snapshot snapshot(std::span<double const> x, std::span<double const> y) const;
  double gap(Snapshot const &s, double cx) const;
  double gap(std::span<double const> x, std::span<double const> y, double cx) const;

 private:
  SaddleProblem const *problem_;
  std::vector<double> c2_;
  std::vector<std::uint32_t> group_;
  double half_d2_ = 0.0;
  mutable std::vector<double> kx_, q_;
};

// 20 log10(gap / gap0), floored; gap <= 0 maps to the floor
double gap_db(double gap, double gap0);
// 10 log10(|v - vbar|^2 / |vbar|^2), floored
double target_db(std::span<double const> v, std::span<double const> vbar);
// 10 log10((val - val_hat)^2 / val_hat^2), floored
double value_db(double val, double val_hat);

struct MetricRow {
  std::size_t iter = 0;
  double expected_full_updates = 0.0;
  double cpu_seconds = 0.0;
  double gap_db = 0.0;
  double target_db = 0.0;
  double value_db = 0.0;
  double gap = 0.0;
  double value = 0.0;
  std::string variant;
};

struct Target {
  std::vector<double> x;      // primal point
  std::vector<double> image;  // problem.to_image(x)
  double value = 0.0;         // G(x) + F(Kx)
  double stabilization_db = 0.0;  // target_db of the iterate at 3/4 of the run against the final one
  std::size_t iterations = 0;
  bool from_cache = false;
};

// FNV-1a over the problem data and the iteration count
std::uint64_t target_hash(SaddleProblem const &problem, std::size_t iterations);

// Plain PDHGM from zero; cached under cache_dir (no caching when empty).
Target compute_target(SaddleProblem const &problem, std::size_t iterations, std::string const &cache_dir = {});

}  // namespace blockpd
