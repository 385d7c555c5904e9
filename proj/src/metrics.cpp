#include "blockpd/metrics.hpp"

#include "blockpd/solvers.hpp"

#include <fmt/format.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace blockpd {

namespace {

double sum_sq(std::span<double const> v) {
  double s = 0.0;
  for (double a : v) { s += a * a; }
  return s;
}

double floored(double db) { return std::isfinite(db) ? std::max(db, db_floor) : (db > 0 ? db : db_floor); }

}  // namespace

namespace {

// Multiplier mu >= 0 of the ball constraint for the maximiser z_k = b_k / (c2_k + mu), given the
// values c2 and squared numerators b2 (per coordinate or per group of equal c2).
double ball_multiplier(std::span<double const> c2, std::span<double const> b2, double radius) {
  double bn2 = 0.0, n0 = 0.0;
  bool unbounded = false;  // some c2 = 0 with b != 0
  for (std::size_t k = 0; k < c2.size(); ++k) {
    if (b2[k] == 0.0) { continue; }
    bn2 += b2[k];
    if (c2[k] == 0.0) {
      unbounded = true;
    } else {
      n0 += b2[k] / (c2[k] * c2[k]);
    }
  }
  if (bn2 == 0.0 || (!unbounded && n0 <= radius * radius)) { return 0.0; }
  // h(mu) = 1/|z(mu)| - 1/radius is increasing with a root in (0, |b| / radius]
  double lo = 0.0, hi = std::sqrt(bn2) / radius;
  double mu = hi;
  for (int it = 0; it < 200; ++it) {
    double s2 = 0.0, s3 = 0.0;
    for (std::size_t k = 0; k < c2.size(); ++k) {
      if (b2[k] == 0.0) { continue; }
      double const den = c2[k] + mu;
      double const t = b2[k] / (den * den);
      s2 += t;
      s3 += t / den;
    }
    double const nz = std::sqrt(s2);
    double const h = 1.0 / nz - 1.0 / radius;
    if (h > 0.0) {
      hi = mu;
    } else {
      lo = mu;
    }
    if (std::abs(h) * radius <= 4e-16 || hi - lo <= 4e-16 * hi) { break; }
    double next = mu - h * nz * nz * nz / s3;
    if (!(next > lo && next < hi)) { next = 0.5 * (lo + hi); }
    if (next == mu) { break; }
    mu = next;
  }
  return mu;
}

}  // namespace

double ball_conjugate(DiagonalQuadratic const &G, std::span<double const> q, double radius, std::vector<double> *zout) {
  auto const n = q.size();
  if (G.c.size() != n || G.d.size() != n) { throw DimensionError("ball_conjugate: size mismatch"); }
  if (!(radius > 0.0)) { throw std::invalid_argument("ball_conjugate: radius must be positive"); }
  std::vector<double> b(n), c2(n), b2(n);
  for (std::size_t k = 0; k < n; ++k) {
    b[k] = q[k] + G.c[k] * G.d[k];
    b2[k] = b[k] * b[k];
    c2[k] = G.c[k] * G.c[k];
  }
  double const mu = ball_multiplier(c2, b2, radius);
  double val = 0.0;
  std::vector<double> z(n);
  for (std::size_t k = 0; k < n; ++k) {
    z[k] = b[k] == 0.0 ? 0.0 : b[k] / (c2[k] + mu);
    double const r = G.c[k] * z[k] - G.d[k];
    val += z[k] * q[k] - 0.5 * r * r;
  }
  if (zout) { *zout = std::move(z); }
  return val;
}

GapEvaluator::GapEvaluator(SaddleProblem const &problem) : problem_(&problem) {
  auto const &G = problem.G;
  std::unordered_map<double, std::uint32_t> index;
  group_.resize(G.c.size());
  half_d2_ = 0.0;
  for (std::size_t k = 0; k < G.c.size(); ++k) {
    double const c2 = G.c[k] * G.c[k];
    auto [it, fresh] = index.try_emplace(c2, static_cast<std::uint32_t>(c2_.size()));
    if (fresh) { c2_.push_back(c2); }
    group_[k] = it->second;
    half_d2_ += 0.5 * G.d[k] * G.d[k];
  }
  kx_.resize(problem.K.rows());
  q_.resize(problem.K.cols());
}

GapEvaluator::Snapshot GapEvaluator::snapshot(std::span<double const> x, std::span<double const> y) const {
  auto const &P = *problem_;
  auto const &G = P.G;
  if (x.size() != P.K.cols() || y.size() != P.K.rows()) { throw DimensionError("gap snapshot: size mismatch"); }
  Snapshot s;
  s.x_norm = std::sqrt(sum_sq(x));
  s.feasible = std::isfinite(P.dual_value(y));
  P.K.apply(x, kx_);
  P.K.apply_adjoint(y, q_);
  s.base = P.primal_value(x) + P.fenchel_F(kx_);
  s.b2.assign(c2_.size(), 0.0);
  for (std::size_t k = 0; k < q_.size(); ++k) {
    double const b = G.c[k] * G.d[k] - q_[k];
    s.b2[group_[k]] += b * b;
  }
  return s;
}

double GapEvaluator::gap(Snapshot const &s, double cx) const {
  if (!(cx > 0.0)) { throw std::invalid_argument("pseudo gap: C_x must be positive"); }
  if (!s.feasible || s.x_norm > cx * (1.0 + 1e-12)) { return std::numeric_limits<double>::infinity(); }
  double const mu = ball_multiplier(c2_, s.b2, cx);
  double conj = 0.0;
  for (std::size_t g = 0; g < c2_.size(); ++g) {
    if (s.b2[g] == 0.0) { continue; }
    double const den = c2_[g] + mu;
    conj += s.b2[g] * (c2_[g] + 2.0 * mu) / (2.0 * den * den);
  }
  return s.base + (conj - half_d2_);
}

double GapEvaluator::gap(std::span<double const> x, std::span<double const> y, double cx) const {
  return gap(snapshot(x, y), cx);
}

double pseudo_gap(SaddleProblem const &problem, std::span<double const> x, std::span<double const> y, double cx) {
  auto const &K = problem.K;
  if (x.size() != K.cols() || y.size() != K.rows()) { throw DimensionError("pseudo_gap: size mismatch"); }
  double const inf = std::numeric_limits<double>::infinity();
  if (std::sqrt(sum_sq(x)) > cx * (1.0 + 1e-12)) { return inf; }
  double const fs = problem.dual_value(y);
  if (!std::isfinite(fs)) { return inf; }
  std::vector<double> kx(K.rows()), q(K.cols());
  K.apply(x, kx);
  K.apply_adjoint(y, q);
  for (auto &v : q) { v = -v; }
  return problem.primal_value(x) + problem.fenchel_F(kx) + ball_conjugate(problem.G, q, cx) + fs;
}

double gap_db(double gap, double gap0) {
  if (!(gap0 > 0.0) || !std::isfinite(gap0)) { throw std::invalid_argument("gap_db: reference gap must be positive"); }
  if (!(gap > 0.0)) { return db_floor; }
  return floored(20.0 * std::log10(gap / gap0));
}

double target_db(std::span<double const> v, std::span<double const> vbar) {
  if (v.size() != vbar.size()) { throw DimensionError("target_db: size mismatch"); }
  double const ref = sum_sq(vbar);
  if (!(ref > 0.0)) { throw std::invalid_argument("target_db: zero target"); }
  double d = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) { d += (v[k] - vbar[k]) * (v[k] - vbar[k]); }
  if (d == 0.0) { return db_floor; }
  return floored(10.0 * std::log10(d / ref));
}

double value_db(double val, double val_hat) {
  if (val_hat == 0.0) { throw std::invalid_argument("value_db: zero target value"); }
  double const d = val - val_hat;
  if (d == 0.0) { return db_floor; }
  return floored(10.0 * std::log10(d * d / (val_hat * val_hat)));
}

std::uint64_t target_hash(SaddleProblem const &problem, std::size_t iterations) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](void const *data, std::size_t len) {
    auto const *p = static_cast<unsigned char const *>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  auto mix_vec = [&](auto const &v) {
    std::uint64_t const n = v.size();
    mix(&n, sizeof n);
    if (n) { mix(v.data(), n * sizeof(v[0])); }
  };
  int const kind = static_cast<int>(problem.kind);
  std::uint64_t const dims[4] = {problem.grid.width, problem.grid.height, iterations, problem.K.cols()};
  double const bound = problem.K.global_norm_bound();
  mix(&kind, sizeof kind);
  mix(dims, sizeof dims);
  mix(&bound, sizeof bound);
  mix_vec(problem.G.c);
  mix_vec(problem.G.d);
  mix_vec(problem.dual_radius);
  mix_vec(problem.dual_comps);
  return h;
}

namespace {

constexpr char kMagic[8] = {'b', 'p', 'd', 't', 'g', 't', '0', '1'};

bool read_cache(std::filesystem::path const &path, std::size_t n, Target &t) {
  std::ifstream in(path, std::ios::binary);
  if (!in) { return false; }
  char magic[8];
  std::uint64_t size = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char *>(&size), sizeof size);
  if (!in || std::memcmp(magic, kMagic, 8) != 0 || size != n) { return false; }
  in.read(reinterpret_cast<char *>(&t.value), sizeof t.value);
  in.read(reinterpret_cast<char *>(&t.stabilization_db), sizeof t.stabilization_db);
  t.x.resize(n);
  in.read(reinterpret_cast<char *>(t.x.data()), static_cast<std::streamsize>(n * sizeof(double)));
  return static_cast<bool>(in);
}

void write_cache(std::filesystem::path const &path, Target const &t) {
  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    std::uint64_t const size = t.x.size();
    out.write(kMagic, 8);
    out.write(reinterpret_cast<char const *>(&size), sizeof size);
    out.write(reinterpret_cast<char const *>(&t.value), sizeof t.value);
    out.write(reinterpret_cast<char const *>(&t.stabilization_db), sizeof t.stabilization_db);
    out.write(reinterpret_cast<char const *>(t.x.data()), static_cast<std::streamsize>(t.x.size() * sizeof(double)));
    if (!out) { throw std::runtime_error(fmt::format("cannot write target cache {}", tmp.string())); }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

Target compute_target(SaddleProblem const &problem, std::size_t iterations, std::string const &cache_dir) {
  if (iterations < 10000) { throw ConfigError("target computation needs at least 10^4 iterations"); }
  Target t;
  t.iterations = iterations;
  std::filesystem::path path;
  if (!cache_dir.empty()) {
    path = std::filesystem::path(cache_dir) / fmt::format("target_{:016x}.bin", target_hash(problem, iterations));
    if (read_cache(path, problem.K.cols(), t)) {
      t.image = problem.to_image(t.x);
      t.from_cache = true;
      return t;
    }
  }
  // non-owning handle; the solver does not outlive this call
  std::shared_ptr<SaddleProblem const> handle(&problem, [](SaddleProblem const *) {});
  double const L = problem.K.global_norm_bound();
  auto const steps = default_scalar_steps(L * L);
  PdhgmSolver solver(handle, steps.tau, steps.sigma, 1.0, false);
  std::size_t const mark = iterations * 3 / 4;
  std::vector<double> at_mark;
  for (std::size_t i = 1; i <= iterations; ++i) {
    solver.step();
    if (i == mark) { at_mark = problem.to_image(solver.x()); }
  }
  t.x.assign(solver.x().begin(), solver.x().end());
  t.image = problem.to_image(t.x);
  t.value = problem.objective(t.x);
  t.stabilization_db = target_db(at_mark, t.image);
  if (!path.empty()) { write_cache(path, t); }
  return t;
}

}  // namespace blockpd
