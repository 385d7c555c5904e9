#include "blockpd/kappa.hpp"

#include "blockpd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace blockpd {

CouplingWeights CouplingWeights::unit(std::size_t primal_blocks, std::size_t dual_blocks) {
  std::vector<double> pi(primal_blocks, 1.0), nu(dual_blocks, 0.0);
  return from_probabilities(pi, nu, true);
}

CouplingWeights CouplingWeights::from_probabilities(std::span<double const> pi_hat, std::span<double const> nu_hat,
                                                    bool exclusive) {
  CouplingWeights w;
  w.exclusive_ = exclusive;
  w.inv_pi_.resize(pi_hat.size());
  w.inv_nu_.resize(nu_hat.size());
  for (std::size_t j = 0; j < pi_hat.size(); ++j) { w.inv_pi_[j] = pi_hat[j] > 0.0 ? 1.0 / pi_hat[j] : 0.0; }
  for (std::size_t l = 0; l < nu_hat.size(); ++l) { w.inv_nu_[l] = nu_hat[l] > 0.0 ? 1.0 / nu_hat[l] : 0.0; }
  w.max_inv_nu_ = w.inv_nu_.empty() ? 0.0 : *std::max_element(w.inv_nu_.begin(), w.inv_nu_.end());
  return w;
}

double CouplingWeights::weight(std::size_t l, std::size_t j) const {
  return exclusive_ ? std::max(inv_pi_[j], inv_nu_[l]) : inv_pi_[j] + inv_nu_[l];
}

double CouplingWeights::block_max(std::size_t j) const {
  return exclusive_ ? std::max(inv_pi_[j], max_inv_nu_) : inv_pi_[j] + max_inv_nu_;
}

ZMatrix CouplingWeights::z_matrix(std::span<double const> phi) const {
  if (phi.size() != primal_blocks()) { throw DimensionError("z_matrix: phi size"); }
  ZMatrix z(dual_blocks(), primal_blocks());
  for (std::size_t l = 0; l < z.rows; ++l) {
    for (std::size_t j = 0; j < z.cols; ++j) {
      double const w = weight(l, j);
      z(l, j) = w * w / phi[j];
    }
  }
  return z;
}

double KappaFamily::eval(std::size_t l, ZMatrix const &z) const {
  std::vector<double> k(dual_blocks());
  eval_all(z, k);
  return k.at(l);
}

std::vector<double> KappaFamily::eval_weighted(CouplingWeights const &w, std::span<double const> phi) const {
  std::vector<double> k(dual_blocks());
  eval_all(w.z_matrix(phi), k);
  return k;
}

WorstCaseKappa::WorstCaseKappa(double norm_sq, std::size_t primal_blocks, std::size_t dual_blocks)
  : norm_sq_(norm_sq), m_(primal_blocks), n_(dual_blocks) {
  if (!(norm_sq > 0.0)) { throw ConfigError("worst-case kappa needs a positive operator norm"); }
}

void WorstCaseKappa::eval_all(ZMatrix const &z, std::span<double> kappa) const {
  if (z.rows != n_ || z.cols != m_ || kappa.size() != n_) { throw DimensionError("kappa: z shape"); }
  for (std::size_t l = 0; l < n_; ++l) {
    auto const r = z.row(l);
    kappa[l] = norm_sq_ * *std::max_element(r.begin(), r.end());
  }
}

std::vector<double> WorstCaseKappa::eval_weighted(CouplingWeights const &w, std::span<double const> phi) const {
  if (phi.size() != m_ || w.primal_blocks() != m_ || w.dual_blocks() != n_) {
    throw DimensionError("kappa: weight shape");
  }
  std::vector<double> k(n_);
  if (w.row_independent()) {
    double best = 0.0;
    for (std::size_t j = 0; j < m_; ++j) {
      double const a = w.weight(0, j);
      best = std::max(best, a * a / phi[j]);
    }
    std::fill(k.begin(), k.end(), norm_sq_ * best);
    return k;
  }
  for (std::size_t l = 0; l < n_; ++l) {
    double best = 0.0;
    for (std::size_t j = 0; j < m_; ++j) {
      double const v = w.weight(l, j);
      best = std::max(best, v * v / phi[j]);
    }
    k[l] = norm_sq_ * best;
  }
  return k;
}

BalancedTgv2Kappa::BalancedTgv2Kappa(double grad_sq, double id_sq, double sym_sq)
  : grad_sq_(grad_sq), id_sq_(id_sq), sym_sq_(sym_sq) {
  if (!(grad_sq > 0.0 && id_sq > 0.0 && sym_sq > 0.0)) { throw ConfigError("balanced kappa needs positive norms"); }
}

double BalancedTgv2Kappa::split(ZMatrix const &z) const {
  double const a = id_sq_ * z(0, 1), b = sym_sq_ * z(1, 1), c = grad_sq_ * z(0, 0);
  if (a == 0.0) { return std::numeric_limits<double>::infinity(); }
  if (b == 0.0) { return 0.0; }
  double const s = c + a - b;
  return (-s + std::sqrt(s * s + 4.0 * a * b)) / (2.0 * a);
}

void BalancedTgv2Kappa::eval_all(ZMatrix const &z, std::span<double> kappa) const {
  if (z.rows != 2 || z.cols != 2 || kappa.size() != 2) { throw DimensionError("balanced kappa: needs 2x2 blocks"); }
  double const a = id_sq_ * z(0, 1), b = sym_sq_ * z(1, 1), c = grad_sq_ * z(0, 0);
  if (a == 0.0) {
    kappa[0] = c;
    kappa[1] = b;
    return;
  }
  if (b == 0.0) {
    kappa[0] = c + a;
    kappa[1] = 0.0;
    return;
  }
  // both rows equal the larger root of k^2 - (a+b+c) k + b c = 0
  double const t = a + b + c;
  double const k = 0.5 * (t + std::sqrt(std::max(t * t - 4.0 * b * c, 0.0)));
  kappa[0] = k;
  kappa[1] = k;
}

double BalancedTgv2Kappa::upper() const { return std::max({grad_sq_, id_sq_, sym_sq_}); }
double BalancedTgv2Kappa::lower() const { return std::min(grad_sq_, sym_sq_); }

namespace {

class ScaledKappa final : public KappaFamily {
 public:
  ScaledKappa(std::shared_ptr<KappaFamily const> base, double scale) : base_(std::move(base)), scale_(scale) {}
  KappaKind kind() const override { return KappaKind::custom; }
  std::size_t primal_blocks() const override { return base_->primal_blocks(); }
  std::size_t dual_blocks() const override { return base_->dual_blocks(); }
  void eval_all(ZMatrix const &z, std::span<double> kappa) const override {
    base_->eval_all(z, kappa);
    for (auto &v : kappa) { v *= scale_; }
  }
  std::vector<double> eval_weighted(CouplingWeights const &w, std::span<double const> phi) const override {
    auto k = base_->eval_weighted(w, phi);
    for (auto &v : k) { v *= scale_; }
    return k;
  }
  double upper() const override { return scale_ * base_->upper(); }
  double lower() const override { return scale_ * base_->lower(); }
  std::size_t lstar(std::size_t j) const override { return base_->lstar(j); }

 private:
  std::shared_ptr<KappaFamily const> base_;
  double scale_;
};

// y -> (sum_l s_{l,j} K*_{l,j} y_l)_j and its transpose
struct WeightedAdjoint {
  BlockOperator const &K;
  ZMatrix const &s;

  void forward(std::span<double const> y, std::span<double> out) const {
    auto const &P = K.primal_layout();
    auto const &Q = K.dual_layout();
    std::fill(out.begin(), out.end(), 0.0);
    std::vector<double> yl(K.rows(), 0.0), u(K.cols());
    for (std::size_t l = 0; l < Q.block_count(); ++l) {
      std::fill(yl.begin(), yl.end(), 0.0);
      std::copy_n(y.begin() + static_cast<std::ptrdiff_t>(Q.offset(l)), Q.dim(l),
                  yl.begin() + static_cast<std::ptrdiff_t>(Q.offset(l)));
      K.apply_adjoint(yl, u);
      for (auto j : K.connectivity().primals_of(l)) {
        double const w = s(l, j);
        if (w == 0.0) { continue; }
        for (std::size_t k = P.offset(j); k < P.offset(j) + P.dim(j); ++k) { out[k] += w * u[k]; }
      }
    }
  }

  void transpose(std::span<double const> x, std::span<double> out) const {
    auto const &P = K.primal_layout();
    auto const &Q = K.dual_layout();
    std::vector<double> xs(K.cols()), v(K.rows());
    for (std::size_t l = 0; l < Q.block_count(); ++l) {
      std::fill(xs.begin(), xs.end(), 0.0);
      for (auto j : K.connectivity().primals_of(l)) {
        double const w = s(l, j);
        for (std::size_t k = P.offset(j); k < P.offset(j) + P.dim(j); ++k) { xs[k] = w * x[k]; }
      }
      K.apply(xs, v);
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(Q.offset(l)), Q.dim(l),
                  out.begin() + static_cast<std::ptrdiff_t>(Q.offset(l)));
    }
  }
};

}  // namespace

std::shared_ptr<KappaFamily> scaled_kappa(std::shared_ptr<KappaFamily const> base, double scale) {
  return std::make_shared<ScaledKappa>(std::move(base), scale);
}

KappaCheck check_kappa_estimate(BlockOperator const &K, KappaFamily const &kappa, std::size_t trials,
                                std::uint64_t seed, std::size_t power_iters) {
  auto const &Q = K.dual_layout();
  auto const n = Q.block_count(), m = K.primal_layout().block_count();
  if (kappa.dual_blocks() != n || kappa.primal_blocks() != m) { throw DimensionError("kappa does not match K"); }
  SplitMix64 rng(seed);
  KappaCheck res;
  res.trials = trials;
  std::vector<double> y(K.rows()), My(K.cols()), kv(n);
  for (std::size_t t = 0; t < trials; ++t) {
    ZMatrix z(n, m), s(n, m);
    int const pattern = static_cast<int>(t % 4);
    for (auto &v : z.values) {
      double const u = rng.uniform();
      if (pattern == 0) {
        v = 1.0;
      } else if (pattern == 1) {
        v = u < 0.25 ? 0.0 : rng.uniform();
      } else if (pattern == 2) {
        v = std::exp(6.0 * (u - 0.5));
      } else {
        v = u * u;
      }
    }
    for (std::size_t k = 0; k < z.values.size(); ++k) { s.values[k] = std::sqrt(z.values[k]); }
    kappa.eval_all(z, kv);
    WeightedAdjoint M{K, s};

    for (std::size_t l = 0; l < n; ++l) {
      double const scale = std::exp(2.0 * (rng.uniform() - 0.5));
      for (std::size_t k = Q.offset(l); k < Q.offset(l) + Q.dim(l); ++k) { y[k] = scale * rng.normal(); }
    }
    auto ratio_of = [&](std::span<double const> yy) {
      M.forward(yy, My);
      double lhs = dot(My, My), rhs = 0.0;
      for (std::size_t l = 0; l < n; ++l) {
        auto const b = yy.subspan(Q.offset(l), Q.dim(l));
        rhs += kv[l] * dot(b, b);
      }
      if (rhs <= 0.0) { return lhs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0; }
      return lhs / rhs;
    };
    double worst = ratio_of(y);
    // power iteration on D^{-1/2} M^T M D^{-1/2}, D = diag(kappa_l)
    std::vector<double> v(y.size()), tmp(y.size());
    for (std::size_t l = 0; l < n; ++l) {
      double const d = std::sqrt(kv[l]);
      for (std::size_t k = Q.offset(l); k < Q.offset(l) + Q.dim(l); ++k) { v[k] = d * y[k]; }
    }
    for (std::size_t it = 0; it < power_iters && std::isfinite(worst); ++it) {
      double const nv = norm2(v);
      if (nv == 0.0) { break; }
      for (std::size_t l = 0; l < n; ++l) {
        double const d = kv[l] > 0.0 ? 1.0 / std::sqrt(kv[l]) : 0.0;
        for (std::size_t k = Q.offset(l); k < Q.offset(l) + Q.dim(l); ++k) { tmp[k] = d * v[k] / nv; }
      }
      worst = std::max(worst, ratio_of(tmp));
      M.transpose(My, v);
      for (std::size_t l = 0; l < n; ++l) {
        double const d = kv[l] > 0.0 ? 1.0 / std::sqrt(kv[l]) : 0.0;
        for (std::size_t k = Q.offset(l); k < Q.offset(l) + Q.dim(l); ++k) { v[k] *= d; }
      }
    }
    res.worst_ratio = std::max(res.worst_ratio, worst);
    if (!(worst <= 1.0 + 1e-10)) { ++res.failures; }
  }
  res.pass = res.failures == 0;
  return res;
}

}  // namespace blockpd
