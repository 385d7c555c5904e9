#include "blockpd/solvers.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>

namespace blockpd {

namespace {

bool any(std::vector<std::uint8_t> const &f) {
  return std::any_of(f.begin(), f.end(), [](std::uint8_t v) { return v != 0; });
}

template <class F>
void for_block(BlockLayout const &L, std::size_t j, F &&f) {
  for (std::size_t k = L.offset(j), e = L.offset(j) + L.dim(j); k < e; ++k) { f(k); }
}

}  // namespace

void SolverDiagnostics::note(std::string msg) {
  if (messages.size() < 20) { messages.push_back(std::move(msg)); }
}

ErgodicAccumulator::ErgodicAccumulator(Mode mode, std::shared_ptr<BlockLayout const> primal,
                                       std::shared_ptr<BlockLayout const> dual)
  : mode_(mode), primal_(std::move(primal)), dual_(std::move(dual)) {
  x_sum_.assign(primal_->total(), 0.0);
  y_sum_.assign(dual_->total(), 0.0);
  prev_dual_weight_.assign(dual_->block_count(), 0.0);
}

void ErgodicAccumulator::add(std::size_t i, double eta, std::span<double const> primal_weight,
                             std::span<double const> x_next, std::span<double const> dual_weight,
                             std::span<double const> y_prev, std::span<double const> y_next) {
  auto const &P = *primal_;
  auto const &Q = *dual_;
  switch (mode_) {
    case Mode::plain:
      for (std::size_t k = 0; k < x_sum_.size(); ++k) { x_sum_[k] += x_next[k]; }
      for (std::size_t k = 0; k < y_sum_.size(); ++k) { y_sum_[k] += y_next[k]; }
      zeta_ += 1.0;
      return;
    case Mode::cg:
      for (std::size_t j = 0; j < P.block_count(); ++j) {
        if (primal_weight[j] == 0.0) { continue; }
        for_block(P, j, [&](std::size_t k) { x_sum_[k] += primal_weight[j] * x_next[k]; });
      }
      for (std::size_t l = 0; l < Q.block_count(); ++l) {
        if (dual_weight[l] == 0.0) { continue; }
        for_block(Q, l, [&](std::size_t k) { y_sum_[k] += dual_weight[l] * y_next[k]; });
      }
      zeta_ += eta;
      return;
    case Mode::cg_star:
      if (i >= 1) {
        for (std::size_t j = 0; j < P.block_count(); ++j) {
          if (primal_weight[j] == 0.0) { continue; }
          for_block(P, j, [&](std::size_t k) { x_sum_[k] += primal_weight[j] * x_next[k]; });
        }
        for (std::size_t l = 0; l < Q.block_count(); ++l) {
          if (prev_dual_weight_[l] == 0.0) { continue; }
          for_block(Q, l, [&](std::size_t k) { y_sum_[k] += prev_dual_weight_[l] * y_prev[k]; });
        }
        zeta_ += eta;
      }
      std::copy(dual_weight.begin(), dual_weight.end(), prev_dual_weight_.begin());
      return;
  }
}

std::vector<double> ErgodicAccumulator::x_tilde() const {
  if (zeta_ == 0.0) { throw std::logic_error("ergodic average with zero weight"); }
  std::vector<double> out(x_sum_);
  for (auto &v : out) { v /= zeta_; }
  return out;
}

std::vector<double> ErgodicAccumulator::y_tilde() const {
  if (zeta_ == 0.0) { throw std::logic_error("ergodic average with zero weight"); }
  std::vector<double> out(y_sum_);
  for (auto &v : out) { v /= zeta_; }
  return out;
}

Alg1Solver::Alg1Solver(std::shared_ptr<SaddleProblem const> problem, std::unique_ptr<Sampler> sampler,
                       StepController ctl, SolverOptions opts)
  : Solver(std::move(problem)), sampler_(std::move(sampler)), ctl_(std::move(ctl)), opts_(opts) {
  auto const &K = problem_->K;
  auto const m = problem_->primal_blocks(), n = problem_->dual_blocks();
  if (ctl_.probabilities().pi.size() != m || ctl_.probabilities().nu.size() != n) {
    throw DimensionError("step controller does not match the problem blocks");
  }
  x_.assign(K.cols(), 0.0);
  y_.assign(K.rows(), 0.0);
  x_new_ = dx_ = g_ = tmp_p_ = x_;
  y_new_ = dy_ = kx_ = kw_ = tmp_d_ = y_;
  tau_.assign(m, 0.0);
  omega_.assign(m, 0.0);
  sigma_.assign(n, 0.0);
  varsigma_.assign(n, 0.0);
  if (opts_.ergodic) {
    ergodic_ = ErgodicAccumulator(ErgodicAccumulator::Mode::cg, K.primal_layout_ptr(), K.dual_layout_ptr());
  }
}

void Alg1Solver::step() {
  auto const &P = *problem_;
  auto const &K = P.K;
  auto const &Lp = K.primal_layout();
  auto const &Ld = K.dual_layout();
  auto const m = Lp.block_count(), n = Ld.block_count();

  sampler_->draw(plan_);
  if (opts_.check_nesting) {
    auto const chk = validate_nesting(plan_, K.connectivity());
    if (!chk.pass) {
      ++diag_.nesting_violations;
      diag_.note(fmt::format("iteration {}: {}", iter_, chk.reason));
    }
  }
  ctl_.primal_steps(plan_, tau_, omega_);

  // primal-first blocks against the old dual point
  x_new_ = x_;
  bool const has_shat = any(plan_.S_hat);
  if (has_shat) {
    K.apply_adjoint(y_, g_);
    for (std::size_t j = 0; j < m; ++j) {
      if (!plan_.S_hat[j]) { continue; }
      for_block(Lp, j, [&](std::size_t k) { x_new_[k] = x_[k] - tau_[j] * g_[k]; });
      P.prox_primal_block(j, tau_[j], std::span<double>(x_new_).subspan(Lp.offset(j), Lp.dim(j)));
    }
  }

  ctl_.prepare_next(plan_, tau_);
  ctl_.dual_steps(plan_, sigma_, varsigma_);

  // dual-first blocks against the old primal point
  y_new_ = y_;
  bool has_vhat = false, has_vperp = false;
  for (std::size_t l = 0; l < n; ++l) {
    has_vhat = has_vhat || plan_.V_hat[l];
    has_vperp = has_vperp || (plan_.V[l] && !plan_.V_hat[l]);
  }
  if (has_vhat) {
    K.apply(x_, kx_);
    for (std::size_t l = 0; l < n; ++l) {
      if (!plan_.V_hat[l]) { continue; }
      for_block(Ld, l, [&](std::size_t k) { y_new_[k] = y_[k] + sigma_[l] * kx_[k]; });
      P.prox_dual_block(l, std::span<double>(y_new_).subspan(Ld.offset(l), Ld.dim(l)));
    }
  }
  // remaining dual blocks against x_hat^{i+1} + theta (x_hat^{i+1} - x^i)
  if (has_vperp) {
    K.apply(x_new_, kw_);
    if (has_shat) {
      std::fill(tmp_p_.begin(), tmp_p_.end(), 0.0);
      for (std::size_t j = 0; j < m; ++j) {
        if (!plan_.S_hat[j]) { continue; }
        for_block(Lp, j, [&](std::size_t k) { tmp_p_[k] = omega_[j] * (x_new_[k] - x_[k]); });
      }
      K.apply(tmp_p_, tmp_d_);
    }
    for (std::size_t l = 0; l < n; ++l) {
      if (!plan_.V[l] || plan_.V_hat[l]) { continue; }
      double const inv = has_shat ? 1.0 / varsigma_[l] : 0.0;
      for_block(Ld, l, [&](std::size_t k) {
        double const w = has_shat ? kw_[k] + inv * tmp_d_[k] : kw_[k];
        y_new_[k] = y_[k] + sigma_[l] * w;
      });
      P.prox_dual_block(l, std::span<double>(y_new_).subspan(Ld.offset(l), Ld.dim(l)));
    }
  }

  // remaining primal blocks against y^{i+1} + b (y^{i+1} - y^i) over the dual-first blocks
  bool has_sperp = false;
  for (std::size_t j = 0; j < m; ++j) { has_sperp = has_sperp || (plan_.S[j] && !plan_.S_hat[j]); }
  if (has_sperp) {
    K.apply_adjoint(y_new_, g_);
    if (has_vhat) {
      std::fill(tmp_d_.begin(), tmp_d_.end(), 0.0);
      for (std::size_t l = 0; l < n; ++l) {
        if (!plan_.V_hat[l]) { continue; }
        for_block(Ld, l, [&](std::size_t k) { tmp_d_[k] = varsigma_[l] * (y_new_[k] - y_[k]); });
      }
      K.apply_adjoint(tmp_d_, tmp_p_);
    }
    for (std::size_t j = 0; j < m; ++j) {
      if (!plan_.S[j] || plan_.S_hat[j]) { continue; }
      double const inv = has_vhat ? 1.0 / omega_[j] : 0.0;
      for_block(Lp, j, [&](std::size_t k) {
        double const v = has_vhat ? g_[k] + inv * tmp_p_[k] : g_[k];
        x_new_[k] = x_[k] - tau_[j] * v;
      });
      P.prox_primal_block(j, tau_[j], std::span<double>(x_new_).subspan(Lp.offset(j), Lp.dim(j)));
    }
  }

  if (opts_.check_frozen) {
    for (std::size_t j = 0; j < m; ++j) {
      if (plan_.S[j]) { continue; }
      bool same = true;
      for_block(Lp, j, [&](std::size_t k) { same = same && x_new_[k] == x_[k]; });
      if (!same) {
        ++diag_.frozen_violations;
        diag_.note(fmt::format("iteration {}: primal block {} moved outside S", iter_, j));
      }
    }
    for (std::size_t l = 0; l < n; ++l) {
      if (plan_.V[l]) { continue; }
      bool same = true;
      for_block(Ld, l, [&](std::size_t k) { same = same && y_new_[k] == y_[k]; });
      if (!same) {
        ++diag_.frozen_violations;
        diag_.note(fmt::format("iteration {}: dual block {} moved outside V", iter_, l));
      }
    }
  }
  if (opts_.check_coupling) {
    auto const rep = check_coupling_diagnostics(ctl_, plan_, K.connectivity(), tau_, omega_, varsigma_, false);
    diag_.worst_coupling_ratio = std::max(diag_.worst_coupling_ratio, rep.worst_ratio);
    if (!rep.pass) {
      ++diag_.coupling_failures;
      for (auto const &msg : rep.messages) { diag_.note(msg); }
    }
  }
  if (opts_.ergodic) { ergodic_.add(iter_, ctl_.state().eta, omega_, x_new_, varsigma_, y_, y_new_); }

  ctl_.commit(plan_, omega_, varsigma_);
  std::swap(x_, x_new_);
  std::swap(y_, y_new_);
  ++iter_;
}

Alg2Solver::Alg2Solver(std::shared_ptr<SaddleProblem const> problem, std::unique_ptr<Sampler> sampler,
                       StepController ctl, SolverOptions opts)
  : Solver(std::move(problem)), sampler_(std::move(sampler)), ctl_(std::move(ctl)), opts_(opts) {
  auto const &K = problem_->K;
  auto const m = problem_->primal_blocks(), n = problem_->dual_blocks();
  if (!sampler_->primal_only()) { throw ConfigError("the primal-randomized method needs a primal-only sampler"); }
  if (ctl_.config().perp_rule != PerpRule::full_dual) {
    throw ConfigError("the primal-randomized method needs the full-dual coupling rule");
  }
  if (ctl_.probabilities().pi.size() != m || ctl_.probabilities().nu.size() != n) {
    throw DimensionError("step controller does not match the problem blocks");
  }
  x_.assign(K.cols(), 0.0);
  y_.assign(K.rows(), 0.0);
  x_new_ = x_bar_ = g_ = x_;
  y_prev_ = kx_ = y_;
  tau_.assign(m, 0.0);
  omega_.assign(m, 0.0);
  theta_.assign(m, 0.0);
  sigma_.assign(n, 0.0);
  varsigma_.assign(n, 0.0);
  if (opts_.ergodic) {
    ergodic_ = ErgodicAccumulator(ErgodicAccumulator::Mode::cg_star, K.primal_layout_ptr(), K.dual_layout_ptr());
  }
}

void Alg2Solver::step() {
  auto const &P = *problem_;
  auto const &K = P.K;
  auto const &Lp = K.primal_layout();
  auto const &Ld = K.dual_layout();
  auto const m = Lp.block_count(), n = Ld.block_count();

  sampler_->draw(plan_);
  if (opts_.check_nesting) {
    auto const chk = validate_nesting(plan_, K.connectivity());
    if (!chk.pass) {
      ++diag_.nesting_violations;
      diag_.note(fmt::format("iteration {}: {}", iter_, chk.reason));
    }
  }
  ctl_.primal_steps(plan_, tau_, omega_);
  x_new_ = x_;
  if (any(plan_.S)) {
    K.apply_adjoint(y_, g_);
    for (std::size_t j = 0; j < m; ++j) {
      if (!plan_.S[j]) { continue; }
      for_block(Lp, j, [&](std::size_t k) { x_new_[k] = x_[k] - tau_[j] * g_[k]; });
      P.prox_primal_block(j, tau_[j], std::span<double>(x_new_).subspan(Lp.offset(j), Lp.dim(j)));
    }
  }
  double const eta = ctl_.state().eta;
  ctl_.prepare_next(plan_, tau_);
  double const eta_next = ctl_.state().eta_next;
  auto const &pi = ctl_.probabilities().pi;
  x_bar_ = x_;
  for (std::size_t j = 0; j < m; ++j) {
    if (!plan_.S[j]) {
      theta_[j] = 0.0;
      continue;
    }
    theta_[j] = extrapolation_theta_primal(eta, eta_next, pi[j]);
    for_block(Lp, j, [&](std::size_t k) { x_bar_[k] = theta_[j] * (x_new_[k] - x_[k]) + x_new_[k]; });
  }
  ctl_.dual_steps(plan_, sigma_, varsigma_);
  y_prev_ = y_;
  K.apply(x_bar_, kx_);
  for (std::size_t l = 0; l < n; ++l) {
    for_block(Ld, l, [&](std::size_t k) { y_[k] += sigma_[l] * kx_[k]; });
    P.prox_dual_block(l, std::span<double>(y_).subspan(Ld.offset(l), Ld.dim(l)));
  }

  if (opts_.check_frozen) {
    for (std::size_t j = 0; j < m; ++j) {
      if (plan_.S[j]) { continue; }
      bool same = true;
      for_block(Lp, j, [&](std::size_t k) { same = same && x_new_[k] == x_[k]; });
      if (!same) {
        ++diag_.frozen_violations;
        diag_.note(fmt::format("iteration {}: primal block {} moved outside S", iter_, j));
      }
    }
  }
  if (opts_.check_coupling) {
    auto const rep = check_coupling_diagnostics(ctl_, plan_, K.connectivity(), tau_, omega_, varsigma_, true);
    diag_.worst_coupling_ratio = std::max(diag_.worst_coupling_ratio, rep.worst_ratio);
    diag_.worst_alg2_error = std::max(diag_.worst_alg2_error, rep.worst_alg2_error);
    if (!rep.pass) {
      ++diag_.coupling_failures;
      for (auto const &msg : rep.messages) { diag_.note(msg); }
    }
  }
  if (opts_.ergodic) { ergodic_.add(iter_, eta, omega_, x_new_, varsigma_, y_prev_, y_); }

  ctl_.commit(plan_, omega_, varsigma_);
  std::swap(x_, x_new_);
  ++iter_;
}

PdhgmSolver::PdhgmSolver(std::shared_ptr<SaddleProblem const> problem, double tau, double sigma, double rho,
                         bool ergodic)
  : Solver(std::move(problem)), tau_(tau), sigma_(sigma), rho_(rho), ergodic_on_(ergodic) {
  double const L2 = problem_->K.global_norm_bound() * problem_->K.global_norm_bound();
  if (!(tau > 0.0 && sigma > 0.0) || !(tau * sigma * L2 < 1.0)) {
    throw ConfigError(fmt::format("scalar steps need tau sigma |K|^2 < 1, got {}", tau * sigma * L2));
  }
  if (!(rho > 0.0 && rho < 2.0)) { throw ConfigError("relaxation must lie in (0, 2)"); }
  auto const &K = problem_->K;
  x_.assign(K.cols(), 0.0);
  y_.assign(K.rows(), 0.0);
  x_hat_ = g_ = x_ext_ = x_;
  y_hat_ = kx_ = y_;
  if (ergodic_on_) {
    ergodic_ = ErgodicAccumulator(ErgodicAccumulator::Mode::plain, K.primal_layout_ptr(), K.dual_layout_ptr());
  }
}

void PdhgmSolver::set_state(std::span<double const> x, std::span<double const> y) {
  if (x.size() != x_.size() || y.size() != y_.size()) { throw DimensionError("set_state: size mismatch"); }
  std::copy(x.begin(), x.end(), x_.begin());
  std::copy(y.begin(), y.end(), y_.begin());
  x_hat_ = x_;
  y_hat_ = y_;
}

void PdhgmSolver::step() {
  auto const &P = *problem_;
  auto const &K = P.K;
  K.apply_adjoint(y_, g_);
  for (std::size_t k = 0; k < x_.size(); ++k) {
    x_hat_[k] = P.G.prox(k, tau_, x_[k] - tau_ * g_[k]);
    x_ext_[k] = 2.0 * x_hat_[k] - x_[k];
  }
  K.apply(x_ext_, kx_);
  for (std::size_t k = 0; k < y_.size(); ++k) { y_hat_[k] = y_[k] + sigma_ * kx_[k]; }
  P.project_dual(y_hat_);
  if (rho_ == 1.0) {
    x_.swap(x_hat_);
    y_.swap(y_hat_);
  } else {
    for (std::size_t k = 0; k < x_.size(); ++k) { x_[k] += rho_ * (x_hat_[k] - x_[k]); }
    for (std::size_t k = 0; k < y_.size(); ++k) { y_[k] += rho_ * (y_hat_[k] - y_[k]); }
  }
  if (ergodic_on_) { ergodic_.add(iter_, 1.0, {}, x(), {}, {}, y()); }
  ++iter_;
}

ScalarSteps default_scalar_steps(double norm_sq, double delta, double sigma_scale) {
  double const L = std::sqrt(norm_sq);
  ScalarSteps s;
  s.sigma = sigma_scale / L;
  s.tau = (1.0 - delta) / (s.sigma * norm_sq);
  return s;
}

RunResult run(Solver &solver, std::size_t iterations, std::size_t stride, std::function<bool(Solver &)> const &hook) {
  if (stride == 0) { throw ConfigError("stride must be positive"); }
  RunResult res;
  using clock = std::chrono::steady_clock;
  for (std::size_t i = 1; i <= iterations; ++i) {
    auto const t0 = clock::now();
    solver.step();
    res.step_seconds += std::chrono::duration<double>(clock::now() - t0).count();
    res.iterations = i;
    if (hook && (i % stride == 0 || i == iterations)) {
      if (hook(solver)) {
        res.stopped_early = i < iterations;
        break;
      }
    }
  }
  return res;
}

}  // namespace blockpd
