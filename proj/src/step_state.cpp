#include "blockpd/step_state.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace blockpd {

namespace {

void require_size(std::vector<double> &v, std::size_t n, char const *what) {
  if (v.empty()) { v.assign(n, 0.0); }
  if (v.size() != n) { throw DimensionError(fmt::format("step config: {} needs {} entries", what, n)); }
}

double psi_power(double eta, double p) { return std::pow(eta, 2.0 - 1.0 / p); }

}  // namespace

std::vector<double> consistent_psi0(KappaFamily const &kappa, CouplingWeights const &w, std::span<double const> phi0,
                                    double eta0, double p, double delta) {
  auto const k = kappa.eval_weighted(w, phi0);
  std::vector<double> psi(k.size());
  double const e = std::pow(eta0, 1.0 / p);
  for (std::size_t l = 0; l < k.size(); ++l) { psi[l] = e * k[l] / (1.0 - delta); }
  return psi;
}

StepController::StepController(StepConfig cfg, Probabilities probs, std::shared_ptr<KappaFamily const> kappa,
                               CouplingWeights w)
  : cfg_(std::move(cfg)), probs_(std::move(probs)), kappa_(std::move(kappa)), w_(std::move(w)) {
  auto const m = probs_.pi.size(), n = probs_.nu.size();
  if (!kappa_) { throw ConfigError("step controller needs a kappa family"); }
  if (kappa_->primal_blocks() != m || kappa_->dual_blocks() != n || w_.primal_blocks() != m ||
      w_.dual_blocks() != n || probs_.pi_hat.size() != m || probs_.nu_hat.size() != n) {
    throw DimensionError("step controller: block counts disagree");
  }
  if (!(cfg_.p > 0.0 && cfg_.p <= 1.0)) { throw ConfigError("p must lie in (0, 1]"); }
  if (!(cfg_.delta > 0.0 && cfg_.delta < 1.0)) { throw ConfigError("delta must lie in (0, 1)"); }
  if (!(cfg_.eta0 > 0.0)) { throw ConfigError("eta0 must be positive"); }
  require_size(cfg_.rho, m, "rho");
  require_size(cfg_.gamma_bar, m, "gamma_bar");
  require_size(cfg_.gamma_tilde, m, "gamma_tilde");
  if (cfg_.phi0.size() != m) { throw DimensionError("step config: phi0 needs one entry per primal block"); }
  if (cfg_.psi0.size() != n) { throw DimensionError("step config: psi0 needs one entry per dual block"); }
  for (std::size_t j = 0; j < m; ++j) {
    if (!(cfg_.phi0[j] > 0.0)) { throw ConfigError(fmt::format("phi0 of primal block {} must be positive", j)); }
    if (cfg_.rho[j] < 0.0 || cfg_.gamma_bar[j] < 0.0 || cfg_.gamma_tilde[j] < 0.0) {
      throw ConfigError(fmt::format("negative rho or gamma for primal block {}", j));
    }
    if (!(probs_.pi_hat[j] > 0.0)) {
      throw ConfigError(fmt::format("primal block {} has zero first-update probability", j));
    }
  }
  for (std::size_t l = 0; l < n; ++l) {
    if (!(cfg_.psi0[l] > 0.0)) { throw ConfigError(fmt::format("psi0 of dual block {} must be positive", l)); }
  }
  check_margins();

  st_.phi = cfg_.phi0;
  st_.eta = cfg_.eta0;
  st_.psi.resize(n);
  for (std::size_t l = 0; l < n; ++l) { st_.psi[l] = cfg_.psi0[l] * psi_power(st_.eta, cfg_.p); }
  st_.carry_tau.assign(m, 0.0);
  st_.carry_sigma.assign(n, 0.0);
  update_perps(st_.eta);
  phi_next_.resize(m);
}

void StepController::check_margins() const {
  auto const &P = probs_;
  switch (cfg_.perp_rule) {
    case PerpRule::full_dual:
      for (std::size_t j = 0; j < P.pi.size(); ++j) {
        if (P.pi[j] != P.pi_hat[j]) {
          throw ConfigError(fmt::format("primal-only mode needs S = S_hat, violated by primal block {}", j));
        }
      }
      for (std::size_t l = 0; l < P.nu.size(); ++l) {
        if (P.nu[l] != 1.0 || P.nu_hat[l] != 0.0) {
          throw ConfigError(fmt::format("primal-only mode needs every dual block updated, violated by block {}", l));
        }
      }
      break;
    case PerpRule::proportional:
      if (!(cfg_.alpha > 0.0 && cfg_.alpha < 1.0)) { throw ConfigError("proportional rule needs alpha in (0, 1)"); }
      for (std::size_t j = 0; j < P.pi.size(); ++j) {
        if (!(P.pi[j] - P.pi_hat[j] > cfg_.alpha)) {
          throw ConfigError(fmt::format("proportional rule: pi - pi_hat = {} <= alpha = {} at primal block {}",
                                        P.pi[j] - P.pi_hat[j], cfg_.alpha, j));
        }
      }
      for (std::size_t l = 0; l < P.nu.size(); ++l) {
        if (!(P.nu[l] - P.nu_hat[l] >= cfg_.alpha)) {
          throw ConfigError(fmt::format("proportional rule: nu - nu_hat = {} < alpha = {} at dual block {}",
                                        P.nu[l] - P.nu_hat[l], cfg_.alpha, l));
        }
      }
      break;
    case PerpRule::constant:
      if (cfg_.eta_tau_perp < 0.0 || cfg_.eta_sigma_perp < 0.0) { throw ConfigError("negative orthogonal coupling"); }
      for (std::size_t j = 0; j < P.pi.size(); ++j) {
        if (!(cfg_.eta0 * (P.pi[j] - P.pi_hat[j]) > cfg_.eta_tau_perp)) {
          throw ConfigError(fmt::format("constant rule: eta0 (pi - pi_hat) <= eta_tau_perp at primal block {}", j));
        }
      }
      for (std::size_t l = 0; l < P.nu.size(); ++l) {
        if (!(cfg_.eta0 * (P.nu[l] - P.nu_hat[l]) >= cfg_.eta_sigma_perp)) {
          throw ConfigError(fmt::format("constant rule: eta0 (nu - nu_hat) < eta_sigma_perp at dual block {}", l));
        }
      }
      break;
  }
}

void StepController::update_perps(double eta) {
  switch (cfg_.perp_rule) {
    case PerpRule::full_dual:
      st_.eta_tau_perp = 0.0;
      st_.eta_sigma_perp = 0.0;  // set to eta_{i+1} by prepare_next
      break;
    case PerpRule::proportional:
      st_.eta_tau_perp = cfg_.alpha * eta;
      st_.eta_sigma_perp = cfg_.alpha * eta;
      break;
    case PerpRule::constant:
      st_.eta_tau_perp = cfg_.eta_tau_perp;
      st_.eta_sigma_perp = cfg_.eta_sigma_perp;
      break;
  }
}

double StepController::eta_for(std::span<double const> phi) const {
  auto const k = kappa_->eval_weighted(w_, phi);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < k.size(); ++l) {
    if (!(k[l] > 0.0)) { throw StepError(fmt::format("kappa of dual block {} vanished", l)); }
    best = std::min(best, std::pow((1.0 - cfg_.delta) * cfg_.psi0[l] / k[l], cfg_.p));
  }
  return best;
}

void StepController::primal_steps(SamplePlan const &plan, std::span<double> tau, std::span<double> omega) const {
  auto const m = st_.phi.size();
  for (std::size_t j = 0; j < m; ++j) {
    double om = 0.0;
    if (plan.S_hat[j]) {
      om = (st_.eta - st_.carry_tau[j]) / probs_.pi_hat[j];
    } else if (plan.S[j]) {
      om = st_.eta_tau_perp / (probs_.pi[j] - probs_.pi_hat[j]);
    } else {
      tau[j] = 0.0;
      omega[j] = 0.0;
      continue;
    }
    double const t = om / st_.phi[j];
    if (!(t > 0.0) || !std::isfinite(t)) {
      throw StepError(fmt::format("nonpositive primal step {} at block {}, iteration {}", t, j, st_.iter));
    }
    tau[j] = t;
    omega[j] = om;
  }
}

void StepController::prepare_next(SamplePlan const &plan, std::span<double const> tau_hat) {
  auto const m = st_.phi.size();
  for (std::size_t j = 0; j < m; ++j) {
    double const phi = st_.phi[j];
    switch (cfg_.phi_rule) {
      case PhiRule::deterministic:
        phi_next_[j] = phi + 2.0 * (cfg_.gamma_bar[j] * st_.eta + cfg_.rho[j]);
        break;
      case PhiRule::random:
        phi_next_[j] = phi * (1.0 + 2.0 * cfg_.gamma_tilde[j] * tau_hat[j]) +
                       (plan.S[j] ? 2.0 * cfg_.rho[j] / probs_.pi[j] : 0.0);
        break;
      case PhiRule::accel_full:
        phi_next_[j] = phi * (1.0 + 2.0 * cfg_.gamma_bar[j] * tau_hat[j]);
        break;
      case PhiRule::constant:
        phi_next_[j] = phi;
        break;
    }
  }
  st_.eta_next = cfg_.phi_rule == PhiRule::constant ? cfg_.eta0 : eta_for(phi_next_);
  if (cfg_.perp_rule == PerpRule::full_dual) { st_.eta_sigma_perp = st_.eta_next; }
  prepared_ = true;
}

void StepController::dual_steps(SamplePlan const &plan, std::span<double> sigma, std::span<double> varsigma) const {
  if (!prepared_) { throw std::logic_error("dual_steps before prepare_next"); }
  auto const n = st_.psi.size();
  for (std::size_t l = 0; l < n; ++l) {
    double vs = 0.0;
    if (plan.V_hat[l]) {
      vs = (st_.eta - st_.carry_sigma[l]) / probs_.nu_hat[l];
    } else if (plan.V[l]) {
      vs = st_.eta_sigma_perp / (probs_.nu[l] - probs_.nu_hat[l]);
    } else {
      sigma[l] = 0.0;
      varsigma[l] = 0.0;
      continue;
    }
    double const s = vs / st_.psi[l];
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw StepError(fmt::format("nonpositive dual step {} at block {}, iteration {}", s, l, st_.iter));
    }
    sigma[l] = s;
    varsigma[l] = vs;
  }
}

void StepController::commit(SamplePlan const &plan, std::span<double const> omega, std::span<double const> varsigma) {
  if (!prepared_) { throw std::logic_error("commit before prepare_next"); }
  for (std::size_t j = 0; j < st_.phi.size(); ++j) {
    st_.carry_tau[j] = plan.S[j] && !plan.S_hat[j] ? omega[j] : 0.0;
  }
  for (std::size_t l = 0; l < st_.psi.size(); ++l) {
    st_.carry_sigma[l] = plan.V[l] && !plan.V_hat[l] ? varsigma[l] : 0.0;
  }
  st_.phi = phi_next_;
  st_.eta = st_.eta_next;
  for (std::size_t l = 0; l < st_.psi.size(); ++l) { st_.psi[l] = cfg_.psi0[l] * psi_power(st_.eta, cfg_.p); }
  update_perps(st_.eta);
  ++st_.iter;
  prepared_ = false;
}

double extrapolation_theta(double omega_j, double varsigma_l) {
  if (!(varsigma_l > 0.0)) { throw StepError("extrapolation with a zero dual product"); }
  return omega_j / varsigma_l;
}

double extrapolation_b(double omega_j, double varsigma_l) {
  if (!(omega_j > 0.0)) { throw StepError("extrapolation with a zero primal product"); }
  return varsigma_l / omega_j;
}

double extrapolation_theta_primal(double eta, double eta_next, double pi_j) { return eta / (pi_j * eta_next); }

namespace {

double init_rhs_scaled(InitBoundBlock const &b) {
  double const rhs = b.delta * std::pow(b.psi_lstar0, -b.p) * std::pow(b.phi0, 1.0 - b.p);
  return rhs / std::pow((1.0 - b.delta) / (b.kappa_lower * b.w), b.p);
}

}  // namespace

bool check_init_bound(InitBoundBlock const &b, double gamma_tilde, double gamma_bar) {
  if (gamma_tilde < gamma_bar) { throw ConfigError("initialization bound needs gamma_tilde >= gamma_bar"); }
  if (gamma_bar == 0.0) { return true; }
  if (gamma_tilde == gamma_bar) { return false; }
  double const lhs = 2.0 * gamma_tilde * gamma_bar / (gamma_tilde - gamma_bar);
  return lhs <= init_rhs_scaled(b);
}

double max_gamma_bar_closed_form(InitBoundBlock const &b, double gamma_tilde) {
  if (gamma_tilde <= 0.0) { return 0.0; }
  double const r = init_rhs_scaled(b);
  return r * gamma_tilde / (2.0 * gamma_tilde + r);
}

double max_gamma_bar(InitBoundBlock const &b, double gamma_tilde) {
  if (gamma_tilde <= 0.0) { return 0.0; }
  double lo = 0.0, hi = gamma_tilde;
  for (int k = 0; k < 200 && hi - lo > 1e-17 * gamma_tilde; ++k) {
    double const mid = 0.5 * (lo + hi);
    (check_init_bound(b, gamma_tilde, mid) ? lo : hi) = mid;
  }
  return lo;
}

InitBoundReport check_init_bound(StepConfig const &cfg, KappaFamily const &kappa, CouplingWeights const &w) {
  auto const m = cfg.phi0.size();
  InitBoundReport rep;
  for (std::size_t j = 0; j < m; ++j) {
    InitBoundBlock b;
    b.delta = cfg.delta;
    b.p = cfg.p;
    b.kappa_lower = kappa.lower();
    b.w = w.block_max(j);
    b.psi_lstar0 = cfg.psi0.at(kappa.lstar(j));
    b.phi0 = cfg.phi0[j];
    double const gt = j < cfg.gamma_tilde.size() ? cfg.gamma_tilde[j] : 0.0;
    double const gb = j < cfg.gamma_bar.size() ? cfg.gamma_bar[j] : 0.0;
    rep.pass.push_back(check_init_bound(b, gt, gb));
    rep.max_gamma_bar.push_back(max_gamma_bar(b, gt));
  }
  return rep;
}

CouplingReport check_coupling_diagnostics(StepController const &ctl, SamplePlan const &plan, Connectivity const &conn,
                                          std::span<double const> tau, std::span<double const> omega,
                                          std::span<double const> varsigma, bool primal_only, double tol) {
  CouplingReport rep;
  auto const &st = ctl.state();
  auto const &kappa = ctl.kappa();
  auto const m = st.phi.size(), n = st.psi.size();
  double const slack = 1.0 - ctl.config().delta;
  auto lambda = [&](std::size_t l, std::size_t j) {
    return (plan.S_hat[j] ? omega[j] : 0.0) - (plan.V_hat[l] ? varsigma[l] : 0.0);
  };
  std::vector<double> kv(n);
  if (auto const *wc = dynamic_cast<WorstCaseKappa const *>(&kappa)) {
    for (std::size_t l = 0; l < n; ++l) {
      double best = 0.0;
      for (auto j : conn.primals_of(l)) {
        double const v = lambda(l, j);
        best = std::max(best, v * v / st.phi[j]);
      }
      kv[l] = wc->norm_sq() * best;
    }
  } else {
    if (n * m > 10'000'000) { throw DimensionError("coupling diagnostics: dense kappa too large"); }
    ZMatrix z(n, m);
    for (std::size_t l = 0; l < n; ++l) {
      for (auto j : conn.primals_of(l)) {
        double const v = lambda(l, j);
        z(l, j) = v * v / st.phi[j];
      }
    }
    kappa.eval_all(z, kv);
  }
  for (std::size_t l = 0; l < n; ++l) {
    double const ratio = kv[l] / (slack * st.psi[l]);
    rep.worst_ratio = std::max(rep.worst_ratio, ratio);
    if (ratio > 1.0 + tol) {
      rep.pass = false;
      rep.messages.push_back(fmt::format("iteration {} dual block {}: kappa(lambda^2/phi) / ((1-delta) psi) = {:.6g}",
                                         st.iter, l, ratio));
    }
  }
  if (primal_only) {
    auto const &pi = ctl.probabilities().pi;
    for (std::size_t j = 0; j < m; ++j) {
      if (!plan.S[j]) { continue; }
      double const err = std::abs(tau[j] * st.phi[j] * pi[j] - st.eta) / st.eta;
      rep.worst_alg2_error = std::max(rep.worst_alg2_error, err);
      if (err > 4.0 * std::numeric_limits<double>::epsilon()) {
        rep.pass = false;
        rep.messages.push_back(fmt::format("iteration {} primal block {}: tau phi pi differs from eta by {:.3g}",
                                           st.iter, j, err));
      }
    }
  }
  return rep;
}

}  // namespace blockpd
