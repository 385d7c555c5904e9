#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "blockpd/sampling.hpp"
#include "blockpd/step_state.hpp"

#include <cmath>

using namespace blockpd;

namespace {

struct Single {
  Probabilities probs;
  CouplingWeights w;
  std::shared_ptr<KappaFamily const> kappa;
};

Single single_block(double norm_sq) {
  auto const s = make_deterministic_sampler(Connectivity::dense(1, 1));
  Single out;
  out.probs = s->probabilities();
  out.w = CouplingWeights::from_probabilities(out.probs.pi_hat, out.probs.nu_hat, true);
  out.kappa = std::make_shared<WorstCaseKappa>(norm_sq, 1, 1);
  return out;
}

StepConfig single_config(Single const &s, PhiRule rule, double p, double tau0, double gamma) {
  StepConfig cfg;
  cfg.phi_rule = rule;
  cfg.p = p;
  cfg.perp_rule = PerpRule::full_dual;
  cfg.eta0 = 1.0 / tau0;
  cfg.phi0 = {cfg.eta0 / tau0};
  cfg.gamma_bar = {gamma};
  cfg.gamma_tilde = {gamma};
  cfg.psi0 = consistent_psi0(*s.kappa, s.w, cfg.phi0, cfg.eta0, p, cfg.delta);
  return cfg;
}

// one controller iteration with everything updated; returns tau
double full_step(StepController &ctl, SamplePlan const &plan) {
  std::vector<double> tau(1), omega(1), sigma(1), vs(1);
  ctl.primal_steps(plan, tau, omega);
  ctl.prepare_next(plan, tau);
  ctl.dual_steps(plan, sigma, vs);
  ctl.commit(plan, omega, vs);
  return tau[0];
}

SamplePlan full_plan() {
  SamplePlan plan;
  plan.resize(1, 1);
  plan.S_hat[0] = plan.S[0] = plan.V[0] = 1;
  return plan;
}

}  // namespace

TEST_CASE("consistent psi0 reproduces eta0") {
  auto const s = single_block(8.0);
  for (double p : {0.5, 1.0}) {
    auto const cfg = single_config(s, PhiRule::deterministic, p, 0.3, 0.1);
    StepController ctl(cfg, s.probs, s.kappa, s.w);
    CHECK(ctl.eta_for(cfg.phi0) == doctest::Approx(cfg.eta0).epsilon(1e-14));
  }
}

TEST_CASE("constant rule gives the scalar steps") {
  auto const s = single_block(8.0);
  double const L = std::sqrt(8.0), delta = 0.01;
  double const sigma0 = 1.9 / L, tau0 = (1.0 - delta) / (sigma0 * 8.0);
  auto const cfg = single_config(s, PhiRule::constant, 0.5, tau0, 0.0);
  StepController ctl(cfg, s.probs, s.kappa, s.w);
  auto const plan = full_plan();
  for (int i = 0; i < 20; ++i) {
    std::vector<double> tau(1), omega(1), sigma(1), vs(1);
    ctl.primal_steps(plan, tau, omega);
    ctl.prepare_next(plan, tau);
    ctl.dual_steps(plan, sigma, vs);
    CHECK(tau[0] == doctest::Approx(tau0).epsilon(1e-14));
    CHECK(sigma[0] == doctest::Approx(sigma0).epsilon(1e-14));
    CHECK(tau[0] * sigma[0] * 8.0 == doctest::Approx(1.0 - delta).epsilon(1e-14));
    ctl.commit(plan, omega, vs);
  }
  CHECK(ctl.state().eta == cfg.eta0);
}

TEST_CASE("full acceleration follows tau_{i+1} = tau_i / sqrt(1 + 2 gamma tau_i)") {
  auto const s = single_block(8.0);
  double const gamma = 0.5, tau0 = 0.3;
  auto const cfg = single_config(s, PhiRule::accel_full, 0.5, tau0, gamma);
  StepController ctl(cfg, s.probs, s.kappa, s.w);
  auto const plan = full_plan();
  double ref = tau0, worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    double const t = full_step(ctl, plan);
    worst = std::max(worst, std::abs(t - ref) / ref);
    ref = ref / std::sqrt(1.0 + 2.0 * gamma * ref);
  }
  CHECK(worst < 1e-12);
  // O(1/i) decay
  CHECK(ref * 1000.0 * gamma == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("deterministic rule grows phi linearly in eta and rho") {
  auto const s = single_block(8.0);
  auto cfg = single_config(s, PhiRule::deterministic, 0.5, 0.3, 0.05);
  cfg.rho = {2.0};
  StepController ctl(cfg, s.probs, s.kappa, s.w);
  auto const plan = full_plan();
  for (int i = 0; i < 50; ++i) {
    double const phi = ctl.state().phi[0], eta = ctl.state().eta;
    full_step(ctl, plan);
    CHECK(ctl.state().phi[0] == doctest::Approx(phi + 2.0 * (0.05 * eta + 2.0)).epsilon(1e-14));
    // eta_{i+1} from the rule, psi tied to eta
    CHECK(ctl.state().eta == doctest::Approx(ctl.eta_for(ctl.state().phi)).epsilon(1e-14));
    CHECK(ctl.state().psi[0] == doctest::Approx(cfg.psi0[0] * std::pow(ctl.state().eta, 2.0 - 1.0 / cfg.p)));
  }
}

TEST_CASE("phase order is enforced") {
  auto const s = single_block(8.0);
  StepController ctl(single_config(s, PhiRule::constant, 0.5, 0.3, 0.0), s.probs, s.kappa, s.w);
  auto const plan = full_plan();
  std::vector<double> sigma(1), vs(1);
  CHECK_THROWS_AS(ctl.dual_steps(plan, sigma, vs), std::logic_error);
  CHECK_THROWS_AS(ctl.commit(plan, sigma, vs), std::logic_error);
}

TEST_CASE("configuration validation") {
  auto const s = single_block(8.0);
  auto cfg = single_config(s, PhiRule::constant, 0.5, 0.3, 0.0);
  cfg.p = 1.5;
  CHECK_THROWS_AS(StepController(cfg, s.probs, s.kappa, s.w), ConfigError);
  cfg = single_config(s, PhiRule::constant, 0.5, 0.3, 0.0);
  cfg.phi0 = {0.0};
  CHECK_THROWS_AS(StepController(cfg, s.probs, s.kappa, s.w), ConfigError);
  cfg = single_config(s, PhiRule::constant, 0.5, 0.3, 0.0);
  cfg.psi0 = {1.0, 1.0};
  CHECK_THROWS_AS(StepController(cfg, s.probs, s.kappa, s.w), DimensionError);

  // the proportional rule needs pi - pi_hat > alpha, impossible without orthogonal updates
  cfg = single_config(s, PhiRule::constant, 0.5, 0.3, 0.0);
  cfg.perp_rule = PerpRule::proportional;
  CHECK_THROWS_AS(StepController(cfg, s.probs, s.kappa, s.w), ConfigError);

  // alternating sampling with alpha too large
  auto const conn = Connectivity::dense(2, 2);
  auto alt = make_alternating_sampler(conn, 0.5, SubsetRule::fixed(1), SubsetRule::fixed(1), 1);
  auto const probs = alt->probabilities();
  auto const w = CouplingWeights::from_probabilities(probs.pi_hat, probs.nu_hat, true);
  auto const kappa = std::make_shared<WorstCaseKappa>(8.0, 2, 2);
  StepConfig c2;
  c2.phi_rule = PhiRule::constant;
  c2.perp_rule = PerpRule::proportional;
  c2.phi0 = {1.0, 1.0};
  c2.psi0 = consistent_psi0(*kappa, w, c2.phi0, 1.0, 0.5, c2.delta);
  c2.alpha = 0.225;
  CHECK_NOTHROW(StepController(c2, probs, kappa, w));
  c2.alpha = 0.45;
  CHECK_NOTHROW(StepController(c2, probs, kappa, w));
  // pi - pi_hat = 1/2 here
  c2.alpha = 0.5;
  CHECK_THROWS_AS(StepController(c2, probs, kappa, w), ConfigError);
}

TEST_CASE("initialization bound: closed form, bisection and monotonicity") {
  InitBoundBlock b{0.01, 0.5, 8.0, 2.0, 3.0, 5.0};
  double const gt = 0.5;
  double const cf = max_gamma_bar_closed_form(b, gt), bi = max_gamma_bar(b, gt);
  CHECK(bi == doctest::Approx(cf).epsilon(1e-12));
  CHECK(check_init_bound(b, gt, 0.999 * cf));
  CHECK_FALSE(check_init_bound(b, gt, 1.001 * cf));
  CHECK(check_init_bound(b, gt, 0.0));
  CHECK_FALSE(check_init_bound(b, gt, gt));
  CHECK_THROWS_AS(check_init_bound(b, 0.1, 0.2), ConfigError);
  CHECK(max_gamma_bar(b, 0.0) == 0.0);
  // larger gamma_tilde allows a larger gamma_bar
  CHECK(max_gamma_bar(b, 1.0) > bi);
}

TEST_CASE("extrapolation factors") {
  CHECK(extrapolation_theta_primal(2.0, 2.0, 1.0) == 1.0);
  CHECK(extrapolation_theta_primal(2.0, 4.0, 0.5) == 1.0);
  CHECK(extrapolation_theta(3.0, 1.5) == 2.0);
  CHECK(extrapolation_b(2.0, 1.0) == 0.5);
  CHECK_THROWS_AS(extrapolation_theta(1.0, 0.0), StepError);
}

TEST_CASE("coupling diagnostics") {
  auto const s = single_block(8.0);
  auto const conn = Connectivity::dense(1, 1);
  auto cfg = single_config(s, PhiRule::deterministic, 0.5, 0.3, 0.1);
  StepController ctl(cfg, s.probs, s.kappa, s.w);
  auto const plan = full_plan();
  std::vector<double> tau(1), omega(1), sigma(1), vs(1);
  ctl.primal_steps(plan, tau, omega);
  ctl.prepare_next(plan, tau);
  ctl.dual_steps(plan, sigma, vs);
  auto const ok = check_coupling_diagnostics(ctl, plan, conn, tau, omega, vs, true);
  CHECK(ok.pass);
  CHECK(ok.worst_ratio <= 1.0 + 1e-12);
  CHECK(ok.worst_alg2_error <= 4.0 * std::numeric_limits<double>::epsilon());

  // psi0 too small violates the kappa condition
  cfg.psi0[0] *= 0.5;
  StepController bad(cfg, s.probs, s.kappa, s.w);
  bad.primal_steps(plan, tau, omega);
  bad.prepare_next(plan, tau);
  bad.dual_steps(plan, sigma, vs);
  auto const rep = check_coupling_diagnostics(bad, plan, conn, tau, omega, vs, true);
  CHECK_FALSE(rep.pass);
  CHECK(rep.worst_ratio > 1.5);
  CHECK_FALSE(rep.messages.empty());
}
