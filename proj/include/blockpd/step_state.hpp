#pragma once

#include "blockpd/block_core.hpp"
#include "blockpd/kappa.hpp"
#include "blockpd/sampling.hpp"

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace blockpd {

struct StepError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class PhiRule { deterministic, random, accel_full, constant };
enum class PerpRule { constant, proportional, full_dual };

struct StepConfig {
  PhiRule phi_rule = PhiRule::deterministic;
  double p = 0.5;  // psi_{i+1} = psi_0 eta_i^(2 - 1/p)
  PerpRule perp_rule = PerpRule::proportional;
  double alpha = 0.225;         // proportional rule
  double eta_tau_perp = 0.0;    // constant rule
  double eta_sigma_perp = 0.0;  // constant rule
  double delta = 0.01;
  std::vector<double> rho, gamma_bar, gamma_tilde;  // per primal block
  std::vector<double> phi0;                         // per primal block
  std::vector<double> psi0;                         // per dual block
  double eta0 = 1.0;
};

struct StepState {
  std::size_t iter = 0;
  std::vector<double> phi;   // phi_{j,i}
  std::vector<double> psi;   // psi_{l,i+1}
  double eta = 0.0;          // eta_i
  double eta_next = 0.0;     // eta_{i+1}, valid after prepare_next
  double eta_tau_perp = 0.0;
  double eta_sigma_perp = 0.0;
  std::vector<double> carry_tau;    // phi tau on S \ S_hat of the previous iteration
  std::vector<double> carry_sigma;  // psi sigma on V \ V_hat of the previous iteration
};

// psi_{l,0} that makes the eta rule return exactly eta0 at phi0
std::vector<double> consistent_psi0(KappaFamily const &kappa, CouplingWeights const &w, std::span<double const> phi0,
                                    double eta0, double p, double delta);

// One iteration: primal_steps, prepare_next, dual_steps, commit. Step lengths are returned
// together with the products omega = tau phi and varsigma = sigma psi.
class StepController {
 public:
  StepController(StepConfig cfg, Probabilities probs, std::shared_ptr<KappaFamily const> kappa, CouplingWeights w);

  StepState const &state() const { return st_; }
  StepConfig const &config() const { return cfg_; }
  Probabilities const &probabilities() const { return probs_; }
  CouplingWeights const &weights() const { return w_; }
  KappaFamily const &kappa() const { return *kappa_; }

  // tau_{j,i} and phi tau on S(i), zero elsewhere
  void primal_steps(SamplePlan const &plan, std::span<double> tau, std::span<double> omega) const;
  // phi_{i+1} from the realized tau_hat, then eta_{i+1}
  void prepare_next(SamplePlan const &plan, std::span<double const> tau_hat);
  // sigma_{l,i+1} and psi sigma on V(i+1), zero elsewhere; needs prepare_next
  void dual_steps(SamplePlan const &plan, std::span<double> sigma, std::span<double> varsigma) const;
  void commit(SamplePlan const &plan, std::span<double const> omega, std::span<double const> varsigma);

  // eta rule evaluated at phi
  double eta_for(std::span<double const> phi) const;

 private:
  void check_margins() const;
  void update_perps(double eta);

  StepConfig cfg_;
  Probabilities probs_;
  std::shared_ptr<KappaFamily const> kappa_;
  CouplingWeights w_;
  StepState st_;
  std::vector<double> phi_next_;
  bool prepared_ = false;
};

double extrapolation_theta(double omega_j, double varsigma_l);
double extrapolation_b(double omega_j, double varsigma_l);
// theta_{j,i+1} in the primal-only method
double extrapolation_theta_primal(double eta, double eta_next, double pi_j);

struct InitBoundBlock {
  double delta = 0.01;
  double p = 0.5;
  double kappa_lower = 1.0;
  double w = 1.0;         // w_j
  double psi_lstar0 = 1.0;  // psi_{l*(j),0}
  double phi0 = 1.0;      // phi_{j,0}
};

// 2 gt gb / (gt - gb) ((1 - delta) / (kappa_lower w))^p <= delta psi^-p phi^(1-p)
bool check_init_bound(InitBoundBlock const &b, double gamma_tilde, double gamma_bar);
// largest feasible gamma_bar by bisection; closed form gives the same value
double max_gamma_bar(InitBoundBlock const &b, double gamma_tilde);
double max_gamma_bar_closed_form(InitBoundBlock const &b, double gamma_tilde);

struct InitBoundReport {
  std::vector<bool> pass;
  std::vector<double> max_gamma_bar;
};
InitBoundReport check_init_bound(StepConfig const &cfg, KappaFamily const &kappa, CouplingWeights const &w);

struct CouplingReport {
  bool pass = true;
  double worst_ratio = 0.0;  // max_l kappa_l(lambda^2 / phi) / ((1 - delta) psi_l)
  double worst_alg2_error = 0.0;  // relative |tau phi pi - eta| / eta in primal-only mode
  std::vector<std::string> messages;
};

// Checks (1 - delta) psi_{l,i+1} >= kappa_l(lambda^2 / phi) with
// lambda_{l,j} = omega_j [j in S_hat] - varsigma_l [l in V_hat] over connected pairs, and
// tau phi pi = eta in primal-only mode. Call between dual_steps and commit.
CouplingReport check_coupling_diagnostics(StepController const &ctl, SamplePlan const &plan, Connectivity const &conn,
                                          std::span<double const> tau, std::span<double const> omega,
                                          std::span<double const> varsigma, bool primal_only, double tol = 1e-12);

}  // namespace blockpd
